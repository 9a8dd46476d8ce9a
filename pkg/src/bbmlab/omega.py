"""The hierarchy of profile systems behind the two-soliton correction.

For each index pair (k, l) with k >= 1 and k + l <= 3 a linear system

    (L A)' = a ((lam-3)Q'' - Q^2)' + F
    (L B)' = (3-lam) A'' + 2QA + a (2lam-3) Q'' + G

is solved for (a, A, B), where the sources (F, G) are assembled from the
lower-order solutions.  The (1,0) system has a closed-form solution; all
others go through the constructive model problem: integrate the first line,
invert L twice, and pin the two free constants (a, b) by an orthogonality
and a tail condition.  Solutions split as A = A~ + gamma, B = B~ + b*phi
with exponentially decaying tilde parts, gamma prescribed a priori and b a
computed output.

The third-order source tables were generated symbolically from the same
chain-rule expansion that the residual evaluator uses; the regeneration
script lives in the test suite.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import (Grid, GridFunction, cumulative_from_zero, integrate)
from .operator import (OperatorL, phi_derivs, p_lambda_derivs, v_lambda_derivs)
from .profiles import q_derivs

__all__ = [
    "ProfileSet",
    "ProfileFamily",
    "DegenerateDenominatorError",
    "a10_closed",
    "b10_closed",
    "kappa_closed",
    "b20_closed",
    "g_poly",
    "d_lambda",
    "gamma_constants",
    "akl_coefficient",
    "solve_omega10",
    "solve_model_problem",
    "build_sources",
    "solve_family",
    "coefficient_row",
    "COEFF_COLUMNS",
]

SIGMA0 = [(1, 0), (1, 1), (2, 0), (3, 0), (2, 1), (1, 2)]


class DegenerateDenominatorError(RuntimeError):
    """The pairing that fixes the free constant nearly vanished."""


# ---------------------------------------------------------------------------
# closed-form coefficients
# ---------------------------------------------------------------------------

def _den(lam: float) -> float:
    return 15.0 + 10.0 * lam - lam**2


def a10_closed(lam: float) -> float:
    return 10.0 * (1.0 + lam) / _den(lam)


def b10_closed(lam: float) -> float:
    return (-30.0 + 18.0 * lam**2) / _den(lam)


def kappa_closed(lam: float) -> float:
    """The Q' coefficient that makes int B10 Q' = 0."""
    a10 = a10_closed(lam)
    b10 = b10_closed(lam)
    return (5.0 / 3.0 * b10 + 5.0 * ((lam - 3.0) / 4.0 * a10 + 0.5)
            + np.pi**2 / 24.0 * ((lam - 3.0) ** 2 * a10 + 2.0 * (lam - 3.0)))


def b20_closed(lam: float) -> float:
    if lam >= 1.0:
        raise ValueError("b20 has a pole at lam = 1")
    pi2 = np.pi**2
    q = np.polyval([-pi2,
                    -5.0 * (45.0 - 4.0 * pi2),
                    -10.0 * (18.0 + 7.0 * pi2),
                    300.0 * (16.0 - pi2),
                    75.0 * (125.0 - 3.0 * pi2),
                    -3375.0,
                    -13500.0,
                    0.0,
                    5625.0], lam)
    return 4.0 * q / (5.0 * (1.0 - lam) * _den(lam) ** 3)


def g_poly(lam: float) -> float:
    pi2 = np.pi**2
    return np.polyval([pi2,
                       5.0 * (45.0 - 4.0 * pi2),
                       -5.0 * (207.0 - 14.0 * pi2),
                       -300.0 * (16.0 - pi2),
                       -75.0 * (44.0 - 3.0 * pi2),
                       3375.0,
                       3375.0], lam)


def d_lambda(lam: float) -> float:
    """Inelasticity coefficient b20 + b10^3/(6(1-lam)); vanishes only at 0."""
    if lam >= 1.0:
        raise ValueError("pole at lam = 1")
    return -4.0 * lam**2 * g_poly(lam) / (5.0 * (1.0 - lam) * _den(lam) ** 3)


def gamma_constants(lam: float, b10: float, b11: float, d: float) -> dict:
    """Prescribed tail limits of the A profiles for orders two and three.

    The third-order constants are fixed so that the translated-profile
    expansion cancels every even term of relative weight three; the signs
    of the d-terms follow from that cancellation requirement (verified
    symbolically and by the measured decomposition scaling).
    """
    g20 = -b10**2 / (2.0 * (1.0 - lam))
    g11 = 0.5 * b10**2
    g30 = 5.0 / (36.0 * (1.0 - lam) ** 2) * b10**4 - 10.0 / (3.0 * (1.0 - lam)) * d * b10
    g21 = (lam / (2.0 * (1.0 - lam)) * b10**2 + 4.0 * b10 * d
           - b10 * b11 / (1.0 - lam) - b10**4 / (24.0 * (1.0 - lam)))
    g12 = b10 * b11 - b10**4 / 8.0
    return {(2, 0): g20, (1, 1): g11, (3, 0): g30, (2, 1): g21, (1, 2): g12}


# ---------------------------------------------------------------------------
# profile containers
# ---------------------------------------------------------------------------

# The profiles all live on the unit-width soliton scale, so their spectra
# decay like exp(-pi |k|); beyond this cutoff only solver noise remains,
# which k^3 differentiation would otherwise amplify into the tables.
_KCUT = 20.0


def _spectral_deriv_table(grid: Grid, values: np.ndarray, nmax: int,
                          kcut: float | None = _KCUT) -> np.ndarray:
    """Derivatives 0..nmax of decaying samples via the periodic extension."""
    k = grid.wavenumbers
    vhat = np.fft.rfft(values)
    if kcut is not None:
        vhat = np.where(k <= kcut, vhat, 0.0)
    out = np.empty((nmax + 1, grid.n_points))
    for j in range(nmax + 1):
        out[j] = np.fft.irfft((1j * k) ** j * vhat, n=grid.n_points)
    return out


def _symmetrize(values: np.ndarray, even: bool) -> np.ndarray:
    """Project onto the known parity class (x=0 is a grid point)."""
    r = np.roll(values[::-1], 1)
    return 0.5 * (values + r) if even else 0.5 * (values - r)


@dataclass
class ProfileSet:
    """Solution of one (Omega_{k,l}) system.

    ``a_tilde``/``b_tilde`` hold derivative tables (rows = order 0..4) of the
    decaying parts; the full profiles are A = A~ + gamma, B = B~ + b*phi.
    """

    k: int
    l: int
    a: float
    gamma: float
    b: float
    grid: Grid
    a_tilde: np.ndarray = field(repr=False)
    b_tilde: np.ndarray = field(repr=False)
    kappa: float | None = None
    diagnostics: dict = field(default_factory=dict, repr=False)

    def a_deriv(self, j: int) -> np.ndarray:
        v = self.a_tilde[j]
        return v + self.gamma if j == 0 else v

    def b_deriv(self, j: int) -> np.ndarray:
        ph = phi_derivs(self.grid.x, j)[j]
        return self.b_tilde[j] + self.b * ph

    @property
    def A(self) -> GridFunction:
        return GridFunction(self.grid, self.a_deriv(0))

    @property
    def B(self) -> GridFunction:
        return GridFunction(self.grid, self.b_deriv(0))


@dataclass
class ProfileFamily:
    """All six profile sets for one lam, plus the derived scalar table."""

    lam: float
    grid: Grid
    sets: dict
    d: float
    diagnostics: dict = field(default_factory=dict, repr=False)

    @property
    def a_coeffs(self) -> dict:
        return {kl: ps.a for kl, ps in self.sets.items()}

    def __getitem__(self, kl):
        return self.sets[kl]


# ---------------------------------------------------------------------------
# the (1,0) system in closed form
# ---------------------------------------------------------------------------

def solve_omega10(lam: float, op: OperatorL) -> ProfileSet:
    if not 0.0 < lam < 1.0:
        raise ValueError("need 0 < lam < 1")
    grid = op.grid
    x = grid.x
    a10, b10, kap = a10_closed(lam), b10_closed(lam), kappa_closed(lam)
    q = q_derivs(x, 1)
    a_vals = -(x * q[1] + 2.0 * q[0]) - a10 * (0.5 * (lam - 3.0) * x * q[1] - q[0])
    b_tilde_vals = (0.25 * (3.0 - lam) * x**2 * q[1] + x * q[0]
                    - a10 * ((lam - 3.0) ** 2 / 8.0 * x**2 * q[1]
                             + 0.5 * (3.0 - lam) * x * q[0])
                    + kap * q[1])
    ps = ProfileSet(1, 0, a10, 0.0, b10, grid,
                    _spectral_deriv_table(grid, a_vals, 4),
                    _spectral_deriv_table(grid, b_tilde_vals, 4),
                    kappa=kap)
    ps.diagnostics["int_B_Qprime"] = integrate(ps.B * op.qprime)
    return ps


# ---------------------------------------------------------------------------
# source assembly
# ---------------------------------------------------------------------------

def _table(family: dict, grid: Grid, lam: float) -> dict:
    """Name -> array lookup for the generated source expressions."""
    x = grid.x
    q = q_derivs(x, 3)
    t = {f"Q_{j}": q[j] for j in range(4)}
    names = {(1, 0): "10", (1, 1): "11", (2, 0): "20"}
    for kl, suffix in names.items():
        if kl in family:
            ps = family[kl]
            for j in range(4):
                t[f"A{suffix}_{j}"] = ps.a_deriv(j)
                t[f"B{suffix}_{j}"] = ps.b_deriv(j)
    t["lam"] = lam
    for kl, nm in ((1, 0), "a10"), ((1, 1), "a11"), ((2, 0), "a20"):
        if kl in family:
            t[nm] = family[kl].a
    return t


def build_sources(k: int, l: int, family: dict, lam: float, grid: Grid
                  ) -> tuple[GridFunction, GridFunction]:
    """Assemble (F_{k,l}, G_{k,l}) from the lower-order profile sets."""
    for kp, lp in SIGMA0:
        if kp + lp < k + l and (kp, lp) not in family:
            raise KeyError(f"missing lower-order profile set ({kp},{lp})")
    x = grid.x
    if (k, l) == (1, 0):
        q = q_derivs(x, 1)
        return GridFunction(grid, 2.0 * q[1]), GridFunction(grid, 2.0 * q[0])
    t = _table(family, grid, lam)
    f_vals, g_vals = _SOURCES[(k, l)](t)
    return GridFunction(grid, f_vals), GridFunction(grid, g_vals)


def _src_11(t):
    lam, a10 = t["lam"], t["a10"]
    f = ((3.0 - 2.0 * lam) * t["A10_1"] + (3.0 - lam) * t["B10_2"]
         + 2.0 * t["Q_0"] * t["B10_0"] + lam * (lam - 1.0) * a10 * t["Q_3"])
    # the Q'' coefficient here carries (lam-1); the sign follows the
    # chain-rule expansion and was confirmed numerically against S(z)
    g = (lam * (1.0 - lam) * t["A10_2"] + (3.0 - 2.0 * lam) * t["B10_1"]
         + 2.0 * a10 * lam * (lam - 1.0) * t["Q_2"])
    return f, g


def _src_20(t):
    lam, a10 = t["lam"], t["a10"]
    A0, A1, A2, A3 = (t[f"A10_{j}"] for j in range(4))
    B0, B1, B2, B3 = (t[f"B10_{j}"] for j in range(4))
    Q0, Q1, Q2, Q3 = (t[f"Q_{j}"] for j in range(4))
    f = (a10 * ((lam - 3.0) * A3 - 2.0 * (Q1 * A0 + Q0 * A1) - Q1)
         + (3.0 - 2.0 * lam) * a10**2 * Q3
         + 2.0 * A0 * A1
         - 2.0 / (1.0 - lam) * Q0 * B0
         - A1 / (1.0 - lam)
         + (lam - 3.0) / (1.0 - lam) * B2)
    g = (0.5 * a10 * ((6.0 * lam - 9.0) * A2 + (lam - 3.0) * B3
                      - 2.0 * (Q1 * B0 + Q0 * B1))
         + A0**2 + A1 * B0 + A0 * B1 + A0
         + (lam - 2.0) / (1.0 - lam) * B1
         + 1.5 * (1.0 - lam) * a10**2 * Q2)
    return f, g


# The third-order tables below were generated symbolically from the same
# chain-rule expansion the residual evaluator implements; the regeneration
# script and a finite-difference cross-check live in tests/test_source_tables.py.

def _src_30(t):
    lam, a10, a20 = t["lam"], t["a10"], t["a20"]
    A10_0, A10_1, A10_2, A10_3 = (t[f"A10_{j}"] for j in range(4))
    B10_0, B10_1, B10_2, B10_3 = (t[f"B10_{j}"] for j in range(4))
    A20_0, A20_1, A20_2, A20_3 = (t[f"A20_{j}"] for j in range(4))
    B20_0, B20_1, B20_2, B20_3 = (t[f"B20_{j}"] for j in range(4))
    Q_0, Q_1, Q_2, Q_3 = (t[f"Q_{j}"] for j in range(4))
    f = (-2 * A10_0 * A10_1 * a10 + 2 * A10_0 * A20_1
         + 10 * A10_0 * B10_0 / (3 * lam - 3)
         - 2 * A10_0 * Q_1 * a20 + 2 * A10_1 * A20_0 - 2 * A10_1 * Q_0 * a20
         + 4 * A10_1 * a10
         + A10_3 * (-2 * a10**2 * lam + 3 * a10**2 + a20 * lam - 3 * a20)
         - 2 * A20_0 * Q_1 * a10 - 2 * A20_1 * Q_0 * a10
         + A20_1 * (24 - 14 * lam) / (3 * lam - 3)
         + A20_3 * (a10 * lam - 3 * a10)
         + 4 * B10_0 * B10_1 / (3 * lam - 3)
         + B10_2 * (16 * a10 * lam - 24 * a10) / (3 * lam - 3)
         + 20 * B20_0 * Q_0 / (3 * lam - 3)
         + B20_2 * (30 - 10 * lam) / (3 * lam - 3)
         + (4.0 / 3.0) * Q_1 * a20
         + Q_3 * (a10**3 * lam - a10**3 - 4 * a10 * a20 * lam + 6 * a10 * a20))
    g = (2 * A10_0 * A20_0 - (2.0 / 3.0) * A10_0 * B10_1 * a10
         + (4.0 / 3.0) * A10_0 * B20_1
         - (2.0 / 3.0) * A10_1 * B10_0 * a10 + (4.0 / 3.0) * A10_1 * B20_0
         + A10_2 * (-2 * a10**2 * lam + 2 * a10**2 + (8.0 / 3.0) * a20 * lam - 4 * a20)
         + (2.0 / 3.0) * A20_0 * B10_1 - (4.0 / 3.0) * A20_0
         + (2.0 / 3.0) * A20_1 * B10_0
         + A20_2 * ((10.0 / 3.0) * a10 * lam - 5 * a10)
         + 2 * B10_0**2 / (3 * lam - 3)
         - (2.0 / 3.0) * B10_0 * Q_1 * a20 - (2.0 / 3.0) * B10_1 * Q_0 * a20
         + (8.0 / 3.0) * B10_1 * a10
         + B10_3 * (-(2.0 / 3.0) * a10**2 * lam + a10**2 + (1.0 / 3.0) * a20 * lam - a20)
         - (4.0 / 3.0) * B20_0 * Q_1 * a10 - (4.0 / 3.0) * B20_1 * Q_0 * a10
         + B20_1 * (26 - 16 * lam) / (3 * lam - 3)
         + B20_3 * ((2.0 / 3.0) * a10 * lam - 2 * a10)
         + Q_2 * (-3 * a10 * a20 * lam + 3 * a10 * a20))
    return f, g


def _src_21(t):
    lam, a10, a11, a20 = t["lam"], t["a10"], t["a11"], t["a20"]
    A10_0, A10_1, A10_2, A10_3 = (t[f"A10_{j}"] for j in range(4))
    B10_0, B10_1, B10_2, B10_3 = (t[f"B10_{j}"] for j in range(4))
    A11_0, A11_1, A11_2, A11_3 = (t[f"A11_{j}"] for j in range(4))
    B11_0, B11_1, B11_2, B11_3 = (t[f"B11_{j}"] for j in range(4))
    A20_0, A20_1, A20_2 = (t[f"A20_{j}"] for j in range(3))
    B20_0, B20_1, B20_2 = (t[f"B20_{j}"] for j in range(3))
    Q_0, Q_1, Q_2, Q_3 = (t[f"Q_{j}"] for j in range(4))
    f = (2 * A10_0 * A11_1 + 4 * A10_0 * B10_0 - 2 * A10_0 * Q_1 * a11
         + 2 * A10_1 * A11_0 - 2 * A10_1 * Q_0 * a11
         + A10_1 * (6 * a10 * lam**2 - 12 * a10 * lam + 6 * a10 - lam) / (lam - 1)
         + A10_3 * (a10 * lam**2 - a10 * lam + a11 * lam - 3 * a11)
         - 2 * A11_0 * Q_1 * a10 - 2 * A11_1 * Q_0 * a10 + A11_1 / (lam - 1)
         + A11_3 * (a10 * lam - 3 * a10) + A20_1 * (12 - 8 * lam)
         + 2 * B10_0 * B10_1 - 2 * B10_0 * Q_0 * lam / (lam - 1)
         + B10_2 * (6 * a10 * lam**2 - 15 * a10 * lam + 9 * a10 - 2 * lam) / (lam - 1)
         + 2 * B11_0 * Q_0 / (lam - 1) + B11_2 * (3 - lam) / (lam - 1)
         + 8 * B20_0 * Q_0 + B20_2 * (12 - 4 * lam)
         + Q_1 * (-a11 + 3 * a20 * lam - 3 * a20)
         + Q_3 * (-2 * a10**2 * lam**2 + 2 * a10**2 * lam - 4 * a10 * a11 * lam
                  + 6 * a10 * a11 + a20 * lam**2 - a20 * lam))
    g = (2 * A10_0 * A11_0 + A10_0 * B11_1 + A10_1 * B11_0
         + A10_2 * (3 * a10 * lam**2 - 3 * a10 * lam + 3 * a11 * lam - 4.5 * a11)
         + A11_0 * B10_1 + A11_0 + A11_1 * B10_0
         + A11_2 * (3 * a10 * lam - 4.5 * a10)
         + A20_0 * (3 - 3 * lam) + A20_2 * (-lam**2 + lam) + B10_0**2
         - B10_0 * Q_1 * a11 - B10_1 * Q_0 * a11
         + B10_1 * (3 * a10 * lam**2 - 6 * a10 * lam + 3 * a10 - lam) / (lam - 1)
         + B10_3 * (0.5 * a10 * lam**2 - 0.5 * a10 * lam + 0.5 * a11 * lam - 1.5 * a11)
         - B11_0 * Q_1 * a10 - B11_1 * Q_0 * a10 + B11_1 * (2 - lam) / (lam - 1)
         + B11_3 * (0.5 * a10 * lam - 1.5 * a10) + B20_1 * (12 - 8 * lam)
         + Q_2 * (-1.5 * a10**2 * lam**2 + 1.5 * a10**2 * lam - 3 * a10 * a11 * lam
                  + 3 * a10 * a11 + 2 * a20 * lam**2 - 2 * a20 * lam))
    return f, g


def _src_12(t):
    lam, a10, a11 = t["lam"], t["a10"], t["a11"]
    f = (t["A10_1"] * (-2 * lam**2 + 2 * lam) + t["A11_1"] * (3 - 2 * lam)
         + t["B10_2"] * (-lam**2 + lam) + 2 * t["B11_0"] * t["Q_0"]
         + t["B11_2"] * (3 - lam)
         + t["Q_3"] * (a10 * lam**3 - a10 * lam**2 + a11 * lam**2 - a11 * lam))
    g = (t["A10_2"] * (-lam**3 + lam**2) + t["A11_2"] * (-lam**2 + lam)
         + t["B10_1"] * (-2 * lam**2 + 2 * lam) + t["B11_1"] * (3 - 2 * lam)
         + t["Q_2"] * (2 * a10 * lam**3 - 2 * a10 * lam**2
                       + 2 * a11 * lam**2 - 2 * a11 * lam))
    return f, g

_SOURCES = {(1, 1): _src_11, (2, 0): _src_20, (3, 0): _src_30,
            (2, 1): _src_21, (1, 2): _src_12}


# ---------------------------------------------------------------------------
# the general-coefficient formula and the constructive solve
# ---------------------------------------------------------------------------

def akl_coefficient(f: GridFunction, g: GridFunction, gamma: float,
                    lam: float) -> float:
    """The coefficient a_{k,l} by pairing the system against P_lam.

    a = -20/(15+10lam-lam^2) * (1/int Q^2) *
        { -gamma int P_lam + int G Q + int F (int_0^x P_lam) }
    """
    grid = f.grid
    x = grid.x
    q0 = q_derivs(x, 0)[0]
    plam = p_lambda_derivs(lam, x, 0)[0]
    plam_gf = GridFunction(grid, plam)
    int_plam = integrate(plam_gf)
    cumulative = cumulative_from_zero(plam_gf)
    bracket = (-gamma * int_plam
               + integrate(g.with_values(g.values * q0))
               + integrate(f.with_values(f.values * cumulative.values)))
    int_q2 = integrate(GridFunction(grid, q0**2))
    return -20.0 / _den(lam) / int_q2 * bracket


def solve_model_problem(f: GridFunction, g: GridFunction, gamma: float,
                        lam: float, op: OperatorL, k: int = 0, l: int = 0
                        ) -> ProfileSet:
    """Constructive solve of one (Omega) system for odd F and even G.

    Follows the existence proof: integrate the A-line to
    H = int_{-inf}^x F + 2*gamma*Q, invert L, then pick a so that the
    B-line's integrated right side is orthogonal to Q' and b so that it
    decays, and invert L once more.
    """
    grid = op.grid
    x = grid.x
    q = q_derivs(x, 2)
    cum_f = cumulative_from_zero(f)
    cum_f = cum_f.with_values(cum_f.values - cum_f.values[0])
    h_vals = _symmetrize(cum_f.values + 2.0 * gamma * q[0], even=True)
    hbar = op.invert(GridFunction(grid, h_vals))
    hbar_d = _spectral_deriv_table(grid, _symmetrize(hbar.values, even=True), 2)

    vlam = v_lambda_derivs(lam, x, 2)
    d_even = ((3.0 - lam) * hbar_d[2] + 2.0 * q[0] * hbar_d[0]
              + g.values + 2.0 * gamma * q[0])
    z0 = ((3.0 - 2.0 * lam) * q[2] + (3.0 - lam) * vlam[2]
          + 2.0 * q[0] * vlam[0])
    int_z0q = integrate(GridFunction(grid, z0 * q[0]))
    if abs(int_z0q) < 1e-10:
        raise DegenerateDenominatorError(f"int Z0 Q = {int_z0q:.3e}")
    a = integrate(GridFunction(grid, d_even * q[0])) / int_z0q

    rem = GridFunction(grid, d_even - a * z0)
    anti = cumulative_from_zero(rem)
    b = 0.5 * (anti.values[-1] - anti.values[0])

    ph = phi_derivs(x, 2)
    lphi = -ph[2] + ph[0] - 2.0 * q[0] * ph[0]
    e_vals = _symmetrize(anti.values - b * lphi, even=False)
    b_tilde = op.invert(GridFunction(grid, e_vals))

    a_tilde_vals = -a * vlam[0] + _symmetrize(hbar.values, even=True)
    ps = ProfileSet(k, l, a, gamma, b, grid,
                    _spectral_deriv_table(grid, a_tilde_vals, 4),
                    _spectral_deriv_table(grid, _symmetrize(b_tilde.values, even=False), 4))
    ps.diagnostics.update({
        "int_Z0_Q": int_z0q,
        "int_Z0_Q_closed": -_den(lam) / 20.0 * integrate(GridFunction(grid, q[0] ** 2)),
        "solve_residual": op.last_residual,
        "omega_residuals": _omega_residuals(ps, f, g, lam, op),
    })
    return ps


def _omega_residuals(ps: ProfileSet, f: GridFunction, g: GridFunction,
                     lam: float, op: OperatorL) -> dict:
    """Max-norm residuals of both lines of the system for a ProfileSet."""
    grid = ps.grid
    x = grid.x
    q = q_derivs(x, 3)
    a_d = [ps.a_deriv(j) for j in range(4)]
    bt = ps.b_tilde
    # (L A)' with A = A~ + gamma: the constant contributes -2*gamma*Q'
    la_p = (-a_d[3] + a_d[1] - 2.0 * (q[1] * (a_d[0] - ps.gamma) + q[0] * a_d[1])
            - 2.0 * ps.gamma * q[1])
    res_a = la_p - ps.a * ((lam - 3.0) * q[3] - 2.0 * q[0] * q[1]) - f.values
    # (L B)' with B = B~ + b*phi: (L phi)' = 2Q - (5/3)Q^2
    lb_p = (-bt[3] + bt[1] - 2.0 * (q[1] * bt[0] + q[0] * bt[1])
            + ps.b * (2.0 * q[0] - 5.0 / 3.0 * q[0] ** 2))
    rhs_b = ((3.0 - lam) * a_d[2] + 2.0 * q[0] * a_d[0]
             + ps.a * (2.0 * lam - 3.0) * q[2] + g.values)
    res_b = lb_p - rhs_b
    keep = np.abs(x) < grid.half_length - 2.0
    return {"A_line": float(np.abs(res_a[keep]).max()),
            "B_line": float(np.abs(res_b[keep]).max())}


def solve_family(lam: float, op: OperatorL) -> ProfileFamily:
    """Solve all six systems in dependency order and cross-check them."""
    grid = op.grid
    sets: dict = {}
    diag: dict = {}

    ps10 = solve_omega10(lam, op)
    f10, g10 = build_sources(1, 0, sets, lam, grid)
    ps10.diagnostics["omega_residuals"] = _omega_residuals(ps10, f10, g10, lam, op)
    ps10.diagnostics["a_from_pairing"] = akl_coefficient(f10, g10, 0.0, lam)
    sets[(1, 0)] = ps10

    b10 = ps10.b
    d = d_lambda(lam)
    gammas_low = gamma_constants(lam, b10, 0.0, d)  # b11 not needed yet

    for kl in [(1, 1), (2, 0)]:
        f, g = build_sources(kl[0], kl[1], sets, lam, grid)
        ps = solve_model_problem(f, g, gammas_low[kl], lam, op, *kl)
        ps.diagnostics["a_from_pairing"] = akl_coefficient(f, g, ps.gamma, lam)
        ps.diagnostics["source_decay"] = _tail_size(f, g)
        sets[kl] = ps

    b11 = sets[(1, 1)].b
    a10_d = [sets[(1, 0)].a_deriv(j) for j in range(1)]
    a20_d0 = sets[(2, 0)].a_deriv(0)
    q0 = q_derivs(grid.x, 0)[0]
    lhs = integrate(GridFunction(grid, 2.0 * q0 * a20_d0 + a10_d[0] ** 2 + a10_d[0]))
    diag["b20_limit_relation"] = 0.5 * (lhs + (lam - 2.0) / (1.0 - lam) * 2.0 * b10)
    diag["b20_closed"] = b20_closed(lam)
    diag["b20_numeric"] = sets[(2, 0)].b

    gammas = gamma_constants(lam, b10, b11, d)
    for kl in [(3, 0), (2, 1), (1, 2)]:
        f, g = build_sources(kl[0], kl[1], sets, lam, grid)
        ps = solve_model_problem(f, g, gammas[kl], lam, op, *kl)
        ps.diagnostics["a_from_pairing"] = akl_coefficient(f, g, ps.gamma, lam)
        ps.diagnostics["source_decay"] = _tail_size(f, g)
        sets[kl] = ps

    return ProfileFamily(lam, grid, sets, d, diag)


def _tail_size(f: GridFunction, g: GridFunction) -> float:
    x = f.grid.x
    tail = np.abs(x) > 0.5 * f.grid.half_length
    return float(max(np.abs(f.values[tail]).max(), np.abs(g.values[tail]).max()))


COEFF_COLUMNS = ["lam", "a10", "b10", "kappa", "b20", "d",
                 "gamma20", "gamma11", "b11", "gamma30", "gamma21", "gamma12"]


def coefficient_row(family: ProfileFamily) -> dict:
    lam = family.lam
    s = family.sets
    b10, b11 = s[(1, 0)].b, s[(1, 1)].b
    gam = gamma_constants(lam, b10, b11, family.d)
    return {
        "lam": lam,
        "a10": s[(1, 0)].a,
        "b10": b10,
        "kappa": s[(1, 0)].kappa,
        "b20": s[(2, 0)].b,
        "d": family.d,
        "gamma20": gam[(2, 0)],
        "gamma11": gam[(1, 1)],
        "b11": b11,
        "gamma30": gam[(3, 0)],
        "gamma21": gam[(2, 1)],
        "gamma12": gam[(1, 2)],
    }
