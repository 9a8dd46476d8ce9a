"""Solitary-wave profiles in both frames and the speed-parameter algebra.

The physical solitary wave is phi_c(x) = (c-1) Q(sqrt((c-1)/c) x) with
Q(x) = (3/2) sech^2(x/2), Q'' - Q + Q^2 = 0.  In the rescaled frame the
small soliton becomes Qt_sigma(x) = sigma*theta_sigma*Q(sqrt(sigma) x),
satisfying Qt'' = sigma*Qt - (1/theta_sigma)*Qt^2.  Derivatives of both are
generated from these ODEs by Leibniz recursion, so every order is exact.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np

from .grid import Grid, GridFunction, derivative, integrate, sample

__all__ = [
    "SpeedParams",
    "SolitonState",
    "FrameMaps",
    "sech2",
    "q_values",
    "q_derivs",
    "q_profile",
    "phi_c_values",
    "phi_c",
    "phi_c_dc",
    "qtilde_values",
    "qtilde_derivs",
    "qtilde_sigma",
    "energy_mass",
    "appendix_identities",
]


def sech2(u: np.ndarray) -> np.ndarray:
    """Overflow-safe sech^2; tails underflow harmlessly to zero."""
    a = np.exp(-2.0 * np.abs(u))
    return 4.0 * a / (1.0 + a) ** 2


def q_values(x):
    return 1.5 * sech2(np.asarray(x, dtype=float) / 2.0)


def q_derivs(x, nmax: int) -> list[np.ndarray]:
    """[Q, Q', ..., Q^(nmax)] via Q'' = Q - Q^2."""
    x = np.asarray(x, dtype=float)
    q0 = q_values(x)
    d = [q0, -q0 * np.tanh(x / 2.0)]
    for n in range(nmax - 1):
        q2n = sum(comb(n, i) * d[i] * d[n - i] for i in range(n + 1))
        d.append(d[n] - q2n)
    return d[: nmax + 1]


def q_profile(grid: Grid) -> GridFunction:
    return sample(grid, q_values)


def phi_c_values(c: float, x) -> np.ndarray:
    if c <= 1.0:
        raise ValueError("solitary waves require c > 1")
    return (c - 1.0) * q_values(np.sqrt((c - 1.0) / c) * np.asarray(x, dtype=float))


def phi_c(c: float, grid: Grid) -> GridFunction:
    return sample(grid, lambda x: phi_c_values(c, x))


def phi_c_derivs(c: float, x, nmax: int) -> list[np.ndarray]:
    r = np.sqrt((c - 1.0) / c)
    qs = q_derivs(r * np.asarray(x, dtype=float), nmax)
    return [(c - 1.0) * r**j * qj for j, qj in enumerate(qs)]


def phi_c_dc(c: float, x) -> np.ndarray:
    """d(phi_c)/dc = (phi_c + (x/(2c)) phi_c') / (c-1)."""
    x = np.asarray(x, dtype=float)
    p0, p1 = phi_c_derivs(c, x, 1)
    return (p0 + x / (2.0 * c) * p1) / (c - 1.0)


@dataclass(frozen=True)
class SpeedParams:
    """The (c1, c2) pair with its rescaled-frame companions.

    lam = (c1-1)/c1, sigma = (c2-1)/(c2*lam), theta = (1-lam)/(1-lam*sigma),
    mu = (1-sigma)/(1-lam*sigma).  All derived values are stored eagerly so
    that 1 - lam*sigma == 1/c2 holds bit-for-bit across modules.
    """

    c1: float
    c2: float
    lam: float
    sigma: float
    theta_sigma: float
    mu_sigma: float

    @classmethod
    def from_speeds(cls, c1: float, c2: float) -> "SpeedParams":
        if not (1.0 < c2 <= c1):
            raise ValueError("need 1 < c2 <= c1")
        lam = (c1 - 1.0) / c1
        sigma = (c2 - 1.0) / (c2 * lam)
        return cls(c1, c2, lam, sigma,
                   (1.0 - lam) / (1.0 - lam * sigma),
                   (1.0 - sigma) / (1.0 - lam * sigma))

    @classmethod
    def from_lambda_sigma(cls, lam: float, sigma: float) -> "SpeedParams":
        if not (0.0 < lam < 1.0 and 0.0 < sigma <= 1.0):
            raise ValueError("need 0 < lam < 1 and 0 < sigma <= 1")
        return cls(1.0 / (1.0 - lam), 1.0 / (1.0 - lam * sigma), lam, sigma,
                   (1.0 - lam) / (1.0 - lam * sigma),
                   (1.0 - sigma) / (1.0 - lam * sigma))


@dataclass(frozen=True)
class SolitonState:
    """A single solitary wave: speed and center."""

    c: float
    x0: float = 0.0

    def __post_init__(self):
        if self.c <= 1.0:
            raise ValueError("solitary waves require c > 1")

    def values(self, x) -> np.ndarray:
        return phi_c_values(self.c, np.asarray(x) - self.x0)


def qtilde_values(p: SpeedParams, x) -> np.ndarray:
    rs = np.sqrt(p.sigma)
    return p.sigma * p.theta_sigma * q_values(rs * np.asarray(x, dtype=float))


def qtilde_derivs(x, sigma: float, theta: float, nmax: int) -> list[np.ndarray]:
    """[Qt, Qt', ..., Qt^(nmax)] via Qt'' = sigma*Qt - (1/theta)*Qt^2."""
    x = np.asarray(x, dtype=float)
    rs = np.sqrt(sigma)
    t0 = sigma * theta * q_values(rs * x)
    d = [t0, -rs * t0 * np.tanh(rs * x / 2.0)]
    ith = 1.0 / theta
    for n in range(nmax - 1):
        t2n = sum(comb(n, i) * d[i] * d[n - i] for i in range(n + 1))
        d.append(sigma * d[n] - ith * t2n)
    return d[: nmax + 1]


def qtilde_sigma(p: SpeedParams, grid: Grid) -> GridFunction:
    return sample(grid, lambda x: qtilde_values(p, x))


@dataclass(frozen=True)
class FrameMaps:
    """Coordinate and amplitude dictionary between the two frames.

    x' = sqrt(lam) (x - t/(1-lam)),  t' = lam^(3/2)/(1-lam) t,
    z(t', x') = ((1-lam)/lam) u(t, x); a rescaled-frame translation delta
    corresponds to delta/sqrt(lam) in physical coordinates.
    """

    lam: float

    @property
    def amplitude_factor(self) -> float:
        """Multiply u by this to get z."""
        return (1.0 - self.lam) / self.lam

    def to_rescaled(self, t, x):
        rl = np.sqrt(self.lam)
        return self.lam * rl / (1.0 - self.lam) * t, rl * (x - t / (1.0 - self.lam))

    def to_physical(self, tp, xp):
        rl = np.sqrt(self.lam)
        t = (1.0 - self.lam) / (self.lam * rl) * tp
        return t, xp / rl + t / (1.0 - self.lam)

    def shift_to_physical(self, delta: float) -> float:
        return delta / np.sqrt(self.lam)


def energy_mass(f: GridFunction) -> tuple[float, float]:
    """(E, N) = (int u^2/2 + u^3/3,  (1/2) int u_x^2 + u^2)."""
    u = f.values
    ux = derivative(f, 1).values
    e = integrate(f.with_values(0.5 * u**2 + u**3 / 3.0))
    n = 0.5 * integrate(f.with_values(ux**2 + u**2))
    return float(e), float(n)


def energy_mass_phi(c: float) -> tuple[float, float]:
    """Closed forms of (E, N) for phi_c; int Q^2 = 6."""
    m2 = (c - 1.0) ** 1.5 * c**0.5 * 6.0
    e = 0.5 * (1.0 + 0.8 * (c - 1.0)) * m2
    n = 0.5 * (0.2 * (c - 1.0) / c + 1.0) * m2
    return e, n


def appendix_identities(grid: Grid, speeds=(1.1, 1.5, 2.0, 4.0)) -> list[tuple[str, float, float]]:
    """(name, computed, expected) rows for the closed-form integral suite."""
    x = grid.x
    q0, q1 = q_derivs(x, 1)

    def igr(vals):
        return integrate(GridFunction(grid, vals))

    pi2 = np.pi**2
    rows = [
        ("int Q", igr(q0), 6.0),
        ("int Q^2", igr(q0**2), 6.0),
        ("int Q^3", igr(q0**3), 36.0 / 5.0),
        ("int Q'^2", igr(q1**2), 6.0 / 5.0),
        ("int x^2 Q^2", igr(x**2 * q0**2), 2.0 * pi2 - 12.0),
        ("int x^2 Q^3", igr(x**2 * q0**3), 1.2 * (2.0 * pi2 - 12.0) - 0.6 * 6.0),
        ("int x^2 Q'^2", igr(x**2 * q1**2), 0.2 * (2.0 * pi2 - 12.0) + 0.4 * 6.0),
    ]
    for c in speeds:
        p0, p1 = phi_c_derivs(c, x, 1)
        m2 = (c - 1.0) ** 1.5 * c**0.5 * 6.0
        e_exp, n_exp = energy_mass_phi(c)
        e_num = igr(0.5 * p0**2 + p0**3 / 3.0)
        n_num = 0.5 * igr(p1**2 + p0**2)
        rows += [
            (f"int phi^2 (c={c})", igr(p0**2), m2),
            (f"int phi^3 (c={c})", igr(p0**3), 1.2 * (c - 1.0) * m2),
            (f"int phi'^2 (c={c})", igr(p1**2), 0.2 * (c - 1.0) / c * m2),
            (f"E(phi) (c={c})", e_num, e_exp),
            (f"N(phi) (c={c})", n_num, n_exp),
            (f"E-cN (c={c})", e_num - c * n_num,
             -0.2 * (c - 1.0) ** 2.5 * c**0.5 * 6.0),
        ]
    return rows
