"""Assembly of the approximate two-soliton solution and its residual.

The ansatz in the rescaled frame is

    z(t,x) = Q(y) + Qt(ys) + sum_{k+l<=3} sig^l [A_kl(y) Qt^k(ys)
                                                 + B_kl(y) (Qt^k)'(ys)],
    ys = x + mu*t,   y = x - alpha(ys),   alpha' = beta,
    beta(s) = sum a_kl sig^l Qt^k(s),

and the modified variant adds w# = -d * (Qt^2)'(ys) * (1 - P(y)).  The
residual S(z) = (1 - lam dx^2) dt z + dx(dx^2 z - z + z^2) is evaluated by
exact differentiation: every term of z is of the form g(y) q(ys), and the
chain rule closes over expressions

    coeff * mu^m * beta^(r)-monomial * g^(j)(y) * q^(i)(ys),

which a tiny symbolic layer differentiates once at import time.  Nothing is
ever finite-differenced, so the measured residual tracks the genuine
remainder down to interpolation precision (~1e-10).

alpha has a closed form (the Qt powers integrate to tanh polynomials), as
do all Qt and Q derivatives, so the only tabulated objects are the profile
functions, represented as quintic splines of their decaying parts plus
exact tail terms.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import InterpolatedUnivariateSpline

from .omega import ProfileFamily, SIGMA0, d_lambda
from .operator import p_derivs, phi_derivs
from .profiles import SpeedParams, q_derivs, qtilde_derivs

__all__ = [
    "ApproxSolution",
    "ShiftData",
    "scan_grid",
    "fit_loglog",
]

_NDERIV = 4


# ---------------------------------------------------------------------------
# exact differentiation of g(y)*q(ys) expressions
# ---------------------------------------------------------------------------
# A term is keyed by (j, i, pows, m): g^(j)(y) * q^(i)(ys) * mu^m times the
# monomial beta^p0 beta'^p1 ... beta''''^p4 evaluated at ys.

def _add(d, key, c):
    d[key] = d.get(key, 0.0) + c


def _dx(expr):
    out = {}
    for (j, i, p, m), c in expr.items():
        _add(out, (j + 1, i, p, m), c)
        p0 = list(p)
        p0[0] += 1
        _add(out, (j + 1, i, tuple(p0), m), -c)
        _add(out, (j, i + 1, p, m), c)
        for r in range(4):
            if p[r]:
                pr = list(p)
                pr[r] -= 1
                pr[r + 1] += 1
                _add(out, (j, i, tuple(pr), m), c * p[r])
    return out


def _dt(expr):
    out = {}
    for (j, i, p, m), c in expr.items():
        p0 = list(p)
        p0[0] += 1
        _add(out, (j + 1, i, tuple(p0), m + 1), -c)
        _add(out, (j, i + 1, p, m + 1), c)
        for r in range(4):
            if p[r]:
                pr = list(p)
                pr[r] -= 1
                pr[r + 1] += 1
                _add(out, (j, i, tuple(pr), m + 1), c * p[r])
    return out


_E0 = {(0, 0, (0, 0, 0, 0, 0), 0): 1.0}
_E1 = _dx(_E0)
_E2 = _dx(_E1)
_E3 = _dx(_E2)
_E4 = _dx(_E3)
_T1 = _dt(_E0)
_T1X = _dx(_T1)
_T3 = _dx(_T1X)
_T3X = _dx(_T3)


def _eval_expr(expr, mu, betas, gtab, qtab):
    total = None
    for (j, i, p, m), c in expr.items():
        g = gtab[j]
        q = qtab[i]
        if g is None or q is None:
            continue
        term = c * mu**m
        for r in range(5):
            if p[r]:
                term = term * betas[r] ** p[r]
        if not (isinstance(g, float) and g == 1.0):
            term = term * g
        if not (isinstance(q, float) and q == 1.0):
            term = term * q
        total = term if total is None else total + term
    return total


# ---------------------------------------------------------------------------
# derivative providers for the y- and ys-factors
# ---------------------------------------------------------------------------

class _One:
    def derivs(self, pts, jmax):
        return [1.0] + [None] * jmax


class _QProvider:
    def derivs(self, pts, jmax):
        return q_derivs(pts, jmax)


class _OneMinusP:
    def derivs(self, pts, jmax):
        p = p_derivs(pts, jmax)
        return [1.0 - p[0]] + [-p[j] for j in range(1, jmax + 1)]


class _ProfileSplines:
    """A or B profile: quintic splines of the decaying part plus exact tail."""

    def __init__(self, profile_set, which: str):
        grid = profile_set.grid
        table = profile_set.a_tilde if which == "A" else profile_set.b_tilde
        self._splines = [
            InterpolatedUnivariateSpline(grid.x, table[j], k=5, ext=1)
            for j in range(_NDERIV + 1)
        ]
        self.which = which
        self.gamma = profile_set.gamma
        self.b = profile_set.b

    def derivs(self, pts, jmax):
        out = []
        if self.which == "A":
            for j in range(jmax + 1):
                v = self._splines[j](pts)
                out.append(v + self.gamma if j == 0 else v)
        else:
            ph = phi_derivs(pts, jmax)
            for j in range(jmax + 1):
                out.append(self._splines[j](pts) + self.b * ph[j])
        return out


class _QtPower:
    """Derivatives of Qt^k or (Qt^k)' (shift=1)."""

    def __init__(self, sigma, theta, k, shift=0):
        self.sigma, self.theta, self.k, self.shift = sigma, theta, k, shift

    def derivs(self, pts, imax):
        from math import comb

        need = imax + self.shift
        base = qtilde_derivs(pts, self.sigma, self.theta, need)
        tab = base
        for _ in range(self.k - 1):
            tab = [
                sum(comb(n, i) * tab[i] * base[n - i] for i in range(n + 1))
                for n in range(need + 1)
            ]
        return tab[self.shift:self.shift + imax + 1]


class _ScaledProvider:
    def __init__(self, inner, factor):
        self.inner, self.factor = inner, factor

    def derivs(self, pts, jmax):
        return [None if v is None else self.factor * v
                for v in self.inner.derivs(pts, jmax)]


@dataclass
class _Component:
    name: str
    g: object
    q: object
    prefactor: float


@dataclass(frozen=True)
class ShiftData:
    """Shift and window constants attached to one approximate solution."""

    delta: float
    delta_sigma: float
    tau_sigma: float
    interaction_time: float   # T, physical half-window
    delta1: float             # physical big-soliton shift
    delta2: float             # physical small-soliton shift
    big_d: float              # D, physical residue coefficient

    def to_dict(self) -> dict:
        return {
            "delta": self.delta,
            "delta_sigma": self.delta_sigma,
            "tau_sigma": self.tau_sigma,
            "T": self.interaction_time,
            "Delta1": self.delta1,
            "Delta2": self.delta2,
            "D": self.big_d,
        }


def scan_grid(sigma: float, tmax: float, mu: float,
              hmax: float = 0.05) -> np.ndarray:
    """Evaluation abscissae wide enough for both solitons up to |t|=tmax."""
    half = max(60.0, 25.0 / np.sqrt(sigma), mu * tmax + 30.0 / np.sqrt(sigma) + 10.0)
    h = min(hmax, 0.2 * np.sqrt(sigma))
    n = int(np.ceil(2.0 * half / h))
    return np.linspace(-half, half, n)


class ApproxSolution:
    """The assembled z / z# with exact residual evaluation.

    Parameters
    ----------
    family : ProfileFamily
        Solved profile systems at the desired lam.
    sigma : float
        Rescaled small-soliton parameter in (0, 1).
    variant : str
        "symmetric" for z, "sharp" for z# (adds the one-sided residue term).
    indices : iterable, optional
        Subset of the (k,l) lattice to include; defaults to all six.
    """

    def __init__(self, family: ProfileFamily, sigma: float,
                 variant: str = "symmetric", indices=None,
                 residue_coefficient: float | None = None):
        if variant not in ("symmetric", "sharp"):
            raise ValueError("variant must be 'symmetric' or 'sharp'")
        self.family = family
        self.lam = family.lam
        self.sigma = float(sigma)
        self.variant = variant
        self.indices = list(SIGMA0 if indices is None else indices)
        p = SpeedParams.from_lambda_sigma(self.lam, self.sigma)
        self.params = p
        self.theta = p.theta_sigma
        self.mu = p.mu_sigma
        self.d = (d_lambda(self.lam) if residue_coefficient is None
                  else float(residue_coefficient))
        self.beta_coeffs = {kl: family[kl].a for kl in self.indices}

        comps = [
            _Component("big", _QProvider(), _One(), 1.0),
            _Component("small", _One(), _QtPower(self.sigma, self.theta, 1), 1.0),
        ]
        for (k, l) in self.indices:
            ps = family[(k, l)]
            comps.append(_Component(
                f"A{k}{l}", _ProfileSplines(ps, "A"),
                _QtPower(self.sigma, self.theta, k), self.sigma**l))
            comps.append(_Component(
                f"B{k}{l}", _ProfileSplines(ps, "B"),
                _QtPower(self.sigma, self.theta, k, shift=1), self.sigma**l))
        if variant == "sharp":
            comps.append(_Component(
                "residue", _OneMinusP(),
                _ScaledProvider(_QtPower(self.sigma, self.theta, 2, shift=1), -self.d),
                1.0))
        self._components = comps

    # -- coordinates ------------------------------------------------------
    def alpha(self, s) -> np.ndarray:
        """Closed-form antiderivative of beta."""
        s = np.asarray(s, dtype=float)
        rs = np.sqrt(self.sigma)
        t = np.tanh(rs * s / 2.0)
        ints = {
            1: 3.0 * self.theta * rs * t,
            2: 4.5 * self.sigma**1.5 * self.theta**2 * (t - t**3 / 3.0),
            3: 6.75 * self.sigma**2.5 * self.theta**3 * (t - 2.0 * t**3 / 3.0 + t**5 / 5.0),
        }
        out = np.zeros_like(s)
        for (k, l), a in self.beta_coeffs.items():
            out = out + a * self.sigma**l * ints[k]
        return out

    def beta_derivs(self, s, rmax: int = 4) -> list[np.ndarray]:
        from math import comb

        base = qtilde_derivs(s, self.sigma, self.theta, rmax)
        pows = {1: base}
        for k in (2, 3):
            prev = pows[k - 1]
            pows[k] = [sum(comb(n, i) * prev[i] * base[n - i] for i in range(n + 1))
                       for n in range(rmax + 1)]
        out = [np.zeros_like(np.asarray(s, dtype=float)) for _ in range(rmax + 1)]
        for (k, l), a in self.beta_coeffs.items():
            w = a * self.sigma**l
            for r in range(rmax + 1):
                out[r] = out[r] + w * pows[k][r]
        return out

    # -- shift data ---------------------------------------------------------
    @property
    def tau_sigma(self) -> float:
        return self.sigma ** (-0.5 - 0.01)

    @property
    def delta(self) -> float:
        ints = {1: 6.0 * self.theta * np.sqrt(self.sigma),
                2: 6.0 * self.sigma**1.5 * self.theta**2,
                3: 7.2 * self.sigma**2.5 * self.theta**3}
        return sum(a * self.sigma**l * ints[k]
                   for (k, l), a in self.beta_coeffs.items())

    @property
    def delta_sigma(self) -> float:
        b10 = self.family[(1, 0)].b
        b11t = self.family[(1, 1)].b - b10**3 / 6.0
        return 2.0 * (b10 + self.sigma * b11t)

    def shift_data(self) -> ShiftData:
        rl = np.sqrt(self.lam)
        scale = (1.0 - self.lam) / self.lam**1.5
        return ShiftData(
            delta=self.delta,
            delta_sigma=self.delta_sigma,
            tau_sigma=self.tau_sigma,
            interaction_time=scale * self.tau_sigma,
            delta1=self.delta / rl,
            delta2=self.delta_sigma / rl,
            big_d=scale * d_lambda(self.lam),
        )

    # -- field evaluation --------------------------------------------------
    def fields(self, t: float, x: np.ndarray) -> dict:
        """z, z_x, z_xx, S, S_x at one time on an array of abscissae."""
        x = np.asarray(x, dtype=float)
        ys = x + self.mu * t
        y = x - self.alpha(ys)
        betas = self.beta_derivs(ys)
        z = np.zeros_like(x)
        zx = np.zeros_like(x)
        zxx = np.zeros_like(x)
        s_lin = np.zeros_like(x)
        sx_lin = np.zeros_like(x)
        for comp in self._components:
            gtab = comp.g.derivs(y, _NDERIV)
            qtab = comp.q.derivs(ys, _NDERIV)

            def acc(expr):
                v = _eval_expr(expr, self.mu, betas, gtab, qtab)
                return 0.0 if v is None else v

            pref = comp.prefactor
            z = z + pref * acc(_E0)
            zx = zx + pref * acc(_E1)
            zxx = zxx + pref * acc(_E2)
            s_lin = s_lin + pref * (acc(_T1) - self.lam * acc(_T3)
                                    + acc(_E3) - acc(_E1))
            sx_lin = sx_lin + pref * (acc(_T1X) - self.lam * acc(_T3X)
                                      + acc(_E4) - acc(_E2))
        s = s_lin + 2.0 * z * zx
        sx = sx_lin + 2.0 * (zx**2 + z * zxx)
        return {"z": z, "zx": zx, "zxx": zxx, "S": s, "Sx": sx,
                "y": y, "ys": ys}

    def evaluate(self, t: float, x: np.ndarray) -> np.ndarray:
        return self.fields(t, x)["z"]

    def residual(self, t: float, x: np.ndarray) -> np.ndarray:
        return self.fields(t, x)["S"]

    def residual_h1(self, t: float, x: np.ndarray | None = None) -> float:
        if x is None:
            x = scan_grid(self.sigma, abs(t), self.mu)
        f = self.fields(t, x)
        h = x[1] - x[0]
        return float(np.sqrt(h * np.sum(f["S"] ** 2 + f["Sx"] ** 2)))

    def residual_h1_max(self, times=None) -> float:
        if times is None:
            tau = self.tau_sigma
            times = (0.0, 0.5 * tau, tau, -0.5 * tau, -tau)
        return max(self.residual_h1(t) for t in times)

    # -- the next-order term of the sharp variant ---------------------------
    def fu_term(self, t: float, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """The leading uncancelled w#-term and its x-derivative.

        -d * (Qt^2)''(ys) * ((3-lam)(1-P)'' + 2Q(1-P))(y); removing it from
        S(z#) should visibly lower the norm.
        """
        x = np.asarray(x, dtype=float)
        ys = x + self.mu * t
        y = x - self.alpha(ys)
        g = _OneMinusP().derivs(y, 3)
        q = q_derivs(y, 1)
        f0 = (3.0 - self.lam) * g[2] + 2.0 * q[0] * g[0]
        f1 = (3.0 - self.lam) * g[3] + 2.0 * (q[1] * g[0] + q[0] * g[1])
        qt = _QtPower(self.sigma, self.theta, 2, shift=2).derivs(ys, 1)
        betas = self.beta_derivs(ys, 1)
        val = -self.d * qt[0] * f0
        dval = -self.d * (qt[1] * f0 + qt[0] * f1 * (1.0 - betas[0]))
        return val, dval

    # -- endpoint profiles ---------------------------------------------------
    def endpoint_target(self, t: float, x: np.ndarray, side: int,
                        include_residue: bool = True
                        ) -> tuple[np.ndarray, np.ndarray]:
        """The two/three-profile sum the solution should match at side*t.

        Returns (values, x-derivative).  The residue coefficient is
        -side*d for the symmetric variant and (-2d at +, 0 at -) for the
        sharp one.
        """
        x = np.asarray(x, dtype=float)
        ys = x + self.mu * side * abs(t)
        arg_big = x - side * 0.5 * self.delta
        arg_small = ys - side * 0.5 * self.delta_sigma
        qb = q_derivs(arg_big, 1)
        qt2 = _QtPower(self.sigma, self.theta, 2, shift=1).derivs(arg_small, 1)
        qt = qtilde_derivs(arg_small, self.sigma, self.theta, 1)
        if self.variant == "symmetric":
            coef = -side * self.d
        else:
            coef = -2.0 * self.d if side > 0 else 0.0
        if not include_residue:
            coef = 0.0
        vals = qb[0] + qt[0] + coef * qt2[0]
        dvals = qb[1] + qt[1] + coef * qt2[1]
        return vals, dvals

    def endpoint_error(self, t: float | None = None, side: int = 1,
                       include_residue: bool = True) -> float:
        """H1 distance between the solution at side*t and its target."""
        if t is None:
            t = self.separation_time()
        x = scan_grid(self.sigma, t, self.mu)
        f = self.fields(side * t, x)
        tv, td = self.endpoint_target(t, x, side, include_residue)
        h = x[1] - x[0]
        return float(np.sqrt(h * np.sum((f["z"] - tv) ** 2 + (f["zx"] - td) ** 2)))

    def separation_time(self, factor: float = 5.0) -> float:
        """A time at which the cross terms sit below the power-law error.

        At the nominal tau_sigma the two waves still overlap at any feasible
        sigma (the exponential separation margin closes only as sigma -> 0),
        so scaling tests evaluate at this later time instead; the target
        decomposition bounds hold on [tau_sigma, infinity).
        """
        return max(self.tau_sigma,
                   factor * np.log(1.0 / self.sigma) / np.sqrt(self.sigma))

    # -- physical frame ------------------------------------------------------
    def physical_residual_l2_pieces(self, t_phys: float) -> tuple[float, float]:
        """(||R||_L2, ||dR/dx||_L2) of the physical-frame residual at t_phys.

        Uses the exact frame identity: the physical residual is
        lam^(5/2)/(1-lam)^2 times S(z) evaluated at the rescaled point.
        """
        lam = self.lam
        tp = lam**1.5 / (1.0 - lam) * t_phys
        x = scan_grid(self.sigma, abs(tp), self.mu)
        f = self.fields(tp, x)
        h = x[1] - x[0]
        s_l2 = np.sqrt(h * np.sum(f["S"] ** 2))
        sx_l2 = np.sqrt(h * np.sum(f["Sx"] ** 2))
        c = 1.0 / (1.0 - lam) ** 2
        return (float(c * lam**2.25 * s_l2), float(c * lam**2.75 * sx_l2))

    def physical_values(self, t_phys: float, x_phys: np.ndarray) -> np.ndarray:
        """v(t, x) = (lam/(1-lam)) z(t', x') on physical abscissae."""
        lam = self.lam
        rl = np.sqrt(lam)
        tp = lam * rl / (1.0 - lam) * t_phys
        xp = rl * (np.asarray(x_phys, dtype=float) - t_phys / (1.0 - lam))
        return lam / (1.0 - lam) * self.evaluate(tp, xp)


def fit_loglog(xs, ys) -> tuple[float, float, float]:
    """Least-squares slope of log(y) vs log(x) with its standard error."""
    lx = np.log(np.asarray(xs, dtype=float))
    ly = np.log(np.asarray(ys, dtype=float))
    n = len(lx)
    a = np.vstack([lx, np.ones(n)]).T
    coef, res, *_ = np.linalg.lstsq(a, ly, rcond=None)
    slope, intercept = coef
    if n > 2 and len(res):
        s2 = res[0] / (n - 2)
        se = float(np.sqrt(s2 / np.sum((lx - lx.mean()) ** 2)))
    else:
        se = 0.0
    return float(slope), float(intercept), se
