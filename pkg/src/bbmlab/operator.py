"""The linearized operator L = -d^2/dx^2 + 1 - 2Q and its inversion.

L is discretized with 4th-order centered stencils on a truncated line with
Dirichlet boundary rows.  Its kernel on decaying data is spanned by Q', so
the inverse is only defined on the orthogonal complement; the solve uses a
bordered (saddle-point) system that pins the Q' component to zero, which
keeps the factorization well conditioned even though the plain matrix is
numerically singular.

Also provides the named auxiliary profiles

    phi = -Q'/Q = tanh(x/2),   P = 2Q + xQ',
    P_lam = 2Q + ((3-lam)/2) xQ',   V_lam = ((lam-3)/2) xQ' - Q,

with closed-form derivatives of any order.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix, lil_matrix
from scipy.sparse.linalg import splu

from .grid import LINE, Grid, GridFunction, integrate
from .profiles import q_derivs, q_values

__all__ = [
    "NotOrthogonalError",
    "SingularSolveError",
    "OperatorL",
    "AuxProfiles",
    "phi_derivs",
    "p_derivs",
    "p_lambda_derivs",
    "v_lambda_derivs",
    "aux_profiles",
    "check_lphi",
]


class NotOrthogonalError(ValueError):
    """Right-hand side has a Q' component beyond tolerance."""


class SingularSolveError(RuntimeError):
    """The bordered factorization failed or left a large residual."""


# ---------------------------------------------------------------------------
# closed-form auxiliary profiles
# ---------------------------------------------------------------------------

def phi_derivs(x, nmax: int) -> list[np.ndarray]:
    """phi = tanh(x/2) and derivatives; phi' = Q/3."""
    x = np.asarray(x, dtype=float)
    out = [np.tanh(x / 2.0)]
    if nmax >= 1:
        qs = q_derivs(x, nmax - 1)
        out += [qj / 3.0 for qj in qs]
    return out[: nmax + 1]


def _xqp_derivs(x, nmax: int) -> list[np.ndarray]:
    """(x Q')^(j) = j Q^(j) + x Q^(j+1)."""
    x = np.asarray(x, dtype=float)
    qs = q_derivs(x, nmax + 1)
    return [j * qs[j] + x * qs[j + 1] for j in range(nmax + 1)]


def p_derivs(x, nmax: int) -> list[np.ndarray]:
    qs = q_derivs(x, nmax)
    xq = _xqp_derivs(x, nmax)
    return [2.0 * qs[j] + xq[j] for j in range(nmax + 1)]


def p_lambda_derivs(lam: float, x, nmax: int) -> list[np.ndarray]:
    qs = q_derivs(x, nmax)
    xq = _xqp_derivs(x, nmax)
    return [2.0 * qs[j] + 0.5 * (3.0 - lam) * xq[j] for j in range(nmax + 1)]


def v_lambda_derivs(lam: float, x, nmax: int) -> list[np.ndarray]:
    qs = q_derivs(x, nmax)
    xq = _xqp_derivs(x, nmax)
    return [0.5 * (lam - 3.0) * xq[j] - qs[j] for j in range(nmax + 1)]


@dataclass(frozen=True)
class AuxProfiles:
    """phi, P, P_lam, V_lam sampled on one grid."""

    lam: float
    grid: Grid
    phi: GridFunction
    p: GridFunction
    p_lambda: GridFunction
    v_lambda: GridFunction


def aux_profiles(lam: float, grid: Grid) -> AuxProfiles:
    if not 0.0 < lam <= 1.0:
        raise ValueError("need 0 < lam <= 1")
    x = grid.x
    return AuxProfiles(
        lam, grid,
        GridFunction(grid, phi_derivs(x, 0)[0]),
        GridFunction(grid, p_derivs(x, 0)[0]),
        GridFunction(grid, p_lambda_derivs(lam, x, 0)[0]),
        GridFunction(grid, v_lambda_derivs(lam, x, 0)[0]),
    )


def check_lphi(grid: Grid) -> dict[str, float]:
    """Residuals of the (L phi)' identity in both printed forms."""
    x = grid.x
    q0, q1, q2, q3 = q_derivs(x, 3)
    ph0, ph1, ph2, ph3 = phi_derivs(x, 3)
    lphi_p = -ph3 + ph1 - 2.0 * (q1 * ph0 + q0 * ph1)
    forma = 2.0 * q0 - 5.0 / 3.0 * q0**2
    formb = q0 / 3.0 + 5.0 / 3.0 * q2
    return {
        "residual_a": float(np.abs(lphi_p - forma).max()),
        "residual_b": float(np.abs(lphi_p - formb).max()),
        "forms_agree": float(np.abs(forma - formb).max()),
        "phi_at_0": float(np.tanh(0.0)),
    }


# ---------------------------------------------------------------------------
# discretized operator
# ---------------------------------------------------------------------------

def _second_derivative_matrix(n: int, h: float, dirichlet: bool) -> csr_matrix:
    d = lil_matrix((n, n))
    c = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / (12.0 * h * h)
    for i in range(2, n - 2):
        d[i, i - 2:i + 3] = c
    if dirichlet:
        pass  # boundary rows stay zero; identity is added by the caller
    else:
        edge = np.array([2.0, -5.0, 4.0, -1.0]) / (h * h)
        for i in (0, 1):
            d[i, i:i + 4] = edge
        for i in (n - 2, n - 1):
            d[i, i - 3:i + 1] = edge[::-1]
    return d.tocsr()


class OperatorL:
    """L = -d^2 + 1 - 2Q on a truncated-line grid.

    Immutable after construction; the stored LU factorizations may be used
    from several threads concurrently.
    """

    def __init__(self, grid: Grid, orth_tol: float = 1e-8):
        if grid.kind != LINE:
            raise ValueError("OperatorL requires a truncated-line grid")
        self.grid = grid
        self.orth_tol = orth_tol
        n, h, x = grid.n_points, grid.h, grid.x
        q = q_values(x)
        self.q = GridFunction(grid, q)
        self.qprime = GridFunction(grid, q_derivs(x, 1)[1])

        from scipy.sparse import diags, eye, bmat

        pot = diags(1.0 - 2.0 * q)
        self._apply_mat = (-_second_derivative_matrix(n, h, dirichlet=False) + pot).tocsr()

        a = (-_second_derivative_matrix(n, h, dirichlet=True) + pot).tolil()
        for i in (0, 1, n - 2, n - 1):
            a[i, :] = 0.0
            a[i, i] = 1.0
        self._solve_mat = a.tocsr()

        qp = self.qprime.values * h  # discrete L2 pairing
        border = csr_matrix(qp.reshape(n, 1))
        sys = bmat([[self._solve_mat, border], [border.T, None]], format="csc")
        try:
            self._lu = splu(sys)
        except RuntimeError as exc:  # pragma: no cover
            raise SingularSolveError(str(exc)) from exc
        self._plain_lu = splu(self._solve_mat.tocsc())
        self.last_residual: float = 0.0

    # -- application ----------------------------------------------------
    def apply(self, f: GridFunction) -> GridFunction:
        if f.grid != self.grid:
            raise ValueError("grid mismatch")
        return f.with_values(self._apply_mat @ f.values)

    def project_out_kernel(self, values: np.ndarray) -> np.ndarray:
        qp = self.qprime.values
        coef = np.dot(values, qp) / np.dot(qp, qp)
        return values - coef * qp

    # -- inversion --------------------------------------------------------
    def invert(self, h: GridFunction) -> GridFunction:
        """Solve L f = h with f orthogonal to Q'.

        Both sides are projected against the grid-sampled Q'; the incoming
        Q' component must be below ``orth_tol`` relative or the right-hand
        side is not solvable in the first place.
        """
        if h.grid != self.grid:
            raise ValueError("grid mismatch")
        rhs = h.values
        qp = self.qprime.values
        num = abs(integrate(h * self.qprime))
        den = (np.sqrt(integrate(h * h)) *
               np.sqrt(integrate(self.qprime * self.qprime)))
        if den > 0.0 and num > self.orth_tol * den:
            raise NotOrthogonalError(
                f"rhs has Q' component {num / den:.3e} (tol {self.orth_tol:.1e})")
        rhs = self.project_out_kernel(rhs)
        full = np.concatenate([rhs, [0.0]])
        sol = self._lu.solve(full)
        f = self.project_out_kernel(sol[:-1])
        self.last_residual = float(np.abs(self._solve_mat @ f - rhs).max())
        if not np.all(np.isfinite(f)) or self.last_residual > 1e-6 * (1.0 + np.abs(rhs).max()):
            raise SingularSolveError(
                f"solve residual {self.last_residual:.3e}")
        return h.with_values(f)

    def kernel_vector(self, iterations: int = 3) -> GridFunction:
        """Near-kernel direction by inverse iteration on the plain matrix."""
        rng = np.random.default_rng(0)
        v = rng.standard_normal(self.grid.n_points)
        for _ in range(iterations):
            v = self._plain_lu.solve(v)
            v /= np.linalg.norm(v)
        if v @ self.qprime.values < 0:
            v = -v
        return GridFunction(self.grid, v)

    def kernel_alignment(self) -> float:
        """Cosine between the discrete near-kernel and Q' samples."""
        v = self.kernel_vector().values
        qp = self.qprime.values
        return float(abs(v @ qp) / (np.linalg.norm(v) * np.linalg.norm(qp)))
