import numpy as np
import pytest

from bbmlab.grid import GridFunction, integrate
from bbmlab.operator import (NotOrthogonalError, aux_profiles, check_lphi,
                             p_derivs, p_lambda_derivs, phi_derivs,
                             v_lambda_derivs)
from bbmlab.profiles import q_derivs

from conftest import reflect


def test_apply_eigenpairs(op, op_grid):
    x = op_grid.x
    q = q_derivs(x, 2)
    assert np.abs(op.apply(GridFunction(op_grid, q[1])).values).max() < 1e-8
    q32 = q[0] ** 1.5
    assert np.abs(op.apply(GridFunction(op_grid, q32)).values + 1.25 * q32).max() < 1e-8
    assert np.abs(op.apply(GridFunction(op_grid, q[0])).values + q[0] ** 2).max() < 1e-8
    assert np.abs(op.apply(GridFunction(op_grid, x * q[1])).values + 2.0 * q[2]).max() < 1e-7


def test_aux_profile_identities(op, op_grid):
    x = op_grid.x
    q = q_derivs(x, 2)
    prof = aux_profiles(0.4, op_grid)
    assert np.abs(op.apply(prof.p).values + 2.0 * q[0]).max() < 1e-7
    target = (3.0 - 0.4) * q[2] + 2.0 * q[0] ** 2
    assert np.abs(op.apply(prof.p_lambda).values + target).max() < 1e-7
    lv = (3.0 - 0.4) * q[2] + q[0] ** 2
    assert np.abs(op.apply(prof.v_lambda).values - lv).max() < 1e-7
    # phi facts
    assert integrate(prof.phi * op.qprime) == pytest.approx(-2.0, abs=1e-8)
    ph = phi_derivs(x, 1)
    assert np.abs(ph[1] - q[0] / 3.0).max() < 1e-14
    assert abs(ph[0][op_grid.n_points // 2]) < 1e-15            # phi(0) = 0
    far = np.abs(x) > 50.0
    assert np.abs(1.0 - ph[0][far] ** 2).max() < 1e-10


def test_check_lphi(op_grid):
    res = check_lphi(op_grid)
    assert res["residual_a"] < 1e-7
    assert res["residual_b"] < 1e-7
    assert res["forms_agree"] < 1e-10


def test_invert_known_preimages(op, op_grid):
    x = op_grid.x
    q = q_derivs(x, 2)
    # L(xQ') = -2Q''
    f = op.invert(GridFunction(op_grid, -2.0 * q[2]))
    target = op.project_out_kernel(x * q[1])
    assert np.abs(f.values - target).max() < 1e-7
    # decay surrogate for the regularity statement
    mid = np.abs(np.abs(x) - 30.0) < 0.5
    assert np.abs(f.values[mid]).max() < 1e-10 * np.abs(f.values).max()
    # LQ = -Q^2 and Q is even, hence already orthogonal to Q'
    g = op.invert(GridFunction(op_grid, -q[0] ** 2))
    assert np.abs(g.values - q[0]).max() < 1e-7
    # zero maps to zero
    z = op.invert(GridFunction(op_grid, np.zeros_like(x)))
    assert np.abs(z.values).max() == 0.0


def test_invert_rejects_nonorthogonal(op, op_grid):
    with pytest.raises(NotOrthogonalError):
        op.invert(op.qprime)


def test_invert_preserves_parity(op, op_grid):
    q = q_derivs(op_grid.x, 1)
    even = op.invert(GridFunction(op_grid, q[0] ** 2))
    assert np.abs(even.values - reflect(even.values)).max() < 1e-8
    # an odd right-hand side must first be projected off Q' to be solvable
    odd_rhs = op.project_out_kernel(q[0] * q[1])
    odd = op.invert(GridFunction(op_grid, odd_rhs))
    assert np.abs(odd.values + reflect(odd.values)).max() < 1e-7


def test_self_adjointness(op, op_grid):
    rng = np.random.default_rng(7)
    x = op_grid.x
    for _ in range(3):
        a1, a2 = rng.uniform(-3, 3, 2)
        f = GridFunction(op_grid, np.exp(-((x - a1) ** 2) / 3.0))
        g = GridFunction(op_grid, (x - a2) * np.exp(-((x - a2) ** 2) / 2.0))
        lhs = integrate(op.apply(f) * g)
        rhs = integrate(f * op.apply(g))
        assert abs(lhs - rhs) < 1e-8


def test_kernel_alignment(op):
    assert op.kernel_alignment() > 1.0 - 1e-6


def test_pairing_identity(op, op_grid):
    # (2lam-3) int Q'^2 + int ((lam-3)Q'' - Q^2) P_lam
    #   = -(15 + 10lam - lam^2)/20 * int Q^2
    x = op_grid.x
    q = q_derivs(x, 2)
    for lam in np.linspace(0.1, 0.9, 9):
        plam = p_lambda_derivs(lam, x, 0)[0]
        lhs = ((2 * lam - 3.0) * integrate(GridFunction(op_grid, q[1] ** 2))
               + integrate(GridFunction(op_grid, ((lam - 3.0) * q[2] - q[0] ** 2) * plam)))
        rhs = -(15.0 + 10.0 * lam - lam**2) / 20.0 * 6.0
        assert lhs == pytest.approx(rhs, abs=1e-7)


def test_derivative_helpers_match_fd():
    x = np.linspace(-6, 6, 25)
    h = 1e-5
    for maker in (p_derivs, lambda xx, n: p_lambda_derivs(0.3, xx, n),
                  lambda xx, n: v_lambda_derivs(0.3, xx, n), phi_derivs):
        d = maker(x, 2)
        fd = (maker(x + h, 0)[0] - maker(x - h, 0)[0]) / (2 * h)
        assert np.abs(fd - d[1]).max() < 1e-8
