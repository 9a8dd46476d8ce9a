import numpy as np
import pytest
from scipy.interpolate import InterpolatedUnivariateSpline

from bbmlab import omega
from bbmlab.approx import ApproxSolution, fit_loglog, scan_grid
from bbmlab.profiles import q_values


@pytest.fixture(scope="module")
def sol_checks(family_half):
    return ApproxSolution(family_half, 0.1, "symmetric")


def test_engine_exact_on_single_solitons(family_half):
    x = np.linspace(-80, 80, 3001)
    for name in ("small", "big"):
        sol = ApproxSolution(family_half, 0.1, "symmetric", indices=[])
        sol._components = [c for c in sol._components if c.name == name]
        sol.beta_coeffs = {}
        f = sol.fields(0.7, x)
        assert np.abs(f["S"]).max() < 1e-12
        assert np.abs(f["Sx"]).max() < 1e-12


def test_zero_small_wave_leaves_big_soliton(family_half):
    sol = ApproxSolution(family_half, 0.1, "symmetric", indices=[])
    sol._components = [c for c in sol._components if c.name == "big"]
    sol.beta_coeffs = {}
    x = np.linspace(-30, 30, 501)
    assert np.abs(sol.evaluate(2.0, x) - q_values(x)).max() < 1e-14


def test_symmetry(sol_checks):
    sol = sol_checks
    x = np.linspace(-120, 120, 4001)
    for t in (0.0, 0.5 * sol.tau_sigma, sol.tau_sigma):
        z1 = sol.evaluate(t, x)
        z2 = sol.evaluate(-t, -x)
        assert np.abs(z1 - z2).max() < 1e-10


def test_alpha_bounds(family_half):
    # sup|alpha| <= C sqrt(sigma), sup|alpha'| <= C sigma with C < 10
    for sig in (0.02, 0.05, 0.1, 0.2):
        sol = ApproxSolution(family_half, sig, "symmetric")
        s = np.linspace(-40 / np.sqrt(sig), 40 / np.sqrt(sig), 20001)
        al = sol.alpha(s)
        be = sol.beta_derivs(s, 0)[0]
        assert np.abs(al).max() / np.sqrt(sig) < 10.0
        assert np.abs(be).max() / sig < 10.0
        assert abs(sol.alpha(np.array([0.0]))[0]) < 1e-15
        assert np.abs(al + sol.alpha(-s)).max() < 1e-14   # odd


def test_delta_leading_order(family_half):
    lam = 0.5
    lead = 10.0 * (1.0 - lam**2) / (15.0 + 10.0 * lam - lam**2) * 6.0
    sigmas = np.geomspace(0.02, 0.2, 5)
    errs = [abs(ApproxSolution(family_half, s, "symmetric").delta
                - np.sqrt(s) * lead) for s in sigmas]
    slope, _, _ = fit_loglog(sigmas, errs)
    assert slope > 1.4   # remainder is O(sigma^{3/2})


def test_shift_data_values(family_half):
    sol = ApproxSolution(family_half, 0.1, "sharp")
    sd = sol.shift_data()
    lam = 0.5
    b10 = omega.b10_closed(lam)
    # the physical small-soliton shift is delta_sigma/sqrt(lam), whose
    # leading term is 2*b10/sqrt(lam) =~ -3.6519 at lam = 1/2
    assert 2.0 * b10 / np.sqrt(lam) == pytest.approx(-3.65189, abs=1e-4)
    b11t = family_half[(1, 1)].b - b10**3 / 6.0
    assert sd.delta_sigma == pytest.approx(2.0 * (b10 + 0.1 * b11t), rel=1e-12)
    assert sd.delta2 == pytest.approx(sd.delta_sigma / np.sqrt(lam), rel=1e-12)
    assert sd.big_d == pytest.approx((1 - lam) / lam**1.5 * omega.d_lambda(lam),
                                     rel=1e-12)
    assert sd.interaction_time == pytest.approx(
        (1 - lam) / lam**1.5 * 0.1 ** (-0.51), rel=1e-12)
    # big-soliton shift leading order at lam=1/2, c2-1 = 0.09
    lead1 = np.sqrt(0.09) * 10.0 * (1 - lam**2) / (lam * (15 + 10 * lam - lam**2)) * 6.0
    assert lead1 == pytest.approx(1.36709, abs=1e-4)
    assert (1.0 - lam) / lam**1.5 * omega.d_lambda(lam) != 0.0


def test_d_nonzero_across_lambda():
    for lam in np.arange(0.1, 0.95, 0.1):
        assert (1 - lam) / lam**1.5 * omega.d_lambda(lam) != 0.0


def test_residual_slopes(family_half):
    sigmas = np.geomspace(0.02, 0.2, 6)
    rs = [ApproxSolution(family_half, s, "symmetric").residual_h1_max()
          for s in sigmas]
    rsh = [ApproxSolution(family_half, s, "sharp").residual_h1_max()
           for s in sigmas]
    slope_z, _, _ = fit_loglog(sigmas, rs)
    slope_sharp, _, _ = fit_loglog(sigmas, rsh)
    assert slope_z >= 3.4
    assert slope_sharp >= 2.7


def test_endpoint_slopes(family_half):
    sigmas = np.geomspace(0.02, 0.2, 6)
    e_z = [ApproxSolution(family_half, s, "symmetric").endpoint_error(side=1)
           for s in sigmas]
    e_sharp = [ApproxSolution(family_half, s, "sharp").endpoint_error(side=-1)
               for s in sigmas]
    slope_z, _, _ = fit_loglog(sigmas, e_z)
    slope_sharp, _, _ = fit_loglog(sigmas, e_sharp)
    assert slope_z >= 3.0
    assert slope_sharp >= 2.4


def test_residue_term_is_needed(family_half):
    # one-sided variant: dropping the doubled residue term at +t inflates
    # the decomposition error several-fold
    sharp = ApproxSolution(family_half, 0.1, "sharp")
    with_term = sharp.endpoint_error(side=1)
    without = sharp.endpoint_error(side=1, include_residue=False)
    assert without / with_term >= 3.0
    # symmetric variant: the single -d term also matters, less dramatically
    sym = ApproxSolution(family_half, 0.1, "symmetric")
    ratio = (sym.endpoint_error(side=1, include_residue=False)
             / sym.endpoint_error(side=1))
    assert ratio >= 1.8


def test_sharp_reduces_to_symmetric_when_d_zero(family_half):
    sym = ApproxSolution(family_half, 0.1, "symmetric")
    sharp0 = ApproxSolution(family_half, 0.1, "sharp", residue_coefficient=0.0)
    x = np.linspace(-150, 150, 5001)
    t = 2.3
    assert np.abs(sym.evaluate(t, x) - sharp0.evaluate(t, x)).max() < 1e-12
    assert np.abs(sym.residual(t, x) - sharp0.residual(t, x)).max() < 1e-12


def test_fu_term_dominates_sharp_correction(family_half):
    # S(z#) - S(z) is led by the one uncancelled second-derivative term of
    # the added residue piece; subtracting it collapses the difference
    sharp = ApproxSolution(family_half, 0.1, "sharp")
    sym = ApproxSolution(family_half, 0.1, "symmetric")
    x = scan_grid(0.1, 0.0, sharp.mu)
    h = x[1] - x[0]
    fs = sharp.fields(0.0, x)
    fz = sym.fields(0.0, x)
    ds, dsx = fs["S"] - fz["S"], fs["Sx"] - fz["Sx"]
    fu, fux = sharp.fu_term(0.0, x)
    full = np.sqrt(h * np.sum(ds**2 + dsx**2))
    removed = np.sqrt(h * np.sum((ds - fu) ** 2 + (dsx - fux) ** 2))
    assert full / removed >= 2.0


def test_expansion_consistency_with_source_tables(family_half, op_grid):
    """S of the second-order ansatz minus the third-order source sum is the
    higher-order remainder; its sigma-slope confirms the tables."""
    lam = 0.5
    low = [(1, 0), (1, 1), (2, 0)]
    splines = {}
    for kl in ((3, 0), (2, 1), (1, 2)):
        f, g = omega.build_sources(kl[0], kl[1], family_half.sets, lam, op_grid)
        splines[kl] = (
            InterpolatedUnivariateSpline(op_grid.x, f.values, k=5, ext=1),
            InterpolatedUnivariateSpline(op_grid.x, g.values, k=5, ext=1),
        )
    sigmas = np.geomspace(0.02, 0.2, 5)
    errs = []
    for sig in sigmas:
        sol = ApproxSolution(family_half, sig, "symmetric", indices=low)
        t = 0.3 * sol.tau_sigma
        x = scan_grid(sig, t, sol.mu)
        fields = sol.fields(t, x)
        ys = x + sol.mu * t
        yy = x - sol.alpha(ys)
        from bbmlab.profiles import qtilde_derivs
        qt = qtilde_derivs(ys, sig, sol.theta, 1)
        expected = np.zeros_like(x)
        for (k, l), (fs, gs) in splines.items():
            qk = qt[0] ** k
            qk_p = k * qt[0] ** (k - 1) * qt[1]
            expected += sig**l * (qk * fs(yy) + qk_p * gs(yy))
        h = x[1] - x[0]
        errs.append(np.sqrt(h * np.sum((fields["S"] - expected) ** 2)))
    slope, _, _ = fit_loglog(sigmas, errs)
    assert slope >= 2.7


def test_physical_frame_consistency(family_half):
    sol = ApproxSolution(family_half, 0.1, "sharp")
    lam = sol.lam
    t_phys = 1.7
    x_phys = np.linspace(-60, 60, 2001)
    rl = np.sqrt(lam)
    tp = lam * rl / (1 - lam) * t_phys
    xp = rl * (x_phys - t_phys / (1 - lam))
    direct = lam / (1 - lam) * sol.evaluate(tp, xp)
    assert np.abs(sol.physical_values(t_phys, x_phys) - direct).max() < 1e-10


def test_physical_residual_scaling(family_half):
    eps = np.geomspace(0.05, 0.3, 5)
    lam = 0.5
    vals = []
    for e in eps:
        c2 = 1.0 + e
        sigma = (c2 - 1.0) / (c2 * lam)
        sol = ApproxSolution(family_half, sigma, "sharp")
        t_int = sol.shift_data().interaction_time
        pieces = [sol.physical_residual_l2_pieces(t) for t in (0.0, 0.5 * t_int, t_int)]
        vals.append(max(np.hypot(a, b) for a, b in pieces))
    slope, _, _ = fit_loglog(eps, vals)
    assert slope >= 2.7   # bound is (c2-1)^3
