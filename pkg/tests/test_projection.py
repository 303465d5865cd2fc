import numpy as np
import pytest
from scipy.integrate import quad
from scipy.optimize import brentq

from svarproj import (DomainError, ProjectionConfig, Target, WaldEllipsoid,
                      bounds, chi2_cdf, chi2_quantile, contains,
                      effective_dof, project_endpoint, projection_region)
from svarproj.errors import EmptyAtCenter
from svarproj.projection import ProjectionRegion
from svarproj.restrictions import Restriction, RestrictionSet
from svarproj.varcore import VarSpec

from conftest import SIGN_PATTERN


def chi2_quantile_by_integration(dof, prob):
    """Independent oracle: integrate the chi-square density and invert by
    root bracketing. Slow but free of incomplete-gamma code paths."""
    from scipy.special import gamma

    def pdf(t):
        return t ** (dof / 2 - 1) * np.exp(-t / 2) / (2 ** (dof / 2) * gamma(dof / 2))

    def cdf(x):
        return quad(pdf, 0.0, x, limit=200)[0]

    return brentq(lambda x: cdf(x) - prob, 1e-8, 400.0, xtol=1e-10)


def test_chi2_quantile_known_values():
    # median of chi-square with 1 dof
    assert chi2_quantile(1, 0.5) == pytest.approx(0.45493642, abs=1e-7)
    # 95th percentile, 2 dof: -2 log(0.05)
    assert chi2_quantile(2, 0.95) == pytest.approx(-2 * np.log(0.05), rel=1e-12)
    assert chi2_quantile(27, 0.68) == pytest.approx(29.8706, abs=2e-2)


@pytest.mark.parametrize("dof,prob", [(1, 0.5), (3, 0.68), (27, 0.68),
                                      (10, 0.95), (0.5, 0.3)])
def test_chi2_quantile_vs_integration_oracle(dof, prob):
    want = chi2_quantile_by_integration(dof, prob)
    assert chi2_quantile(dof, prob) == pytest.approx(want, abs=1e-7)


def test_chi2_cdf_inverts_quantile():
    for dof in (1, 4, 27):
        for prob in (0.1, 0.68, 0.99):
            assert chi2_cdf(chi2_quantile(dof, prob), dof) == pytest.approx(
                prob, abs=1e-12)


def test_chi2_quantile_domain_checks():
    with pytest.raises(DomainError):
        chi2_quantile(0, 0.5)
    with pytest.raises(DomainError):
        chi2_quantile(3, 1.0)
    with pytest.raises(DomainError):
        chi2_quantile(3, -0.1)


def test_effective_dof_round_trip():
    for dof in (0.7, 1.0, 4.2, 27.0):
        c = chi2_quantile(dof, 0.68)
        assert effective_dof(c, 0.68) == pytest.approx(dof, abs=1e-6)


def test_effective_dof_monotone_in_c():
    cs = [0.5, 1.0, 4.0, 12.0]
    dofs = [effective_dof(c, 0.68) for c in cs]
    assert all(a < b for a, b in zip(dofs, dofs[1:]))


def test_wald_ellipsoid_membership():
    center = np.array([1.0, -2.0])
    Omega = np.array([[2.0, 0.5], [0.5, 1.0]])
    ell = WaldEllipsoid(center=center, Omega=Omega, T=100, c=4.0)
    assert ell.contains(center)
    assert ell.distance(center) == pytest.approx(0.0, abs=1e-12)
    # step along the first eigenvector until just past the boundary
    far = center + 10.0
    assert not ell.contains(far)
    d = ell.distance(far)
    assert d > 4.0


@pytest.fixture(scope="module")
def rf(sample_rf):
    return sample_rf


TARGETS = [Target(k=k, i=1, j=1) for k in (0, 1, 3)]


@pytest.fixture(scope="module")
def baseline_region(rf):
    c = chi2_quantile(rf.d, 0.68)
    return projection_region(rf, SIGN_PATTERN, TARGETS, c)


def test_projection_contains_plugin_bounds(rf, baseline_region):
    spec = VarSpec(n=2, p=1)
    inner = np.array([
        [bounds(rf.mu, spec, SIGN_PATTERN, t).lower,
         bounds(rf.mu, spec, SIGN_PATTERN, t).upper]
        for t in TARGETS])
    assert contains(baseline_region, inner, tol=1e-8)


def test_projection_nested_in_radius(rf, baseline_region):
    smaller = projection_region(rf, SIGN_PATTERN, TARGETS, baseline_region.c / 4)
    for h in range(len(TARGETS)):
        lo_s, hi_s = smaller.interval(h)
        lo_b, hi_b = baseline_region.interval(h)
        assert lo_b <= lo_s + 1e-7
        assert hi_s <= hi_b + 1e-7


def test_zero_radius_delegates_to_plugin(rf):
    spec = VarSpec(n=2, p=1)
    region = projection_region(rf, SIGN_PATTERN, TARGETS, 0.0)
    for h, t in enumerate(TARGETS):
        b = bounds(rf.mu, spec, SIGN_PATTERN, t)
        lo, hi = region.interval(h)
        assert lo == pytest.approx(b.lower, abs=1e-9)
        assert hi == pytest.approx(b.upper, abs=1e-9)
        ep_lo, ep_hi = region.endpoints[h]
        assert ep_lo.status == "center" and ep_hi.status == "center"
    assert region.alpha_equivalent is None


def test_endpoint_sits_on_wald_boundary(rf):
    """With slack sign restrictions the binding constraint at the optimum
    is the ellipsoid itself: the Wald statistic equals c."""
    c = chi2_quantile(rf.d, 0.68)
    ep = project_endpoint(rf, SIGN_PATTERN, Target(k=0, i=1, j=1), c, "max")
    assert ep.status in ("ok", "center-improved")
    assert ep.wald == pytest.approx(c, rel=1e-4)


def test_endpoint_directions_ordered(rf):
    c = 2.0
    t = Target(k=1, i=2, j=1)
    lo = project_endpoint(rf, SIGN_PATTERN, t, c, "min")
    hi = project_endpoint(rf, SIGN_PATTERN, t, c, "max")
    assert lo.value <= hi.value
    assert lo.mu_star.shape == rf.mu.shape
    assert hi.B_star.shape == (2, 2)


def test_endpoint_rejects_bad_direction(rf):
    with pytest.raises(DomainError):
        project_endpoint(rf, SIGN_PATTERN, Target(k=0, i=1, j=1), 1.0, "up")
    with pytest.raises(DomainError):
        project_endpoint(rf, SIGN_PATTERN, Target(k=0, i=1, j=1), -1.0, "max")


def test_alpha_equivalent_reports_full_dof_level(rf, baseline_region):
    assert baseline_region.alpha_equivalent == pytest.approx(0.68, abs=1e-10)


def test_contains_shapes(baseline_region):
    H = len(TARGETS)
    mid = baseline_region.intervals.mean(axis=1)
    assert contains(baseline_region, mid)
    from svarproj import DimensionMismatch
    with pytest.raises(DimensionMismatch):
        contains(baseline_region, np.zeros(H + 1))


def test_empty_at_center_warns(rf):
    """Restrictions nothing satisfies at mu-hat: the region build warns and
    records the empty plug-in set but still searches the ellipsoid."""
    impossible = RestrictionSet(n=2, restrictions=(
        Restriction(kind="sign_irf", j=1, i=1, k=0, sense=">=", bound=50.0),))
    t = Target(k=0, i=1, j=1)
    with pytest.warns(EmptyAtCenter):
        region = projection_region(rf, impossible, [t], 1.0)
    assert region.empty_at_center
    assert region.status[0] in ("failed", "ok")
    assert np.isnan(region.intervals).all() or region.status[0] == "ok"


def test_region_determinism(rf):
    c = 2.5
    r1 = projection_region(rf, SIGN_PATTERN, TARGETS, c,
                           ProjectionConfig(starts=4, seed=9))
    r2 = projection_region(rf, SIGN_PATTERN, TARGETS, c,
                           ProjectionConfig(starts=4, seed=9))
    np.testing.assert_array_equal(r1.intervals, r2.intervals)


def test_warm_start_does_not_change_solution_quality(rf):
    c = 2.5
    plain = projection_region(rf, SIGN_PATTERN, TARGETS, c)
    warm = {}
    for h, (lo, hi) in enumerate(plain.endpoints):
        warm[(h, "min")] = np.concatenate([lo.mu_star, lo.B_star.ravel(order="F")])
        warm[(h, "max")] = np.concatenate([hi.mu_star, hi.B_star.ravel(order="F")])
    again = projection_region(rf, SIGN_PATTERN, TARGETS, c, warm=warm)
    np.testing.assert_allclose(again.intervals, plain.intervals, atol=1e-6)
