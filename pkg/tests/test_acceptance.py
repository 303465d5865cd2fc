"""End-to-end acceptance checks, one test per criterion, budgets included.

These are the binding contracts for the package: exact tolerances and wall
clock limits are pinned in each test. They run slower than the unit suites
(minutes, not seconds); the shared fixtures keep the expensive artifacts
(the Monte Carlo sample, the 1000-draw posterior, its per-draw bounds) to
one computation each.
"""

import csv
import json
import time

import numpy as np
import pytest

from svarproj import (BoundsConfig, EmptyIdentifiedSet, NwHyper,
                      ProjectionConfig, Target, TimeSeriesData, VarSpec,
                      bounds, bounds_batch, calibrate_radius, chi2_quantile,
                      contains, dm_interval, estimate,
                      gaussian_posterior_draws, irf_stack, nw_posterior_draws,
                      nw_update, oracle_bounds_2d, oracle_bounds_haar,
                      projection_region, robust_credibility)
from svarproj.calibrate import CalibrateConfig
from svarproj.cli import main as cli_main
from svarproj.restrictions import Restriction, RestrictionSet
from svarproj.varcore import companion_matrix, pack_mu, unpack_mu

from conftest import (DGP_A, DGP_SIGMA, SIGN_PATTERN, random_stable_var,
                      simulate_var)


@pytest.fixture(scope="module", autouse=True)
def warm_kernels():
    """Compile the jitted kernels before anything is timed."""
    A = np.array([[0.5, 0.1], [0.2, 0.3]])
    irf_stack(A, 3)
    mu = pack_mu(A, DGP_SIGMA)
    bounds(mu, VarSpec(n=2, p=1), SIGN_PATTERN, Target(k=0, i=1, j=1))


@pytest.fixture(scope="module")
def mc_sample():
    """The single T=200 sample shared by the credibility and calibration
    criteria, with its M=1000 posterior and per-draw bounds."""
    y = simulate_var(DGP_A, DGP_SIGMA, 200, seed=2024)
    data = TimeSeriesData(values=y, names=("emp", "wage"))
    rf = estimate(data, VarSpec(n=2, p=1))
    draws = gaussian_posterior_draws(rf, 1000, seed=7)
    targets = [Target(k=0, i=1, j=1)]
    arr = bounds_batch(draws.draws, VarSpec(n=2, p=1), SIGN_PATTERN, targets)
    return rf, draws, targets, arr


def test_criterion_1_chi_square_quantile():
    start = time.monotonic()
    value = chi2_quantile(27, 0.68)
    elapsed = time.monotonic() - start
    assert value == pytest.approx(29.87, abs=0.02)
    assert elapsed < 1.0


def _random_sign_instance(seed):
    # Distinct (j, i, k) cells: a >= and <= pair on one coordinate pins it
    # to exactly zero, a measure-zero set no finite grid can certify.
    rng = np.random.default_rng(seed)
    A, Sigma = random_stable_var(rng, n=2, p=1)
    n_extra = int(rng.integers(1, 4))   # 2..4 rows including normalization
    cells = [(j, i, k) for j in (1, 2) for i in (1, 2) for k in (0, 1)
             if (j, i, k) != (1, 1, 0)]
    picks = rng.choice(len(cells), size=n_extra, replace=False)
    rows = [Restriction(kind="sign_irf", j=1, i=1, k=0, sense=">=")]
    for idx in picks:
        j, i, k = cells[idx]
        rows.append(Restriction(
            kind="sign_irf", j=j, i=i, k=k,
            sense=">=" if rng.random() < 0.7 else "<=",
        ))
    return pack_mu(A, Sigma), RestrictionSet(n=2, restrictions=tuple(rows))


def test_criterion_2_optimizer_vs_grid_oracle():
    """50 random stable bivariate instances: the nlp bounds and a 100k-point
    angle scan agree to 1e-3 * (1 + |bound|) at horizons 0, 1 and 4."""
    start = time.monotonic()
    spec = VarSpec(n=2, p=1)
    nonempty = 0
    for case in range(50):
        mu, rset = _random_sign_instance(10_000 + case)
        for k in (0, 1, 4):
            t = Target(k=k, i=1, j=1)
            try:
                want = oracle_bounds_2d(mu, rset, t, grid=100_000)
            except EmptyIdentifiedSet:
                with pytest.raises(EmptyIdentifiedSet):
                    bounds(mu, spec, rset, t)
                continue
            got = bounds(mu, spec, rset, t)
            nonempty += 1
            tol_lo = 1e-3 * (1.0 + abs(want.lower))
            tol_hi = 1e-3 * (1.0 + abs(want.upper))
            assert abs(got.lower - want.lower) <= tol_lo, \
                f"case {case} k={k}: lower {got.lower} vs {want.lower}"
            assert abs(got.upper - want.upper) <= tol_hi, \
                f"case {case} k={k}: upper {got.upper} vs {want.upper}"
    assert nonempty >= 100   # the comparison actually exercised most cases
    assert time.monotonic() - start < 600.0


def test_criterion_3_irf_against_companion_powers():
    start = time.monotonic()
    rng = np.random.default_rng(33)
    for n in (1, 2, 3):
        for p in (1, 2, 3):
            A, _ = random_stable_var(rng, n=n, p=p)
            stack = irf_stack(A, 20)
            F = companion_matrix(A)
            Fk = np.eye(n * p)
            for k in range(21):
                np.testing.assert_allclose(stack[k], Fk[:n, :n], atol=1e-12,
                                           rtol=0)
                Fk = Fk @ F
    assert time.monotonic() - start < 5.0


def test_criterion_4_projection_covers_true_identified_set():
    """300 draws from the known DGP: the baseline 0.68 region contains the
    true identified-set interval at least 62.6% of the time (0.68 minus
    twice the binomial Monte Carlo error). The projection argument says the
    rate should sit far above the nominal level."""
    start = time.monotonic()
    spec = VarSpec(n=2, p=1)
    t = Target(k=0, i=1, j=1)
    mu0 = pack_mu(DGP_A, DGP_SIGMA)
    truth = bounds(mu0, spec, SIGN_PATTERN, t)
    truth_arr = np.array([[truth.lower, truth.upper]])
    cfg = ProjectionConfig(starts=4, inner=BoundsConfig(starts=6))
    covered = 0
    reps = 300
    for r in range(reps):
        y = simulate_var(DGP_A, DGP_SIGMA, 200, seed=50_000 + r)
        rf = estimate(TimeSeriesData(values=y, names=("a", "b")), spec)
        region = projection_region(rf, SIGN_PATTERN, [t],
                                   chi2_quantile(rf.d, 0.68), cfg)
        if region.status[0] == "ok" and contains(region, truth_arr, tol=1e-9):
            covered += 1
    coverage = covered / reps
    assert coverage >= 0.68 - 0.054, f"coverage {coverage:.3f}"
    assert time.monotonic() - start < 7200.0


def test_criterion_5_robust_credibility_at_baseline(mc_sample):
    rf, draws, targets, arr = mc_sample
    start = time.monotonic()
    region = projection_region(rf, SIGN_PATTERN, targets,
                               chi2_quantile(rf.d, 0.68))
    cred = robust_credibility(arr, region)
    assert cred >= 0.68 - 0.032, f"credibility {cred:.3f}"
    assert time.monotonic() - start < 1800.0


def test_criterion_6_calibrated_radius(mc_sample):
    rf, draws, targets, arr = mc_sample
    start = time.monotonic()
    result = calibrate_radius(rf, SIGN_PATTERN, targets, draws,
                              alpha=0.68, eta=0.005, bounds_array=arr)
    baseline_c = chi2_quantile(rf.d, 0.68)
    assert 0.675 <= result.achieved <= 0.685, f"achieved {result.achieved}"
    assert result.c_star <= baseline_c + 1e-9
    assert result.effective_dof < rf.d
    assert time.monotonic() - start < 3600.0


def test_criterion_7_projection_approaches_delta_method():
    """Scalar model, radius r = 1: the projection interval and the
    delta-method interval [vbar +- r sigma / sqrt(T)] must close their gap
    by at least a factor 3 as T grows from 1e2 to 1e4 (the bound map
    mu -> sqrt(sigma) is smooth, so both are first-order equivalent)."""
    start = time.monotonic()
    rset = RestrictionSet(n=1, restrictions=(
        Restriction(kind="sign_irf", j=1, i=1, k=0),))
    t = Target(k=0, i=1, j=1)
    r = 1.0
    gaps = {}
    for T in (100, 10_000):
        rng = np.random.default_rng(T)
        y = np.zeros((T + 1, 1))
        for s in range(1, T + 1):
            y[s] = 0.5 * y[s - 1] + 1.4 * rng.standard_normal()
        rf = estimate(TimeSeriesData(values=y, names=("y",)),
                      VarSpec(n=1, p=1, demean=False))
        region = projection_region(rf, rset, [t], r**2)
        dm = dm_interval(rf, rset, t, r=r, delta=0.0)
        lo, hi = region.interval(0)
        gaps[T] = max(abs(lo - dm.lower), abs(hi - dm.upper))
    assert gaps[100] / max(gaps[10_000], 1e-12) >= 3.0, f"gaps {gaps}"
    assert time.monotonic() - start < 300.0


def test_criterion_8_normal_wishart_updates_and_moments():
    start = time.monotonic()
    y = simulate_var(DGP_A, DGP_SIGMA, 250, seed=88)
    data = TimeSeriesData(values=y, names=("a", "b"))
    rf = estimate(data, VarSpec(n=2, p=1))
    flat = NwHyper.flat(2, 1)
    A_T, S_T = nw_update(flat, rf, data)
    np.testing.assert_allclose(A_T, rf.A, atol=1e-12, rtol=0)
    np.testing.assert_allclose(S_T, rf.Sigma, atol=1e-12, rtol=0)

    draws = nw_posterior_draws(flat, rf, data, 10_000, seed=6)
    slopes = np.array([unpack_mu(row, 2, 1)[0] for row in draws.draws])
    sigmas = np.array([unpack_mu(row, 2, 1)[1] for row in draws.draws])
    se = slopes.std(axis=0, ddof=1) / np.sqrt(draws.M)
    assert np.all(np.abs(slopes.mean(axis=0) - A_T) <= 3.0 * se)
    iw_mean = S_T * rf.T / (rf.T - 2 - 1)
    np.testing.assert_allclose(sigmas.mean(axis=0), iw_mean, rtol=0.05)
    assert time.monotonic() - start < 300.0


def test_criterion_9_invariant_battery():
    """Randomized structural invariants: scale equivariance of the bounds,
    the Haar cloud sandwiched by the sharp set, radius nesting of the
    projection, plug-in containment, and batch determinism."""
    start = time.monotonic()
    spec = VarSpec(n=2, p=1)
    rng = np.random.default_rng(321)
    for case in range(8):
        A, Sigma = random_stable_var(rng, n=2, p=1)
        mu = pack_mu(A, Sigma)
        t = Target(k=int(rng.choice([0, 1, 2])), i=1, j=1)
        try:
            base = bounds(mu, spec, SIGN_PATTERN, t)
        except EmptyIdentifiedSet:
            continue

        s = float(rng.uniform(0.5, 3.0))
        scaled = bounds(pack_mu(A, s**2 * Sigma), spec, SIGN_PATTERN, t)
        assert scaled.lower == pytest.approx(s * base.lower, rel=1e-4,
                                             abs=1e-8)
        assert scaled.upper == pytest.approx(s * base.upper, rel=1e-4,
                                             abs=1e-8)

        cloud = oracle_bounds_haar(mu, SIGN_PATTERN, t, samples=5_000,
                                   seed=case)
        assert base.lower <= cloud.lower + 1e-6
        assert base.upper >= cloud.upper - 1e-6

        rows = np.tile(mu, (3, 1))
        out1 = bounds_batch(rows, spec, SIGN_PATTERN, [t])
        out2 = bounds_batch(rows, spec, SIGN_PATTERN, [t])
        np.testing.assert_array_equal(out1.values, out2.values)
        np.testing.assert_array_equal(out1.values[0], out1.values[2])

    y = simulate_var(DGP_A, DGP_SIGMA, 200, seed=11)
    rf = estimate(TimeSeriesData(values=y, names=("a", "b")), spec)
    t = Target(k=1, i=1, j=1)
    inner = bounds(rf.mu, spec, SIGN_PATTERN, t)
    small = projection_region(rf, SIGN_PATTERN, [t], 1.0)
    large = projection_region(rf, SIGN_PATTERN, [t], 4.0)
    assert large.interval(0)[0] <= small.interval(0)[0] + 1e-7
    assert small.interval(0)[1] <= large.interval(0)[1] + 1e-7
    assert small.interval(0)[0] <= inner.lower + 1e-7
    assert small.interval(0)[1] >= inner.upper - 1e-7
    assert time.monotonic() - start < 600.0


def test_criterion_10_labor_market_pipeline(tmp_path):
    """The packaged preset on synthetic data, driven through the CLI: both
    documents land, every target status is ok, the plug-in band sits inside
    the baseline region, and the calibrated region sits inside the baseline
    on all four response paths at twenty horizons."""
    start = time.monotonic()
    y = simulate_var(DGP_A, DGP_SIGMA, 180, seed=314)
    with open(tmp_path / "data.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["emp", "wage"])
        w.writerows(y.tolist())
    config = {
        "data": str(tmp_path / "data.csv"),
        "lags": 6,
        "alpha": 0.68,
        "horizons": list(range(20)),
        "targets": {"variables": [1, 2], "shocks": [1, 2]},
        "restrictions": {"preset": "bh_labor_market", "V": 1.0},
        "M": 400,
        "eta": 0.005,
        "seed": 99,
        "output_dir": str(tmp_path / "out"),
        # sized for the single-core budget: 80 targets per region build
        # and 400 draws through the batch scan
        "solver": {"starts": 4, "inner_starts": 6, "batch_starts": 3,
                   "scan_grid": 480},
    }
    cfg_path = tmp_path / "run.json"
    cfg_path.write_text(json.dumps(config))

    assert cli_main(["project", str(cfg_path)]) == 0
    project = json.loads((tmp_path / "out" / "project.json").read_text())
    assert project["d"] == 27
    assert project["c"] == pytest.approx(chi2_quantile(27, 0.68), abs=1e-9)
    assert len(project["intervals"]) == 80
    for entry in project["intervals"]:
        assert entry["status"] == "ok"
        assert entry["lower"] - 1e-7 <= entry["plugin_lower"]
        assert entry["plugin_upper"] <= entry["upper"] + 1e-7

    assert cli_main(["calibrate", str(cfg_path)]) == 0
    doc = json.loads((tmp_path / "out" / "calibrate.json").read_text())
    assert doc["c_star"] <= doc["baseline_c"] + 1e-9
    with open(tmp_path / "out" / "calibrate_plot.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 80
    for row in rows:
        blo = float(row["baseline_lower"])
        bhi = float(row["baseline_upper"])
        clo = float(row["calibrated_lower"])
        chi = float(row["calibrated_upper"])
        assert blo - 1e-7 <= clo <= chi <= bhi + 1e-7, row
    assert time.monotonic() - start < 10_800.0
