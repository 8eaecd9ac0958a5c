import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats
from scipy.stats import norm

from privmean import rng as rngmod
from privmean.audit import laplace_cdf
from privmean.errors import EmptySupport, GridTooLarge, InstanceTooLarge, UnsupportedDimension
from privmean.primitives import PrivacyBudget, hockey_stick
from privmean.tukey import (
    DepthProfile,
    GridSpec,
    certified_distance,
    depth_counts,
    depth_profile,
    discrete_tukey_pipeline,
    exact_tables,
    exact_unsafe_distance,
    expected_tukey_depth,
    multiset_depths_1d,
    ptr_threshold,
    restricted_distribution,
    restricted_exp_mechanism,
    safety_certificate,
    tukey_depth,
    tukey_ptr,
)

from oracles import depth_1d, depth_2d_bruteforce, restricted_law_loop

coords = st.integers(-4, 4)


# ---- depth ----


def test_depth_1d_example():
    assert tukey_depth([[1], [2], [3], [4], [5]], [3]) == pytest.approx(3 / 5)


def test_depth_outside_hull_is_zero():
    x = np.random.default_rng(0).standard_normal((30, 2))
    assert tukey_depth(x, [10.0, 10.0]) == 0.0
    assert tukey_depth(x[:, :1], [-10.0]) == 0.0


def test_depth_rejects_high_dimension():
    with pytest.raises(UnsupportedDimension):
        tukey_depth(np.zeros((4, 3)), np.zeros(3))


def test_depth_2d_matches_bruteforce():
    rng = np.random.default_rng(4)
    for _ in range(10):
        x = rng.standard_normal((15, 2))
        for y in rng.standard_normal((5, 2)):
            assert depth_counts(x, y[None])[0] == depth_2d_bruteforce(x, y)


@settings(max_examples=60)
@given(st.lists(st.tuples(coords, coords), min_size=1, max_size=10), st.tuples(coords, coords))
def test_depth_2d_degenerate_inputs(pts, y):
    # integer points: collinear triples, duplicates and y on data points
    x = np.array(pts, dtype=float)
    assert depth_counts(x, np.array([y], dtype=float))[0] == depth_2d_bruteforce(x, y, extra_directions=720)


@settings(max_examples=60)
@given(st.lists(st.integers(-5, 5), min_size=1, max_size=12), st.integers(-6, 6))
def test_depth_1d_matches_count(xs, y):
    assert depth_counts(np.array(xs, float)[:, None], np.array([[y]], float))[0] == depth_1d(xs, y)


@settings(max_examples=40)
@given(st.integers(0, 2**31), st.integers(2, 12), st.sampled_from([1, 2]))
def test_depth_sensitivity_one(seed, n, d):
    rng = np.random.default_rng(seed)
    x = rng.integers(-3, 4, size=(n, d)).astype(float)
    grid = GridSpec(4.0, 1.0, d)
    ys = depth_profile(x, grid, full=True).centers()
    base = depth_counts(x, ys)
    for i in range(n):
        xp = x.copy()
        xp[i] = rng.integers(-4, 5, size=d)
        assert np.max(np.abs(depth_counts(xp, ys) - base)) <= 1


def test_depth_affine_equivariance():
    rng = np.random.default_rng(8)
    for _ in range(20):
        x = rng.standard_normal((25, 2))
        ys = rng.standard_normal((10, 2))
        a = rng.standard_normal((2, 2)) + 2 * np.eye(2)
        b = rng.standard_normal(2)
        np.testing.assert_array_equal(depth_counts(x @ a.T + b, ys @ a.T + b), depth_counts(x, ys))


def test_expected_depth():
    assert expected_tukey_depth([1.0, 2.0], [1.0, 2.0], np.eye(2)) == 0.5
    s = np.array([[4.0, 0.0], [0.0, 1.0]])
    assert expected_tukey_depth([2.0, 0.0], [0.0, 0.0], s) == pytest.approx(0.158655253931457, abs=1e-12)
    assert expected_tukey_depth([2.0, 0.0], [0.0, 0.0], s) == pytest.approx(norm.cdf(-1.0), abs=1e-15)


# ---- grid and profile ----


def test_grid_shape():
    g = GridSpec(1.0, 0.25, 2)
    assert g.half_count == 4 and g.per_axis == 9 and g.total_cells == 81
    np.testing.assert_allclose(g.snap([[0.13, -0.37]]), [[0.25, -0.25]])
    # ties go to the smaller grid point
    np.testing.assert_allclose(g.snap([[0.125, -0.125]]), [[0.0, -0.25]])


@given(st.lists(st.floats(-10, 10), min_size=1, max_size=20))
def test_snap_is_idempotent(xs):
    g = GridSpec(5.0, 0.3, 1)
    once = g.snap(np.array(xs)[:, None])
    np.testing.assert_array_equal(g.snap(once), once)


def test_profile_matches_pointwise_depth():
    x = np.array([[-1.0], [0.0], [0.0], [2.0]])
    grid = GridSpec(4.0, 1.0, 1)
    prof = depth_profile(x, grid, full=True)
    assert prof.materialized == 9
    for c, q in zip(prof.centers(), prof.counts.ravel()):
        assert q == round(4 * tukey_depth(x, c))
        assert 0 <= q <= 4
    # the default block covers only the data's range
    small = depth_profile(x, grid)
    assert small.materialized == 4
    assert small.level_counts() == prof.level_counts()


def test_grid_cap():
    x = np.random.default_rng(0).uniform(-50, 50, size=(10, 2))
    with pytest.raises(GridTooLarge):
        depth_profile(x, GridSpec(60.0, 0.01, 2, cap=10**6))


@settings(max_examples=30)
@given(st.integers(0, 2**31))
def test_level_sets_nested(seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((40, 2))
    prof = depth_profile(x, GridSpec(3.0, 0.25, 2))
    sizes = [prof.cells_at_least(s) for s in range(0, 42)]
    assert all(a >= b for a, b in zip(sizes, sizes[1:]))
    q = prof.counts
    for t1, t2 in [(3, 5), (1, 10), (8, 9)]:
        assert np.all((q >= t2) <= (q >= t1))


@pytest.mark.parametrize("d", [1, 2])
def test_volume_ratio_bound(d):
    rng = np.random.default_rng(12 + d)
    n, alpha1 = 5000, 0.05
    x = rngmod.standard_normal(rng, (n, d))
    grid = GridSpec(4.0, 0.02 if d == 1 else 0.05, d)
    prof = depth_profile(x, grid)
    ratio = prof.volume(n / 4) / prof.volume(3 * n / 8)
    bound = (norm.ppf(1 - 0.25 + alpha1) / norm.ppf(1 - 0.375 - alpha1)) ** d
    assert ratio <= bound


# ---- certificate ----


def test_certificate_whole_box_below_zero():
    x = rngmod.standard_normal(rngmod.make_rng(2), (40, 1))
    grid = GridSpec(3.0, 0.25, 1)
    prof = depth_profile(x, grid)
    b = PrivacyBudget(1.0, 0.1)
    cert = safety_certificate(prof, b, t=1.0, k=3, g=2.0)
    assert cert.volume_ratio == pytest.approx(grid.total_cells / prof.cells_at_least(1 + 3 + 2 + 1))
    assert prof.cells_at_least(-2) == grid.total_cells


def test_certificate_fails_when_upper_level_empty():
    x = np.zeros((4, 1))
    cert = safety_certificate(depth_profile(x, GridSpec(2.0, 1.0, 1)), PrivacyBudget(1.0, 0.1), 1.0, 3)
    assert not cert.passed and cert.volume_ratio == math.inf


def test_certificate_typical_gaussian():
    b = PrivacyBudget(1.0, 1e-6)
    beta = 0.05
    k = math.floor(math.log(1 / (2 * 1e-6 * beta)))
    grid = GridSpec(6.0, 0.01, 1)
    passed = 0
    for i in range(100):
        x = rngmod.standard_normal(rngmod.trial_stream(30, i), (2000, 1))
        passed += safety_certificate(depth_profile(x, grid), b, 500.0, k).passed
    assert passed >= 95


def test_certified_distance_is_passing_prefix():
    rng = np.random.default_rng(3)
    x = rngmod.standard_normal(rng, (400, 1))
    prof = depth_profile(x, GridSpec(5.0, 0.05, 1))
    b = PrivacyBudget(1.0, 1e-3)
    h = certified_distance(prof, b, 100.0)
    flags = [safety_certificate(prof, b, 100.0, k).passed for k in range(401)]
    assert all(flags[:h]) and (h == 401 or not flags[h])
    assert h > 0


def test_identical_points_on_grid():
    # a single occupied cell has positive grid volume, so the ratio is 1
    # and the certificate passes once eps * n / 16 clears the threshold
    grid = GridSpec(2.0, 1.0, 1)
    b = PrivacyBudget(1.0, 1e-6)
    big = depth_profile(np.ones((1000, 1)), grid)
    cert = safety_certificate(big, b, 250.0, 0)
    assert cert.volume_ratio == 1.0 and cert.passed
    small = depth_profile(np.ones((6, 1)), grid)
    assert not safety_certificate(small, b, 1.5, 0).passed


def test_identical_points_exact_oracle_agrees_safe():
    grid = GridSpec(2.0, 1.0, 1)
    x = np.ones((6, 1))
    assert exact_unsafe_distance(x, grid, PrivacyBudget(1.0, 0.1)) >= 1


# ---- exact oracle ----


def test_restricted_distribution_matches_loop():
    rng = np.random.default_rng(0)
    for _ in range(50):
        q = rng.integers(0, 6, size=7)
        t = float(rng.integers(0, 5))
        law = restricted_distribution(q[None], 0.7, t)[0]
        ref = restricted_law_loop(list(q), 0.7, t)
        if ref is None:
            assert law[-1] == 1.0 and law[:-1].sum() == 0
        else:
            np.testing.assert_allclose(law[:-1], ref, atol=1e-14)
            assert law[-1] == 0


def test_multiset_depths_match_direct():
    counts = np.array([[2, 0, 1, 0, 3]])
    xs = [0, 0, 2, 4, 4, 4]
    assert list(multiset_depths_1d(counts)[0]) == [depth_1d(xs, c) for c in range(5)]


def test_exact_distance_sentinel_when_all_safe():
    grid = GridSpec(2.0, 1.0, 1)
    x = np.array([[0.0], [1.0], [-1.0], [0.0]])
    assert exact_unsafe_distance(x, grid, PrivacyBudget(1.0, 0.999)) == 5


def test_exact_distance_zero_for_unsafe():
    grid = GridSpec(2.0, 1.0, 1)
    b = PrivacyBudget(0.5, 0.05)
    tab = exact_tables(grid, 4, b, 1.0)
    assert tab.unsafe.any()
    row = tab.counts[np.argmax(tab.unsafe)]
    x = np.repeat(np.arange(-2, 3, dtype=float), row)[:, None]
    assert exact_unsafe_distance(x, grid, b) == 0


def test_exact_distance_by_bruteforce_hamming():
    # distances from BFS over one-point moves equal the multiset Hamming distance
    grid = GridSpec(2.0, 1.0, 1)
    b = PrivacyBudget(0.5, 0.05)
    tab = exact_tables(grid, 4, b, 1.0)
    bad = tab.counts[tab.unsafe]
    for i in range(0, len(tab.counts), 7):
        c = tab.counts[i]
        ham = (4 - np.minimum(bad, c).sum(axis=1)).min() if len(bad) else 5
        assert tab.distance[i] == ham


def test_exact_oracle_caps():
    with pytest.raises(InstanceTooLarge):
        exact_unsafe_distance(np.zeros((7, 1)), GridSpec(2.0, 1.0, 1), PrivacyBudget(1.0, 0.1))
    with pytest.raises(InstanceTooLarge):
        exact_unsafe_distance(np.zeros((3, 1)), GridSpec(7.0, 1.0, 1), PrivacyBudget(1.0, 0.1))


def test_certificate_below_exact_small_suite():
    grid = GridSpec(2.0, 1.0, 1)
    b = PrivacyBudget(0.5, 0.05)
    rng = np.random.default_rng(17)
    for _ in range(50):
        x = rng.integers(-2, 3, size=(4, 1)).astype(float)
        h_cert = certified_distance(depth_profile(x, grid), b, 1.0)
        assert h_cert <= exact_unsafe_distance(x, grid, b)


@pytest.mark.parametrize("eps,delta", [(1.0, 0.05), (2.0, 0.1), (0.5, 0.2)])
def test_basic_safety_condition_implies_indistinguishable(eps, delta):
    # weights on the grid: w_x(Y) = sum over cells in Y of exp(eps q / 2)
    grid = GridSpec(2.0, 1.0, 1)
    n, t = 4, 1.0
    b = PrivacyBudget(eps, delta)
    tab = exact_tables(grid, n, b, t)
    q = multiset_depths_1d(tab.counts)
    w = np.exp(eps * q / 2)
    hit = 0
    for i in range(len(q)):
        upper = w[i][q[i] >= t + 1].sum()
        lower = w[i][q[i] >= t - 1].sum()
        if upper < (1 - delta) * lower:
            continue
        hit += 1
        for j in tab.neighbors[i][tab.neighbors[i] >= 0]:
            p, r = tab.laws[i], tab.laws[j]
            bound = 4 * math.exp(eps) * delta
            assert hockey_stick(p, r, eps) <= bound + 1e-12
            assert hockey_stick(r, p, eps) <= bound + 1e-12
    assert hit > 0


# ---- sampler and PTR ----


def test_sampler_uniform_on_equal_scores():
    x = np.array([[0.0], [0.0], [3.0], [3.0]])
    grid = GridSpec(4.0, 1.0, 1)
    prof = depth_profile(x, grid)
    # cells 0..3 all have depth 2
    assert list(prof.counts.ravel()) == [2, 2, 2, 2]
    rng = rngmod.make_rng(0)
    draws = [restricted_exp_mechanism(prof, 1.0, 1.0, rng)[0] for _ in range(100_000)]
    _, counts = np.unique(draws, return_counts=True)
    assert len(counts) == 4
    assert stats.chisquare(counts).pvalue > 0.01


def test_sampler_two_cell_ratio():
    grid = GridSpec(1.0, 1.0, 1)
    prof = DepthProfile(grid, 5, np.array([0]), np.array([4, 2]))
    eps = 0.8
    rng = rngmod.make_rng(1)
    m = 200_000
    hits = sum(restricted_exp_mechanism(prof, eps, 1.0, rng)[0] == 0.0 for _ in range(m))
    p = math.exp(eps) / (1 + math.exp(eps))
    assert abs(hits / m - p) < 4 * math.sqrt(p * (1 - p) / m)


def test_sampler_empty_support():
    prof = depth_profile(np.array([[0.0], [1.0]]), GridSpec(2.0, 1.0, 1))
    with pytest.raises(EmptySupport):
        restricted_exp_mechanism(prof, 1.0, 5.0, 0)


def test_sampler_depth_tail_bound():
    n, eps, alpha2 = 2000, 1.0, 0.15
    x = rngmod.standard_normal(rngmod.make_rng(5), (n, 1))
    prof = depth_profile(x, GridSpec(6.0, 0.01, 1))
    # explicit form of the bound: Vol(Y_{n/4}) / Vol(Y_{n(1/2 - alpha2/2)}) exp(-alpha2 n eps / 4)
    bound = prof.volume(n / 4) / prof.volume(n * (0.5 - alpha2 / 2)) * math.exp(-alpha2 * n * eps / 4)
    rng = rngmod.make_rng(6)
    bad = 0
    for _ in range(500):
        y = restricted_exp_mechanism(prof, eps, n / 4, rng)
        bad += tukey_depth(x, y) < 0.5 - alpha2
    assert bad <= 500 * bound + 3 * math.sqrt(500 * bound + 1e-300)


def test_ptr_zero_distance_fails():
    b = PrivacyBudget(1.0, 1e-6)
    # analytic failure probability P[Lap(1/eps) < threshold] at h = 0
    p_fail = float(laplace_cdf(ptr_threshold(b), 1.0))
    assert p_fail >= 1 - 1e-6
    grid = GridSpec(3.0, 1.0, 1)
    x = np.array([[0.0], [1.0], [2.0]])
    assert certified_distance(depth_profile(x, grid), b, 0.75) == 0
    outs = [tukey_ptr(x, grid, b, rng=rngmod.trial_stream(2, i)) for i in range(500)]
    assert all(o.failed and o.reason == "distance test" for o in outs)


def test_ptr_typical_gaussian_rarely_fails():
    b = PrivacyBudget(1.0, 1e-6)
    grid = GridSpec(6.0, 0.05, 1)
    fails = 0
    for i in range(60):
        rng = rngmod.trial_stream(44, i)
        x = grid.snap(rngmod.standard_normal(rng, (4000, 1)))
        fails += tukey_ptr(x, grid, b, rng=rng).failed
    assert fails <= 6


def test_ptr_replay():
    grid = GridSpec(6.0, 0.05, 1)
    x = grid.snap(rngmod.standard_normal(rngmod.make_rng(1), (500, 1)))
    b = PrivacyBudget(1.0, 1e-3)
    a = tukey_ptr(x, grid, b, rng=9)
    c = tukey_ptr(x, grid, b, rng=9)
    assert a.failed == c.failed
    if not a.failed:
        np.testing.assert_array_equal(a.estimate, c.estimate)


def test_ptr_exact_mode_on_tiny_instance():
    grid = GridSpec(2.0, 1.0, 1)
    b = PrivacyBudget(6.0, 0.1)
    x = np.array([[0.0], [0.0], [0.0], [0.0], [1.0], [-1.0]])
    out = tukey_ptr(x, grid, b, rng=0, distance_mode="exact")
    assert out.diagnostics["h"] == exact_unsafe_distance(x, grid, b)


# ---- finite pipeline ----


def _pipeline_errors(sigma, seeds, n=4000, delta=1e-6, alpha=0.25):
    b = PrivacyBudget(1.0, delta)
    root = np.linalg.cholesky(sigma)
    mu = np.array([3.1416, -2.7183][: sigma.shape[0]])
    errs, fails = [], 0
    for s in seeds:
        rng = rngmod.trial_stream(77, s)
        z = rngmod.standard_normal(rng, (2 * n, sigma.shape[0]))
        out = discrete_tukey_pipeline(mu + z @ root.T, b, alpha, 0.05, rng)
        if out.failed:
            fails += 1
            continue
        diff = np.linalg.solve(root, out.estimate - mu)
        errs.append(float(np.linalg.norm(diff)))
    return np.array(errs), fails


def test_pipeline_ledger_and_accuracy_1d():
    errs, fails = _pipeline_errors(np.array([[2.0]]), range(30))
    assert fails <= 3
    assert np.mean(errs <= 0.25) >= 0.9
    b = PrivacyBudget(1.0, 1e-6)
    x = 3 + math.sqrt(2) * rngmod.standard_normal(rngmod.make_rng(0), (8000, 1))
    out = discrete_tukey_pipeline(x, b, 0.25, 0.05, 0)
    eps, delta = out.ledger.total
    assert eps == pytest.approx(5.0)
    assert delta == pytest.approx(3e-6 + math.e * 1e-6)


@pytest.mark.slow
def test_pipeline_condition_number_sweep_2d():
    # exact 2-D depth over every grid cell is the bottleneck, so this runs small
    seeds = range(6)
    e1, f1 = _pipeline_errors(np.eye(2), seeds, n=2000, delta=1e-3, alpha=0.5)
    e2, f2 = _pipeline_errors(np.diag([1.0, 100.0]), seeds, n=2000, delta=1e-3, alpha=0.5)
    assert f1 <= 1 and f2 <= 1
    m1, m2 = np.median(e1), np.median(e2)
    assert max(m1, m2) <= 2 * min(m1, m2)


def test_pipeline_presnapped_fixed_point():
    grid = GridSpec(10.0, 0.2, 1)
    x = grid.snap(rngmod.standard_normal(rngmod.make_rng(0), (100, 1)))
    np.testing.assert_array_equal(grid.snap(x), x)
