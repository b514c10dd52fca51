import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from haclrt.density import (
    clamp_unit,
    hessian,
    log_density,
    log_density_and_derivs,
    score,
    two_level_spec,
)
from haclrt.density import _as_rows, _log_density_generic
from haclrt.errors import DomainError
from haclrt.generators import get_family
from haclrt.tree import HacTree

TREE3 = HacTree([[1, 2], 3])
TREE4 = HacTree([[1, 2], [3, 4]])


def _cdf(spec, u):
    fam = spec.family
    th0 = spec.theta[0]
    t = 0.0
    for s, cols in enumerate(spec.child_cols):
        ths = spec.theta[1 + s]
        ts = sum(fam.phi(ths, u[c]) for c in cols)
        t += fam.phi(th0, fam.psi(ths, ts))
    for c in spec.leaf_cols:
        t += fam.phi(th0, u[c])
    return fam.psi(th0, t)


def _cdf_mixed_fd(spec, u, h=1e-3):
    # d-fold mixed central difference of the distribution function
    d = len(u)
    total = 0.0
    for signs in itertools.product((1, -1), repeat=d):
        total += np.prod(signs) * _cdf(spec, np.asarray(u) + h * np.array(signs))
    return total / (2.0 * h) ** d


def _fd_score(spec, u, h=1e-6):
    th = np.array(spec.theta)
    g = np.zeros(spec.p)
    for a in range(spec.p):
        tp, tm = th.copy(), th.copy()
        tp[a] += h
        tm[a] -= h
        g[a] = (
            log_density(spec.with_theta(tp), u)
            - log_density(spec.with_theta(tm), u)
        ) / (2.0 * h)
    return g


def _fd_hessian(spec, u, h=1e-4):
    th = np.array(spec.theta)
    p = spec.p
    H = np.zeros((p, p))
    f0 = log_density(spec, u)
    for a in range(p):
        tp, tm = th.copy(), th.copy()
        tp[a] += h
        tm[a] -= h
        H[a, a] = (
            log_density(spec.with_theta(tp), u)
            - 2.0 * f0
            + log_density(spec.with_theta(tm), u)
        ) / h**2
        for b in range(a + 1, p):
            acc = 0.0
            for sa, sb in itertools.product((1, -1), repeat=2):
                tq = th.copy()
                tq[a] += sa * h
                tq[b] += sb * h
                acc += sa * sb * log_density(spec.with_theta(tq), u)
            H[a, b] = H[b, a] = acc / (4.0 * h**2)
    return H


# high-precision reference values (50-digit arithmetic, mixed partial of
# the distribution function on the tree [[1,2],3])
LOGC_ANCHORS = [
    ("clayton", (1.0, 2.0), (0.3, 0.6, 0.5), 0.025467901299699915),
    ("gumbel", (1.5, 2.5), (0.3, 0.6, 0.5), 0.024943831359147733),
    ("gumbel", (1.0, 3.0), (1e-12, 1e-12, 1e-12), 19.580801168530206),
    ("clayton", (0.5, 4.0), (1e-10, 0.9999, 1e-6), -80.825715121002043),
    ("frank", (1.1, 3.0), (0.3, 0.6, 0.5), -0.045515393471209299),
    ("joe", (1.4, 2.2), (0.3, 0.6, 0.5), 0.10098263738436495),
]

THETA_LO = {"clayton": 0.4, "gumbel": 1.1, "frank": 0.5, "joe": 1.1}


def _random_spec(rng, fam_name, tree):
    lo = THETA_LO[fam_name]
    th0 = lo + rng.uniform(0.0, 2.0)
    gaps = rng.uniform(0.05, 2.5, tree.p - 1)
    return two_level_spec(tree, fam_name, [th0, *(th0 + gaps)])


@pytest.mark.parametrize("fam,theta,u,expected", LOGC_ANCHORS)
def test_log_density_reference_values(fam, theta, u, expected):
    spec = two_level_spec(TREE3, fam, theta)
    got = log_density(spec, np.array(u))
    assert got == pytest.approx(expected, abs=1e-11)


@pytest.mark.parametrize("fam", ["clayton", "gumbel", "frank", "joe"])
@pytest.mark.parametrize("tree", [TREE3, TREE4], ids=["d3", "d4"])
def test_density_is_mixed_partial_of_cdf(fam, tree):
    rng = np.random.default_rng(11)
    for _ in range(4):
        spec = _random_spec(rng, fam, tree)
        u = rng.uniform(0.15, 0.85, tree.d)
        c = np.exp(log_density(spec, u))
        c_fd = _cdf_mixed_fd(spec, u)
        assert c == pytest.approx(c_fd, rel=1e-4)


def test_density_example_point_against_cdf_differences():
    spec = two_level_spec(TREE3, "clayton", (1.0, 2.0))
    u = np.array([0.3, 0.6, 0.5])
    c_fd = _cdf_mixed_fd(spec, u, h=1e-3)
    assert np.exp(log_density(spec, u)) == pytest.approx(c_fd, rel=1e-4)


@pytest.mark.parametrize("fam", ["clayton", "gumbel"])
def test_score_matches_central_differences(fam):
    rng = np.random.default_rng(23)
    for trial in range(20):
        tree = TREE3 if trial % 2 == 0 else TREE4
        spec = _random_spec(rng, fam, tree)
        u = rng.uniform(0.05, 0.95, tree.d)
        g = score(spec, u)
        g_fd = _fd_score(spec, u)
        assert np.all(np.abs(g - g_fd) / (1.0 + np.abs(g_fd)) < 1e-6)


@pytest.mark.parametrize("fam", ["clayton", "gumbel"])
def test_hessian_matches_central_differences(fam):
    rng = np.random.default_rng(29)
    for trial in range(20):
        tree = TREE3 if trial % 2 == 0 else TREE4
        spec = _random_spec(rng, fam, tree)
        u = rng.uniform(0.05, 0.95, tree.d)
        H = hessian(spec, u)
        H_fd = _fd_hessian(spec, u)
        assert np.all(np.abs(H - H_fd) / (1.0 + np.abs(H_fd)) < 1e-4)


def test_score_and_hessian_on_wider_tree():
    tree = HacTree([[1, 2, 3, 4, 5], [6, 7, 8], 9, [10, 11, 12, 13]])
    spec = two_level_spec(tree, "clayton", (0.6, 1.4, 2.2, 3.0))
    rng = np.random.default_rng(31)
    u = rng.uniform(0.05, 0.95, tree.d)
    g, H = score(spec, u), hessian(spec, u)
    assert np.all(np.abs(g - _fd_score(spec, u)) / (1 + np.abs(g)) < 1e-6)
    assert np.all(np.abs(H - _fd_hessian(spec, u)) / (1 + np.abs(H)) < 1e-4)


@pytest.mark.parametrize("fam", ["clayton", "gumbel"])
@pytest.mark.parametrize("tree", [TREE3, TREE4], ids=["d3", "d4"])
def test_generic_and_analytic_paths_agree(fam, tree):
    rng = np.random.default_rng(37)
    spec = _random_spec(rng, fam, tree)
    U = rng.uniform(0.05, 0.95, (20, tree.d))
    rows, _ = _as_rows(spec, U)
    assert np.max(np.abs(log_density(spec, U) - _log_density_generic(spec, rows))) < 1e-10


@pytest.mark.parametrize(
    "fam,theta", [("clayton", 2.0), ("gumbel", 2.5), ("frank", 3.0), ("joe", 2.0)]
)
def test_exact_tie_reduces_to_one_level(fam, theta):
    # theta_0 = theta_1 collapses [[1,2],3] to the exchangeable copula
    spec = two_level_spec(TREE3, fam, (theta, theta))
    f = get_family(fam)
    rng = np.random.default_rng(41)
    for _ in range(50):
        u = rng.uniform(0.02, 0.98, 3)
        t = float(np.sum(f.phi(theta, u)))
        c_exch = -f.psi_t_deriv(theta, t, 3) * np.prod(
            [-f.phi_prime(theta, x) for x in u]
        )
        assert log_density(spec, u) == pytest.approx(np.log(c_exch), rel=1e-10)


@pytest.mark.parametrize("fam,theta", [("clayton", 2.0), ("gumbel", 2.5)])
def test_score_at_exact_tie_matches_one_sided_differences(fam, theta):
    spec = two_level_spec(TREE3, fam, (theta, theta))
    rng = np.random.default_rng(43)
    h = 1e-7
    for _ in range(10):
        u = rng.uniform(0.05, 0.95, 3)
        g = score(spec, u)
        f0 = log_density(spec, u)
        # root steps down, child steps up: both stay inside the cone
        g_fd = np.array(
            [
                (f0 - log_density(spec.with_theta((theta - h, theta)), u)) / h,
                (log_density(spec.with_theta((theta, theta + h)), u) - f0) / h,
            ]
        )
        assert np.all(np.abs(g - g_fd) / (1.0 + np.abs(g_fd)) < 1e-5)
        assert np.all(np.isfinite(hessian(spec, u)))


@pytest.mark.parametrize("tree", [TREE3, TREE4], ids=["d3", "d4"])
def test_gumbel_unit_parameters_give_independence(tree):
    spec = two_level_spec(tree, "gumbel", np.ones(tree.p))
    rng = np.random.default_rng(47)
    U = rng.uniform(0.01, 0.99, (50, tree.d))
    assert np.max(np.abs(log_density(spec, U))) < 1e-12


@pytest.mark.parametrize(
    "fam,theta",
    [
        ("clayton", (0.8, 1.6)),
        ("gumbel", (1.3, 2.2)),
        ("frank", (1.0, 2.5)),
        ("joe", (1.2, 2.0)),
    ],
)
def test_density_integrates_to_one(fam, theta):
    spec = two_level_spec(TREE3, fam, theta)
    rng = np.random.default_rng(53)
    U = clamp_unit(rng.uniform(size=(100_000, 3)))
    c = np.exp(log_density(spec, U))
    se = c.std(ddof=1) / np.sqrt(len(c))
    assert abs(c.mean() - 1.0) < 4.0 * se


@pytest.mark.parametrize("fam,theta", [("clayton", (1.0, 2.0)), ("gumbel", (1.4, 2.1))])
def test_bartlett_identity(fam, theta):
    # E[s s^T + H] = 0 under the model; uniform-weighted Monte Carlo
    spec = two_level_spec(TREE3, fam, theta)
    rng = np.random.default_rng(59)
    U = clamp_unit(rng.uniform(size=(200_000, 3)))
    logc, g, H = log_density_and_derivs(spec, U, order=2)
    w = np.exp(logc)[:, None, None]
    D = (g[:, :, None] * g[:, None, :] + H) * w
    se = D.std(axis=0, ddof=1) / np.sqrt(D.shape[0])
    assert np.all(np.abs(D.mean(axis=0)) < 4.0 * se)


def test_within_child_permutation_invariance():
    spec = two_level_spec(TREE4, "gumbel", (1.3, 2.0, 3.1))
    rng = np.random.default_rng(61)
    U = rng.uniform(0.05, 0.95, (30, 4))
    base = log_density(spec, U)
    assert log_density(spec, U[:, [1, 0, 2, 3]]) == pytest.approx(base, abs=1e-12)
    assert log_density(spec, U[:, [0, 1, 3, 2]]) == pytest.approx(base, abs=1e-12)


def test_equal_children_swap_invariance():
    spec = two_level_spec(TREE4, "clayton", (1.0, 2.4, 2.4))
    rng = np.random.default_rng(67)
    U = rng.uniform(0.05, 0.95, (30, 4))
    assert log_density(spec, U[:, [2, 3, 0, 1]]) == pytest.approx(
        log_density(spec, U), abs=1e-12
    )


def test_vectorized_rows_match_scalar_calls():
    spec = two_level_spec(TREE4, "gumbel", (1.2, 1.9, 2.8))
    rng = np.random.default_rng(71)
    U = rng.uniform(0.1, 0.9, (5, 4))
    logc, g, H = log_density_and_derivs(spec, U, order=2)
    for i in range(5):
        li, gi, Hi = log_density_and_derivs(spec, U[i], order=2)
        assert li == pytest.approx(logc[i], abs=1e-14)
        assert gi == pytest.approx(g[i], abs=1e-14)
        assert Hi == pytest.approx(H[i], abs=1e-14)


# --- argument and domain checking ---------------------------------------


def test_boundary_u_rejected():
    spec = two_level_spec(TREE3, "clayton", (1.0, 2.0))
    for bad in ([0.0, 0.5, 0.5], [0.5, 1.0, 0.5], [0.5, np.nan, 0.5]):
        with pytest.raises(DomainError):
            log_density(spec, np.array(bad))


def test_theta_outside_cone_rejected():
    with pytest.raises(DomainError):
        two_level_spec(TREE3, "clayton", (2.0, 1.0))
    with pytest.raises(DomainError):
        two_level_spec(TREE3, "gumbel", (0.8, 2.0))


def test_wrong_column_count_rejected():
    spec = two_level_spec(TREE3, "clayton", (1.0, 2.0))
    with pytest.raises(DomainError):
        log_density(spec, np.full(4, 0.5))


def test_three_level_tree_rejected():
    with pytest.raises(DomainError):
        two_level_spec(HacTree([1, [2, [3, 4]]]), "clayton", (1.0, 2.0, 3.0))


def test_analytic_derivatives_unavailable_for_frank_and_joe():
    for fam in ("frank", "joe"):
        spec = two_level_spec(TREE3, fam, (1.5, 2.5))
        with pytest.raises(DomainError):
            score(spec, np.full(3, 0.5))


def test_bad_order_rejected():
    spec = two_level_spec(TREE3, "clayton", (1.0, 2.0))
    with pytest.raises(DomainError):
        log_density_and_derivs(spec, np.full(3, 0.5), order=3)


def test_clamp_unit_pins_to_open_cube():
    u = clamp_unit(np.array([0.0, 1.0, 0.5, np.nextafter(0, 1)]))
    assert np.all(u > 0) and np.all(u < 1)
    assert u[2] == 0.5


@settings(deadline=None, max_examples=40)
@given(
    fam=st.sampled_from(["clayton", "gumbel", "frank", "joe"]),
    seed=st.integers(0, 10_000),
)
def test_log_density_finite_on_interior(fam, seed):
    rng = np.random.default_rng(seed)
    spec = _random_spec(rng, fam, TREE4)
    u = rng.uniform(1e-6, 1.0 - 1e-6, 4)
    assert np.isfinite(log_density(spec, u))
