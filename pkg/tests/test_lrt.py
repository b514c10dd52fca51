import json
import math

import numpy as np
import pytest
from scipy import stats

from haclrt.errors import DomainError, NumericError, SingularSigmaError
from haclrt.estimate import FitResult, FitConfig, mle
from haclrt.lrt import (
    ATOM_TOL,
    LrtResult,
    MixtureLaw,
    conditional_test,
    detect_setting,
    hybrid_pvalue,
    lrt_statistic,
    mc_null_pvalue,
    mixture_law,
    mixture_pvalue,
    null_statistics,
    power_curve,
    project,
    run_test,
)
from haclrt.sampler import sample
from haclrt.tree import Cone, HacTree, Hypothesis, local_cones

TREE3 = HacTree([[1, 2], 3])
TREE4 = HacTree([[1, 2], [3, 4]])

# half-space and its boundary line, the one-tie local geometry
CONE2 = Cone(2, ineq=np.array([[1.0, -1.0]]))
LINE2 = Cone(2, eq=np.array([[1.0, -1.0]]))
# twin geometry: z0 <= z1 and z0 <= z2
CONE3 = Cone(3, ineq=np.array([[1.0, -1.0, 0.0], [1.0, 0.0, -1.0]]))
BOTH3 = Cone(3, eq=np.array([[1.0, -1.0, 0.0], [1.0, 0.0, -1.0]]))
# one tie as equality, the other still a half-space
TIED3 = Cone(
    3,
    ineq=np.array([[1.0, 0.0, -1.0]]),
    eq=np.array([[1.0, -1.0, 0.0]]),
)


def _fit(theta, loglik, branch=None):
    return FitResult(
        theta=np.asarray(theta, dtype=float),
        loglik=loglik,
        converged=True,
        n_starts=1,
        active=(),
        grad_norm=0.0,
        branch=branch,
    )


# --- projection ------------------------------------------------------------


def test_project_interior_point_is_fixed():
    pr = project(np.array([1.0, 2.0]), CONE2, np.eye(2))
    assert np.allclose(pr.z_star, [1.0, 2.0])
    assert pr.q == 0.0
    assert pr.face == ()


def test_project_euclidean_halfspace():
    pr = project(np.array([2.0, 1.0]), CONE2, np.eye(2))
    assert np.allclose(pr.z_star, [1.5, 1.5])
    assert pr.q == pytest.approx(0.5, abs=1e-12)
    assert pr.face == (0,)


def test_project_point_on_null_line():
    pr = project(np.array([1.5, 1.5]), LINE2, np.eye(2))
    assert np.allclose(pr.z_star, [1.5, 1.5])
    assert pr.q == pytest.approx(0.0, abs=1e-15)


def test_project_weighted_metric():
    # with Var(z1) huge the projection moves z1, not z0
    sigma = np.diag([1e-4, 1e4])
    pr = project(np.array([2.0, 1.0]), CONE2, sigma)
    assert pr.z_star[0] == pytest.approx(2.0, abs=1e-3)
    assert pr.z_star[1] == pytest.approx(2.0, abs=1e-3)


def test_project_rejects_singular_sigma():
    with pytest.raises(SingularSigmaError):
        project(np.array([1.0, 0.0]), CONE2, np.ones((2, 2)))


def test_project_rejects_bad_shape():
    with pytest.raises(DomainError):
        project(np.array([1.0, 0.0, 3.0]), CONE2, np.eye(2))


def _random_triple(rng):
    p = int(rng.integers(2, 5))
    parents = [int(rng.integers(0, i)) for i in range(1, p)]
    edges = [(parents[i - 1], i) for i in range(1, p)]
    keep = [e for e in edges if rng.random() < 0.85]
    eq_edges = [e for e in keep if rng.random() < 0.3]
    ineq_edges = [e for e in keep if e not in eq_edges]

    def rows(pairs):
        out = np.zeros((len(pairs), p))
        for k, (a, b) in enumerate(pairs):
            out[k, a] = 1.0
            out[k, b] = -1.0
        return out

    cone = Cone(
        p,
        ineq=rows(ineq_edges) if ineq_edges else None,
        eq=rows(eq_edges) if eq_edges else None,
    )
    w = rng.standard_normal((p, p))
    sigma = w @ w.T + 0.3 * np.eye(p)
    z = 3.0 * rng.standard_normal(p)
    return p, ineq_edges, eq_edges, cone, sigma, z


def _feasible_points(rng, n, p, ineq_edges, eq_edges):
    """Random points repaired to satisfy parent <= child order constraints."""
    x = 2.0 * rng.standard_normal((n, p))
    for i in range(1, p):    # parent index < child index: one pass
        for a, b in ineq_edges:
            if b == i:
                x[:, b] = np.maximum(x[:, b], x[:, a])
        for a, b in eq_edges:
            if b == i:
                x[:, b] = x[:, a]
    return x


def test_project_beats_brute_force():
    # face enumeration must match or beat random feasible points
    rng = np.random.default_rng(99)
    for _ in range(10_000):
        p, ineq_e, eq_e, cone, sigma, z = _random_triple(rng)
        pts = _feasible_points(rng, 1000, p, ineq_e, eq_e)
        diff = z[None, :] - pts
        q_pts = np.einsum("ni,ni->n", diff, np.linalg.solve(sigma, diff.T).T)
        pr = project(z, cone, sigma)
        tol = 1e-8 * (1.0 + float(np.abs(z).max()))
        assert cone.contains(pr.z_star, tol)
        assert pr.q >= 0.0
        assert pr.q <= q_pts.min() + 1e-7 * (1.0 + q_pts.min())


def test_project_local_mesh_optimality():
    rng = np.random.default_rng(4)
    cones = [CONE2, CONE3, TIED3]
    zs = [np.array([2.0, -1.0]), np.array([1.0, -0.5, 0.3]),
          np.array([0.8, -0.2, -0.6])]
    for cone, z in zip(cones, zs):
        w = rng.standard_normal((cone.p, cone.p))
        sigma = w @ w.T + 0.5 * np.eye(cone.p)
        pr = project(z, cone, sigma)
        sinv = np.linalg.inv(sigma)
        checked = 0
        for _ in range(400):
            d = rng.standard_normal(cone.p)
            if cone.eq.shape[0]:
                # feasible directions live in the null space of the ties
                eq = cone.eq
                d = d - eq.T @ np.linalg.solve(eq @ eq.T, eq @ d)
            step = pr.z_star + 1e-3 * d
            if not cone.contains(step, 1e-12):
                continue
            q = float((z - step) @ sinv @ (z - step))
            assert q >= pr.q - 1e-9
            checked += 1
        assert checked > 50


# --- statistic -------------------------------------------------------------


def test_statistic_identical_fits():
    f = _fit([1.5, 2.0], -100.0)
    assert lrt_statistic(f, f) == 0.0


def test_statistic_arithmetic():
    full = _fit([1.5, 2.0], -100.0)
    null = _fit([1.7, 1.7], -101.5, branch=((1,),))
    assert lrt_statistic(null, full) == pytest.approx(3.0, abs=1e-12)


def test_statistic_clamps_roundoff():
    full = _fit([1.5, 2.0], -100.0 - 4e-9)
    null = _fit([1.7, 1.7], -100.0)
    assert lrt_statistic(null, full) == 0.0


def test_statistic_rejects_swapped_fits():
    full = _fit([1.5, 2.0], -100.0)
    null = _fit([1.7, 1.7], -101.5)
    with pytest.raises(NumericError):
        lrt_statistic(full, null)


def test_statistic_rejects_mismatched_lengths():
    with pytest.raises(DomainError):
        lrt_statistic(_fit([1.7, 1.7], -101.0), _fit([1.5, 2.0, 2.5], -100.0))


# --- Monte Carlo null ------------------------------------------------------


def test_null_draws_nonnegative_and_zero_iff_projections_agree():
    draws, info = null_statistics(
        np.eye(2), CONE2, LINE2, m=20_000, seed=11, details=True
    )
    assert np.all(draws >= 0.0)
    agree = info["q_null"] - info["q_full"] <= 1e-12
    assert np.array_equal(draws == 0.0, agree)
    assert np.all(info["q_full"] <= info["q_null"] + 1e-12)


def test_mc_pvalue_at_zero_statistic_is_one():
    p = mc_null_pvalue(0.0, np.eye(2), CONE2, LINE2, m=2000, seed=1)
    assert p == 1.0
    # below the atom tolerance counts as zero
    p = mc_null_pvalue(5e-9, np.eye(2), CONE2, LINE2, m=2000, seed=1)
    assert p == 1.0


def test_mc_pvalue_monotone_in_statistic():
    ps = [
        mc_null_pvalue(l, np.eye(2), CONE2, LINE2, m=5000, seed=3)
        for l in (0.5, 1.0, 2.0, 4.0)
    ]
    assert all(a >= b for a, b in zip(ps, ps[1:]))
    assert all(0.0 < p <= 1.0 for p in ps)


def test_mc_pvalue_reproducible():
    args = (1.3, np.eye(2), CONE2, LINE2)
    assert mc_null_pvalue(*args, m=2000, seed=9) == mc_null_pvalue(
        *args, m=2000, seed=9
    )


def test_mc_pvalue_validates_inputs():
    with pytest.raises(DomainError):
        mc_null_pvalue(1.0, np.eye(2), CONE2, LINE2, m=500)
    with pytest.raises(DomainError):
        mc_null_pvalue(-0.5, np.eye(2), CONE2, LINE2, m=2000)
    with pytest.raises(SingularSigmaError):
        mc_null_pvalue(1.0, np.ones((2, 2)), CONE2, LINE2, m=2000)


def test_one_tie_limit_law_matches_half_half_mixture():
    # atom of mass 1/2 at zero, chi2(1) above it, for any covariance
    rng = np.random.default_rng(12)
    for k in range(10):
        w = rng.standard_normal((2, 2))
        sigma = w @ w.T + 0.2 * np.eye(2)
        draws = null_statistics(sigma, CONE2, LINE2, m=100_000, seed=500 + k)
        atom = np.mean(draws == 0.0)
        assert abs(atom - 0.5) < 0.01
        pos = np.sort(draws[draws > 0])
        emp = (np.arange(1, pos.size + 1) + (draws.size - pos.size)) / draws.size
        mix = 0.5 + 0.5 * stats.chi2.cdf(pos, 1)
        assert np.max(np.abs(emp - mix)) < 0.02


def test_twin_pair_identity_covariance_weights():
    draws, info = null_statistics(
        np.eye(3), CONE3, BOTH3, m=100_000, seed=7, details=True
    )
    freq = [np.mean(info["nu"] == k) for k in (0, 1, 2)]
    assert freq[0] == pytest.approx(1.0 / 6.0, abs=0.01)
    assert freq[1] == pytest.approx(0.5, abs=0.01)
    assert freq[2] == pytest.approx(1.0 / 3.0, abs=0.01)
    # rank-jump regions agree with the atom of the statistic
    assert np.array_equal(info["nu"] == 0, draws == 0.0)


@pytest.mark.parametrize("beta", [0.0, 0.5, 1.0])
def test_region_frequencies_match_closed_form(beta):
    # covariance engineered so the weight formula gives this beta
    s12 = 3.0 * min(beta, 1.0 - 1e-6) - 1.0
    sigma = np.array([[1.0, 0.0, 0.0], [0.0, 2.0, s12], [0.0, s12, 2.0]])
    law_pair = mixture_law("twin-pair", sigma)
    law_tied = mixture_law("tied-nuisance", sigma)
    assert law_pair.beta == pytest.approx(min(beta, 1.0 - 1e-6), abs=1e-12)
    for cone0, law in ((BOTH3, law_pair), (TIED3, law_tied)):
        _, info = null_statistics(
            sigma, CONE3, cone0, m=100_000, seed=7, details=True
        )
        for k, w in enumerate(law.weights):
            assert np.mean(info["nu"] == k) == pytest.approx(w, abs=0.01)


def test_union_null_takes_best_branch():
    # union of the two single-tie planes inside the twin cone
    plane1 = Cone(
        3,
        ineq=np.array([[1.0, 0.0, -1.0]]),
        eq=np.array([[1.0, -1.0, 0.0]]),
    )
    plane2 = Cone(
        3,
        ineq=np.array([[1.0, -1.0, 0.0]]),
        eq=np.array([[1.0, 0.0, -1.0]]),
    )
    sigma = np.eye(3)
    draws_union = null_statistics(
        sigma, CONE3, (plane1, plane2), m=4000, seed=21
    )
    d1 = null_statistics(sigma, CONE3, plane1, m=4000, seed=21)
    d2 = null_statistics(sigma, CONE3, plane2, m=4000, seed=21)
    assert np.allclose(draws_union, np.minimum(d1, d2))


# --- mixture laws ----------------------------------------------------------


def test_half_half_laws():
    for setting in ("single-tie", "free-nuisance"):
        law = mixture_law(setting)
        assert law.components == ((0.5, 0), (0.5, 1))
        assert law.beta is None
    law = mixture_law("twin-union")
    assert law.components == ((0.5, 0), (0.5, 1))
    assert "upper bound" in law.note


def test_twin_pair_weights_at_beta_one():
    sigma = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 1.0 - 1e-9],
                      [0.0, 1.0 - 1e-9, 1.0]])
    law = mixture_law("twin-pair", sigma)
    assert law.weights[0] == pytest.approx(0.0, abs=1e-4)
    assert law.weights[1] == 0.5
    assert law.weights[2] == pytest.approx(0.5, abs=1e-4)


def test_twin_pair_weights_at_beta_zero():
    # acos(0)/(2 pi) = 1/4; confirmed against the projection simulation
    # in test_region_frequencies_match_closed_form
    sigma = np.array([[1.0, 0.0, 0.0], [0.0, 2.0, -1.0], [0.0, -1.0, 2.0]])
    law = mixture_law("twin-pair", sigma)
    assert law.beta == pytest.approx(0.0, abs=1e-12)
    assert law.weights == pytest.approx((0.25, 0.5, 0.25))


def test_tied_nuisance_beta_zero_collapses_to_half_half():
    # at beta = 0 the tied law loses its chi2(2) part entirely and the
    # nuisance costs nothing; the projection simulation confirms
    sigma = np.array([[1.0, 0.0, 0.0], [0.0, 2.0, -1.0], [0.0, -1.0, 2.0]])
    law = mixture_law("tied-nuisance", sigma)
    assert law.weights == pytest.approx((0.5, 0.5, 0.0))


def test_tied_nuisance_formula():
    sigma = np.array([[1.0, 0.0, 0.0], [0.0, 2.0, 0.5], [0.0, 0.5, 2.0]])
    beta = (1.0 + 0.5) / 3.0
    law = mixture_law("tied-nuisance", sigma)
    g0 = 0.25 + math.acos(beta) / (2.0 * math.pi)
    assert law.weights == pytest.approx((g0, 0.5, 0.5 - g0))


def test_tied_nuisance_rejects_negative_beta():
    sigma = np.array([[1.0, 0.0, 0.0], [0.0, 2.0, -1.6], [0.0, -1.6, 2.0]])
    with pytest.raises(DomainError, match="mc_null_pvalue"):
        mixture_law("tied-nuisance", sigma)


def test_mixture_law_validates_inputs():
    with pytest.raises(DomainError):
        mixture_law("nonsense")
    with pytest.raises(DomainError):
        mixture_law("single-tie", np.eye(3))      # wants 2x2
    with pytest.raises(DomainError):
        mixture_law("twin-pair", np.eye(2))       # wants 3x3
    with pytest.raises(DomainError):
        mixture_law("twin-pair")                  # needs sigma for beta
    # covariance without the exchangeable-pair structure: beta blows up
    bad = np.array([[1.0, 0.0, 0.0], [0.0, 0.1, 3.0], [0.0, 3.0, 100.0]])
    with pytest.raises(DomainError):
        mixture_law("twin-pair", bad)


def test_mixture_component_validation():
    with pytest.raises(DomainError):
        MixtureLaw(((0.7, 0), (0.7, 1)))
    with pytest.raises(DomainError):
        MixtureLaw(((-0.1, 0), (1.1, 1)))


# --- mixture p-values ------------------------------------------------------


def test_mixture_pvalue_half_half_anchor():
    law = mixture_law("single-tie")
    assert mixture_pvalue(law, 2.705543) == pytest.approx(0.05, abs=1e-6)


def test_mixture_pvalue_twin_pair_anchor():
    sigma = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 1.0 - 1e-9],
                      [0.0, 1.0 - 1e-9, 1.0]])
    law = mixture_law("twin-pair", sigma)
    p = mixture_pvalue(law, 5.991465)
    expect = 0.5 * stats.chi2.sf(5.991465, 1) + 0.5 * 0.05
    assert p == pytest.approx(expect, abs=1e-4)
    assert p == pytest.approx(0.0322, abs=1e-3)


def test_mixture_pvalue_zero_is_one():
    for setting in ("single-tie", "twin-union"):
        law = mixture_law(setting)
        assert mixture_pvalue(law, 0.0) == 1.0
        assert mixture_pvalue(law, ATOM_TOL / 2) == 1.0


def test_mixture_pvalue_strictly_decreasing():
    sigma = np.array([[1.0, 0.0, 0.0], [0.0, 2.0, 0.5], [0.0, 0.5, 2.0]])
    law = mixture_law("twin-pair", sigma)
    grid = np.linspace(1e-6, 12.0, 200)
    vals = [mixture_pvalue(law, x) for x in grid]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    # continuity toward the origin: survival tends to 1 - gamma0
    # (the chi2(1) cdf rises like sqrt(x), hence the loose tolerance)
    assert vals[0] == pytest.approx(1.0 - law.weights[0], abs=1e-3)


def test_mixture_pvalue_rejects_negative():
    with pytest.raises(DomainError):
        mixture_pvalue(mixture_law("single-tie"), -0.1)


# --- conditional test ------------------------------------------------------


def test_conditional_interior_full_fit():
    full = _fit([1.5, 2.0], -100.0)
    null = _fit([1.7, 1.7], -102.5, branch=((1,),))
    res = conditional_test(full, null, TREE3, alpha=0.05)
    assert res.nu == 1
    assert res.statistic == pytest.approx(5.0)
    assert res.p_value == pytest.approx(stats.chi2.sf(5.0, 1))
    assert res.reject
    assert res.effective_size is None


def test_conditional_never_rejects_on_the_null_set():
    full = _fit([1.7, 1.7], -100.0)
    null = _fit([1.7, 1.7], -100.0, branch=((1,),))
    res = conditional_test(full, null, TREE3)
    assert res.nu == 0
    assert res.p_value == 1.0
    assert not res.reject


def test_conditional_partial_activity_counts_free_atoms():
    # twin tree with both atoms constrained but only one active
    full = _fit([1.6, 1.6, 2.4], -100.0)
    null = _fit([1.8, 1.8, 1.8], -101.0, branch=((1,), (2,)))
    res = conditional_test(full, null, TREE4)
    assert res.nu == 1


def test_conditional_ambiguous_gap_is_conservative():
    tol = 1e-6
    full = _fit([1.7, 1.7 + 5 * tol, 2.4], -100.0)
    null = _fit([1.8, 1.8, 1.8], -101.0, branch=((1,), (2,)))
    res = conditional_test(full, null, TREE4, tight_tol=tol)
    assert res.nu == 1                      # the 5*tol gap counts as tight
    assert res.ambiguous == ("(0,1)",)


def test_conditional_exact_variant_inflates_alpha():
    full = _fit([1.5, 2.0], -100.0)
    null = _fit([1.7, 1.7], -101.6, branch=((1,),))
    res = conditional_test(full, null, TREE3, alpha=0.05, gamma0=0.5,
                           exact=True)
    assert res.alpha_used == pytest.approx(0.10)
    assert res.effective_size == pytest.approx(0.05)
    plain = conditional_test(full, null, TREE3, alpha=0.05, gamma0=0.5)
    assert plain.alpha_used == 0.05
    assert plain.effective_size == pytest.approx(0.025)
    with pytest.raises(DomainError):
        conditional_test(full, null, TREE3, exact=True)


def test_conditional_requires_constrained_branch():
    full = _fit([1.5, 2.0], -100.0)
    with pytest.raises(DomainError):
        conditional_test(full, _fit([1.7, 1.7], -101.0), TREE3)


# --- hybrid p-value --------------------------------------------------------

HYP41 = Hypothesis.parse("(0,1)=(0)")
SIG3 = np.array([[1.0, 0.0, 0.0], [0.0, 2.0, 0.5], [0.0, 0.5, 2.0]])


def test_hybrid_zero_gap_equals_tied_geometry_mc():
    stat = 1.7
    full = _fit([1.9, 2.1, 2.2], -100.0)
    null = _fit([2.0, 2.0, 2.0], -100.0 - stat / 2, branch=((1,),))
    p = hybrid_pvalue(full, null, TREE4, HYP41, SIG3, n=2500,
                      m=5000, seed=31)
    cone, nulls = local_cones(
        TREE4, HYP41, null.theta, assume_tight=(((), (2,)),)
    )
    direct = mc_null_pvalue(stat, SIG3, cone, nulls,
                            h=np.zeros(3), m=5000, seed=31)
    assert p == direct


def test_hybrid_large_gap_matches_free_nuisance_mixture():
    stat = 1.7
    full = _fit([1.9, 2.1, 3.0], -100.0)
    # n = 2500 with a unit fitted gap puts the mean at 50
    null = _fit([2.0, 2.0, 3.0], -100.0 - stat / 2, branch=((1,),))
    p = hybrid_pvalue(full, null, TREE4, HYP41, SIG3, n=2500,
                      m=100_000, seed=31)
    expect = mixture_pvalue(mixture_law("free-nuisance"), stat)
    assert p == pytest.approx(expect, abs=0.01)


def test_hybrid_validates_nuisance_nodes():
    full = _fit([1.9, 2.1, 2.6], -100.0)
    null = _fit([2.0, 2.0, 2.6], -100.4, branch=((1,),))
    with pytest.raises(DomainError):
        hybrid_pvalue(full, null, TREE4, HYP41, SIG3, n=100,
                      nuisance=[(1,)])     # constrained, not nuisance
    with pytest.raises(DomainError):
        hybrid_pvalue(full, null, TREE4, HYP41, SIG3, n=0)


# --- power curves ----------------------------------------------------------


def test_power_theta_scales():
    sigma = np.eye(2)
    pc = power_curve("gumbel", 1.0 / 3.0, [0.0], sigma=sigma, m=1000)
    assert pc.theta_scale == pytest.approx(2.25, abs=1e-12)
    pc = power_curve("clayton", 1.0 / 3.0, [0.1], sigma=sigma, m=1000)
    assert pc.theta_scale * 0.1 == pytest.approx(0.45, abs=1e-12)


def test_power_numeric_scale_matches_tau_slope():
    # the numeric derivative must invert the analytic tau slope
    from haclrt.generators import get_family, tau_inv

    fam = get_family("frank")
    tau0 = 0.4
    theta0 = tau_inv(fam, tau0)
    step = 1e-6 * theta0
    slope = (fam.tau(theta0 + step) - fam.tau(theta0 - step)) / (2 * step)
    pc = power_curve("frank", tau0, [0.0],
                     sigma=np.eye(2), m=1000)
    assert pc.theta_scale == pytest.approx(1.0 / slope, rel=1e-4)


def test_power_size_point_and_monotonicity():
    sigma = np.array([[2.0, 0.8], [0.8, 1.5]])
    pc = power_curve("gumbel", 1.0 / 3.0, [0.0, 0.05, 0.1, 0.2, 0.4],
                     sigma=sigma, m=40_000, seed=5)
    assert pc.power[0] == pytest.approx(0.05, abs=0.01)
    assert all(a <= b + 1e-12 for a, b in zip(pc.power, pc.power[1:]))
    assert pc.c_alpha == pytest.approx(stats.chi2.ppf(0.90, 1))


def test_power_atom_formula():
    sigma = np.array([[2.0, 0.8], [0.8, 1.5]])
    pc = power_curve("gumbel", 1.0 / 3.0, [0.0, 0.2], sigma=sigma, m=1000)
    assert pc.atom[0] == pytest.approx(0.5)
    var = sigma[0, 0] + sigma[1, 1] - 2 * sigma[0, 1]
    shift = 2.25 * 0.2
    assert pc.atom[1] == pytest.approx(stats.norm.cdf(-shift / math.sqrt(var)))
    # the atom shrinks as the alternative moves away
    assert pc.atom[1] < pc.atom[0]


def test_power_estimates_sigma_when_missing():
    pc = power_curve("clayton", 0.5, [0.0, 0.1], n_sigma=20_000,
                     m=2000, seed=17)
    assert len(pc.power) == 2
    assert 0.0 <= pc.power[0] <= 0.12


def test_power_delta_tau_reaches_fd_covariance():
    # analytic families ignore the step; a finite-difference family
    # (joe at a tie has only step-regularized information) must not
    kw = dict(n_sigma=6000, m=2000, seed=17)
    a = power_curve("clayton", 0.5, [0.1], delta_tau=0.005, **kw)
    b = power_curve("clayton", 0.5, [0.1], delta_tau=0.001, **kw)
    assert a.power == b.power
    ja = power_curve("joe", 0.5, [0.1], delta_tau=0.005, **kw)
    jb = power_curve("joe", 0.5, [0.1], delta_tau=0.001, **kw)
    assert ja.power != jb.power


def test_power_curve_shift_invariance_in_e():
    # moving both coordinates by the same e-offset changes nothing
    sigma = np.array([[1.5, 0.3], [0.3, 1.0]])
    a = power_curve("gumbel", 0.4, [0.1, 0.3], sigma=sigma, m=5000,
                    seed=3, e=(0.0, 1.0))
    b = power_curve("gumbel", 0.4, [0.1, 0.3], sigma=sigma, m=5000,
                    seed=3, e=(-0.5, 0.5))
    assert a.power == pytest.approx(b.power, abs=1e-12)
    assert a.atom == pytest.approx(b.atom, abs=1e-12)


def test_power_validates_inputs():
    with pytest.raises(DomainError):
        power_curve("gumbel", 1.0 / 3.0, [0.7], sigma=np.eye(2))  # tau+h >= 1
    with pytest.raises(DomainError):
        power_curve("gumbel", 0.4, [0.1], sigma=np.eye(2), e=(0.0, 2.0))
    with pytest.raises(DomainError):
        power_curve("gumbel", 1.2, [0.1], sigma=np.eye(2))
    with pytest.raises(DomainError):
        power_curve("gumbel", 0.4, [0.1], sigma=np.eye(2), alpha=0.6)


# --- structural detection --------------------------------------------------


def test_detect_one_tie_structure():
    assert detect_setting(TREE3, Hypothesis.parse("(0,1)=(0)")) == "single-tie"


def test_detect_twin_structures():
    both = Hypothesis.parse("(0,1)=(0) & (0,2)=(0)")
    either = Hypothesis.parse("(0,1)=(0) | (0,2)=(0)")
    assert detect_setting(TREE4, both) == "twin-pair"
    assert detect_setting(TREE4, either) == "twin-union"


def test_detect_nuisance_needs_theta():
    hyp = Hypothesis.parse("(0,1)=(0)")
    assert detect_setting(TREE4, hyp) is None
    assert detect_setting(TREE4, hyp, [1.8, 1.8, 2.6]) == "free-nuisance"
    assert detect_setting(TREE4, hyp, [1.8, 1.8, 1.8]) == "tied-nuisance"


def test_detect_rejects_unrecognized_shapes():
    uneven = HacTree([[1, 2], [3, 4, 5]])
    both = Hypothesis.parse("(0,1)=(0) & (0,2)=(0)")
    assert detect_setting(uneven, both) is None      # not twins
    wide = HacTree([[1, 2], [3, 4], [5, 6]])
    assert detect_setting(wide, Hypothesis.parse("(0,1)=(0)")) is None


# --- end-to-end ------------------------------------------------------------

CFG = FitConfig(n_perturbed=2, seed=5)


def _data3(n=400, theta=(1.4, 2.2), seed=60):
    return sample(TREE3, np.asarray(theta), "gumbel", n, seed=seed).values


def test_run_test_mixture_one_tie():
    res = run_test(_data3(), TREE3, "gumbel", "(0,1)=(0)",
                   method="mixture", n_sigma=20_000, seed=2, config=CFG)
    assert res.setting == "single-tie"
    assert res.method == "mixture"
    assert res.law.components == ((0.5, 0), (0.5, 1))
    assert 0.0 <= res.p_value <= 1.0
    assert res.statistic >= 0.0
    assert res.sigma is None             # half/half law needs no sigma
    payload = json.loads(res.to_json())
    for key in ("statistic", "p_value", "method", "law", "seeds",
                "fits", "sigma_meta"):
        assert key in payload
    assert payload["law"]["weights"] == [0.5, 0.5]
    assert payload["fits"]["null"]["branch"] == ["(0,1)"]


def test_run_test_mc_matches_geometry():
    res = run_test(_data3(n=300, theta=(1.8, 1.8), seed=61), TREE3,
                   "gumbel", "(0,1)=(0)", method="mc", m=2000,
                   n_sigma=20_000, seed=4, config=CFG)
    assert res.method == "mc"
    assert res.m == 2000
    assert res.cones is not None
    assert res.sigma is not None
    assert 0.0 <= res.p_value <= 1.0


def test_run_test_mixture_falls_back_with_warning():
    tree = HacTree([[1, 2], [3, 4], [5, 6]])
    theta = np.array([1.3, 2.0, 2.2, 2.4])
    data = sample(tree, theta, "gumbel", 300, seed=62).values
    with pytest.warns(UserWarning, match="falling back"):
        res = run_test(data, tree, "gumbel", "(0,1)=(0)",
                       method="mixture", m=1500, n_sigma=20_000,
                       seed=6, config=CFG)
    assert res.method == "mc"
    assert res.setting is None
    assert res.warning is not None


def test_run_test_union_flagged_conservative():
    theta = np.array([1.3, 1.3, 2.0])
    data = sample(TREE4, theta, "gumbel", 350, seed=63).values
    res = run_test(data, TREE4, "gumbel", "(0,1)=(0) | (0,2)=(0)",
                   method="mixture", seed=8, config=CFG)
    assert res.setting == "twin-union"
    assert res.conservative
    assert res.fit_null.branch == ((1,),)


def test_run_test_conditional():
    res = run_test(_data3(n=300, seed=64), TREE3, "gumbel", "(0,1)=(0)",
                   method="conditional", seed=10, config=CFG)
    assert res.conditional is not None
    assert res.p_value == res.conditional.p_value
    assert res.conditional.nu in (0, 1)
    # gamma0 = 1/2 known here, so the effective size is alpha/2
    assert res.conditional.effective_size == pytest.approx(0.025)


def test_run_test_hybrid():
    theta = np.array([1.4, 1.4, 2.1])
    data = sample(TREE4, theta, "gumbel", 350, seed=65).values
    res = run_test(data, TREE4, "gumbel", "(0,1)=(0)",
                   method="hybrid", m=2000, n_sigma=20_000, seed=12,
                   config=CFG)
    assert res.method == "hybrid"
    assert 0.0 <= res.p_value <= 1.0
    assert res.m == 2000


def test_run_test_rejects_unknown_method():
    with pytest.raises(DomainError):
        run_test(_data3(n=50), TREE3, "gumbel", "(0,1)=(0)",
                 method="wald")
