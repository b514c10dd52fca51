import numpy as np
import pytest

from haclrt.density import hessian, two_level_spec
from haclrt.errors import DomainError, SchemeError, SingularSigmaError
from haclrt.fisher import (
    FdScheme,
    determinant_scan,
    fd_hessian,
    fd_hessian_fn,
    fd_scheme,
    interior_shift,
    kendall_step,
    sigma_hat,
)
from haclrt.generators import tau_inv
from haclrt.sampler import sample
from haclrt.tree import HacTree, validate_params

TREE3 = HacTree([[1, 2], 3])
TREE4 = HacTree([[1, 2], [3, 4]])
CHAIN = HacTree([1, [2, [3, 4]]])


# --- kendall_step ----------------------------------------------------------


def test_kendall_step_reference_values():
    assert kendall_step("gumbel", 2.0) == pytest.approx(-0.019802, abs=1e-6)
    assert kendall_step("clayton", 2.0) == pytest.approx(-0.039604, abs=1e-6)


def test_kendall_step_zero_delta():
    assert kendall_step("gumbel", 2.0, delta_tau=0.0) == 0.0


def test_kendall_step_underflow():
    with pytest.raises(DomainError):
        kendall_step("clayton", 0.008)     # tau(0.008) < 0.005
    with pytest.raises(DomainError):
        kendall_step("gumbel", 1.0)        # tau = 0 exactly


# --- stencils --------------------------------------------------------------


def test_bilinear_hook():
    sch = FdScheme(np.array([0.01, 0.02]), np.array([0, 0]), ("a", "b"))
    H = fd_hessian_fn(lambda th: th[0] * th[1], np.array([1.3, 2.2]), sch)
    assert H[0, 1] == pytest.approx(1.0, abs=1e-9)
    assert H[1, 0] == pytest.approx(1.0, abs=1e-9)
    assert abs(H[0, 0]) < 1e-9 and abs(H[1, 1]) < 1e-9


@pytest.mark.parametrize("dirs", [[1, -1, 0], [0, 0, 0], [-1, 1, 1], [1, 1, -1]])
def test_quadratic_exact_for_every_direction_mix(dirs):
    A = np.array([[2.0, 0.7, -0.3], [0.7, 1.5, 0.4], [-0.3, 0.4, 3.0]])
    b = np.array([0.1, -0.2, 0.3])
    sch = FdScheme(
        np.array([0.4, 0.3, 0.5]), np.array(dirs), ("a", "b", "c")
    )
    H = fd_hessian_fn(
        lambda th: 0.5 * th @ A @ th + b @ th, np.array([1.0, 2.0, 3.0]), sch
    )
    np.testing.assert_allclose(H, A, atol=1e-12)


def test_feasibility_callback_names_node():
    sch = FdScheme(np.array([0.5]), np.array([1]), ("(0,1)",))
    with pytest.raises(SchemeError, match=r"\(0,1\)"):
        fd_hessian_fn(
            lambda th: th[0] ** 2,
            np.array([1.0]),
            sch,
            feasible=lambda th: th[0] < 1.6,
        )


# --- scheme selection ------------------------------------------------------


def test_scheme_interior_is_central():
    sch = fd_scheme(TREE3, "clayton", (0.8, 2.1))
    assert list(sch.directions) == [0, 0]
    assert np.all(sch.steps > 0.01)


def test_scheme_tie_backward_forward():
    sch = fd_scheme(TREE3, "gumbel", (2.0, 2.0))
    assert list(sch.directions) == [-1, 1]
    assert sch.steps[0] == pytest.approx(0.019802, abs=1e-6)
    assert sch.labels == ("(0)", "(0,1)")


def test_scheme_domain_edge_forward():
    sch = fd_scheme(TREE3, "gumbel", (1.0, 1.5))
    assert sch.directions[0] == 1


def test_scheme_pinned_middle_raises():
    with pytest.raises(SchemeError, match=r"\(0,2\)"):
        fd_scheme(CHAIN, "gumbel", (2.0, 2.0, 2.0))


def test_scheme_rejects_nonpositive_delta():
    with pytest.raises(DomainError):
        fd_scheme(TREE3, "gumbel", (1.5, 2.0), delta_tau=0.0)


def test_tie_stencil_points_all_feasible():
    # the whole point of the one-sided pattern: evaluable at the face
    H = fd_hessian(
        sample(TREE3, (2.0, 2.0), "gumbel", 500, seed=7).values,
        TREE3,
        "gumbel",
        (2.0, 2.0),
    )
    assert np.all(np.isfinite(H))
    assert H[0, 1] == H[1, 0]


def test_fd_matches_analytic_hessian_interior():
    for fam, th in [("clayton", (0.8, 2.1)), ("gumbel", (1.5, 2.5))]:
        u = sample(TREE3, th, fam, 4000, seed=5).values
        fd = fd_hessian(u, TREE3, fam, th)
        spec = two_level_spec(TREE3, fam, th)
        an = hessian(spec, u).mean(axis=0)
        assert np.abs(fd - an).max() / np.abs(an).max() < 1e-3


def test_fd_accepts_sample_batch():
    batch = sample(TREE3, (0.8, 2.1), "clayton", 500, seed=13)
    H1 = fd_hessian(batch, TREE3, "clayton", (0.8, 2.1))
    H2 = fd_hessian(batch.values, TREE3, "clayton", (0.8, 2.1))
    np.testing.assert_array_equal(H1, H2)


# --- sigma_hat -------------------------------------------------------------


def test_sigma_analytic_observed_is_inverse_mean_hessian():
    th = (0.667, 2.0)
    u = sample(TREE3, th, "clayton", 2000, seed=17).values
    est = sigma_hat(u, TREE3, "clayton", th, at="bullet")
    spec = two_level_spec(TREE3, "clayton", th)
    info = -hessian(spec, u).mean(axis=0)
    np.testing.assert_allclose(est.info, info, atol=1e-12)
    np.testing.assert_allclose(est.sigma @ est.info, np.eye(2), atol=1e-10)
    assert est.method == "analytic" and est.source == "observed"
    assert np.abs(est.info - est.info.T).max() < 1e-8


def test_sigma_fd_close_to_analytic_interior():
    for fam, th in [("clayton", (0.667, 2.0)), ("gumbel", (1.5, 2.5))]:
        u = sample(TREE3, th, fam, 20000, seed=11).values
        ea = sigma_hat(u, TREE3, fam, th, method="analytic")
        ef = sigma_hat(u, TREE3, fam, th, method="fd")
        assert np.abs((ef.sigma - ea.sigma) / ea.sigma).max() < 1e-3
        assert ef.steps is not None and ea.steps is None


def test_sigma_observed_vs_mc_sources_agree():
    th = (2.0, 2.0)
    uo = sample(TREE3, th, "clayton", 100_000, seed=51).values
    eo = sigma_hat(uo, TREE3, "clayton", th, source="observed")
    em = sigma_hat(None, TREE3, "clayton", th, source="mc", seed=52)
    assert np.abs((em.sigma - eo.sigma) / eo.sigma).max() < 0.03
    assert em.n_source == 100_000


def test_sigma_mc_seed_dispersion_small():
    th = (2.0, 2.0)
    vals = [
        sigma_hat(
            None, TREE3, "clayton", th, source="mc", seed=100 + s
        ).sigma[0, 0]
        for s in range(5)
    ]
    assert max(vals) / min(vals) - 1.0 < 0.05


def test_sigma_null_enforcement_exact_equalities():
    th = (1.8, 1.8, 1.8)
    u = sample(TREE4, th, "gumbel", 3000, seed=9).values
    est = sigma_hat(u, TREE4, "gumbel", th, at="circ", atoms=((1,), (2,)))
    assert est.info[1, 1] == est.info[2, 2]
    assert est.info[0, 1] == est.info[0, 2]
    assert est.sigma[1, 1] == pytest.approx(est.sigma[2, 2], rel=1e-12)
    # without atoms the raw estimate has no reason to tie exactly
    raw = sigma_hat(u, TREE4, "gumbel", th, at="bullet")
    assert raw.info[1, 1] != raw.info[2, 2]


def test_sigma_mc_scale_with_n():
    # entry sd across seeds should shrink like 1/sqrt(n)
    th = (2.0, 2.0)

    def spread(n, base):
        vals = [
            sigma_hat(
                None, TREE3, "clayton", th, source="mc", n_mc=n, seed=base + i
            ).sigma[0, 0]
            for i in range(80)
        ]
        return np.std(vals, ddof=1)

    ratio = spread(1000, 3000) / spread(2000, 7000)
    assert 1.3 <= ratio <= 1.6


def test_sigma_singular_detection():
    u1 = sample(TREE3, (2.0, 2.0), "clayton", 1, seed=45).values
    with pytest.raises(SingularSigmaError):
        sigma_hat(u1, TREE3, "clayton", (2.0, 2.0))
    # the flagged ridge cannot rescue an indefinite matrix either
    with pytest.raises(SingularSigmaError):
        sigma_hat(u1, TREE3, "clayton", (2.0, 2.0), ridge=True)


def test_sigma_rejects_bad_arguments():
    u = sample(TREE3, (1.0, 2.0), "clayton", 50, seed=3).values
    with pytest.raises(DomainError):
        sigma_hat(u, TREE3, "clayton", (1.0, 2.0), source="bootstrap")
    with pytest.raises(DomainError):
        sigma_hat(u, TREE3, "clayton", (1.0, 2.0), method="exact")
    with pytest.raises(DomainError):
        sigma_hat(u[:, :2], TREE3, "clayton", (1.0, 2.0))
    with pytest.raises(DomainError):
        sigma_hat(u, TREE3, "frank", (1.0, 2.0), method="analytic")


def test_sigma_serializes():
    u = sample(TREE3, (1.0, 2.0), "clayton", 200, seed=3).values
    est = sigma_hat(u, TREE3, "clayton", (1.0, 2.0), method="fd")
    d = est.to_dict()
    assert len(d["sigma"]) == 2 and len(d["steps"]) == 2
    assert d["method"] == "fd" and d["ridged"] is False


# --- interior shift --------------------------------------------------------


def test_interior_shift_chain_example():
    step = abs(kendall_step("gumbel", 2.0))
    shifted = interior_shift(
        CHAIN, "gumbel", (2.0, 2.0, 2.0), ((2,), (2, 2)), n=400
    )
    want = np.array([2.0 - step / 20.0, 2.0, 2.0 + step / 20.0])
    np.testing.assert_allclose(shifted, want, atol=1e-12)
    rep = validate_params(CHAIN, "gumbel", shifted, tol=0.0)
    assert rep.valid and not rep.tight
    # the shifted point admits a central scheme everywhere
    sch = fd_scheme(CHAIN, "gumbel", shifted)
    assert list(sch.directions) == [0, 0, 0]


def test_interior_shift_two_level_identity():
    out = interior_shift(TREE3, "gumbel", (2.0, 2.0), ((1,),), n=400)
    np.testing.assert_array_equal(out, [2.0, 2.0])
    out4 = interior_shift(
        TREE4, "clayton", (1.5, 1.5, 1.5), ((1,), (2,)), n=100
    )
    np.testing.assert_array_equal(out4, [1.5, 1.5, 1.5])


def test_interior_shift_four_level_ramp():
    t = HacTree([1, [2, [3, [4, 5]]]])
    atoms = ((2,), (2, 2), (2, 2, 2))
    out = interior_shift(t, "clayton", (1.0, 1.0, 1.0, 1.0), atoms, n=400)
    assert np.all(np.diff(out) > 0)
    assert out[1] < 1.0 < out[2]


def test_interior_shift_domain_edge_fails():
    with pytest.raises(SchemeError):
        interior_shift(CHAIN, "gumbel", (1.0, 1.0, 1.0), ((2,), (2, 2)), 400)


def test_interior_shift_custom_g():
    step = abs(kendall_step("gumbel", 2.0))
    shifted = interior_shift(
        CHAIN,
        "gumbel",
        (2.0, 2.0, 2.0),
        ((2,), (2, 2)),
        400,
        g=lambda n: 2.0 / np.sqrt(n),
    )
    np.testing.assert_allclose(
        shifted, [2.0 - step / 10.0, 2.0, 2.0 + step / 10.0], atol=1e-12
    )


# --- determinant scan ------------------------------------------------------


def test_determinant_scan_small_clayton_grid():
    scan = determinant_scan(
        "clayton", offsets=np.linspace(0.3, 1.2, 3), n_mc=3000, seed=1
    )
    assert scan.dets.shape == (3, 3)
    assert np.all(np.isnan(scan.dets[np.tril_indices(3, -1)]))
    assert scan.all_positive
    rows = list(scan.rows())
    assert len(rows) == 6
    th0, th1, _ = rows[0]
    assert th0 == pytest.approx(0.3) and th1 == pytest.approx(0.3)


def test_determinant_scan_single_point():
    scan = determinant_scan("gumbel", offsets=[0.5], n_mc=2000, seed=2)
    assert scan.dets.shape == (1, 1)
    assert np.isfinite(scan.dets[0, 0])
    assert scan.origin == 1.0


def test_determinant_scan_rejects_bad_grid():
    with pytest.raises(DomainError):
        determinant_scan("clayton", offsets=[0.0, 0.5], n_mc=100)
    with pytest.raises(DomainError):
        determinant_scan("clayton", tree=HacTree([[1, 2], [3, 4]]), n_mc=100)
