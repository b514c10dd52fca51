"""Simulation harness: rejection rates over the four test settings.

Each scenario fixes a structure and a hypothesis, crosses data and
model families over a grid of sample sizes, and repeats the chosen
tests over seeded replicates.  Parameters follow the common recipe
theta_k = tau_inv(tau) + delta_k with tau in {1/4, 1/2, 3/4} and
delta_k in {0, 1/10}; nonzero offsets create departures from the null.

Settings:
  I    [[1,2],3], tie the single nest; mixture and conditional tests.
  II   [[1,2],[3,4]], tie both nests; twin-pair mixture with a choice
       of covariance estimator.
  III  same data, either-nest union; conservative half/half mixture.
  IV   same data, tie the first nest only; hybrid Monte Carlo null
       plus the simplified variant that assumes the nuisance nest
       collapses into the root.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import DomainError, NumericError, SingularSigmaError
from .estimate import FitConfig, mle
from .fisher import sigma_hat
from .lrt import (
    conditional_test,
    hybrid_pvalue,
    lrt_statistic,
    mixture_law,
    mixture_pvalue,
)
from .sampler import sample
from .tree import HacTree, Hypothesis

__all__ = [
    "CaseSpec",
    "ScenarioSpec",
    "SCENARIOS",
    "TAU_LEVELS",
    "DELTA",
    "scenario_tree",
    "scenario_hypothesis",
    "scenario_cases",
    "case_theta",
    "run_replicate",
    "run_scenario",
    "rejection_table",
]

SCENARIOS = ("I", "II", "III", "IV")
TAU_LEVELS = (0.25, 0.5, 0.75)
DELTA = 0.1
FAMILIES = ("gumbel", "clayton", "frank")

_TREE2 = [[1, 2], 3]
_TREE3 = [[1, 2], [3, 4]]
# collapsed structure for the simplified nuisance test: the second
# nest is assumed to merge into the root
_TREE2_WIDE = [[1, 2], 3, 4]

_CASE_LETTERS = "abcdefghijkl"


@dataclass(frozen=True)
class CaseSpec:
    """One data-generating configuration of a scenario."""

    label: str
    tau: float
    deltas: tuple[float, ...]   # parameter-scale offsets, one per theta
    null_true: bool


@dataclass(frozen=True)
class ScenarioSpec:
    """A runnable slice of one scenario's full grid."""

    scenario: str
    cases: tuple[str, ...] = ()            # empty means all
    data_families: tuple[str, ...] = FAMILIES
    model_families: tuple[str, ...] = FAMILIES
    n_values: tuple[int, ...] = (32, 128, 512)
    r: int = 500
    alpha: float = 0.05
    seed: int = 7_2021
    m: int = 5000                          # MC null replicates
    n_sigma: int = 100_000                 # model draws behind sigma
    sigma_source: str = "mc"
    sigma_variants: tuple[tuple[str, str], ...] = (("null", "mc"),)
    fit_config: FitConfig = field(default_factory=FitConfig)

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise DomainError(f"unknown scenario {self.scenario!r}")
        if self.r < 1:
            raise DomainError("r must be positive")
        if not 0.0 < self.alpha < 0.5:
            raise DomainError("alpha must be in (0, 0.5)")
        known = {c.label for c in scenario_cases(self.scenario)}
        cases = tuple(self.cases) or tuple(sorted(known))
        bad = [c for c in cases if c not in known]
        if bad:
            raise DomainError(f"unknown cases {bad} for scenario {self.scenario}")
        object.__setattr__(self, "cases", cases)
        for fam_list in (self.data_families, self.model_families):
            for f in fam_list:
                if f not in FAMILIES + ("joe",):
                    raise DomainError(f"unknown family {f!r}")
        for at, source in self.sigma_variants:
            if at not in ("null", "full") or source not in ("observed", "mc"):
                raise DomainError(f"bad sigma variant ({at!r}, {source!r})")


def scenario_tree(scenario: str) -> HacTree:
    return HacTree(_TREE2 if scenario == "I" else _TREE3)


def scenario_hypothesis(scenario: str) -> Hypothesis:
    if scenario in ("I", "IV"):
        return Hypothesis.parse("(0,1)=(0)")
    if scenario == "II":
        return Hypothesis.parse("(0,1)=(0) & (0,2)=(0)")
    return Hypothesis.parse("(0,1)=(0) | (0,2)=(0)")


def _delta_patterns(scenario: str) -> tuple[tuple[float, ...], ...]:
    if scenario == "I":
        return ((0.0, 0.0), (0.0, DELTA))
    # cases a-c all tied; d-f free upper nest; g-i both nests shifted
    return ((0.0, 0.0, 0.0), (0.0, 0.0, DELTA), (0.0, DELTA, DELTA))


def _null_holds(scenario: str, deltas) -> bool:
    if scenario == "I":
        return deltas[1] == 0.0
    if scenario == "II":
        return deltas[1] == 0.0 and deltas[2] == 0.0
    if scenario == "III":
        return deltas[1] == 0.0 or deltas[2] == 0.0
    return deltas[1] == 0.0          # IV ties the first nest only


def scenario_cases(scenario: str) -> tuple[CaseSpec, ...]:
    if scenario not in SCENARIOS:
        raise DomainError(f"unknown scenario {scenario!r}")
    out = []
    k = 0
    for deltas in _delta_patterns(scenario):
        for tau in TAU_LEVELS:
            out.append(
                CaseSpec(
                    label=_CASE_LETTERS[k],
                    tau=tau,
                    deltas=deltas,
                    null_true=_null_holds(scenario, deltas),
                )
            )
            k += 1
    return tuple(out)


def case_theta(case: CaseSpec, family: str) -> np.ndarray:
    """Data-generating parameter vector for one case and family."""
    from .generators import tau_inv

    base = tau_inv(family, case.tau)
    return np.array([base + d for d in case.deltas])


def _case_by_label(scenario: str, label: str) -> CaseSpec:
    for c in scenario_cases(scenario):
        if c.label == label:
            return c
    raise DomainError(f"unknown case {label!r} for scenario {scenario}")


# --------------------------------------------------------------------
# one replicate
# --------------------------------------------------------------------

def _record(base, method, statistic=None, p_value=None, reject=None,
            error=None):
    rec = dict(base)
    rec.update(
        method=method,
        statistic=statistic,
        p_value=p_value,
        reject=reject,
        error=error,
    )
    return rec


def _sigma_or_error(data, tree, family, fit_null, fit_full, at, source,
                    n_sigma, seed):
    theta = fit_null.theta if at == "null" else fit_full.theta
    atoms = (fit_null.branch or ()) if at == "null" else ()
    return sigma_hat(
        data, tree, family, theta,
        at=at, source=source, n_mc=n_sigma, seed=seed, atoms=atoms,
    )


def run_replicate(
    spec: ScenarioSpec,
    case_label: str,
    data_family: str,
    model_family: str,
    n: int,
    rep: int,
) -> list[dict]:
    """All test records for one seeded dataset under one model family.

    The data seed depends on the scenario, case, data family, sample
    size, and replicate index, but not on the model family, so the
    same dataset is refit under every candidate model.
    """
    scenario = spec.scenario
    case = _case_by_label(scenario, case_label)
    tree = scenario_tree(scenario)
    hyp = scenario_hypothesis(scenario)
    key = (
        SCENARIOS.index(scenario),
        _CASE_LETTERS.index(case.label),
        FAMILIES.index(data_family) if data_family in FAMILIES else 3,
        n,
        rep,
    )
    children = np.random.SeedSequence(spec.seed, spawn_key=key).spawn(8)
    base = {
        "scenario": scenario,
        "case": case.label,
        "data_family": data_family,
        "model_family": model_family,
        "n": n,
        "rep": rep,
        "null_true": case.null_true,
    }
    theta = case_theta(case, data_family)
    data = sample(tree, theta, data_family, n, seed=children[0]).values

    records = []
    try:
        fit_full = mle(data, tree, model_family, config=spec.fit_config)
        fit_null = mle(data, tree, model_family, hypothesis=hyp,
                       config=spec.fit_config)
        statistic = lrt_statistic(fit_null, fit_full)
    except (DomainError, NumericError) as exc:
        kind = "fit-domain" if isinstance(exc, DomainError) else "fit-numeric"
        for method in _methods_for(spec):
            records.append(_record(base, method, error=kind))
        return records

    if scenario == "I":
        law = mixture_law("single-tie")
        p = mixture_pvalue(law, statistic)
        records.append(_record(base, "mixture", statistic, p,
                               p < spec.alpha))
        cond = conditional_test(fit_full, fit_null, tree, alpha=spec.alpha)
        records.append(_record(base, "conditional", statistic,
                               cond.p_value, cond.reject))
    elif scenario == "II":
        for i, (at, source) in enumerate(spec.sigma_variants):
            method = f"mixture[{at},{source}]"
            try:
                est = _sigma_or_error(data, tree, model_family, fit_null,
                                      fit_full, at, source, spec.n_sigma,
                                      children[2 + i])
                law = mixture_law("twin-pair", est.sigma)
            except SingularSigmaError:
                records.append(_record(base, method, statistic,
                                       error="sigma-singular"))
                continue
            except (DomainError, NumericError):
                records.append(_record(base, method, statistic,
                                       error="sigma-domain"))
                continue
            p = mixture_pvalue(law, statistic)
            records.append(_record(base, method, statistic, p,
                                   p < spec.alpha))
    elif scenario == "III":
        law = mixture_law("twin-union")
        p = mixture_pvalue(law, statistic)
        records.append(_record(base, "mixture", statistic, p,
                               p < spec.alpha))
    else:  # IV
        at, source = spec.sigma_variants[0]
        try:
            est = _sigma_or_error(data, tree, model_family, fit_null,
                                  fit_full, at, source, spec.n_sigma,
                                  children[2])
            p = hybrid_pvalue(
                fit_full, fit_null, tree, hyp, est.sigma, n=n,
                m=spec.m, seed=children[1],
            )
            records.append(_record(base, "hybrid", statistic, p,
                                   p < spec.alpha))
        except SingularSigmaError:
            records.append(_record(base, "hybrid", statistic,
                                   error="sigma-singular"))
        except (DomainError, NumericError):
            records.append(_record(base, "hybrid", statistic,
                                   error="sigma-domain"))
        records.append(_simplified_record(base, data, model_family, spec))
    return records


def _simplified_record(base, data, model_family, spec):
    """Test assuming the nuisance nest collapses into the root.

    Refits on the collapsed structure and compares the statistic to
    the (1 - 2 alpha) quantile of chi-squared(1), which matches the
    half/half mixture decision at level alpha.
    """
    tree = HacTree(_TREE2_WIDE)
    hyp = Hypothesis.parse("(0,1)=(0)")
    try:
        fit_full = mle(data, tree, model_family, config=spec.fit_config)
        fit_null = mle(data, tree, model_family, hypothesis=hyp,
                       config=spec.fit_config)
        statistic = lrt_statistic(fit_null, fit_full)
    except (DomainError, NumericError) as exc:
        kind = "fit-domain" if isinstance(exc, DomainError) else "fit-numeric"
        return _record(base, "simplified", error=kind)
    c_alpha = float(stats.chi2.ppf(1.0 - 2.0 * spec.alpha, 1))
    p = mixture_pvalue(mixture_law("single-tie"), statistic)
    return _record(base, "simplified", statistic, p, statistic > c_alpha)


def _methods_for(spec: ScenarioSpec) -> tuple[str, ...]:
    if spec.scenario == "I":
        return ("mixture", "conditional")
    if spec.scenario == "II":
        return tuple(f"mixture[{a},{s}]" for a, s in spec.sigma_variants)
    if spec.scenario == "III":
        return ("mixture",)
    return ("hybrid", "simplified")


# --------------------------------------------------------------------
# the grid
# --------------------------------------------------------------------

def _tasks(spec: ScenarioSpec):
    for case in spec.cases:
        for df in spec.data_families:
            for mf in spec.model_families:
                for n in spec.n_values:
                    for rep in range(spec.r):
                        yield (spec, case, df, mf, n, rep)


def _run_task(args):
    return run_replicate(*args)


def run_scenario(spec: ScenarioSpec, jobs: int = 1) -> list[dict]:
    """All records of the grid, in deterministic task order."""
    tasks = list(_tasks(spec))
    if jobs <= 1:
        chunks = [run_replicate(*t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(_run_task, tasks, chunksize=8))
    return [rec for chunk in chunks for rec in chunk]


def rejection_table(records) -> list[dict]:
    """Aggregate records into rejection rates with binomial errors.

    Failed replicates (no p-value) are excluded from the rate and
    counted separately, split into singular-covariance failures and
    everything else.
    """
    cells = {}
    for rec in records:
        key = (rec["scenario"], rec["case"], rec["data_family"],
               rec["model_family"], rec["n"], rec["method"])
        cell = cells.setdefault(
            key,
            {"used": 0, "rejects": 0, "singular": 0, "failed": 0,
             "null_true": rec["null_true"]},
        )
        if rec["error"] is None:
            cell["used"] += 1
            cell["rejects"] += bool(rec["reject"])
        elif rec["error"] == "sigma-singular":
            cell["singular"] += 1
        else:
            cell["failed"] += 1
    rows = []
    for key in sorted(cells, key=lambda k: tuple(map(str, k))):
        scenario, case, df, mf, n, method = key
        cell = cells[key]
        used = cell["used"]
        rate = 100.0 * cell["rejects"] / used if used else float("nan")
        se = (
            100.0 * float(np.sqrt((rate / 100.0) * (1.0 - rate / 100.0) / used))
            if used
            else float("nan")
        )
        rows.append(
            {
                "scenario": scenario,
                "case": case,
                "data_family": df,
                "model_family": mf,
                "n": n,
                "method": method,
                "null_true": cell["null_true"],
                "r_used": used,
                "rate_pct": rate,
                "se_pct": se,
                "n_singular": cell["singular"],
                "n_failed": cell["failed"],
            }
        )
    return rows
