"""Constrained maximum-likelihood estimation over the parameter cone.

Fits run in a gap parameterization x = (theta of the root group, one
nonnegative gap per remaining group), which turns the nesting cone
theta_parent <= theta_child into a box for L-BFGS-B.  Equality
hypotheses merge nodes into groups before fitting; union hypotheses fit
each branch separately and keep the best one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.stats import kendalltau

from .density import (
    ANALYTIC_FAMILIES,
    log_density,
    log_density_and_derivs,
    two_level_spec,
)
from .errors import ConvergenceError, DomainError, NumericError
from .generators import get_family
from .tree import HacTree, Hypothesis, node_name

__all__ = [
    "FitConfig",
    "FitResult",
    "ParamGroups",
    "loglik",
    "merge_groups",
    "mle",
]

Path = tuple[int, ...]

# objective value returned when the density evaluation fails; large but
# finite so the line search can recover by backtracking
_PENALTY = 1e10


@dataclass(frozen=True)
class FitConfig:
    n_perturbed: int = 4
    maxiter: int = 500
    gtol: float = 1e-6          # projected-gradient sup norm, mean loglik
    ftol: float = 1e-10         # relative loglik change
    jitter: float = 0.08        # tau-scale sd of the perturbed starts
    seed: int = 1777            # internal; refits are bit-reproducible
    theta_hi: float = 1e4
    tau_hi: float = 0.999
    active_tol: float = 1e-8


@dataclass(frozen=True)
class FitResult:
    theta: np.ndarray
    loglik: float
    converged: bool
    n_starts: int
    active: tuple[str, ...]
    grad_norm: float
    start_logliks: tuple[float, ...] = ()
    branch: tuple[Path, ...] | None = None

    def to_dict(self) -> dict:
        return {
            "theta": [float(t) for t in self.theta],
            "loglik": self.loglik,
            "converged": self.converged,
            "n_starts": self.n_starts,
            "active": list(self.active),
            "grad_norm": self.grad_norm,
            "start_logliks": list(self.start_logliks),
            "branch": None
            if self.branch is None
            else [node_name(a) for a in self.branch],
        }


@dataclass(frozen=True)
class ParamGroups:
    """Partition of the internal nodes induced by equality constraints.

    Groups are connected subtrees, listed so that a group's quotient
    parent always precedes it; the root group comes first.
    """

    tree: HacTree
    groups: tuple[tuple[Path, ...], ...]
    parent: tuple[int, ...]     # quotient parent index, -1 at the root

    @property
    def g(self) -> int:
        return len(self.groups)

    def expand(self, values) -> np.ndarray:
        theta = np.empty(self.tree.p)
        for gi, members in enumerate(self.groups):
            for path in members:
                theta[self.tree.param_pos[path]] = values[gi]
        return theta

    def reduce_grad(self, grad_theta) -> np.ndarray:
        out = np.zeros(self.g)
        for gi, members in enumerate(self.groups):
            for path in members:
                out[gi] += grad_theta[self.tree.param_pos[path]]
        return out

    def from_x(self, x) -> np.ndarray:
        th = np.empty(self.g)
        for gi in range(self.g):
            p = self.parent[gi]
            th[gi] = x[gi] if p < 0 else th[p] + x[gi]
        return th

    def to_x(self, group_theta) -> np.ndarray:
        x = np.empty(self.g)
        for gi in range(self.g):
            p = self.parent[gi]
            x[gi] = group_theta[gi] if p < 0 else group_theta[gi] - group_theta[p]
        return x

    def grad_to_x(self, grad_groups) -> np.ndarray:
        # d theta_g / d x_j = 1 iff j is an ancestor-or-self of g, so the
        # x-gradient at j is the subtree sum; accumulate children upward
        out = np.array(grad_groups, dtype=float)
        for gi in range(self.g - 1, 0, -1):
            out[self.parent[gi]] += out[gi]
        return out


def merge_groups(tree: HacTree, atoms: tuple[Path, ...] = ()) -> ParamGroups:
    """Union-find partition tying each atom node to its direct parent."""
    up = {p: p for p in tree.internal_paths}

    def find(p):
        while up[p] != p:
            up[p] = up[up[p]]
            p = up[p]
        return p

    for child in atoms:
        if child not in tree or child[:-1] not in tree:
            raise DomainError(f"atom {node_name(child)} not an internal edge")
        a, b = find(child), find(child[:-1])
        if a != b:
            up[a] = b
    buckets: dict[Path, list[Path]] = {}
    for p in tree.internal_paths:       # preorder, so buckets sort themselves
        buckets.setdefault(find(p), []).append(p)
    groups = tuple(tuple(v) for v in buckets.values())
    idx = {p: gi for gi, members in enumerate(groups) for p in members}
    par = tuple(
        -1 if members[0] == () else idx[members[0][:-1]] for members in groups
    )
    return ParamGroups(tree, groups, par)


def loglik(data, tree: HacTree, family: str, theta) -> float:
    """Sum of the log-density over rows."""
    spec = two_level_spec(tree, family, theta)
    return float(np.sum(log_density(spec, np.asarray(data, dtype=float))))


# --- starting values ------------------------------------------------------


def _box_lo(fam) -> float:
    return fam.domain.lo if not fam.domain.lo_open else 1e-4


def _tau_matrix(data) -> np.ndarray:
    d = data.shape[1]
    taus = np.zeros((d, d))
    for i in range(d):
        for j in range(i + 1, d):
            taus[i, j] = taus[j, i] = kendalltau(data[:, i], data[:, j]).statistic
    return taus


def _group_taus(data, tree: HacTree, pg: ParamGroups) -> np.ndarray:
    """Mean pairwise tau per group, pooling pairs with their LCA inside."""
    taus = _tau_matrix(data)
    which = {p: gi for gi, members in enumerate(pg.groups) for p in members}
    sums = np.zeros(pg.g)
    cnts = np.zeros(pg.g)
    for a in range(1, tree.d + 1):
        for b in range(a + 1, tree.d + 1):
            t = taus[a - 1, b - 1]
            if np.isfinite(t):
                gi = which[tree.lca(a, b)]
                sums[gi] += t
                cnts[gi] += 1
    return sums / np.maximum(cnts, 1.0)


def _theta_from_taus(fam, taus_g, lo, hi, tau_hi) -> np.ndarray:
    tau_floor = fam.tau(lo)
    out = np.empty(len(taus_g))
    for gi, t in enumerate(taus_g):
        t = min(max(t, tau_floor), tau_hi)
        th = lo if t <= tau_floor else fam.tau_inv(t)
        out[gi] = min(max(th, lo), hi)
    return out


def _project_cone(pg: ParamGroups, group_theta, lo, hi) -> np.ndarray:
    th = np.clip(np.asarray(group_theta, dtype=float), lo, hi)
    for gi in range(pg.g):
        p = pg.parent[gi]
        if p >= 0 and th[gi] < th[p]:
            th[gi] = th[p]
    return th


def _starts(data, tree, fam, pg, lo, hi, cfg: FitConfig) -> list[np.ndarray]:
    base = _group_taus(data, tree, pg)
    rng = np.random.default_rng(cfg.seed)
    xs = []
    for r in range(1 + cfg.n_perturbed):
        taus_g = base if r == 0 else base + rng.normal(0.0, cfg.jitter, pg.g)
        th = _theta_from_taus(fam, taus_g, lo, hi, cfg.tau_hi)
        xs.append(pg.to_x(_project_cone(pg, th, lo, hi)))
    return xs


# --- optimizer ------------------------------------------------------------


def _objective(data, tree, family, pg, analytic):
    def fun(x):
        theta = pg.expand(pg.from_x(x))
        # extreme probes overflow to non-finite logliks; the penalty
        # branch absorbs them, so mute the float warnings here
        try:
            with np.errstate(all="ignore"):
                spec = two_level_spec(tree, family, theta)
                if analytic:
                    ld, sc, _ = log_density_and_derivs(spec, data, order=1)
                    val = -float(np.mean(ld))
                    if not np.isfinite(val):
                        return _PENALTY, np.zeros_like(x)
                    g = pg.reduce_grad(-sc.mean(axis=0))
                    if not np.all(np.isfinite(g)):
                        return _PENALTY, np.zeros_like(x)
                    return val, pg.grad_to_x(g)
                val = -float(np.mean(log_density(spec, data)))
                return val if np.isfinite(val) else _PENALTY
        except (DomainError, NumericError):
            return (_PENALTY, np.zeros_like(x)) if analytic else _PENALTY

    return fun


def _projected_sup_norm(grad, x, bounds, tol=1e-10) -> float:
    out = 0.0
    for g, xi, (lo, hi) in zip(grad, x, bounds):
        if xi <= lo + tol:
            v = max(-g, 0.0)
        elif xi >= hi - tol:
            v = max(g, 0.0)
        else:
            v = abs(g)
        out = max(out, v)
    return float(out)


def _fit_branch(data, tree, family, atoms, cfg: FitConfig):
    pg = merge_groups(tree, atoms)
    fam = get_family(family)
    lo = _box_lo(fam)
    hi = min(fam.tau_inv(cfg.tau_hi), cfg.theta_hi)
    analytic = family in ANALYTIC_FAMILIES
    fun = _objective(data, tree, family, pg, analytic)
    bounds = [(lo, hi)] + [(0.0, hi - lo)] * (pg.g - 1)

    fits, fails = [], []
    for x0 in _starts(data, tree, fam, pg, lo, hi, cfg):
        try:
            res = minimize(
                fun,
                x0,
                jac=True if analytic else None,
                method="L-BFGS-B",
                bounds=bounds,
                options={
                    "maxiter": cfg.maxiter,
                    "ftol": cfg.ftol,
                    "gtol": cfg.gtol,
                },
            )
        except (DomainError, NumericError, FloatingPointError) as err:
            fails.append(str(err))
            continue
        if not np.isfinite(res.fun) or res.fun >= 0.5 * _PENALTY:
            fails.append(str(res.message))
            continue
        fits.append(res)
    if not fits:
        raise ConvergenceError(
            f"all {1 + cfg.n_perturbed} starts failed: {fails}"
        )

    best = min(fits, key=lambda r: r.fun)
    grad = np.atleast_1d(np.asarray(best.jac, dtype=float))
    gnorm = _projected_sup_norm(grad, best.x, bounds)
    active = []
    for gi in range(pg.g):
        top = pg.groups[gi][0]
        if gi == 0:
            if best.x[0] <= lo + cfg.active_tol:
                active.append(f"{node_name(top)}=lo")
        elif best.x[gi] <= cfg.active_tol:
            active.append(f"{node_name(top)}={node_name(top[:-1])}")
    theta = pg.expand(pg.from_x(best.x))
    ll = loglik(data, tree, family, theta)
    start_lls = tuple(
        float(-r.fun * data.shape[0]) for r in fits
    )
    return FitResult(
        theta=theta,
        loglik=ll,
        converged=bool(best.success),
        n_starts=1 + cfg.n_perturbed,
        active=tuple(active),
        grad_norm=gnorm,
        start_logliks=start_lls,
        branch=tuple(atoms) if atoms else None,
    )


def mle(
    data,
    tree: HacTree,
    family: str,
    hypothesis: Hypothesis | None = None,
    config: FitConfig = FitConfig(),
) -> FitResult:
    """Best local maximum of the likelihood over Theta (or its subset).

    With a hypothesis, equality atoms are substituted by parameter
    merging; union branches are solved independently and the best
    branch wins, ties broken toward fewer merges.
    """
    data = np.asarray(data, dtype=float)
    if data.ndim != 2 or data.shape[1] != tree.d:
        raise DomainError(
            f"data must be (n, {tree.d}), got {data.shape}"
        )
    if not np.all((data > 0.0) & (data < 1.0)):
        raise DomainError("data rows must lie strictly inside the unit cube")
    if data.shape[0] < tree.p + 1:
        raise DomainError(
            f"need at least p+1 = {tree.p + 1} rows, got {data.shape[0]}"
        )
    if hypothesis is None:
        return _fit_branch(data, tree, family, (), config)

    hypothesis.check_against(tree)
    results = [
        _fit_branch(data, tree, family, branch, config)
        for branch in hypothesis.branches
    ]
    best_ll = max(r.loglik for r in results)
    tol = 1e-9 * (1.0 + abs(best_ll))
    tied = [r for r in results if r.loglik >= best_ll - tol]
    return min(tied, key=lambda r: len(r.branch))
