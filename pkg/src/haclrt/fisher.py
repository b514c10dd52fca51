"""Fisher information: analytic, finite-difference, and Monte Carlo routes.

The finite-difference scheme works on the Kendall scale: each node gets
a step delta* = tau_inv(tau(theta) - delta_tau) - theta, and directions
are chosen per node so every stencil point stays inside the parameter
cone (backward on parents of tight constraints, forward on children,
central where there is room on both sides).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .density import (
    ANALYTIC_FAMILIES,
    clamp_unit,
    hessian,
    log_density,
    two_level_spec,
)
from .errors import DomainError, NumericError, SchemeError, SingularSigmaError
from .estimate import merge_groups
from .generators import get_family
from .sampler import sample
from .tree import HacTree, node_name, validate_params

__all__ = [
    "DetScan",
    "FdScheme",
    "FisherEstimate",
    "determinant_scan",
    "fd_hessian",
    "fd_hessian_fn",
    "fd_scheme",
    "interior_shift",
    "kendall_step",
    "sigma_hat",
]

Path = tuple[int, ...]

EIG_RTOL = 1e-10        # smallest/largest eigenvalue cutoff for inversion
RIDGE_SCALE = 1e-8      # optional ridge, times trace/p


def kendall_step(family: str, theta: float, delta_tau: float = 0.005) -> float:
    """Negative-side theta step matching a delta_tau drop in Kendall tau."""
    fam = get_family(family)
    if delta_tau == 0.0:
        return 0.0
    t = fam.tau(theta)
    target = t - delta_tau
    lo_ok = target >= 0.0 if fam.tau_lo_attainable else target > 0.0
    if not (lo_ok and target < 1.0):
        raise DomainError(
            f"{family}: tau {t:.6g} - {delta_tau:.6g} leaves the attainable range"
        )
    return float(fam.tau_inv(target) - theta)


def _step_magnitude(fam, theta: float, delta_tau: float) -> float:
    try:
        return abs(kendall_step(fam.name, theta, delta_tau))
    except DomainError:
        # at the lower tau edge only the upward map is available
        return float(fam.tau_inv(fam.tau(theta) + delta_tau) - theta)


@dataclass(frozen=True)
class FdScheme:
    steps: np.ndarray        # positive step magnitudes, one per node
    directions: np.ndarray   # -1 backward, 0 central, +1 forward
    labels: tuple[str, ...]


def fd_scheme(
    tree: HacTree,
    family: str,
    theta,
    delta_tau: float = 0.005,
    tie_tol: float = 1e-8,
) -> FdScheme:
    if delta_tau <= 0.0:
        raise DomainError("delta_tau must be positive")
    fam = get_family(family)
    vec = tree.theta_vector(theta)
    p = tree.p
    steps = np.array([_step_magnitude(fam, v, delta_tau) for v in vec])

    lock_down = np.zeros(p, dtype=bool)
    lock_up = np.zeros(p, dtype=bool)
    for par, ch in tree.constraint_pairs():
        ip, ic = tree.param_pos[par], tree.param_pos[ch]
        if vec[ic] - vec[ip] <= tie_tol * (1.0 + abs(vec[ip])):
            lock_up[ip] = True
            lock_down[ic] = True
    for i in range(p):
        if vec[i] - fam.domain.lo <= tie_tol * (1.0 + abs(vec[i])):
            lock_down[i] = True

    down = np.empty(p)
    up = np.empty(p)
    for path, i in tree.param_pos.items():
        floor = fam.domain.lo
        if len(path) > 0:
            floor = max(floor, vec[tree.param_pos[path[:-1]]])
        down[i] = vec[i] - floor
        kids = [
            vec[tree.param_pos[c]]
            for c in tree.children(path)
            if not isinstance(c, int)
        ]
        up[i] = min(kids) - vec[i] if kids else math.inf

    # steps are capped at half the free margin so every stencil point,
    # including the 2h diagonal reach and paired central offsets, lands
    # inside the closed cone (worst case exactly on a tie)
    directions = np.zeros(p, dtype=int)
    for i, path in enumerate(tree.internal_paths):
        if lock_down[i] and lock_up[i]:
            raise SchemeError(
                f"node {node_name(path)} is pinned on both sides; "
                "shift the evaluation point first"
            )
        if lock_down[i]:
            directions[i] = 1
            steps[i] = min(steps[i], up[i] / 2.0)
        elif lock_up[i]:
            directions[i] = -1
            steps[i] = min(steps[i], down[i] / 2.0)
        else:
            directions[i] = 0
            steps[i] = min(steps[i], down[i] / 2.0, up[i] / 2.0)
        if not steps[i] > 0.0:
            raise SchemeError(
                f"node {node_name(path)} has no room for a difference step"
            )
    labels = tuple(node_name(path) for path in tree.internal_paths)
    return FdScheme(steps, directions, labels)


def fd_hessian_fn(fn, theta, scheme: FdScheme, feasible=None) -> np.ndarray:
    """Second-difference Hessian of a scalar function of theta.

    Off-diagonals are products of one-sided or central first differences
    (the four-point mixed stencil); diagonals use the matching
    three-point second difference in the same direction.
    """
    theta = np.asarray(theta, dtype=float)
    p = theta.size
    cache: dict[tuple, float] = {}

    def ev(x, who):
        key = tuple(x)
        if key not in cache:
            if feasible is not None and not feasible(x):
                raise SchemeError(
                    f"evaluation point for node {who} leaves the parameter space"
                )
            cache[key] = float(fn(x))
        return cache[key]

    ops = []
    for j in range(p):
        s, d = float(scheme.steps[j]), int(scheme.directions[j])
        if d > 0:
            ops.append(((s, 1.0 / s), (0.0, -1.0 / s)))
        elif d < 0:
            ops.append(((0.0, 1.0 / s), (-s, -1.0 / s)))
        else:
            ops.append(((s, 0.5 / s), (-s, -0.5 / s)))

    H = np.empty((p, p))
    for i in range(p):
        s, d = float(scheme.steps[i]), int(scheme.directions[i])
        who = scheme.labels[i]
        x = theta.copy()
        if d == 0:
            x[i] = theta[i] + s
            hi = ev(x, who)
            x[i] = theta[i] - s
            lo = ev(x, who)
            H[i, i] = (hi - 2.0 * ev(theta, who) + lo) / s**2
        else:
            sg = s if d > 0 else -s
            x[i] = theta[i] + 2.0 * sg
            far = ev(x, who)
            x[i] = theta[i] + sg
            near = ev(x, who)
            H[i, i] = (far - 2.0 * near + ev(theta, who)) / s**2
    for i in range(p):
        for j in range(i + 1, p):
            who = f"{scheme.labels[i]}/{scheme.labels[j]}"
            acc = 0.0
            for ai, wi in ops[i]:
                for aj, wj in ops[j]:
                    x = theta.copy()
                    x[i] += ai
                    x[j] += aj
                    acc += wi * wj * ev(x, who)
            H[i, j] = H[j, i] = acc
    return H


def fd_hessian(
    data,
    tree: HacTree,
    family: str,
    theta,
    delta_tau: float = 0.005,
    scheme: FdScheme | None = None,
) -> np.ndarray:
    """Mean over rows of the second-difference log-density Hessian."""
    rows = np.asarray(getattr(data, "values", data), dtype=float)
    vec = tree.theta_vector(theta)
    if scheme is None:
        scheme = fd_scheme(tree, family, vec, delta_tau)

    def fn(th):
        spec = two_level_spec(tree, family, th)
        return float(np.mean(log_density(spec, rows)))

    def feasible(th):
        return validate_params(tree, family, th, tol=0.0).valid

    return fd_hessian_fn(fn, vec, scheme, feasible=feasible)


# --- sigma ---------------------------------------------------------------


@dataclass(frozen=True)
class FisherEstimate:
    info: np.ndarray
    sigma: np.ndarray
    at: str
    source: str
    n_source: int
    method: str
    steps: tuple[float, ...] | None
    cond: float
    ridged: bool = False

    def to_dict(self) -> dict:
        return {
            "info": self.info.tolist(),
            "sigma": self.sigma.tolist(),
            "at": self.at,
            "source": self.source,
            "n_source": self.n_source,
            "method": self.method,
            "steps": None if self.steps is None else list(self.steps),
            "cond": self.cond,
            "ridged": self.ridged,
        }


def _subtree_shape(tree: HacTree, path: Path):
    return tuple(
        0 if isinstance(c, int) else _subtree_shape(tree, c)
        for c in tree.children(path)
    )


def _sibling_swaps(tree: HacTree, atoms) -> list[tuple[int, ...]]:
    """Parameter permutations swapping tied, same-shape sibling subtrees."""
    gid = {}
    for g, members in enumerate(merge_groups(tree, tuple(atoms)).groups):
        for p in members:
            gid[p] = g
    swaps = []
    for parent in tree.internal_paths:
        internal_kids = [
            c for c in tree.children(parent) if not isinstance(c, int)
        ]
        for a, b in combinations(internal_kids, 2):
            if _subtree_shape(tree, a) != _subtree_shape(tree, b):
                continue
            sub_a = [p for p in tree.internal_paths if p[: len(a)] == a]
            pairs = [(q, b + q[len(a):]) for q in sub_a]
            if any(gid[q] != gid[q2] for q, q2 in pairs):
                continue
            perm = list(range(tree.p))
            for q, q2 in pairs:
                i, j = tree.param_pos[q], tree.param_pos[q2]
                perm[i], perm[j] = j, i
            swaps.append(tuple(perm))
    return swaps


def _perm_closure(p: int, generators) -> list[tuple[int, ...]]:
    group = {tuple(range(p))}
    frontier = list(group)
    while frontier:
        nxt = []
        for g in frontier:
            for s in generators:
                comp = tuple(g[s[i]] for i in range(p))
                if comp not in group:
                    group.add(comp)
                    nxt.append(comp)
        frontier = nxt
        if len(group) > 720:
            raise DomainError("symmetry group too large to enforce")
    return sorted(group)


def _enforce_equalities(info: np.ndarray, tree: HacTree, atoms) -> np.ndarray:
    swaps = _sibling_swaps(tree, atoms)
    if not swaps:
        return info
    group = _perm_closure(tree.p, swaps)
    out = np.zeros_like(info)
    for perm in group:
        idx = np.asarray(perm)
        out += info[np.ix_(idx, idx)]
    return out / len(group)


def sigma_hat(
    data,
    tree: HacTree,
    family: str,
    theta,
    at: str = "bullet",
    source: str = "observed",
    method: str | None = None,
    n_mc: int = 100_000,
    seed: int = 0,
    atoms: tuple[Path, ...] = (),
    ridge: bool = False,
    delta_tau: float = 0.005,
) -> FisherEstimate:
    """Estimated information and its inverse at a fitted point.

    source "observed" averages over the data rows; "mc" draws n_mc fresh
    rows from the model at theta.  With atoms set (evaluation under the
    merged null), entry equalities implied by swapping tied same-shape
    sibling subtrees are enforced by group averaging.
    """
    vec = tree.theta_vector(theta)
    if method is None:
        method = "analytic" if family in ANALYTIC_FAMILIES else "fd"
    if method not in ("analytic", "fd"):
        raise DomainError(f"unknown method {method!r}")
    if source == "mc":
        rows = clamp_unit(sample(tree, vec, family, n_mc, seed=seed).values)
    elif source == "observed":
        rows = np.asarray(getattr(data, "values", data), dtype=float)
        if rows.ndim != 2 or rows.shape[1] != tree.d:
            raise DomainError(f"data must be (n, {tree.d}), got {rows.shape}")
    else:
        raise DomainError(f"unknown source {source!r}")

    steps = None
    if method == "analytic":
        if family not in ANALYTIC_FAMILIES:
            raise DomainError(
                f"{family}: no analytic hessian; use method='fd'"
            )
        spec = two_level_spec(tree, family, vec)
        mean_hess = hessian(spec, rows).mean(axis=0)
    else:
        scheme = fd_scheme(tree, family, vec, delta_tau)
        steps = tuple(float(s) for s in scheme.steps)
        mean_hess = fd_hessian(rows, tree, family, vec, scheme=scheme)

    info = -0.5 * (mean_hess + mean_hess.T)
    if atoms:
        info = _enforce_equalities(info, tree, atoms)

    ridged = False
    w = np.linalg.eigvalsh(info)
    if w[0] <= EIG_RTOL * max(w[-1], 0.0):
        if not ridge:
            raise SingularSigmaError(
                f"information is not positive definite (eig {w[0]:.3g} "
                f"vs {w[-1]:.3g})"
            )
        info = info + np.eye(tree.p) * RIDGE_SCALE * np.trace(info) / tree.p
        ridged = True
        w = np.linalg.eigvalsh(info)
        if w[0] <= EIG_RTOL * max(w[-1], 0.0):
            raise SingularSigmaError("information singular even after ridge")
    sigma = np.linalg.inv(info)
    return FisherEstimate(
        info=info,
        sigma=sigma,
        at=at,
        source="mc" if source == "mc" else "observed",
        n_source=rows.shape[0],
        method=method,
        steps=steps,
        cond=float(w[-1] / w[0]),
        ridged=ridged,
    )


# --- interior shift -------------------------------------------------------


def interior_shift(
    tree: HacTree,
    family: str,
    theta,
    atoms,
    n: int,
    delta_tau: float = 0.005,
    g=None,
) -> np.ndarray:
    """Nudge chain-constrained estimates off the boundary.

    Merged groups that span three or more levels leave their middle
    nodes with no room for one-sided differences; each such group is
    spread along a depth ramp lambda in [-1, 1] scaled by the node's
    Kendall step and g(n) = O(1/sqrt n).  Groups spanning at most two
    levels are returned unchanged.
    """
    fam = get_family(family)
    vec = tree.theta_vector(theta).astype(float).copy()
    gval = (1.0 / math.sqrt(n)) if g is None else float(g(n))
    shifted_edges = []
    for members in merge_groups(tree, tuple(atoms)).groups:
        base = len(members[0])
        rel = {m: len(m) - base for m in members}
        span = max(rel.values())
        if span < 2:
            continue
        for m in members:
            lam = -1.0 + 2.0 * rel[m] / span
            if lam != 0.0:
                i = tree.param_pos[m]
                vec[i] += lam * _step_magnitude(fam, vec[i], delta_tau) * gval
        shifted_edges.extend(
            (m[:-1], m) for m in members if len(m) > base and m[:-1] in members
        )
    rep = validate_params(tree, family, vec, tol=0.0)
    if not rep.valid:
        raise SchemeError(
            f"interior shift leaves the parameter space: {rep.violations}"
        )
    still_tight = set(rep.tight) & set(shifted_edges)
    if still_tight:
        names = [f"{node_name(a)}={node_name(b)}" for a, b in still_tight]
        raise SchemeError(f"interior shift failed to separate {names}")
    return vec


# --- determinant scan -----------------------------------------------------


@dataclass(frozen=True)
class DetScan:
    family: str
    origin: float
    offsets: np.ndarray
    dets: np.ndarray        # dets[i, j] at theta = (o + off[i], o + off[j])
    n_mc: int

    @property
    def all_positive(self) -> bool:
        vals = self.dets[np.isfinite(self.dets)]
        return bool(vals.size and np.all(vals > 0.0))

    def rows(self):
        for i, x0 in enumerate(self.offsets):
            for j, x1 in enumerate(self.offsets):
                if j >= i:
                    yield (
                        self.origin + float(x0),
                        self.origin + float(x1),
                        float(self.dets[i, j]),
                    )


def determinant_scan(
    family: str,
    offsets=None,
    n_mc: int = 10_000,
    seed: int = 0,
    tree: HacTree | None = None,
    delta_tau: float = 0.005,
) -> DetScan:
    """det(sigma) on a grid hugging the cone origin, fd + Monte Carlo."""
    fam = get_family(family)
    if offsets is None:
        offsets = np.linspace(0.25, 2.0, 8)
    offsets = np.asarray(offsets, dtype=float)
    if np.any(offsets <= 0.0) and fam.domain.lo_open:
        raise DomainError("offsets must be positive for an open domain edge")
    tree = tree if tree is not None else HacTree([[1, 2], 3])
    if tree.p != 2:
        raise DomainError("the scan grid is over two-parameter trees")
    o = fam.domain.lo
    m = offsets.size
    dets = np.full((m, m), np.nan)
    for i, x0 in enumerate(offsets):
        for j, x1 in enumerate(offsets):
            if x1 < x0:
                continue
            th = (o + float(x0), o + float(x1))
            cell_seed = np.random.SeedSequence(seed, spawn_key=(i, j))
            try:
                rows = clamp_unit(
                    sample(tree, th, family, n_mc, seed=cell_seed).values
                )
                mean_hess = fd_hessian(
                    rows, tree, family, th, delta_tau=delta_tau
                )
            except (SchemeError, NumericError):
                continue
            info = -0.5 * (mean_hess + mean_hess.T)
            det_info = float(np.linalg.det(info))
            # det(sigma) = 1/det(info); sign kept so failures are visible
            dets[i, j] = 1.0 / det_info if det_info != 0.0 else np.nan
    return DetScan(
        family=family,
        origin=o,
        offsets=offsets,
        dets=dets,
        n_mc=n_mc,
    )
