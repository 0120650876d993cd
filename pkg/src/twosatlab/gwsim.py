"""Five-type Galton-Watson trees behind the limiting 2-SAT marginal law.

One variable type and four clause types (s, s'): a variable spawns an
independent Poisson(d/4) pack of clause children of each type, and every
clause carries exactly one variable child. The survival probability of the
process matches the single-type Poisson(d) tree, so the extinction
probability eta solves eta = exp(d*(eta-1)).

Conditioning is realized exactly through the eta-decomposition: an
extinction-conditioned variable spawns Poisson(d*eta) children, all dead; a
survival-conditioned variable spawns Poisson(d*(1-eta)) surviving children
conditioned to be at least one, plus an independent Poisson(d*eta) pack of
dead children. Clause types and signs stay uniform and independent of the
marks, which only depend on counts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .densityev import resample_log_terms
from .numerics import log_clause_term
from .treebp import CLAUSE_TYPES, ClauseType, TreeFormula, bp_root_marginal
from .util import ResourceLimitError, chunk_sizes, parallel_map, substream

_NODE_CAP = 20_000_000


class GWNode:
    """Variable node; children are (clause type, child node) pairs."""

    __slots__ = ("children", "surviving")

    def __init__(self, children=None, surviving=None):
        self.children = children if children is not None else []
        self.surviving = surviving


@dataclass(frozen=True)
class GWTree:
    """A sampled tree; depth_limit counts variable generations (None=complete)."""

    root: GWNode
    depth_limit: int | None
    d: float
    conditioned: str = "none"


@dataclass(frozen=True)
class ExtinctionInfo:
    d: float
    eta: float
    zeta: float


def extinction_probability(d: float, tol: float = 1e-12) -> ExtinctionInfo:
    """Smallest fixed point of eta -> exp(d*(eta-1)) in (0,1].

    Equals 1 exactly for d <= 1; for d > 1 monotone iteration from 0
    converges geometrically at rate d*eta < 1, and the stopping rule turns
    the step size into a true-error bound via the geometric tail.
    """
    if not 0 < d < 2:
        raise ValueError(f"need d in (0,2), got {d}")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if d <= 1.0:
        return ExtinctionInfo(d=d, eta=1.0, zeta=0.0)
    eta = 0.0
    for _ in range(1_000_000):
        nxt = math.exp(d * (eta - 1.0))
        rate = min(d * nxt, 0.999999)
        if abs(nxt - eta) * rate / (1.0 - rate) <= tol:
            eta = nxt
            break
        eta = nxt
    return ExtinctionInfo(d=d, eta=eta, zeta=1.0 - eta)


# -- samplers ------------------------------------------------------------------


def _uniform_types(rng, k: int):
    return [CLAUSE_TYPES[t] for t in rng.integers(0, 4, size=k)]


def sample_truncated(d: float, L: int, seed: int) -> GWTree:
    """Unconditioned tree truncated at variable generation L (depth 2L)."""
    if L < 0:
        raise ValueError("L must be >= 0")
    rng = substream(seed, 0x6A)
    root = GWNode()
    frontier = [root]
    nodes = 1
    for _ in range(L):
        nxt = []
        for node in frontier:
            counts = rng.poisson(d / 4.0, size=4)
            for t, c in enumerate(counts):
                for _ in range(int(c)):
                    child = GWNode()
                    node.children.append((CLAUSE_TYPES[t], child))
                    nxt.append(child)
        nodes += len(nxt)
        if nodes > _NODE_CAP:
            raise ResourceLimitError(f"tree grew past {_NODE_CAP} nodes")
        frontier = nxt
    return GWTree(root=root, depth_limit=L, d=d)


def sample_extinct_conditioned(
    d: float, seed: int, depth_limit: int | None = None
) -> GWTree:
    """Tree conditioned on extinction: complete, finite, Poisson(d*eta) offspring."""
    info = extinction_probability(d)
    rng = substream(seed, 0x6B)
    root = _grow_extinct(rng, d * info.eta, depth_limit, _NODE_CAP)
    if root is None:
        raise ResourceLimitError(f"tree grew past {_NODE_CAP} nodes")
    return GWTree(root=root, depth_limit=depth_limit, d=d, conditioned="extinct")


def _grow_extinct(rng, lam: float, depth_limit: int | None, node_cap: int) -> GWNode | None:
    """Grow a Poisson(lam) tree; None when it exceeds node_cap (lam near 1
    makes sizes heavy-tailed, so bulk callers need an explicit policy)."""
    root = GWNode(surviving=False)
    frontier = [root]
    depth = 0
    nodes = 1
    while frontier and (depth_limit is None or depth < depth_limit):
        nxt = []
        for node in frontier:
            k = int(rng.poisson(lam))
            for ct in _uniform_types(rng, k):
                child = GWNode(surviving=False)
                node.children.append((ct, child))
                nxt.append(child)
        nodes += len(nxt)
        if nodes > node_cap:
            return None
        frontier = nxt
        depth += 1
    return root


def _poisson_ge1(rng, lam: float) -> int:
    while True:
        k = int(rng.poisson(lam))
        if k >= 1:
            return k


def sample_survival_conditioned(d: float, L: int, seed: int) -> GWTree:
    """Tree conditioned on survival, truncated at variable generation L.

    Surviving nodes carry mark True and have at least one surviving child,
    so a surviving path always reaches the truncation depth; dead children
    root extinction-conditioned subtrees cut at the same overall depth.
    """
    if not 1 < d < 2:
        raise ValueError(f"survival conditioning needs d in (1,2), got {d}")
    if L < 1:
        raise ValueError("L must be >= 1")
    info = extinction_probability(d)
    rng = substream(seed, 0x6C)
    root = GWNode(surviving=True)
    frontier = [root]
    for depth in range(L):
        nxt = []
        for node in frontier:
            n_live = _poisson_ge1(rng, d * info.zeta)
            n_dead = int(rng.poisson(d * info.eta))
            for ct in _uniform_types(rng, n_live):
                child = GWNode(surviving=True)
                node.children.append((ct, child))
                nxt.append(child)
            budget = L - depth - 1
            for ct in _uniform_types(rng, n_dead):
                child = _grow_extinct(rng, d * info.eta, budget, _NODE_CAP)
                node.children.append((ct, child))
        frontier = nxt
    return GWTree(root=root, depth_limit=L, d=d, conditioned="survive")


# -- exact marginals on sampled trees -----------------------------------------


def root_marginal(t: GWTree) -> Fraction:
    """Exact rational root marginal of the tree read as a 2-SAT formula."""
    return bp_root_marginal(t.root)


def _combine(child_entries) -> Fraction:
    w_plus = Fraction(1)
    w_minus = Fraction(1)
    for (s, sp), p in child_entries:
        satisfies = p if sp > 0 else 1 - p
        if s < 0:
            w_plus *= satisfies
        else:
            w_minus *= satisfies
    return w_plus / (w_plus + w_minus)


def marginal_sequence(t: GWTree) -> list[Fraction]:
    """Root marginals of the depth-0, depth-2, ..., depth-2L truncations.

    Entry l is the exact marginal of the tree cut l variable generations
    below the root; entry 0 is 1/2. One bottom-up pass serves all depths.
    """
    if t.depth_limit is None:
        raise ValueError("marginal_sequence needs a truncated tree")
    L = t.depth_limit
    memo: dict[int, list[Fraction]] = {}
    half = Fraction(1, 2)

    def budget_of(depth):
        return L - depth

    stack: list[tuple[GWNode, int]] = [(t.root, 0)]
    while stack:
        node, depth = stack[-1]
        if id(node) in memo:
            stack.pop()
            continue
        pending = [(c, depth + 1) for _, c in node.children if id(c) not in memo]
        if pending:
            stack.extend(pending)
            continue
        stack.pop()
        margs = [half]
        for j in range(1, budget_of(depth) + 1):
            entries = [(ct, memo[id(c)][j - 1]) for ct, c in node.children]
            margs.append(_combine(entries))
        memo[id(node)] = margs
    return memo[id(t.root)]


def truncate(t: GWTree, depth: int) -> GWTree:
    """Structural copy cut at variable generation `depth`."""
    if t.depth_limit is not None and depth > t.depth_limit:
        raise ValueError("cannot truncate deeper than the sampled depth")

    def copy(node: GWNode, budget: int) -> GWNode:
        out = GWNode(surviving=node.surviving)
        if budget > 0:
            out.children = [(ct, copy(c, budget - 1)) for ct, c in node.children]
        return out

    return GWTree(root=copy(t.root, depth), depth_limit=depth, d=t.d,
                  conditioned=t.conditioned)


def from_tree_formula(t: TreeFormula, d: float) -> GWTree:
    """Expand a (possibly shared) tree-formula into a complete sampled-tree shape."""

    def expand(node) -> GWNode:
        return GWNode(
            children=[(ct, expand(c)) for ct, c in node.children], surviving=False
        )

    return GWTree(root=expand(t), depth_limit=None, d=d, conditioned="none")


# -- probability of a fixed finite tree ---------------------------------------


def _canonical_forms(root: GWNode) -> dict[int, tuple]:
    memo: dict[int, tuple] = {}
    stack = [root]
    while stack:
        node = stack[-1]
        if id(node) in memo:
            stack.pop()
            continue
        pending = [c for _, c in node.children if id(c) not in memo]
        if pending:
            stack.extend(pending)
            continue
        stack.pop()
        memo[id(node)] = tuple(
            sorted((tuple(ct), memo[id(c)]) for ct, c in node.children)
        )
    return memo


def tree_probability(t: GWTree, d: float) -> float:
    """P(the Galton-Watson tree equals t) as an unordered typed rooted tree.

    Per variable node and clause type, Poisson(d/4) offspring probability
    times the multinomial correction for repeated child isomorphism
    classes; the whole product collapses to
    exp(-d*V) * (d/4)^E / prod(multiplicities!).
    """
    if t.depth_limit is not None:
        raise ValueError("tree_probability needs a complete (finite) tree")
    canon = _canonical_forms(t.root)
    n_nodes = 0
    n_edges = 0
    log_mult = 0.0
    stack = [t.root]
    while stack:
        node = stack.pop()
        n_nodes += 1
        n_edges += len(node.children)
        groups: dict[tuple, int] = {}
        for ct, c in node.children:
            key = (tuple(ct), canon[id(c)])
            groups[key] = groups.get(key, 0) + 1
            stack.append(c)
        for mult in groups.values():
            log_mult += math.lgamma(mult + 1)
    logp = -d * n_nodes + n_edges * math.log(d / 4.0) - log_mult
    return math.exp(logp)


# -- batched theta recursions ---------------------------------------------------


def _forest_theta_matrix(d: float, L: int, count: int, seed: int) -> np.ndarray:
    """Root theta values of `count` independent trees at all depths 0..L+1.

    Samples the forest level by level as flat arrays, then runs the
    log-likelihood recursion bottom-up, vectorized across the whole level;
    column l of the result is theta at truncation depth l of the same tree,
    which realizes the coupling between successive depths.
    """
    rng = substream(seed, 0x7F)
    top = L + 1
    sizes = [count]
    edges = []  # per generation: (parent_idx, s, s_prime)
    for _ in range(top):
        n = sizes[-1]
        if n == 0:
            sizes.append(0)
            edges.append((np.zeros(0, np.int64), np.zeros(0), np.zeros(0)))
            continue
        counts = rng.poisson(d, size=n)
        total = int(counts.sum())
        parent = np.repeat(np.arange(n), counts)
        s = 2.0 * rng.integers(0, 2, size=total) - 1.0
        sp = 2.0 * rng.integers(0, 2, size=total) - 1.0
        edges.append((parent, s, sp))
        sizes.append(total)

    theta = np.zeros((sizes[top], 1))
    for g in range(top - 1, -1, -1):
        parent, s, sp = edges[g]
        cols = top - g + 1
        up = np.zeros((sizes[g], cols))
        if parent.size:
            contrib = s[:, None] * log_clause_term(theta, sp[:, None])
            for j in range(theta.shape[1]):
                up[:, j + 1] += np.bincount(parent, weights=contrib[:, j],
                                            minlength=sizes[g])
        theta = up
    return theta  # shape (count, L+2)


def _increment_chunk(args) -> np.ndarray:
    d, L, count, seed = args
    theta = _forest_theta_matrix(d, L, count, seed)
    return np.abs(np.diff(theta, axis=1)).sum(axis=0)


def coupled_increment_stats(
    d: float,
    L: int,
    N: int,
    seed: int,
    chunk: int = 4096,
    workers: int | None = None,
) -> list[tuple[int, float]]:
    """Mean |theta^(l+1) - theta^(l)| over N independent trees, l = 0..L.

    Each tree is truncated at depth 2(L+1) and all its truncation-depth
    marginals come from the same realization, so successive increments
    measure the one-step contraction of the recursion.
    """
    if L < 2:
        raise ValueError("L must be >= 2")
    if N < 1:
        raise ValueError("N must be >= 1")
    specs = [
        (d, L, c, int(substream(seed, 0x70, k).integers(0, 2**62)))
        for k, c in enumerate(chunk_sizes(N, chunk))
    ]
    sums = sum(parallel_map(_increment_chunk, specs, workers=workers))
    return [(l, float(sums[l] / N)) for l in range(L + 1)]


def extinct_theta_population(d: float, L: int, size: int, seed: int) -> np.ndarray:
    """Population-dynamics theta samples of extinction-conditioned trees, depth L."""
    lam = d * extinction_probability(d).eta
    rng = substream(seed, 0x5B)
    cur = np.zeros(size)
    for _ in range(L):
        cur = resample_log_terms(rng, cur, rng.poisson(lam, size=size))
    return cur


def survival_theta_population(d: float, L: int, size: int, seed: int) -> np.ndarray:
    """Population-dynamics theta samples conditioned on survival, depth L.

    Evolves the extinct-conditioned and survival-conditioned laws jointly:
    a surviving node aggregates a zero-truncated Poisson(d*zeta) pack of
    surviving subtrees and an independent Poisson(d*eta) pack of dead ones.
    Cost is size * L draws, independent of the (enormous) trees the exact
    per-sample construction would have to expand.
    """
    if not 1 < d < 2:
        raise ValueError(f"survival conditioning needs d in (1,2), got {d}")
    info = extinction_probability(d)
    rng = substream(seed, 0x5C)
    fin = np.zeros(size)
    inf = np.zeros(size)
    for _ in range(L):
        live_counts = rng.poisson(d * info.zeta, size=size)
        redo = live_counts == 0
        while redo.any():
            live_counts[redo] = rng.poisson(d * info.zeta, size=int(redo.sum()))
            redo = live_counts == 0
        dead_counts = rng.poisson(d * info.eta, size=size)
        new_inf = resample_log_terms(rng, inf, live_counts) + resample_log_terms(
            rng, fin, dead_counts
        )
        fin = resample_log_terms(rng, fin, rng.poisson(d * info.eta, size=size))
        inf = new_inf
    return inf


# -- bulk exact-marginal sampling ----------------------------------------------


def _extinct_marginal_chunk(args) -> list[Fraction | None]:
    d, count, seed, node_cap = args
    lam = d * extinction_probability(d).eta
    out = []
    for k in range(count):
        rng = substream(seed, k)
        root = _grow_extinct(rng, lam, None, node_cap)
        out.append(None if root is None else bp_root_marginal(root))
    return out


def extinct_marginal_samples(
    d: float,
    n: int,
    seed: int,
    chunk: int = 2000,
    workers: int | None = None,
    node_cap: int = _NODE_CAP,
) -> list[Fraction | None]:
    """Exact rational root marginals of n extinction-conditioned trees.

    Trees that outgrow node_cap come back as None so callers can count them
    without biasing atom-mass estimates upward; with the default cap this
    never happens away from d = 1.
    """
    specs = [
        (d, c, int(substream(seed, 0x71, k).integers(0, 2**62)), node_cap)
        for k, c in enumerate(chunk_sizes(n, chunk))
    ]
    out: list[Fraction | None] = []
    for part in parallel_map(_extinct_marginal_chunk, specs, workers=workers):
        out.extend(part)
    return out
