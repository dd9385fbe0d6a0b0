"""Hierarchical BOA with decision-tree Bayesian networks, RTR and local search.

One generation: binary tournament selection (two shuffled passes), greedy
construction of a Bayesian network whose conditional distributions are
decision trees, sampling of half a population of offspring, hill climbing
of every offspring, and restricted tournament replacement (RTR).

Configurations are int8 vectors of +1/-1. The network models the bit
``x_v = 1`` for spin ``+1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .lattice import SpinGlassInstance
from .local_search import climb_batch

__all__ = [
    "BayesianNetworkModel",
    "Caps",
    "Population",
    "RunMetrics",
    "build_model",
    "hboa_run",
    "rtr_replace",
    "rtr_window",
    "sample_model",
    "tournament_select",
]

DEFAULT_MAX_EVALUATIONS = 10_000_000


@dataclass
class Population:
    """Hill-climbed members (int8, shape (P, N)) and their energies."""

    spins: np.ndarray
    energies: np.ndarray

    def __post_init__(self) -> None:
        if self.spins.ndim != 2 or self.energies.shape != (self.spins.shape[0],):
            raise ValueError("spins must be (P, N) with one energy per member")

    @property
    def size(self) -> int:
        return self.spins.shape[0]

    def best_energy(self) -> float:
        return float(self.energies.min())


@dataclass(frozen=True)
class Caps:
    """Run limits. ``max_generations=None`` means one per spin."""

    max_evaluations: int = DEFAULT_MAX_EVALUATIONS
    max_generations: int | None = None


@dataclass(frozen=True)
class RunMetrics:
    E_G: int
    E_L: int
    found: bool
    best_energy: float
    generations: int


# --------------------------------------------------------------------------
# selection


def tournament_select(pop: Population, rng: np.random.Generator) -> np.ndarray:
    """Binary tournaments without replacement, two passes.

    Each pass shuffles the population and pits consecutive members against
    each other; the lower energy wins and ties go to the earlier member of
    the shuffled pair. Every member plays exactly two tournaments.
    """
    P = pop.size
    if P < 2 or P % 2:
        raise ValueError(f"tournament selection needs an even population >= 2, got {P}")
    winners = np.empty(P, dtype=np.int64)
    for p in range(2):
        order = rng.permutation(P)
        a, b = order[0::2], order[1::2]
        winners[p * (P // 2) : (p + 1) * (P // 2)] = np.where(
            pop.energies[b] < pop.energies[a], b, a
        )
    return pop.spins[winners].copy()


# --------------------------------------------------------------------------
# model building


# gains closer than this are ties, won by the lowest (variable, leaf, split)
_TIE = 1e-9


@numba.njit(cache=True)
def _split_gain(xlogx, tot, k1, a, b, penalty):
    """Gain of splitting a leaf with ``tot`` rows (``k1`` with x_v = 1).

    ``a`` rows of the leaf have x_u = 1, ``b`` of them also have x_v = 1.
    """
    c0 = tot - a
    c1v = k1 - b
    ll_children = (
        xlogx[b] + xlogx[a - b] - xlogx[a] + xlogx[c1v] + xlogx[c0 - c1v] - xlogx[c0]
    )
    ll_parent = xlogx[k1] + xlogx[tot - k1] - xlogx[tot]
    return ll_children - ll_parent - penalty


@numba.njit(cache=True)
def _reaches(reach, a, b):
    """Bitset lookup: is there a dependency path a -> b?"""
    return (reach[a, b >> 6] >> np.uint64(b & 63)) & np.uint64(1)


@numba.njit(cache=True)
def _eval_leaf(v, l, X, leaf_of, reach, xlogx, penalty, leaf_gain, leaf_u, a, b):
    """Count the rows of leaf l of variable v and cache its best split."""
    M, n = X.shape
    a[:] = 0
    b[:] = 0
    tot = 0
    k1 = 0
    for m in range(M):
        if leaf_of[v, m] != l:
            continue
        tot += 1
        if X[m, v]:
            k1 += 1
            for u in range(n):
                b[u] += X[m, u]
        for u in range(n):
            a[u] += X[m, u]
    best = -np.inf
    best_u = -1
    if 0 < k1 < tot:  # a pure leaf cannot gain likelihood
        for u in range(n):
            if u == v or _reaches(reach, v, u):
                continue
            g = _split_gain(xlogx, tot, k1, a[u], b[u], penalty)
            if g > best + _TIE:
                best = g
                best_u = u
    leaf_gain[v, l] = best
    leaf_u[v, l] = best_u


@numba.njit(cache=True)
def _refresh_var(v, node_var, n_nodes, leaf_gain, var_gain, var_leaf):
    best = -np.inf
    best_l = -1
    for l in range(n_nodes[v]):
        if node_var[v, l] < 0 and leaf_gain[v, l] > best + _TIE:
            best = leaf_gain[v, l]
            best_l = l
    var_gain[v] = best
    var_leaf[v] = best_l


@numba.njit(cache=True)
def _build(X, penalty, node_var, child0, child1, ones, totals, n_nodes, parent, reach):
    M, n = X.shape
    cap = node_var.shape[1]
    xlogx = np.zeros(M + 1)
    for k in range(1, M + 1):
        xlogx[k] = k * math.log2(k)
    leaf_of = np.zeros((n, M), dtype=np.int64)
    leaf_gain = np.full((n, cap), -np.inf)
    leaf_u = np.full((n, cap), -1, dtype=np.int64)
    var_gain = np.full(n, -np.inf)
    var_leaf = np.zeros(n, dtype=np.int64)
    a = np.zeros(n, dtype=np.int64)
    b = np.zeros(n, dtype=np.int64)

    # root leaves: pairwise co-occurrence counts from one product
    Xf = X.astype(np.float64)
    C = (Xf.T @ Xf).astype(np.int64)
    for v in range(n):
        k1 = C[v, v]
        if 0 < k1 < M:
            best = -np.inf
            best_u = -1
            for u in range(n):
                if u == v:
                    continue
                g = _split_gain(xlogx, M, k1, C[u, u], C[u, v], penalty)
                if g > best + _TIE:
                    best = g
                    best_u = u
            leaf_gain[v, 0] = best
            leaf_u[v, 0] = best_u
        var_gain[v] = leaf_gain[v, 0]

    while True:
        v = 0
        for w in range(1, n):
            if var_gain[w] > var_gain[v] + _TIE:
                v = w
        if not var_gain[v] > 0.0:
            break
        l = var_leaf[v]
        u = leaf_u[v, l]
        c0 = n_nodes[v]
        c1 = c0 + 1
        n_nodes[v] += 2
        node_var[v, l] = u
        child0[v, l] = c0
        child1[v, l] = c1
        leaf_gain[v, l] = -np.inf
        for m in range(M):
            if leaf_of[v, m] == l:
                leaf_of[v, m] = c1 if X[m, u] else c0
        if not parent[u, v]:
            parent[u, v] = True
            # new descendants only appear for u and its ancestors
            vbit = np.uint64(1) << np.uint64(v & 63)
            for x in range(n):
                if x == u or _reaches(reach, x, u):
                    for word in range(reach.shape[1]):
                        reach[x, word] |= reach[v, word]
                    reach[x, v >> 6] |= vbit
            for w in range(n):
                if w != u and not _reaches(reach, w, v):
                    continue
                stale = False
                for k in range(n_nodes[w]):
                    if (
                        node_var[w, k] < 0
                        and leaf_gain[w, k] > 0.0
                        and _reaches(reach, w, leaf_u[w, k])
                    ):
                        _eval_leaf(w, k, X, leaf_of, reach, xlogx, penalty, leaf_gain, leaf_u, a, b)
                        stale = True
                if stale:
                    _refresh_var(w, node_var, n_nodes, leaf_gain, var_gain, var_leaf)
        _eval_leaf(v, c0, X, leaf_of, reach, xlogx, penalty, leaf_gain, leaf_u, a, b)
        _eval_leaf(v, c1, X, leaf_of, reach, xlogx, penalty, leaf_gain, leaf_u, a, b)
        _refresh_var(v, node_var, n_nodes, leaf_gain, var_gain, var_leaf)

    for v in range(n):
        for m in range(M):
            l = leaf_of[v, m]
            totals[v, l] += 1
            ones[v, l] += X[m, v]


class BayesianNetworkModel:
    """Per-variable decision trees over binary variables.

    Tree ``v`` is stored in row ``v`` of the node arrays. Node 0 is the
    root; an internal node tests ``node_var[v, k]`` and continues at
    ``child0`` (tested spin is -1) or ``child1`` (+1). Leaves have
    ``node_var == -1`` and carry ``prob[v, k] = P(x_v = +1)``.
    """

    def __init__(
        self,
        node_var: np.ndarray,
        child0: np.ndarray,
        child1: np.ndarray,
        prob: np.ndarray,
        n_nodes: np.ndarray,
        parent: np.ndarray,
    ) -> None:
        self.node_var = node_var
        self.child0 = child0
        self.child1 = child1
        self.prob = prob
        self.n_nodes = n_nodes
        self.parent = parent

    @property
    def n_variables(self) -> int:
        return self.node_var.shape[0]

    def edges(self) -> list[tuple[int, int]]:
        """Dependency edges (u, v): the tree of v tests u."""
        us, vs = np.nonzero(self.parent)
        return list(zip(us.tolist(), vs.tolist()))

    def leaves(self, v: int) -> list[tuple[int, float]]:
        """(node index, probability) for each leaf of variable v."""
        return [
            (k, float(self.prob[v, k]))
            for k in range(self.n_nodes[v])
            if self.node_var[v, k] < 0
        ]

    def topological_order(self) -> np.ndarray:
        """Order in which every variable follows the variables it tests."""
        order = _topo_order(self.parent)
        if order[0] < 0:
            raise ValueError("dependency graph of the model contains a cycle")
        return order


@numba.njit(cache=True)
def _topo_order(parent):
    n = parent.shape[0]
    indeg = np.zeros(n, dtype=np.int64)
    for u in range(n):
        for v in range(n):
            if parent[u, v]:
                indeg[v] += 1
    order = np.empty(n, dtype=np.int64)
    queue = np.empty(n, dtype=np.int64)
    head = 0
    tail = 0
    for v in range(n):
        if indeg[v] == 0:
            queue[tail] = v
            tail += 1
    while head < tail:
        u = queue[head]
        order[head] = u
        head += 1
        for v in range(n):
            if parent[u, v]:
                indeg[v] -= 1
                if indeg[v] == 0:
                    queue[tail] = v
                    tail += 1
    if head < n:
        order[0] = -1
    return order


def build_model(selected: np.ndarray) -> BayesianNetworkModel:
    """Greedy decision-tree Bayesian network for the selected solutions.

    Starting from single-leaf trees, the leaf split with the largest gain
    is applied repeatedly; gain is the increase of the log2-likelihood
    minus ``0.5 * log2(M)`` for the extra leaf. Splits that would make the
    dependency graph cyclic are skipped. Building stops when no split has
    positive gain. Leaf probabilities are Laplace-smoothed counts.
    """
    S = np.asarray(selected)
    if S.ndim != 2 or S.shape[0] == 0:
        raise ValueError("selected set must be a non-empty (M, N) array")
    M, n = S.shape
    X = (S > 0).astype(np.int64)
    cap = 2 * M + 1
    node_var = np.full((n, cap), -1, dtype=np.int64)
    child0 = np.full((n, cap), -1, dtype=np.int64)
    child1 = np.full((n, cap), -1, dtype=np.int64)
    ones = np.zeros((n, cap), dtype=np.int64)
    totals = np.zeros((n, cap), dtype=np.int64)
    n_nodes = np.ones(n, dtype=np.int64)
    parent = np.zeros((n, n), dtype=np.bool_)
    reach = np.zeros((n, (n + 63) // 64), dtype=np.uint64)
    penalty = 0.5 * math.log2(M)
    _build(X, penalty, node_var, child0, child1, ones, totals, n_nodes, parent, reach)
    width = int(n_nodes.max())
    prob = (ones[:, :width] + 1.0) / (totals[:, :width] + 2.0)
    return BayesianNetworkModel(
        node_var[:, :width].copy(),
        child0[:, :width].copy(),
        child1[:, :width].copy(),
        prob,
        n_nodes,
        parent,
    )


@numba.njit(cache=True)
def _sample(order, node_var, child0, child1, prob, U, out):
    for s in range(U.shape[0]):
        for v in order:
            k = 0
            while node_var[v, k] >= 0:
                k = child1[v, k] if out[s, node_var[v, k]] > 0 else child0[v, k]
            out[s, v] = 1 if U[s, v] < prob[v, k] else -1


def sample_model(
    model: BayesianNetworkModel, count: int, rng: np.random.Generator
) -> np.ndarray:
    """Draw ``count`` configurations (int8, shape (count, N)) in topological order."""
    order = model.topological_order()
    U = rng.random((count, model.n_variables))
    out = np.zeros((count, model.n_variables), dtype=np.int8)
    _sample(order, model.node_var, model.child0, model.child1, model.prob, U, out)
    return out


# --------------------------------------------------------------------------
# replacement


def rtr_window(n_spins: int, pop_size: int) -> int:
    """Window size: number of spins, capped at 5% of the population (min 1)."""
    return min(n_spins, max(1, math.ceil(0.05 * pop_size)))


@numba.njit(cache=True)
def _rtr_kernel(spins, energies, children, child_e, window, U):
    """Sequential RTR of every child; ``U[i]`` drives child i's window draw."""
    P, n = spins.shape
    perm = np.empty(P, dtype=np.int64)
    drawn = np.empty(window, dtype=np.int64)
    replaced = 0
    for i in range(children.shape[0]):
        for k in range(P):
            perm[k] = k
        # partial Fisher-Yates: the first `window` slots become the draw
        for j in range(window):
            r = j + int(U[i, j] * (P - j))
            if r >= P:
                r = P - 1
            perm[j], perm[r] = perm[r], perm[j]
        drawn[:] = perm[:window]
        drawn.sort()
        nearest = -1
        best_d = n + 1
        for j in range(window):
            m = drawn[j]
            d = 0
            for k in range(n):
                if spins[m, k] != children[i, k]:
                    d += 1
            if d < best_d:
                best_d = d
                nearest = m
        if child_e[i] < energies[nearest]:
            spins[nearest, :] = children[i, :]
            energies[nearest] = child_e[i]
            replaced += 1
    return replaced


def _rtr_batch(
    pop: Population,
    children: np.ndarray,
    child_e: np.ndarray,
    window: int,
    rng: np.random.Generator,
) -> int:
    if not 1 <= window <= pop.size:
        raise ValueError(f"window must lie in [1, {pop.size}], got {window}")
    U = rng.random((children.shape[0], window))
    return int(
        _rtr_kernel(
            pop.spins,
            pop.energies,
            np.ascontiguousarray(children, dtype=np.int8),
            np.asarray(child_e, dtype=np.float64),
            window,
            U,
        )
    )


def rtr_replace(
    pop: Population,
    offspring: np.ndarray,
    offspring_energy: float,
    window: int,
    rng: np.random.Generator,
) -> Population:
    """Restricted tournament replacement, in place.

    ``window`` distinct members are drawn; the one closest to the
    offspring in Hamming distance (lowest population index on ties) is
    replaced only if the offspring is strictly better.
    """
    child = np.asarray(offspring, dtype=np.int8).reshape(1, -1)
    if child.shape[1] != pop.spins.shape[1]:
        raise ValueError("offspring length does not match the population")
    _rtr_batch(pop, child, np.array([offspring_energy]), window, rng)
    return pop


# --------------------------------------------------------------------------
# full run


class _Budget:
    """Counts hill-climber invocations and flips until the target or cap."""

    def __init__(self, inst: SpinGlassInstance, target: float, cap: int) -> None:
        self.inst = inst
        self.threshold = target + inst.energy_tolerance
        self.cap = cap
        self.E_G = 0
        self.E_L = 0
        self.best = math.inf
        self.found = False
        self.exhausted = False

    def evaluate(self, candidates: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Climb as many candidates as the cap allows, stopping at the target.

        Returns the accepted (climbed) rows and their energies.
        """
        room = self.cap - self.E_G
        if room < candidates.shape[0]:
            candidates = candidates[:room]
            self.exhausted = True
        flips, energies = climb_batch(self.inst, candidates)
        for i in range(candidates.shape[0]):
            self.E_G += 1
            self.E_L += int(flips[i])
            self.best = min(self.best, float(energies[i]))
            if energies[i] <= self.threshold:
                self.found = True
                return candidates[: i + 1], energies[: i + 1]
        return candidates, energies

    @property
    def done(self) -> bool:
        return self.found or self.exhausted


def hboa_run(
    inst: SpinGlassInstance,
    pop_size: int,
    target_energy: float | None,
    rng: np.random.Generator,
    caps: Caps = Caps(),
) -> RunMetrics:
    """One hBOA run until ``target_energy`` is reached or a cap is hit.

    E_G counts hill-climber invocations (initial members and offspring,
    up to and including the first one that reaches the target); E_L sums
    their flips.
    """
    if target_energy is None:
        raise ValueError("hboa_run needs a target (ground) energy")
    if pop_size < 4 or pop_size % 2:
        raise ValueError(f"population size must be even and >= 4, got {pop_size}")
    n = inst.n_spins
    max_gen = n if caps.max_generations is None else caps.max_generations
    budget = _Budget(inst, float(target_energy), caps.max_evaluations)

    init = (rng.integers(0, 2, size=(pop_size, n), dtype=np.int8) * 2 - 1).astype(np.int8)
    members, energies = budget.evaluate(init)
    generations = 0
    if not budget.done:
        pop = Population(members, energies)
        window = rtr_window(n, pop_size)
        n_offspring = pop_size // 2
        while generations < max_gen and not budget.done:
            generations += 1
            model = build_model(tournament_select(pop, rng))
            children, child_e = budget.evaluate(sample_model(model, n_offspring, rng))
            _rtr_batch(pop, children, child_e, window, rng)
    return RunMetrics(
        budget.E_G, budget.E_L, budget.found, budget.best, generations
    )
