"""Program-transition graph, per-state rank records and rank effects.

For each state we summarise every program-transition path that ends at the
first invariant state it reaches:

* ``L`` total length of those paths, ``C`` their number, ``A = L / C``,
* ``Ar = ceil(A)``,
* ``M = maxlen + 1`` where ``maxlen`` is the longest such path (0 for invariant
  states, which carry ``(L, C, A, Ar, M) = (0, 1, 0, 0, 0)``).

The recurrence over a variant state ``s`` with successors ``T(s)``::

    C(s) = sum C(t)             L(s) = sum (L(t) + C(t))
    maxlen(s) = 1 + max maxlen(t)

is evaluated in longest-path layers, which doubles as the cycle check.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Iterator

import numpy as np

from cvfrank.errors import (
    ConfigurationError,
    CyclicOutsideInvariantError,
    InvalidInputError,
)
from cvfrank.ring import (
    DEFAULT_STATE_BUDGET,
    Configuration,
    SystemParams,
    as_configuration,
    check_capacity,
    place_values,
    privilege_matrix,
    state_digits,
    successor_matrix,
)

METRICS = ("ar", "m")
# Largest partial sum allowed in int64 before switching to Python ints.
_SAFE_INT = 2**62


def _metric(metric: str) -> str:
    m = str(metric).lower()
    if m not in METRICS:
        raise InvalidInputError(f"metric must be one of {METRICS}, got {metric!r}")
    return m


@dataclass(frozen=True)
class RankRecord:
    L: int
    C: int
    M: int

    @property
    def A(self) -> Fraction:
        return Fraction(self.L, self.C)

    @property
    def Ar(self) -> int:
        return -(-self.L // self.C)

    def as_tuple(self):
        return (self.L, self.C, self.A, self.Ar, self.M)


@dataclass
class TransitionGraph:
    """Program transitions as a padded successor matrix.

    ``succ[s, i]`` is the state reached when node ``i`` moves in state ``s``,
    or -1 if node ``i`` is not privileged there. Hand-built graphs may use any
    width; the row layout is all that matters.
    """

    succ: np.ndarray
    invariant: np.ndarray
    params: SystemParams | None = None

    def __post_init__(self):
        self.succ = np.asarray(self.succ, dtype=np.int64)
        self.invariant = np.asarray(self.invariant, dtype=bool)
        if self.succ.ndim != 2 or self.invariant.shape != (self.succ.shape[0],):
            raise InvalidInputError("succ must be (S, W) and invariant mask length S")
        if self.succ.size and (self.succ.max() >= self.n_states or self.succ.min() < -1):
            raise InvalidInputError("successor index out of range")

    @property
    def n_states(self) -> int:
        return self.succ.shape[0]

    @property
    def out_degree(self) -> np.ndarray:
        return (self.succ >= 0).sum(axis=1)

    @property
    def n_edges(self) -> int:
        return int((self.succ >= 0).sum())

    def edges(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(src, node, dst) arrays, ordered by source then node."""
        src, node = np.nonzero(self.succ >= 0)
        return src.astype(np.int64), node.astype(np.int64), self.succ[src, node]

    def successors_of(self, s: int) -> list[int]:
        row = self.succ[s]
        return [int(t) for t in row[row >= 0]]


def build_transition_graph(
    params: SystemParams, budget: int | None = DEFAULT_STATE_BUDGET
) -> TransitionGraph:
    check_capacity(params, budget)
    digits = state_digits(params)
    succ = successor_matrix(digits, params)
    invariant = privilege_matrix(digits).sum(axis=1) == 1
    return TransitionGraph(succ, invariant, params)


def _layers(graph: TransitionGraph, invariant_mask=None) -> np.ndarray:
    """Longest-path depth to the invariant for every state (0 for invariant states).

    Raises CyclicOutsideInvariantError if some variant states never resolve.
    """
    inv = graph.invariant if invariant_mask is None else np.asarray(invariant_mask, dtype=bool)
    n = graph.n_states
    depth = np.full(n + 1, -1, dtype=np.int64)
    depth[n] = 0  # sentinel column for the -1 padding
    depth[:n][inv] = 0
    succ = np.where(graph.succ >= 0, graph.succ, n)

    pending = np.flatnonzero(~inv)
    if pending.size:
        dead = graph.out_degree[pending] == 0
        if dead.any():
            raise InvalidInputError(
                f"variant state {int(pending[dead][0])} has no program transition"
            )
    level = 0
    while pending.size:
        level += 1
        sub = depth[succ[pending]]
        ready = (sub >= 0).all(axis=1)
        if not ready.any():
            raise CyclicOutsideInvariantError(
                f"{pending.size} variant states lie on or lead into a cycle outside "
                "the invariant (K too small for self-stabilization?)"
            )
        depth[pending[ready]] = level
        pending = pending[~ready]
    return depth[:n]


def check_convergence_dag(graph: TransitionGraph, invariant_mask=None) -> np.ndarray:
    """Variant states in an order where every program edge points to an earlier state.

    Invariant states are treated as sinks and are not part of the ordering.
    """
    depth = _layers(graph, invariant_mask)
    inv = graph.invariant if invariant_mask is None else np.asarray(invariant_mask, dtype=bool)
    variant = np.flatnonzero(~inv)
    return variant[np.argsort(depth[variant], kind="stable")]


@dataclass
class RankTable:
    """Rank statistics for every state. ``L`` and ``C`` are exact integers
    (int64, or Python ints in an object array once values get large)."""

    L: np.ndarray
    C: np.ndarray
    maxlen: np.ndarray
    invariant: np.ndarray
    params: SystemParams | None = None

    @property
    def n_states(self) -> int:
        return len(self.maxlen)

    @property
    def M(self) -> np.ndarray:
        return np.where(self.invariant, 0, self.maxlen + 1)

    @property
    def Ar(self) -> np.ndarray:
        ar = -(-self.L // self.C)
        if ar.dtype == object:
            ar = np.array([int(x) for x in ar], dtype=np.int64)
        return ar

    def metric(self, metric: str) -> np.ndarray:
        return self.Ar if _metric(metric) == "ar" else self.M

    def record(self, index: int) -> RankRecord:
        m = 0 if self.invariant[index] else int(self.maxlen[index]) + 1
        return RankRecord(int(self.L[index]), int(self.C[index]), m)

    def __getitem__(self, index: int) -> RankRecord:
        return self.record(index)

    def __len__(self):
        return self.n_states


def compute_ranks(graph: TransitionGraph, invariant_mask=None) -> RankTable:
    inv = graph.invariant if invariant_mask is None else np.asarray(invariant_mask, dtype=bool)
    depth = _layers(graph, inv)
    n = graph.n_states
    width = max(graph.succ.shape[1], 1)
    succ = np.where(graph.succ >= 0, graph.succ, n)

    # index n is the zero sentinel for padded successor slots
    C = np.zeros(n + 1, dtype=np.int64)
    L = np.zeros(n + 1, dtype=np.int64)
    C[:n][inv] = 1
    c_max, l_max = 1, 0
    variant = ~inv
    for level in range(1, int(depth.max(initial=0)) + 1):
        if C.dtype != object and (c_max + l_max) * width >= _SAFE_INT:
            C, L = C.astype(object), L.astype(object)
        frontier = np.flatnonzero((depth == level) & variant)
        sub = succ[frontier]
        c_sub = C[sub]
        C[frontier] = c_sub.sum(axis=1)
        L[frontier] = (L[sub] + c_sub).sum(axis=1)
        if C.dtype != object:
            c_max = max(c_max, int(C[frontier].max()))
            l_max = max(l_max, int(L[frontier].max()))
    return RankTable(L[:n], C[:n], depth, inv.copy(), graph.params)


@dataclass(frozen=True)
class RankEffectSample:
    kind: str
    src: int
    dst: int
    node: int
    effect_ar: int
    effect_m: int


@dataclass
class EffectHistogram:
    bins: dict[int, int] = field(default_factory=dict)

    @property
    def total(self) -> int:
        return sum(self.bins.values())

    def add_counts(self, values: np.ndarray) -> None:
        keys, counts = np.unique(np.asarray(values, dtype=np.int64), return_counts=True)
        for k, c in zip(keys.tolist(), counts.tolist()):
            self.bins[k] = self.bins.get(k, 0) + c

    def items(self) -> list[tuple[int, int]]:
        return sorted(self.bins.items())

    def __eq__(self, other):
        if not isinstance(other, EffectHistogram):
            return NotImplemented
        return self.items() == other.items()


@dataclass
class _Chunk:
    src: np.ndarray
    dst: np.ndarray
    node: np.ndarray
    effect_ar: np.ndarray
    effect_m: np.ndarray


class EffectStream:
    """Lazily generated rank-effect samples.

    Samples are produced in array chunks so full state spaces never need to be
    materialized at once; iterate to get individual RankEffectSample objects.
    ``group`` is the state each sample is attributed to (``src`` or ``dst``).
    """

    def __init__(self, kind: str, chunks: Callable[[], Iterator[_Chunk]], count: int,
                 n_states: int, group: str = "src"):
        self.kind = kind
        self._chunks = chunks
        self._count = count
        self.n_states = n_states
        self.group = group

    def __len__(self):
        return self._count

    def chunks(self) -> Iterator[_Chunk]:
        return self._chunks()

    def __iter__(self) -> Iterator[RankEffectSample]:
        for ch in self.chunks():
            for s, d, nd, ea, em in zip(ch.src.tolist(), ch.dst.tolist(), ch.node.tolist(),
                                        ch.effect_ar.tolist(), ch.effect_m.tolist()):
                yield RankEffectSample(self.kind, s, d, nd, ea, em)

    def histogram(self, metric: str = "ar") -> EffectHistogram:
        attr = "effect_ar" if _metric(metric) == "ar" else "effect_m"
        hist = EffectHistogram()
        for ch in self.chunks():
            hist.add_counts(getattr(ch, attr))
        return hist

    def per_state(self, metric: str = "ar") -> tuple[np.ndarray, np.ndarray]:
        """Sample count and summed effect attributed to each state."""
        attr = "effect_ar" if _metric(metric) == "ar" else "effect_m"
        count = np.zeros(self.n_states, dtype=np.int64)
        total = np.zeros(self.n_states, dtype=np.float64)
        for ch in self.chunks():
            key = getattr(ch, self.group)
            count += np.bincount(key, minlength=self.n_states)
            # float sums of small integers stay exact well below 2**53
            total += np.bincount(key, weights=getattr(ch, attr), minlength=self.n_states)
        return count, np.rint(total).astype(np.int64)


def program_rank_effects(graph: TransitionGraph, table: RankTable) -> EffectStream:
    """One sample per program edge, carrying both the Ar and the M effect."""
    ar, m = table.Ar, table.M

    def chunks():
        src, node, dst = graph.edges()
        yield _Chunk(src, dst, node, ar[dst] - ar[src], m[dst] - m[src])

    return EffectStream("program", chunks, graph.n_edges, graph.n_states)


def cvf_transitions(cfg, params: SystemParams) -> Iterator[tuple[int, Configuration]]:
    """Every single-node register corruption of ``cfg``, by node then new value."""
    cfg = as_configuration(cfg, params)
    for i, old in enumerate(cfg.values):
        for w in range(params.k_domain):
            if w != old:
                vals = list(cfg.values)
                vals[i] = w
                yield i, Configuration(tuple(vals))


def cvf_rank_effects(table: RankTable, params: SystemParams, direction: str = "out") -> EffectStream:
    """All CVF samples ``s -> s'`` with effect ``rank(s') - rank(s)``.

    Both directions see the same sample set; ``out`` attributes each sample to
    its source state and ``in`` to its destination state.
    """
    if direction not in ("in", "out"):
        raise InvalidInputError(f"direction must be 'in' or 'out', got {direction!r}")
    if table.n_states != params.n_states:
        raise InvalidInputError("rank table does not match params")
    ar, m = table.Ar, table.M
    k = params.k_domain
    place = place_values(params)
    n_states = params.n_states

    def chunks():
        src = np.arange(n_states, dtype=np.int64)
        for i in range(params.n_nodes):
            digit = (src // place[i]) % k
            node = np.full(n_states, i, dtype=np.int64)
            for delta in range(1, k):
                dst = src + (((digit + delta) % k) - digit) * place[i]
                yield _Chunk(src, dst, node, ar[dst] - ar[src], m[dst] - m[src])

    count = n_states * params.n_nodes * (k - 1)
    return EffectStream("cvf", chunks, count, n_states, group="src" if direction == "out" else "dst")


def rank_count_histogram(table: RankTable, metric: str = "ar") -> EffectHistogram:
    hist = EffectHistogram()
    hist.add_counts(table.metric(metric))
    return hist


def effect_histogram(samples: Iterable[RankEffectSample] | EffectStream,
                     metric: str = "ar") -> EffectHistogram:
    if isinstance(samples, EffectStream):
        return samples.histogram(metric)
    attr = "effect_ar" if _metric(metric) == "ar" else "effect_m"
    return EffectHistogram(dict(Counter(getattr(s, attr) for s in samples)))


@dataclass
class Analysis:
    params: SystemParams
    graph: TransitionGraph
    table: RankTable

    def program_effects(self) -> EffectStream:
        return program_rank_effects(self.graph, self.table)

    def cvf_effects(self, direction: str = "out") -> EffectStream:
        return cvf_rank_effects(self.table, self.params, direction)

    @property
    def n_invariant(self) -> int:
        return int(self.table.invariant.sum())


def analyze(params: SystemParams, budget: int | None = DEFAULT_STATE_BUDGET,
            allow_small_k: bool = False) -> Analysis:
    """Build the transition graph and rank table for ``params``.

    K < N is refused unless ``allow_small_k``; then a cycle outside the
    invariant raises CyclicOutsideInvariantError instead.
    """
    if params.k_domain < params.n_nodes and not allow_small_k:
        raise ConfigurationError(
            f"K={params.k_domain} < N={params.n_nodes}; pass allow_small_k to try anyway"
        )
    graph = build_transition_graph(params, budget)
    table = compute_ranks(graph)
    return Analysis(params, graph, table)
