"""Dijkstra's K-state token ring.

Node 0 (the bottom machine) is privileged when its value equals that of node
N-1 and moves by incrementing its value mod K. Every other node i is privileged
when its value differs from node i-1 and moves by copying that value.

States are numbered by base-K positional encoding with node 0 as the least
significant digit, so ``(1, 0, 0)`` with K=3 is state 1 and ``(0, 1, 0)`` is 3.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from cvfrank.errors import CapacityError, InvalidInputError, PreconditionError

DEFAULT_STATE_BUDGET = 50_000_000
_INDEX_LIMIT = np.iinfo(np.int64).max


@dataclass(frozen=True)
class SystemParams:
    n_nodes: int
    k_domain: int

    def __post_init__(self):
        if int(self.n_nodes) != self.n_nodes or self.n_nodes < 2:
            raise InvalidInputError(f"n_nodes must be an integer >= 2, got {self.n_nodes!r}")
        if int(self.k_domain) != self.k_domain or self.k_domain < 2:
            raise InvalidInputError(f"k_domain must be an integer >= 2, got {self.k_domain!r}")

    @property
    def n_states(self) -> int:
        return self.k_domain ** self.n_nodes


@dataclass(frozen=True)
class Configuration:
    values: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(int(v) for v in self.values))

    def __len__(self):
        return len(self.values)

    def __getitem__(self, i):
        return self.values[i]

    def __iter__(self):
        return iter(self.values)


@dataclass(frozen=True)
class Move:
    node: int


def as_configuration(cfg, params: SystemParams) -> Configuration:
    """Coerce a tuple/list/Configuration and check it against ``params``."""
    if not isinstance(cfg, Configuration):
        try:
            cfg = Configuration(tuple(cfg))
        except (TypeError, ValueError) as exc:
            raise InvalidInputError(f"not a configuration: {cfg!r}") from exc
    if len(cfg.values) != params.n_nodes:
        raise InvalidInputError(
            f"configuration has {len(cfg.values)} entries, expected {params.n_nodes}"
        )
    for v in cfg.values:
        if not 0 <= v < params.k_domain:
            raise InvalidInputError(f"value {v} outside [0, {params.k_domain})")
    return cfg


def check_capacity(params: SystemParams, budget: int | None = DEFAULT_STATE_BUDGET) -> int:
    """Return K**N, raising CapacityError if it exceeds the index width or ``budget``."""
    n = params.n_states
    if n > _INDEX_LIMIT:
        raise CapacityError(f"K^N = {params.k_domain}^{params.n_nodes} overflows a 64-bit state index")
    if budget is not None and n > budget:
        raise CapacityError(
            f"K^N = {params.k_domain}^{params.n_nodes} = {n} states exceeds the budget of {budget}"
        )
    return n


def encode(cfg, params: SystemParams) -> int:
    cfg = as_configuration(cfg, params)
    idx = 0
    for v in reversed(cfg.values):
        idx = idx * params.k_domain + v
    return idx


def decode(index: int, params: SystemParams) -> Configuration:
    if not 0 <= index < params.n_states:
        raise InvalidInputError(f"state index {index} outside [0, {params.n_states})")
    values = []
    for _ in range(params.n_nodes):
        index, v = divmod(index, params.k_domain)
        values.append(v)
    return Configuration(tuple(values))


def privileged_nodes(cfg, params: SystemParams) -> frozenset[int]:
    v = as_configuration(cfg, params).values
    n = params.n_nodes
    nodes = {0} if v[0] == v[n - 1] else set()
    nodes.update(i for i in range(1, n) if v[i] != v[i - 1])
    return frozenset(nodes)


def apply_move(cfg, move: Move | int, params: SystemParams) -> Configuration:
    cfg = as_configuration(cfg, params)
    node = move.node if isinstance(move, Move) else int(move)
    if node not in privileged_nodes(cfg, params):
        raise PreconditionError(f"node {node} is not privileged in {cfg.values}")
    values = list(cfg.values)
    if node == 0:
        values[0] = (values[0] + 1) % params.k_domain
    else:
        values[node] = values[node - 1]
    return Configuration(tuple(values))


def successors(cfg, params: SystemParams) -> list[tuple[Move, Configuration]]:
    """One successor per privileged node, ordered by node index."""
    cfg = as_configuration(cfg, params)
    return [(Move(i), apply_move(cfg, i, params)) for i in sorted(privileged_nodes(cfg, params))]


def is_invariant(cfg, params: SystemParams) -> bool:
    return len(privileged_nodes(cfg, params)) == 1


def enumerate_states(
    params: SystemParams, budget: int | None = DEFAULT_STATE_BUDGET
) -> Iterator[Configuration]:
    """Yield every configuration in ascending state-index order."""
    total = check_capacity(params, budget)

    def gen():
        for idx in range(total):
            yield decode(idx, params)

    return gen()


# Vectorized helpers used by the rank engine on whole state spaces.


def place_values(params: SystemParams) -> np.ndarray:
    return params.k_domain ** np.arange(params.n_nodes, dtype=np.int64)


def state_digits(params: SystemParams, index: np.ndarray | None = None) -> np.ndarray:
    """Digits of the given state indices (all states if omitted), shape (S, N)."""
    if index is None:
        index = np.arange(check_capacity(params, None), dtype=np.int64)
    index = np.asarray(index, dtype=np.int64)
    dtype = np.int16 if params.k_domain < 2**15 else np.int64
    return ((index[:, None] // place_values(params)) % params.k_domain).astype(dtype)


def privilege_matrix(digits: np.ndarray) -> np.ndarray:
    """Boolean (S, N) matrix; entry [s, i] says whether node i is privileged in state s."""
    priv = np.empty(digits.shape, dtype=bool)
    priv[:, 0] = digits[:, 0] == digits[:, -1]
    priv[:, 1:] = digits[:, 1:] != digits[:, :-1]
    return priv


def successor_matrix(digits: np.ndarray, params: SystemParams) -> np.ndarray:
    """State index reached by each node's move, -1 where the node is not privileged."""
    k = params.k_domain
    place = place_values(params)
    d = digits.astype(np.int64)
    index = d @ place
    succ = np.full(digits.shape, -1, dtype=np.int64)
    priv = privilege_matrix(digits)
    succ0 = index - d[:, 0] + (d[:, 0] + 1) % k
    succ[:, 0] = np.where(priv[:, 0], succ0, -1)
    moved = index[:, None] + (d[:, :-1] - d[:, 1:]) * place[1:]
    succ[:, 1:] = np.where(priv[:, 1:], moved, -1)
    return succ
