"""Padded fixed-width feature vectors built from rank tables.

A row for a ring of N nodes has ``features[0:N]`` = configuration values,
``features[N] = N`` and the remaining slots up to the input width filled with
``pad_value``. The label is the chosen rank field (Ar or M) of that state.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from cvfrank.errors import ConfigurationError, ParseError
from cvfrank.ranks import RankTable, _metric
from cvfrank.ring import SystemParams, state_digits
from cvfrank.validation import check_fraction

DEFAULT_INPUT_NEURONS = 15


@dataclass
class DatasetSpec:
    node_range: Sequence[int] = (3, 4, 5, 6, 7)
    k_rule: int | Callable[[int], int] | None = None
    input_neurons: int = DEFAULT_INPUT_NEURONS
    target: str = "ar"
    pad_value: float = 0.0
    seed: int = 0
    split_ratio: float = 0.8
    holdout: Sequence[int] = field(default_factory=tuple)

    def __post_init__(self):
        self.node_range = sorted(int(n) for n in self.node_range)
        self.target = _metric(self.target)
        if not self.node_range:
            raise ConfigurationError("node_range is empty")
        check_width(max(self.node_range), self.input_neurons)

    def k_for(self, n: int) -> int:
        """K used for a ring of ``n`` nodes: N by default, a fixed int, or a callable."""
        if self.k_rule is None:
            return n
        if callable(self.k_rule):
            return int(self.k_rule(n))
        return int(self.k_rule)

    def params_for(self, n: int) -> SystemParams:
        return SystemParams(n, self.k_for(n))


@dataclass(frozen=True)
class DatasetRow:
    features: tuple[float, ...]
    label: float

    @property
    def n_nodes(self) -> int:
        return infer_n_nodes(self.features)


def check_width(n_nodes: int, input_neurons: int) -> None:
    if n_nodes + 1 > input_neurons:
        raise ConfigurationError(
            f"input width {input_neurons} cannot hold {n_nodes} node values plus the node-count slot"
        )


def infer_n_nodes(features, pad_value: float | None = None) -> int:
    """Recover N from a feature vector: slot N holds N and everything after is padding."""
    f = np.asarray(features, dtype=np.float64)
    pad = f[-1] if pad_value is None else pad_value
    for j in range(len(f) - 1, 1, -1):
        if f[j] == j and np.all(f[j + 1:] == pad):
            return j
    raise ConfigurationError("cannot infer ring size from feature vector")


def encode_configurations(digits: np.ndarray, input_neurons: int = DEFAULT_INPUT_NEURONS,
                          pad_value: float = 0.0) -> np.ndarray:
    """(S, N) configuration values -> (S, input_neurons) padded features."""
    digits = np.asarray(digits)
    s, n = digits.shape
    check_width(n, input_neurons)
    X = np.full((s, input_neurons), float(pad_value))
    X[:, :n] = digits
    X[:, n] = n
    return X


def build_arrays(spec: DatasetSpec, tables: Mapping[int, RankTable]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Features, labels and per-row ring size, ascending N then state index."""
    Xs, ys, ns = [], [], []
    for n in spec.node_range:
        if n not in tables:
            raise ConfigurationError(f"no rank table for N={n}")
        table = tables[n]
        params = spec.params_for(n)
        if table.n_states != params.n_states:
            raise ConfigurationError(f"rank table for N={n} does not match K={params.k_domain}")
        Xs.append(encode_configurations(state_digits(params), spec.input_neurons, spec.pad_value))
        ys.append(table.metric(spec.target).astype(np.float64))
        ns.append(np.full(params.n_states, n, dtype=np.int64))
    return np.vstack(Xs), np.concatenate(ys), np.concatenate(ns)


def build_rows(spec: DatasetSpec, tables: Mapping[int, RankTable]) -> list[DatasetRow]:
    X, y, _ = build_arrays(spec, tables)
    return rows_from_arrays(X, y)


def rows_from_arrays(X: np.ndarray, y: np.ndarray) -> list[DatasetRow]:
    return [DatasetRow(tuple(f), float(lab)) for f, lab in zip(X.tolist(), y.tolist())]


def rows_to_arrays(rows: Sequence[DatasetRow]) -> tuple[np.ndarray, np.ndarray]:
    if not rows:
        return np.zeros((0, 0)), np.zeros(0)
    return np.array([r.features for r in rows], dtype=np.float64), np.array([r.label for r in rows])


def split_indices(n_of_row: np.ndarray, spec: DatasetSpec) -> tuple[np.ndarray, np.ndarray]:
    """Train/test row indices.

    With ``spec.holdout`` every row of a listed ring size goes to test and the
    rest to train; otherwise a seeded random ``split_ratio`` train fraction.
    """
    n_of_row = np.asarray(n_of_row)
    total = len(n_of_row)
    if total == 0:
        raise ConfigurationError("cannot split an empty dataset")
    if spec.holdout:
        test_mask = np.isin(n_of_row, list(spec.holdout))
        train, test = np.flatnonzero(~test_mask), np.flatnonzero(test_mask)
    else:
        ratio = check_fraction(spec.split_ratio, "split_ratio")
        perm = np.random.default_rng(spec.seed).permutation(total)
        cut = int(round(ratio * total))
        train, test = np.sort(perm[:cut]), np.sort(perm[cut:])
    if train.size == 0 or test.size == 0:
        raise ConfigurationError(
            f"split leaves an empty side (train={train.size}, test={test.size})"
        )
    return train, test


def split(rows: Sequence[DatasetRow], spec: DatasetSpec) -> tuple[list[DatasetRow], list[DatasetRow]]:
    n_of_row = np.array([r.n_nodes for r in rows], dtype=np.int64)
    train, test = split_indices(n_of_row, spec)
    return [rows[i] for i in train], [rows[i] for i in test]


def _cell(x: float) -> str:
    x = float(x)
    return str(int(x)) if x.is_integer() else repr(x)


def write_csv(rows, path, X: np.ndarray | None = None, y: np.ndarray | None = None) -> None:
    """Write ``rows`` (or the arrays ``X``/``y``) with header ``f0,...,f{I-1},label``."""
    if X is None:
        X, y = rows_to_arrays(rows)
    width = X.shape[1] if X.size else 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"f{i}" for i in range(width)] + ["label"])
        for feats, lab in zip(X.tolist(), np.asarray(y).tolist()):
            w.writerow([_cell(v) for v in feats] + [_cell(lab)])


def read_csv_arrays(path) -> tuple[np.ndarray, np.ndarray]:
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("missing header", line=1) from None
        if not header or header[-1] != "label" or header[:-1] != [f"f{i}" for i in range(len(header) - 1)]:
            raise ParseError("header must be f0,...,f{I-1},label", line=1)
        width = len(header)
        data = []
        for lineno, cells in enumerate(reader, start=2):
            if not cells:
                continue
            if len(cells) != width:
                raise ParseError(f"expected {width} columns, got {len(cells)}", line=lineno)
            try:
                data.append([float(c) for c in cells])
            except ValueError:
                raise ParseError(f"non-numeric cell in {cells!r}", line=lineno) from None
    arr = np.array(data, dtype=np.float64).reshape(len(data), width)
    return arr[:, :-1], arr[:, -1]


def read_csv(path) -> list[DatasetRow]:
    X, y = read_csv_arrays(path)
    return rows_from_arrays(X, y)


class RingFeatureEncoder(TransformerMixin, BaseEstimator):
    """Turn ring configurations of any size into fixed-width feature rows.

    Accepts a sequence of configurations (each a sequence of ints, lengths may
    differ) and emits the padded layout used throughout the package.
    """

    def __init__(self, input_neurons=DEFAULT_INPUT_NEURONS, pad_value=0.0):
        self.input_neurons = input_neurons
        self.pad_value = pad_value

    def fit(self, X, y=None):
        self._validate(X)
        self.n_features_out_ = self.input_neurons
        return self

    def _validate(self, X):
        configs = [list(c) for c in X]
        for c in configs:
            check_width(len(c), self.input_neurons)
        return configs

    def transform(self, X):
        configs = self._validate(X)
        out = np.full((len(configs), self.input_neurons), float(self.pad_value))
        for row, c in zip(out, configs):
            row[: len(c)] = c
            row[len(c)] = len(c)
        return out

    def get_feature_names_out(self, input_features=None):
        return np.array([f"f{i}" for i in range(self.input_neurons)], dtype=object)
