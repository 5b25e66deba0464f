import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from cvfrank.dataset import (
    DatasetRow,
    DatasetSpec,
    RingFeatureEncoder,
    build_arrays,
    build_rows,
    infer_n_nodes,
    read_csv,
    split,
    write_csv,
)
from cvfrank.errors import ConfigurationError, ParseError
from cvfrank.ranks import analyze
from cvfrank.ring import SystemParams, decode, encode


@pytest.fixture(scope="module")
def tables():
    return {n: analyze(SystemParams(n, n)).table for n in (3, 4, 5)}


def test_row_layout_012(tables):
    rows = build_rows(DatasetSpec(node_range=[3], target="ar"), tables)
    row = rows[encode((0, 1, 2), SystemParams(3, 3))]
    assert row.features == (0, 1, 2, 3) + (0,) * 11
    assert row.label == 1.0
    assert row.n_nodes == 3


def test_invariant_label_m(tables):
    rows = build_rows(DatasetSpec(node_range=[3], target="m"), tables)
    assert rows[0].label == 0.0


def test_row_counts(tables):
    assert len(build_rows(DatasetSpec(node_range=[3]), tables)) == 27
    X, y, n = build_arrays(DatasetSpec(node_range=[3, 4]), tables)
    assert X.shape == (283, 15) and len(y) == 283
    assert list(np.unique(n)) == [3, 4]


def test_width_violation():
    with pytest.raises(ConfigurationError):
        DatasetSpec(node_range=[3, 15], input_neurons=15)


def test_missing_table(tables):
    with pytest.raises(ConfigurationError):
        build_rows(DatasetSpec(node_range=[6]), tables)


def test_labels_reproducible_from_rank_oracle(tables):
    X, y, n = build_arrays(DatasetSpec(node_range=[3, 4], target="m", pad_value=1.0), tables)
    rng = np.random.default_rng(3)
    for i in rng.choice(len(y), 40, replace=False):
        nn = infer_n_nodes(X[i])
        assert nn == n[i]
        cfg = tuple(int(v) for v in X[i, :nn])
        assert oracles.rank_ar_m(cfg, nn)[1] == y[i]


def test_holdout_split(tables):
    spec = DatasetSpec(node_range=[3, 4, 5], holdout=[5])
    rows = build_rows(spec, tables)
    train, test = split(rows, spec)
    assert len(test) == 5**5
    assert {r.n_nodes for r in test} == {5}
    assert {r.n_nodes for r in train} == {3, 4}


def test_random_split_deterministic(tables):
    spec = DatasetSpec(node_range=[3, 4], split_ratio=0.8, seed=11)
    rows = build_rows(spec, tables)
    a = split(rows, spec)
    b = split(rows, spec)
    assert a == b
    assert len(a[0]) == round(0.8 * 283)


@pytest.mark.parametrize("ratio", [1.0, 0.0, 1.5])
def test_bad_ratio(tables, ratio):
    spec = DatasetSpec(node_range=[3], split_ratio=ratio)
    with pytest.raises(ConfigurationError):
        split(build_rows(spec, tables), spec)


def test_csv_roundtrip(tmp_path, tables):
    rows = build_rows(DatasetSpec(node_range=[3, 4]), tables)
    rows.append(DatasetRow((0.5,) + (0.0,) * 14, 1.0 / 3.0))
    path = tmp_path / "d.csv"
    write_csv(rows, path)
    assert read_csv(path) == rows
    assert path.read_text().splitlines()[0] == ",".join(f"f{i}" for i in range(15)) + ",label"


def test_csv_header_only(tmp_path):
    path = tmp_path / "e.csv"
    path.write_text("f0,f1,label\n")
    assert read_csv(path) == []


def test_csv_wrong_width(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("f0,f1,label\n1,2,3\n1,2\n")
    with pytest.raises(ParseError, match="line 3"):
        read_csv(path)


def test_csv_non_numeric(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("f0,f1,label\n1,x,3\n")
    with pytest.raises(ParseError, match="line 2"):
        read_csv(path)


@settings(max_examples=50)
@given(st.lists(st.tuples(st.lists(st.integers(0, 9), min_size=15, max_size=15),
                          st.integers(0, 60)), max_size=8))
def test_csv_roundtrip_property(tmp_path_factory, data):
    rows = [DatasetRow(tuple(float(v) for v in f), float(lab)) for f, lab in data]
    path = tmp_path_factory.mktemp("csv") / "r.csv"
    write_csv(rows, path)
    assert read_csv(path) == rows


def test_encoder_transformer():
    enc = RingFeatureEncoder(input_neurons=6, pad_value=1.0)
    X = enc.fit_transform([(0, 1, 2), (3, 3)])
    assert X.tolist() == [[0, 1, 2, 3, 1, 1], [3, 3, 2, 1, 1, 1]]
    assert enc.get_params() == {"input_neurons": 6, "pad_value": 1.0}
    with pytest.raises(ConfigurationError):
        enc.transform([(0,) * 6])


def test_encoder_matches_build_arrays(tables):
    X, _, _ = build_arrays(DatasetSpec(node_range=[4]), tables)
    params = SystemParams(4, 4)
    cfgs = [decode(i, params).values for i in range(params.n_states)]
    assert np.array_equal(RingFeatureEncoder().fit_transform(cfgs), X)
