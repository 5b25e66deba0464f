"""Acceptance gate: one PASS/FAIL line per criterion, at the stated tolerances.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the report lines.
"""

import time
import xml.etree.ElementTree as ET

import numpy as np
import pytest

import oracles
from gradcheck import max_relative_error, numeric_grads
from cvfrank.cli import main
from cvfrank.dataset import DatasetSpec, build_arrays, encode_configurations
from cvfrank.mlp import backward, forward, init_model
from cvfrank.parallel import DataParallelTrainer, ParallelConfig, TrainConfig, evaluate, fit
from cvfrank.ranks import analyze
from cvfrank.ring import SystemParams, encode, state_digits


SVG = "{http://www.w3.org/2000/svg}"


RESULTS = []  # shown in the terminal summary by conftest


def report(label, ok, detail=""):
    line = f"[{'PASS' if ok else 'FAIL'}] {label}" + (f": {detail}" if detail else "")
    RESULTS.append(line)
    print("\n" + line)
    assert ok, detail


def test_c01_invariant_count():
    t0 = time.perf_counter()
    got, brute, kn = {}, {}, {}
    for n in (3, 4, 5):
        got[n] = analyze(SystemParams(n, n)).n_invariant
        brute[n] = oracles.count_invariant(n, n)
        kn[n] = n * n
    elapsed = time.perf_counter() - t0
    ok = got == brute and got == kn and elapsed < 5
    report("1 invariant count", ok,
           f"analyzer={got} brute={brute} K*N={kn} ({elapsed:.2f}s)")


@pytest.mark.parametrize("n", [3, 4])
def test_c02_rank_dp_vs_dfs(n):
    t0 = time.perf_counter()
    params = SystemParams(n, n)
    table = analyze(params).table
    bad = 0
    for cfg in oracles.all_states(n, n):
        L, C, mx = oracles.dfs_paths(cfg, n)
        i = encode(cfg, params)
        bad += (int(table.L[i]), int(table.C[i]), int(table.maxlen[i])) != (L, C, mx)
    elapsed = time.perf_counter() - t0
    report(f"2 rank DP vs DFS at N=K={n}", bad == 0 and elapsed < 30,
           f"{bad} mismatches ({elapsed:.2f}s)")


def _effect(stream, src, dst):
    for s in stream:
        if s.src == src and s.dst == dst:
            return s.effect_ar, s.effect_m
    raise LookupError((src, dst))


def test_c03_hand_fixtures(analysis33):
    p = SystemParams(3, 3)
    t = analysis33.table
    rec = t[encode((0, 1, 2), p)]
    rec_ok = (rec.L, rec.C, rec.A, rec.Ar, rec.M) == (2, 2, 1, 1, 2)
    cvf = _effect(analysis33.cvf_effects("out"), encode((0, 0, 0), p), encode((0, 2, 0), p))
    prog = _effect(analysis33.program_effects(), encode((0, 1, 2), p), encode((0, 0, 2), p))
    ok = rec_ok and cvf == (1, 2) and prog[0] == -1
    report("3 hand fixtures", ok,
           f"(0,1,2)->({rec.L}, {rec.C}, {rec.A}, {rec.Ar}, {rec.M}); "
           f"cvf (0,0,0)->(0,2,0) effect (ar,m)={cvf} expected (1, 2); "
           f"program (0,1,2)->(0,0,2) effect_ar={prog[0]}")


@pytest.mark.parametrize("n", [3, 4])
def test_c04_m_monotone(n, analysis33, analysis44):
    a = analysis33 if n == 3 else analysis44
    inv = a.table.invariant
    bad_variant = bad_internal = 0
    for ch in a.program_effects().chunks():
        variant = ~inv[ch.src]
        bad_variant += int(np.count_nonzero(ch.effect_m[variant] > -1))
        internal = inv[ch.src] & inv[ch.dst]
        bad_internal += int(np.count_nonzero(ch.effect_m[internal] != 0))
        bad_internal += int(np.count_nonzero(ch.effect_ar[internal] != 0))
    report(f"4 M-monotonicity at N=K={n}", bad_variant == 0 and bad_internal == 0,
           f"variant violations={bad_variant}, invariant-internal violations={bad_internal}")


@pytest.mark.parametrize("n", [3, 4])
def test_c05_cvf_in_out(n, analysis33, analysis44):
    a = analysis33 if n == 3 else analysis44
    ok, totals = True, []
    for metric in ("ar", "m"):
        h_in = a.cvf_effects("in").histogram(metric)
        h_out = a.cvf_effects("out").histogram(metric)
        ok &= h_in == h_out
        totals.append(h_in.total)
    expected = n**n * n * (n - 1)
    ok &= all(t == expected for t in totals)
    report(f"5 cvf in/out equality at N=K={n}", ok, f"totals={totals} expected={expected}")


def test_c06_gradients():
    t0 = time.perf_counter()
    rng = np.random.default_rng(11)
    m = init_model((5, 8, 4, 1), 2, use_dropout=False, use_batchnorm=False)
    X, y = rng.normal(size=(6, 5)), rng.normal(size=6)
    _, cache = forward(m, X, "train")
    plain = max_relative_error(backward(m, cache, y), numeric_grads(m, X, y))
    mb = init_model((5, 8, 4, 1), 3, use_dropout=False, use_batchnorm=True)
    rng = np.random.default_rng(103)
    Xb, yb = rng.normal(size=(8, 5)), rng.normal(size=8)
    _, cache = forward(mb, Xb, "train", update_running=False)
    bn = max_relative_error(backward(mb, cache, yb), numeric_grads(mb, Xb, yb))
    elapsed = time.perf_counter() - t0
    report("6 gradient check", plain < 1e-4 and bn < 1e-3 and elapsed < 10,
           f"plain={plain:.2e} batchnorm={bn:.2e} ({elapsed:.2f}s)")


def test_c07_parallel_equivalence():
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    X = rng.integers(0, 7, size=(64, 15)).astype(float)
    y = X[:, :3].sum(axis=1)
    worst, synced = 0.0, True
    for w in (2, 4):
        model = init_model((15, 128, 64, 64, 1), 1, use_dropout=False, use_batchnorm=False)
        _, cache = forward(model, X, "train")
        full = backward(model, cache, y)
        with DataParallelTrainer(model, workers=w) as tr:
            got, _, _ = tr.compute_gradients(X, y)
            for name, g in full.items():
                err = np.abs(got[name] - g) / np.maximum(np.abs(g), 1e-12)
                worst = max(worst, float(err[np.abs(g) > 1e-12].max(initial=0.0)))
            tr.step(X, y)
            synced &= tr.replicas_in_sync()
    elapsed = time.perf_counter() - t0
    report("7 parallel equivalence", worst <= 1e-6 and synced and elapsed < 10,
           f"max rel err={worst:.2e}, replicas identical={synced} ({elapsed:.2f}s)")


def test_c08_determinism(tmp_path):
    data = tmp_path / "ds"
    assert main(["dataset", "--nodes", "3..4", "--out", str(data), "--seed", "7"]) == 0
    paths = []
    for run in ("a", "b"):
        model = tmp_path / run / "model.txt"
        assert main(["train", "--data", str(data / "train.csv"), "--val", str(data / "test.csv"),
                     "--preset", "fnn", "--workers", "1", "--seed", "7", "--model", str(model)]) == 0
        paths.append(model)
    same_model = paths[0].read_bytes() == paths[1].read_bytes()
    metrics = [p.with_name(p.name + ".metrics.csv").read_bytes() for p in paths]
    report("8 determinism", same_model and metrics[0] == metrics[1],
           f"model identical={same_model}, metrics identical={metrics[0] == metrics[1]}")


@pytest.mark.slow
def test_c09_soft_replication():
    t0 = time.perf_counter()
    spec = DatasetSpec(node_range=[3, 4, 5, 6], target="m", seed=0)
    tables = {n: analyze(spec.params_for(n)).table for n in spec.node_range}
    X, y, _ = build_arrays(spec, tables)
    p7 = SystemParams(7, 7)
    table7 = analyze(p7).table
    sample = np.sort(np.random.default_rng(0).choice(p7.n_states, 50_000, replace=False))
    X7 = encode_configurations(state_digits(p7, sample), spec.input_neurons, spec.pad_value)
    y7 = table7.M[sample].astype(np.float64)
    model = init_model((15, 128, 64, 64, 1), 0)
    fit(model, X, y, TrainConfig.preset("mirrored", seed=0), ParallelConfig(2))
    mse, mae = evaluate(model, X7, y7)
    elapsed = time.perf_counter() - t0
    report("9 soft replication (held-out N=7, target M)", mae <= 2.5 and elapsed <= 600,
           f"{len(y)} train rows, held-out MSE={mse:.3f} MAE={mae:.3f} ({elapsed:.0f}s)")


def test_c10_overfit():
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    X = rng.integers(0, 5, size=(10, 15)).astype(float)
    y = rng.integers(0, 10, size=10).astype(float)
    model = init_model((15, 128, 64, 64, 1), 0)
    config = TrainConfig(epochs=500, batch_size=10, lr=1e-3, seed=0, dropout=False, batchnorm=False)
    history = fit(model, X, y, config)
    mse, _ = evaluate(model, X, y)
    elapsed = time.perf_counter() - t0
    report("10 overfit sanity", mse < 1e-2 and elapsed < 30,
           f"train MSE={mse:.2e}, last epoch loss={history[-1].loss:.2e} ({elapsed:.2f}s)")


def svg_total(path):
    root = ET.fromstring(path.read_text())
    return sum(int(t.text.split(": ")[1]) for t in root.iter(f"{SVG}title"))


def test_c11_end_to_end(tmp_path):
    a = tmp_path / "a"
    assert main(["analyze", "--nodes", "3", "--k", "3", "--out", str(a)]) == 0
    expected = {"rank_counts": 27, "effect_program": 45, "effect_cvf_in": 162, "effect_cvf_out": 162}
    totals, svg_ok = {}, True
    for name in expected:
        lines = (a / f"{name}.csv").read_text().splitlines()[1:]
        totals[name] = sum(int(line.split(",")[1]) for line in lines)
        kind = "counts" if name == "rank_counts" else "effects"
        out = tmp_path / f"{name}.svg"
        svg_ok &= main(["plot", "--in", str(a / f"{name}.csv"), "--out", str(out), "--kind", kind]) == 0
        svg_ok &= svg_total(out) == expected[name]
    b = tmp_path / "b"
    replay_ok = main(["replay", str(a / "manifest.json"), "--out", str(b)]) == 0
    for f in a.iterdir():
        if f.name != "manifest.json":
            replay_ok &= f.read_bytes() == (b / f.name).read_bytes()
    report("11 end-to-end figures", totals == expected and svg_ok and replay_ok,
           f"totals={totals}, plot bar totals match={svg_ok}, replay identical={replay_ok}")
