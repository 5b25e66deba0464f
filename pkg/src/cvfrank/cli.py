"""Command-line interface: ``cvfrank {analyze,dataset,train,predict,plot,replay}``.

Exit codes: 0 success, 2 usage/configuration, 3 capacity, 4 cycle outside the
invariant, 5 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import math
import sys
from pathlib import Path

import numpy as np

from cvfrank import __version__
from cvfrank.dataset import (
    DatasetSpec,
    build_arrays,
    encode_configurations,
    read_csv_arrays,
    split_indices,
    write_csv,
)
from cvfrank.errors import CvfRankError, ParseError
from cvfrank.estimator import rounded_rank
from cvfrank.mlp import init_model, load_model, predict as mlp_predict, save_model
from cvfrank.parallel import PRESETS, ParallelConfig, TrainConfig, evaluate, fit
from cvfrank.ranks import EffectHistogram, analyze, rank_count_histogram
from cvfrank.ring import DEFAULT_STATE_BUDGET, SystemParams, check_capacity, state_digits
from cvfrank.svg import bar_chart
from cvfrank.validation import parse_node_range

MANIFEST = "manifest.json"
EXACT_LIMIT = 2_000_000
PLOT_SCHEMAS = {
    "counts": ["rank", "count"],
    "effects": ["effect", "count"],
    "comparison": ["rank", "exact", "predicted"],
}
PLOT_TITLES = {
    "counts": "Rank vs. state count",
    "effects": "Rank effect distribution",
    "comparison": "Exact vs. predicted rank counts",
}


# -- helpers ------------------------------------------------------------------


def _num(x) -> str:
    x = float(x)
    return str(int(x)) if x.is_integer() else repr(x)


def _write_table(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _write_hist(path: Path, key: str, hist: EffectHistogram) -> None:
    _write_table(path, [key, "count"], hist.items())


def _write_manifest(path: Path, args: argparse.Namespace, argv, outputs, inputs=()) -> None:
    flags = {k: v for k, v in vars(args).items() if k != "func"}
    manifest = {
        "tool": "cvfrank",
        "version": __version__,
        "command": args.command,
        "argv": list(argv),
        "flags": flags,
        "seeds": {k: v for k, v in flags.items() if "seed" in k},
        "inputs": [str(p) for p in inputs],
        "outputs": sorted(str(p) for p in outputs),
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }
    path.write_text(json.dumps(manifest, indent=2, default=str) + "\n", encoding="utf-8")


def read_plot_csv(path, kind: str) -> tuple[list[int], list[tuple[str, list[int]]]]:
    """Parse a histogram CSV for ``kind`` into keys and aligned series."""
    expected = PLOT_SCHEMAS[kind]
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != expected:
        raise ParseError(f"{path}: header must be {','.join(expected)} for kind {kind!r}", line=1)
    data: dict[int, list[int]] = {}
    for lineno, cells in enumerate(rows[1:], start=2):
        if not cells:
            continue
        if len(cells) != len(expected):
            raise ParseError(f"{path}: expected {len(expected)} columns", line=lineno)
        try:
            data[int(cells[0])] = [int(c) for c in cells[1:]]
        except ValueError:
            raise ParseError(f"{path}: non-integer cell", line=lineno) from None
    keys = list(range(min(data), max(data) + 1)) if data else []
    series = [(name, [data.get(k, [0] * len(expected))[j] for k in keys])
              for j, name in enumerate(expected[1:])]
    return keys, series


def render_plot(csv_path, svg_path, kind: str, title: str | None = None) -> None:
    keys, series = read_plot_csv(csv_path, kind)
    xlabel = "rank effect" if kind == "effects" else "rank"
    ylabel = "count" if kind == "comparison" else PLOT_SCHEMAS[kind][1]
    svg = bar_chart(keys, series, title or PLOT_TITLES[kind], xlabel, ylabel)
    Path(svg_path).write_text(svg, encoding="utf-8")


def _fraction(L, C) -> str:
    L, C = int(L), int(C)
    g = math.gcd(L, C)
    L, C = L // g, C // g
    return str(L) if C == 1 else f"{L}/{C}"


# -- commands -----------------------------------------------------------------


def cmd_analyze(args, argv) -> int:
    params = SystemParams(args.nodes, args.k if args.k is not None else args.nodes)
    check_capacity(params, args.budget)
    result = analyze(params, args.budget, allow_small_k=args.allow_small_k)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    table = result.table
    metric = args.metric
    digits = state_digits(params)
    Ar, M = table.Ar, table.M
    state_rows = (
        (i, " ".join(map(str, d)), int(L), int(C), _fraction(L, C), int(a), int(m))
        for i, (d, L, C, a, m) in enumerate(zip(digits.tolist(), table.L, table.C, Ar, M))
    )
    _write_table(out / "states.csv", ["index", "configuration", "L", "C", "A", "Ar", "M"], state_rows)
    _write_hist(out / "rank_counts.csv", "rank", rank_count_histogram(table, metric))
    program = result.program_effects()
    cvf_out, cvf_in = result.cvf_effects("out"), result.cvf_effects("in")
    _write_hist(out / "effect_program.csv", "effect", program.histogram(metric))
    _write_hist(out / "effect_cvf_in.csv", "effect", cvf_in.histogram(metric))
    _write_hist(out / "effect_cvf_out.csv", "effect", cvf_out.histogram(metric))
    out_n, out_sum = cvf_out.per_state(metric)
    in_n, in_sum = cvf_in.per_state(metric)
    _write_table(out / "cvf_by_state.csv",
                 ["index", "out_count", "out_sum_effect", "in_count", "in_sum_effect"],
                 zip(range(params.n_states), out_n.tolist(), out_sum.tolist(),
                     in_n.tolist(), in_sum.tolist()))
    label = "Ar" if metric == "ar" else "M"
    n_k = f"N={params.n_nodes}, K={params.k_domain}"
    render_plot(out / "rank_counts.csv", out / "rank_counts.svg", "counts",
                f"Rank ({label}) vs. state count, {n_k}")
    for name, what in (("program", "program transitions"), ("cvf_in", "CVFs in"), ("cvf_out", "CVFs out")):
        render_plot(out / f"effect_{name}.csv", out / f"effect_{name}.svg", "effects",
                    f"Rank effect ({label}) of {what}, {n_k}")
    names = ["states.csv", "rank_counts.csv", "rank_counts.svg", "cvf_by_state.csv"]
    names += [f"effect_{n}.{ext}" for n in ("program", "cvf_in", "cvf_out") for ext in ("csv", "svg")]
    _write_manifest(out / MANIFEST, args, argv, [out / n for n in names])
    print(f"{params.n_states} states, {result.n_invariant} invariant, "
          f"{result.graph.n_edges} program transitions -> {out}")
    return 0


def cmd_dataset(args, argv) -> int:
    nodes = parse_node_range(args.nodes)
    holdout = parse_node_range(args.holdout) if args.holdout else ()
    spec = DatasetSpec(node_range=sorted(set(nodes) | set(holdout)), k_rule=args.k,
                       input_neurons=args.input_neurons, target=args.target,
                       pad_value=args.pad_value, seed=args.seed, split_ratio=args.split,
                       holdout=holdout)
    for n in spec.node_range:
        check_capacity(spec.params_for(n), args.budget)
    tables = {n: analyze(spec.params_for(n), args.budget, allow_small_k=args.allow_small_k).table
              for n in spec.node_range}
    X, y, n_of_row = build_arrays(spec, tables)
    train, test = split_indices(n_of_row, spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(None, out / "dataset.csv", X, y)
    write_csv(None, out / "train.csv", X[train], y[train])
    write_csv(None, out / "test.csv", X[test], y[test])
    _write_manifest(out / MANIFEST, args, argv,
                    [out / "dataset.csv", out / "train.csv", out / "test.csv"])
    print(f"{len(y)} rows ({len(train)} train, {len(test)} test) -> {out}")
    return 0


def _dataset_meta(data_path: Path) -> dict:
    manifest = data_path.parent / MANIFEST
    if manifest.exists():
        try:
            flags = json.loads(manifest.read_text(encoding="utf-8")).get("flags", {})
        except json.JSONDecodeError:
            return {}
        return {k: flags[k] for k in ("target", "pad_value") if k in flags}
    return {}


def train_config(args) -> TrainConfig:
    """Expand ``--preset`` (default fnn) and apply explicit overrides."""
    preset = PRESETS[args.preset or "fnn"]
    return TrainConfig(
        epochs=args.epochs if args.epochs is not None else preset["epochs"],
        batch_size=args.batch if args.batch is not None else preset["batch_size"],
        lr=args.lr if args.lr is not None else preset["lr"],
        seed=args.seed, dropout=not args.no_dropout, batchnorm=not args.no_batchnorm,
    )


def cmd_train(args, argv) -> int:
    config = train_config(args)
    data = Path(args.data)
    X, y = read_csv_arrays(data)
    X_val = y_val = None
    if args.val:
        X_val, y_val = read_csv_arrays(args.val)
    meta = _dataset_meta(data)
    target = args.target or meta.get("target", "ar")
    widths = (X.shape[1], 128, 64, 64, 1)
    model = init_model(widths, args.seed, use_dropout=config.dropout, use_batchnorm=config.batchnorm)
    model.meta = {"target": target, "pad_value": _num(meta.get("pad_value", 0.0))}
    history = fit(model, X, y, config, ParallelConfig(args.workers), X_val, y_val,
                  callback=(lambda m: print(f"epoch {m.epoch}: loss {m.loss:.6g}", file=sys.stderr))
                  if args.verbose else None)
    model_path = Path(args.model)
    model_path.parent.mkdir(parents=True, exist_ok=True)
    save_model(model, model_path)
    metrics = model_path.with_name(model_path.name + ".metrics.csv")
    timings = model_path.with_name(model_path.name + ".timings.csv")
    _write_table(metrics, ["epoch", "loss", "val_mae"],
                 ((m.epoch, repr(m.loss), "" if m.val_mae is None else repr(m.val_mae)) for m in history))
    _write_table(timings, ["epoch", "seconds"], ((m.epoch, f"{m.seconds:.6f}") for m in history))
    inputs = [data] + ([Path(args.val)] if args.val else [])
    _write_manifest(model_path.with_name(model_path.name + ".manifest.json"), args, argv,
                    [model_path, metrics, timings], inputs)
    if X_val is not None:
        mse, mae = evaluate(model, X_val, y_val)
        print(f"validation mse={mse:.6g} mae={mae:.6g}")
    else:
        mse, mae = evaluate(model, X, y)
        print(f"train mse={mse:.6g} mae={mae:.6g}")
    return 0


def cmd_predict(args, argv) -> int:
    model = load_model(args.model)
    params = SystemParams(args.nodes, args.k if args.k is not None else args.nodes)
    total = check_capacity(params, args.budget)
    pad = float(model.meta.get("pad_value", 0.0))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    preds = np.empty(total)
    chunk = 1 << 16
    for start in range(0, total, chunk):
        idx = np.arange(start, min(start + chunk, total), dtype=np.int64)
        X = encode_configurations(state_digits(params, idx), model.widths[0], pad)
        preds[start:start + len(idx)] = mlp_predict(model, X)
    rounded = rounded_rank(preds)
    _write_table(out / "predictions.csv", ["state", "predicted", "rounded"],
                 zip(range(total), map(repr, preds.tolist()), rounded.tolist()))
    predicted = EffectHistogram()
    predicted.add_counts(rounded)
    _write_hist(out / "predicted_counts.csv", "rank", predicted)
    target = model.meta.get("target", "ar")
    label = "Ar" if target == "ar" else "M"
    n_k = f"N={params.n_nodes}, K={params.k_domain}"
    render_plot(out / "predicted_counts.csv", out / "predicted_counts.svg", "counts",
                f"Predicted rank ({label}) vs. state count, {n_k}")
    outputs = [out / "predictions.csv", out / "predicted_counts.csv", out / "predicted_counts.svg"]
    if total <= args.exact_limit and params.k_domain >= params.n_nodes:
        table = analyze(params, args.budget).table
        exact = rank_count_histogram(table, target)
        _write_hist(out / "exact_counts.csv", "rank", exact)
        keys = sorted(set(exact.bins) | set(predicted.bins))
        _write_table(out / "comparison.csv", ["rank", "exact", "predicted"],
                     ((k, exact.bins.get(k, 0), predicted.bins.get(k, 0)) for k in keys))
        render_plot(out / "comparison.csv", out / "comparison.svg", "comparison",
                    f"Exact vs. predicted rank ({label}) counts, {n_k}")
        outputs += [out / "exact_counts.csv", out / "comparison.csv", out / "comparison.svg"]
        truth = table.metric(target).astype(np.float64)
        mse = float(np.mean((preds - truth) ** 2))
        mae = float(np.mean(np.abs(preds - truth)))
        print(f"exact comparison: mse={mse:.6g} mae={mae:.6g}")
    _write_manifest(out / MANIFEST, args, argv, outputs, [args.model])
    print(f"{total} predictions -> {out}")
    return 0


def cmd_plot(args, argv) -> int:
    render_plot(args.input, args.out, args.kind, args.title)
    return 0


def cmd_replay(args, argv) -> int:
    """Re-run the command recorded in a manifest, optionally into a new location."""
    manifest = json.loads(Path(args.manifest).read_text(encoding="utf-8"))
    recorded = list(manifest["argv"])
    if args.out:
        flag = "--model" if manifest["command"] == "train" else "--out"
        if flag in recorded:
            recorded[recorded.index(flag) + 1] = args.out
        else:
            recorded += [flag, args.out]
    return main(recorded)


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cvfrank", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"cvfrank {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="exact rank analysis of one ring size")
    a.add_argument("--nodes", type=int, required=True)
    a.add_argument("--k", type=int, default=None, help="value domain size (default: N)")
    a.add_argument("--out", required=True)
    a.add_argument("--metric", choices=("ar", "m"), default="ar")
    a.add_argument("--allow-small-k", action="store_true")
    a.add_argument("--budget", type=int, default=DEFAULT_STATE_BUDGET)
    a.set_defaults(func=cmd_analyze)

    d = sub.add_parser("dataset", help="build padded training/test CSVs")
    d.add_argument("--nodes", default="3..7", help="ring sizes, e.g. 3..7 or 3,4,5")
    d.add_argument("--k", type=int, default=None, help="fixed K for every size (default: K=N)")
    d.add_argument("--input-neurons", type=int, default=15)
    d.add_argument("--target", choices=("ar", "m"), default="ar")
    d.add_argument("--pad-value", type=float, default=0.0)
    d.add_argument("--split", type=float, default=0.8, help="train fraction for a random split")
    d.add_argument("--holdout", default=None, help="ring sizes sent wholly to the test set")
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--out", required=True, help="output directory")
    d.add_argument("--allow-small-k", action="store_true")
    d.add_argument("--budget", type=int, default=DEFAULT_STATE_BUDGET)
    d.set_defaults(func=cmd_dataset)

    t = sub.add_parser("train", help="train the surrogate network")
    t.add_argument("--data", required=True, help="training CSV")
    t.add_argument("--val", default=None, help="optional validation CSV")
    t.add_argument("--preset", choices=sorted(PRESETS), default=None)
    t.add_argument("--epochs", type=int, default=None)
    t.add_argument("--batch", type=int, default=None)
    t.add_argument("--lr", type=float, default=None)
    t.add_argument("--workers", type=int, default=1)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--target", choices=("ar", "m"), default=None)
    t.add_argument("--no-dropout", action="store_true")
    t.add_argument("--no-batchnorm", action="store_true")
    t.add_argument("--model", required=True, help="output model file")
    t.add_argument("--verbose", action="store_true")
    t.set_defaults(func=cmd_train)

    r = sub.add_parser("predict", help="predict ranks for every state of a ring size")
    r.add_argument("--model", required=True)
    r.add_argument("--nodes", type=int, required=True)
    r.add_argument("--k", type=int, default=None)
    r.add_argument("--out", required=True)
    r.add_argument("--budget", type=int, default=DEFAULT_STATE_BUDGET)
    r.add_argument("--exact-limit", type=int, default=EXACT_LIMIT,
                   help="also run exact analysis when K^N is at most this")
    r.set_defaults(func=cmd_predict)

    g = sub.add_parser("plot", help="render a histogram CSV as SVG")
    g.add_argument("--in", dest="input", required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--kind", choices=sorted(PLOT_SCHEMAS), required=True)
    g.add_argument("--title", default=None)
    g.set_defaults(func=cmd_plot)

    y = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    y.add_argument("manifest")
    y.add_argument("--out", default=None, help="redirect the output location")
    y.set_defaults(func=cmd_replay)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args, argv)
    except CvfRankError as exc:
        print(f"cvfrank {args.command}: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"cvfrank {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
