"""Command-line entry point.

Subcommands: synth (generate a synthetic model), pack, infer, compare,
and sweep (bin-depth / kv-bucket).  Exit codes: 0 ok, 1 validation,
2 I/O, 3 corruption.  A --config file of key=value lines supplies flag
defaults; explicit flags win.  PACSET_THREADS caps parallelism.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import analysis
from .analysis import WorkloadSpec, as_store, read_observations
from .blockstore import KvStoreConfig, open_file_store, open_kv_store
from .codec import encode
from .errors import (BlockRangeError, CorruptionError, FormatError,
                     IntegrityError, PacsetError)
from .inference import infer_batch, prediction_to_json
from .layout import LAYOUTS, LayoutConfig, pack
from .model import annotate_cardinalities, forest_to_document, parse_model

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2
EXIT_CORRUPTION = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def _add_layout_flags(p: argparse.ArgumentParser):
    p.add_argument("--layout", choices=LAYOUTS, default="bin_block_wdfs")
    p.add_argument("--block-bytes", type=int, default=65536)
    p.add_argument("--bin-depth", type=int, default=2)
    p.add_argument("--trees-per-bin", default="auto")


def _add_workload_flags(p: argparse.ArgumentParser):
    p.add_argument("--observations", help="CSV or JSON observation file")
    p.add_argument("--repetitions", type=int, default=100,
                   help="synthetic observations when no file is given")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--warm", action="store_true",
                   help="keep the block cache between inferences")


def _layout_config(args) -> LayoutConfig:
    tpb = args.trees_per_bin
    if tpb != "auto":
        tpb = int(tpb)
    cfg = LayoutConfig(layout=args.layout, block_bytes=args.block_bytes,
                       bin_depth=args.bin_depth, trees_per_bin=tpb)
    cfg.validate()
    return cfg


def _workload(args) -> WorkloadSpec:
    return WorkloadSpec(source=args.observations, repetitions=args.repetitions,
                        seed=args.seed, cold_start=not args.warm)


def _load_forest(path: str):
    with open(path, "rb") as fh:
        return annotate_cardinalities(parse_model(fh.read()))


def _write_json(path: str | None, payload) -> None:
    text = json.dumps(payload, indent=2)
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def cmd_synth(args) -> int:
    forest = analysis.generate_synthetic_forest(
        seed=args.seed, num_trees=args.trees, depth=args.depth,
        skew=args.skew, task=args.task, kind=args.kind,
        num_features=args.features, num_classes=args.classes,
        total_weight=args.total_weight)
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(forest_to_document(forest), fh)
    print(f"wrote {args.out}: {args.trees} trees, depth {args.depth}, "
          f"{args.skew} skew")
    return EXIT_OK


def cmd_pack(args) -> int:
    forest = _load_forest(args.model)
    cfg = _layout_config(args)
    packed = pack(forest, cfg)
    data = encode(packed)
    with open(args.out, "wb") as fh:
        fh.write(data)
    h = packed.header
    records = sum(1 for r in packed.records if r is not None)
    slots = len(packed.records)
    print(f"wrote {args.out}: layout={h.layout} bins={h.num_bins} "
          f"blocks={slots // h.nodes_per_block} records={records} "
          f"padding_waste={1 - records / slots:.1%}")
    return EXIT_OK


def _open_store(args):
    if getattr(args, "store", "file") == "kv":
        with open(args.model, "rb") as fh:
            data = fh.read()
        return open_kv_store(data, KvStoreConfig(
            nodes_per_value=args.nodes_per_value,
            per_inference_cache=not getattr(args, "no_kv_cache", False)))
    return open_file_store(args.model, cold_start=not args.warm,
                           use_mmap=getattr(args, "mmap", False))


def cmd_infer(args) -> int:
    store = _open_store(args)
    obs = read_observations(args.observations)
    for i, row in enumerate(obs):
        if len(row) != store.header.num_features:
            print(f"row {i}: expected {store.header.num_features} features, "
                  f"got {len(row)}", file=sys.stderr)
            return EXIT_VALIDATION
    predictions, traces = infer_batch(store, obs, mode=args.mode)
    out = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    try:
        for i, (pred, trace) in enumerate(zip(predictions, traces)):
            out.write(json.dumps(prediction_to_json(i, pred, trace)) + "\n")
    finally:
        if args.out:
            out.close()
    if args.trace:
        with open(args.trace, "w", encoding="utf-8") as fh:
            for i, trace in enumerate(traces):
                fh.write(json.dumps({"obs": i, "blocks": list(trace.fetched),
                                     "unique": trace.unique_count}) + "\n")
    return EXIT_OK


def cmd_compare(args) -> int:
    forest = _load_forest(args.model)
    cfg = _layout_config(args)
    workload = _workload(args)
    reports, predictions = analysis.compare_layouts(forest, cfg, workload)
    baseline = predictions[LAYOUTS[0]]
    identical = all(predictions[name] == baseline for name in LAYOUTS)
    payload = {"predictions_identical": identical,
               "layouts": {name: reports[name].to_dict() for name in LAYOUTS}}
    _write_json(args.out, payload)
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write("layout,min,mean,median,p95,max,cumulative_unique\n")
            for name in LAYOUTS:
                r = reports[name]
                fh.write(f"{name},{r.min_blocks},{r.mean_blocks:.4f},"
                         f"{r.median_blocks:.1f},{r.p95_blocks:.2f},"
                         f"{r.max_blocks},{r.cumulative_unique}\n")
    return EXIT_OK


def cmd_sweep(args) -> int:
    workload = _workload(args)
    forest = _load_forest(args.model)
    if args.sweep_kind == "bin-depth":
        depths = [int(d) for d in args.depths.split(",")]
        payload = analysis.sweep_bin_depth(forest, depths, workload,
                                           block_bytes=args.block_bytes,
                                           layout=args.layout)
    else:
        cfg = _layout_config(args)
        packed = pack(forest, cfg)
        sizes = [s if s == "all" else int(s) for s in args.sizes.split(",")]
        payload = analysis.sweep_kv_bucket(encode(packed), sizes, workload)
    _write_json(args.out, payload)
    if args.csv:
        entries = payload["entries"]
        with open(args.csv, "w", encoding="utf-8") as fh:
            cols = list(entries[0])
            fh.write(",".join(cols) + "\n")
            for entry in entries:
                fh.write(",".join(str(entry[c]) for c in cols) + "\n")
    return EXIT_OK


def _set_defaults_deep(parser: argparse.ArgumentParser, defaults: dict):
    parser.set_defaults(**defaults)
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            for sub in action.choices.values():
                _set_defaults_deep(sub, defaults)


def _apply_config_file(parser: argparse.ArgumentParser, argv: list[str]):
    """key=value lines become parser defaults; explicit flags still win."""
    if "--config" not in argv:
        return argv
    idx = argv.index("--config")
    path = argv[idx + 1]
    rest = argv[:idx] + argv[idx + 2:]
    defaults = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            defaults[key.strip().replace("-", "_")] = value.strip()
    for key in ("block_bytes", "bin_depth", "repetitions", "seed",
                "nodes_per_value"):
        if key in defaults:
            defaults[key] = int(defaults[key])
    _set_defaults_deep(parser, defaults)
    return rest


def build_parser() -> _Parser:
    parser = _Parser(prog="pacset", description=__doc__)
    parser.add_argument("--config", help="key=value file of flag defaults")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[], help="generate a synthetic model")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trees", type=int, default=32)
    p.add_argument("--depth", type=int, default=6)
    p.add_argument("--skew", choices=("uniform", "geometric"),
                   default="geometric")
    p.add_argument("--task", choices=("classify", "regress"),
                   default="classify")
    p.add_argument("--kind", choices=("rf", "gbt"), default="rf")
    p.add_argument("--features", type=int, default=16)
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--total-weight", type=int, default=100000)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("pack", help="pack a model JSON into a .pac file")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    _add_layout_flags(p)
    p.set_defaults(func=cmd_pack)

    p = sub.add_parser("infer", help="run inference against a .pac file")
    p.add_argument("--model", required=True, help=".pac file")
    p.add_argument("--observations", required=True)
    p.add_argument("--out", help="predictions JSONL (default stdout)")
    p.add_argument("--trace", help="write per-inference trace JSONL")
    p.add_argument("--mode", choices=("sequential", "per_bin_parallel"),
                   default="sequential")
    p.add_argument("--store", choices=("file", "kv"), default="file")
    p.add_argument("--nodes-per-value", type=int, default=8)
    p.add_argument("--no-kv-cache", action="store_true")
    p.add_argument("--warm", action="store_true")
    p.add_argument("--mmap", action="store_true")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("compare", help="I/O comparison across all layouts")
    p.add_argument("--model", required=True, help="model JSON")
    p.add_argument("--out", help="report JSON (default stdout)")
    p.add_argument("--csv", help="also write a CSV table")
    _add_layout_flags(p)
    _add_workload_flags(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("sweep", help="bin-depth or kv-bucket sweeps")
    sweep_sub = p.add_subparsers(dest="sweep_kind", required=True)
    d = sweep_sub.add_parser("bin-depth")
    d.add_argument("--model", required=True)
    d.add_argument("--depths", default="1,2,3,4")
    d.add_argument("--block-bytes", type=int, default=65536)
    d.add_argument("--layout", choices=LAYOUTS, default="bin_block_wdfs")
    d.add_argument("--out")
    d.add_argument("--csv")
    _add_workload_flags(d)
    d.set_defaults(func=cmd_sweep)
    k = sweep_sub.add_parser("kv-bucket")
    k.add_argument("--model", required=True)
    k.add_argument("--sizes", default="4,8,16,64")
    k.add_argument("--out")
    k.add_argument("--csv")
    _add_layout_flags(k)
    _add_workload_flags(k)
    k.set_defaults(func=cmd_sweep)

    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = _apply_config_file(parser, argv)
        args = parser.parse_args(argv)
        return args.func(args)
    except (CorruptionError, BlockRangeError, IntegrityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CORRUPTION
    except FormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except PacsetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
