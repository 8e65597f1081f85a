"""Command line pipeline: quantize, evaluate, sweep, decode, inspect, csd-analyze.

Machine-readable output goes to containers and CSV files (written
atomically); summaries are plain text on stdout. Exit status is 0 only when
the requested artifact was fully written.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import codec, csd, datasets, inference, metrics, tensors
from .quantize import (
    DEFAULT_DELTA_GRID,
    DEFAULT_GAMMA_GRID,
    QuantConfig,
    level_set,
    quantize_slices,
    search_thresholds,
)
from .tensors import GroupingMode


def _write_text_atomic(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(text.encode("utf-8"))
    tmp.replace(path)


def _float_list(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _int_list(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _add_quant_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--phi", type=int, choices=(1, 2, 4), default=4, help="largest level magnitude")
    p.add_argument("--grouping", choices=("channel", "filter", "flat"), default="channel")
    p.add_argument("--n", type=int, help="vector length for flat grouping")
    p.add_argument("--delta", type=float, default=1.5, help="upper band threshold multiplier")
    p.add_argument("--gamma", type=float, default=0.1, help="zero band threshold")
    p.add_argument("--gamma-absolute", action="store_true", help="treat gamma as a raw magnitude")
    p.add_argument("--mode", choices=("sigma", "nearest"), default="sigma")
    p.add_argument("--be", type=int, choices=(2, 3), help="code width; default matches phi")
    p.add_argument("--force", action="store_true", help="allow a code width wider than phi needs")
    p.add_argument("--search", action="store_true", help="grid search delta and gamma first")
    p.add_argument("--delta-grid", type=_float_list, default=list(DEFAULT_DELTA_GRID))
    p.add_argument("--gamma-grid", type=_float_list, default=list(DEFAULT_GAMMA_GRID))
    p.add_argument("--include-dense", action="store_true", help="quantize dense layers too")


def _grouping_from_args(args, parser) -> GroupingMode:
    if args.grouping == "flat":
        if args.n is None:
            parser.error("--grouping flat requires --n")
        return GroupingMode.flat(args.n)
    if args.n is not None:
        parser.error(f"--n only applies to flat grouping, not {args.grouping!r}")
    return GroupingMode(args.grouping)


def _bit_width_from_args(args, parser) -> int:
    theta = level_set(args.phi).theta_bits
    if args.be is None:
        return theta
    if args.be < theta:
        parser.error(f"--be {args.be} cannot hold phi={args.phi} codes (needs {theta} bits)")
    if args.be != theta and not args.force:
        parser.error(f"--be {args.be} does not match phi={args.phi} (needs {theta}); use --force")
    return args.be


def _config_from_args(args, parser, model) -> tuple[QuantConfig, tuple | None]:
    grouping = _grouping_from_args(args, parser)
    delta, gamma = args.delta, args.gamma
    chosen = None
    if args.search:
        vectors = []
        for t in model:
            if t.kind == "conv" or args.include_dense:
                g = grouping
                if t.kind == "dense" and g.kind != "flat":
                    g = GroupingMode.flat(t.dims.channels)
                vectors.extend(tensors.extract_vectors(t, g))
        chosen = search_thresholds(
            vectors, args.phi, args.delta_grid, args.gamma_grid, gamma_absolute=args.gamma_absolute
        )
        delta, gamma = chosen[0], chosen[1]
    cfg = QuantConfig(
        phi=args.phi,
        delta=delta,
        gamma=gamma,
        mode=args.mode,
        grouping=grouping,
        gamma_absolute=args.gamma_absolute,
    )
    return cfg, chosen


def cmd_quantize(args, parser) -> int:
    model = tensors.load_model(args.model)
    bit_width = _bit_width_from_args(args, parser)
    cfg, chosen = _config_from_args(args, parser, model)
    if chosen is not None:
        print(f"search: delta*={chosen[0]:g} gamma*={chosen[1]:g} total_error={chosen[2]:.6g}")
    encoded = codec.encode_model(model, cfg, bit_width, include_dense=args.include_dense)
    n_bytes = codec.write_container(encoded, args.out)

    total_error = 0.0
    for t, e in zip(model, encoded.layers):
        if e.passthrough:
            print(f"{t.name}: passthrough ({t.dims.count} values)")
            continue
        slices = tensors.extract_vectors(t, e.grouping)
        qs = quantize_slices(slices, cfg)
        alphas = np.array([q.alpha for q in qs])
        err = float(sum(q.l2_error for q in qs))
        total_error += err
        levels = codec.decode_codes(e.packed_codes, t.dims.count, e.bit_width)
        zero_frac = float(np.count_nonzero(levels == 0) / t.dims.count)
        print(
            f"{t.name}: {len(qs)} vectors of {e.n}, "
            f"alpha min/mean/max {alphas.min():.6g}/{alphas.mean():.6g}/{alphas.max():.6g}, "
            f"error {err:.6g}, zero codes {zero_frac:.2%}"
        )
    print(f"total error {total_error:.6g}")
    print(f"wrote {args.out} ({n_bytes} bytes)")
    return 0


def _load_dataset(args, parser) -> datasets.Dataset:
    if args.cifar:
        if args.images or args.labels:
            parser.error("give either --cifar batches or --images/--labels, not both")
        return datasets.load_cifar10(args.cifar)
    if not args.images or not args.labels:
        parser.error("dataset required: --images and --labels, or --cifar")
    return datasets.load_mnist(args.images, args.labels)


def cmd_evaluate(args, parser) -> int:
    model = tensors.load_model(args.model)
    net = inference.load_network(args.net, model)
    ds = _load_dataset(args, parser)
    bit_width = _bit_width_from_args(args, parser)
    cfg, chosen = _config_from_args(args, parser, model)
    if chosen is not None:
        print(f"search: delta*={chosen[0]:g} gamma*={chosen[1]:g} total_error={chosen[2]:.6g}")
    original, quantized = inference.evaluate_quantized(
        net, cfg, ds, limit=args.limit, bit_width=bit_width, include_dense=args.include_dense
    )
    print(f"original accuracy  {original:.4%}")
    print(f"quantized accuracy {quantized:.4%}")
    print(f"delta              {(original - quantized) * 100:+.4f} points")
    return 0


def cmd_sweep(args, parser) -> int:
    model = tensors.load_model(args.model)
    eval_fn = None
    if args.net:
        net = inference.load_network(args.net, model)
        ds = _load_dataset(args, parser)

        def eval_fn(cfg: QuantConfig) -> float:
            quantized = inference.quantize_network(net, cfg, include_dense=args.include_dense)
            return inference.evaluate(quantized, ds, limit=args.limit)

    rows = metrics.sweep(
        model,
        args.n,
        args.be,
        eval_fn,
        fpb=args.fpb,
        scalar_policy=args.scalar_policy,
        include_dense=args.include_dense,
    )
    _write_text_atomic(args.out, metrics.sweep_csv_text(rows))
    print(f"wrote {args.out} ({len(rows)} design points)")
    return 0


def cmd_decode(args, parser) -> int:
    encoded = codec.read_container(getattr(args, "in"))
    decoded = codec.decode_model(encoded)
    tensors.save_model(decoded, args.out)
    print(f"wrote {args.out} ({len(decoded)} layers)")
    return 0


def cmd_inspect(args, parser) -> int:
    encoded = codec.read_container(getattr(args, "in"))
    print(f"container version {encoded.version}")
    print(f"{len(encoded.layers)} layers")
    for e in encoded.layers:
        dims = "x".join(str(d) for d in e.dims.as_tuple())
        if e.passthrough:
            print(f"  {e.name}: passthrough dims {dims} ({e.dims.count} f32 values)")
        else:
            print(
                f"  {e.name}: dims {dims} grouping {e.grouping.kind} n {e.n} "
                f"phi {e.phi} bits {e.bit_width} vectors {e.vector_count} "
                f"codes {len(e.packed_codes)} bytes"
            )
    return 0


def cmd_csd_analyze(args, parser) -> int:
    model = tensors.load_model(args.model)
    values = np.concatenate([t.values.reshape(-1) for t in model]) if model else np.zeros(0)
    hist = csd.nonzero_histogram(values, frac_bits=args.frac_bits, width=args.width)
    lines = ["nonzeros,count"] + [f"{key},{count}" for key, count in hist.items()]
    _write_text_atomic(args.out, "\n".join(lines) + "\n")
    print(f"wrote {args.out} ({len(hist)} histogram rows)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qsq", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("quantize", help="quantize a manifest into a .qsq container")
    p.add_argument("--model", required=True, help="weight manifest (JSON)")
    p.add_argument("--out", required=True, help="container file to write")
    _add_quant_flags(p)
    p.set_defaults(func=cmd_quantize)

    p = sub.add_parser("evaluate", help="compare original vs quantized accuracy")
    p.add_argument("--model", required=True)
    p.add_argument("--net", required=True, help="network description (JSON)")
    p.add_argument("--images", help="IDX image file")
    p.add_argument("--labels", help="IDX label file")
    p.add_argument("--cifar", action="append", help="CIFAR-10 binary batch (repeatable)")
    p.add_argument("--limit", type=int, help="evaluate only the first N samples")
    _add_quant_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="design-space CSV over vector lengths and code widths")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True, help="CSV file to write")
    p.add_argument("--n", type=_int_list, default=[2, 4, 8, 16, 32, 64])
    p.add_argument("--be", type=_int_list, default=[2, 3])
    p.add_argument("--fpb", type=int, default=32)
    p.add_argument("--scalar-policy", choices=("vector", "paper"), default="vector")
    p.add_argument("--include-dense", action="store_true")
    p.add_argument("--net", help="network description; enables the accuracy column")
    p.add_argument("--images")
    p.add_argument("--labels")
    p.add_argument("--cifar", action="append")
    p.add_argument("--limit", type=int)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("decode", help="decode a container back to a weight manifest")
    p.add_argument("--in", required=True, help="container file")
    p.add_argument("--out", required=True, help="manifest path to write")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("inspect", help="print container metadata")
    p.add_argument("--in", required=True, help="container file")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("csd-analyze", help="signed-digit non-zero histogram of model weights")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True, help="CSV file to write")
    p.add_argument("--width", type=int, default=16, help="fixed-point width in bits")
    p.add_argument("--frac-bits", type=int, default=12, help="fractional bits")
    p.set_defaults(func=cmd_csd_analyze)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, parser)
    except (ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
