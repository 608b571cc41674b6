"""Command-line entry point: ``lutgemm bench``, ``lutgemm profile``, ``lutgemm catalogs``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import bench
from .kernels import GemmProblem

EXIT_OK, EXIT_GATE, EXIT_USAGE = 0, 1, 2


def _shape(text: str) -> GemmProblem:
    try:
        m, n, k = (int(v) for v in text.split(","))
        return GemmProblem(m, n, k)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected M,N,K with positive integers: {exc}") from None


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _nonneg(text: str) -> int:
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {v}")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lutgemm", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-shape progress")
    sub = parser.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bench", help="time a kernel against a baseline on a shape catalog")
    b.add_argument("--catalog", required=True, help="CSV file of M,N,K rows or a built-in catalog name")
    b.add_argument("--kernel", choices=bench.KERNELS, default="lut16")
    b.add_argument("--scheme", type=str.lower, choices=["a", "b", "c", "d"], default="d")
    b.add_argument("--bits", type=int, choices=[2, 3, 4], default=2)
    b.add_argument("--baseline", choices=bench.KERNELS, default="ref_i8")
    b.add_argument("--repeats", type=_positive, default=100)
    b.add_argument("--warmup", type=_nonneg, default=10)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--output", help="write the report here instead of stdout")
    b.add_argument("--format", choices=["json", "csv"], default="json")
    b.add_argument("--force-scalar", action="store_true", help="disable the vector kernels")
    b.add_argument("--workers", type=_positive, default=1)
    b.add_argument("--profile", action="store_true", help="add per-stage timings to each record")

    p = sub.add_parser("profile", help="stage breakdown of one quantized layer")
    p.add_argument("--shape", type=_shape, required=True, help="M,N,K")
    p.add_argument("--kernel", choices=bench.LUT_KERNELS, default="lut16")
    p.add_argument("--scheme", type=str.lower, choices=["a", "b", "c", "d"], default="d")
    p.add_argument("--repeats", type=_positive, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--force-scalar", action="store_true")

    sub.add_parser("catalogs", help="list built-in shape catalogs")
    return parser


def _bench(args) -> int:
    catalog = bench.load_catalog(args.catalog)
    report = bench.run_benchmark(
        catalog, kernel=args.kernel, scheme=args.scheme, bits=args.bits, repeats=args.repeats,
        warmup=args.warmup, seed=args.seed, baseline=args.baseline,
        force_scalar=args.force_scalar, workers=args.workers, profile=args.profile,
    )
    text = bench.emit_report(report, args.format, args.output)
    if args.output is None:
        sys.stdout.write(text)
    else:
        s = report.summary
        print(f"{s['shapes']} shapes, geomean speedup {s['geomean_speedup']:.3f}x "
              f"over {s['baseline']} -> {args.output}", file=sys.stderr)
    return EXIT_OK


def _profile(args) -> int:
    st = bench.profile_stages(args.shape, args.kernel, args.scheme, repeats=args.repeats,
                              seed=args.seed, force_scalar=args.force_scalar)
    out = dict(vars(st))
    out["largest_stage"] = st.largest_stage()
    print(json.dumps(out, indent=2))
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "catalogs":
            print("\n".join(bench.builtin_catalogs()))
            return EXIT_OK
        if args.command == "bench":
            return _bench(args)
        return _profile(args)
    except bench.CorrectnessGateError as exc:
        print(f"lutgemm: correctness gate failed: {exc}", file=sys.stderr)
        return EXIT_GATE
    except (ValueError, OSError) as exc:
        print(f"lutgemm: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
