"""Command-line sweep driver."""

from __future__ import annotations

import argparse
import sys

from .data import SyntheticSpec
from .harness import SweepSpec, run_sweep
from .solver import SolverConfig


def _parse_kv(text: str, flag: str) -> dict[str, str]:
    out = {}
    for item in text.split(","):
        key, sep, val = item.partition("=")
        if not sep:
            raise SystemExit(f"{flag}: expected key=value pairs, got {item!r}")
        out[key.strip()] = val.strip()
    return out


def _synthetic_from(text: str) -> SyntheticSpec:
    kv = _parse_kv(text, "--synthetic")
    missing = {"n", "d", "s"} - set(kv)
    if missing:
        raise SystemExit(f"--synthetic: missing required keys {sorted(missing)}")
    unknown = set(kv) - {"n", "d", "s", "zero_prob", "seed"}
    if unknown:
        raise SystemExit(f"--synthetic: unknown keys {sorted(unknown)}")
    return SyntheticSpec(
        n_samples=int(kv["n"]),
        n_features=int(kv["d"]),
        n_true_nonzeros=int(kv["s"]),
        zero_prob=float(kv.get("zero_prob", 0.5)),
        seed=int(kv.get("seed", 0)),
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="proxcsl",
        description=(
            "Sweep distributed sparse logistic regression over a regularization "
            "grid and write metrics/convergence/timing CSVs."
        ),
    )
    src = parser.add_mutually_exclusive_group(required=True)
    src.add_argument("--data", metavar="PATH", help="libsvm-format dataset file")
    src.add_argument(
        "--synthetic",
        metavar="n=..,d=..,s=..[,zero_prob=..][,seed=..]",
        help="generate a known-model synthetic dataset instead of loading one",
    )
    parser.add_argument("--partitions", type=int, default=8, help="number of data partitions")
    parser.add_argument("--init", choices=["naive", "owa"], default="owa")
    parser.add_argument("--mode", choices=["main_node", "all_node"], default="main_node")
    parser.add_argument("--updates", type=int, default=2, help="distributed update rounds")
    parser.add_argument("--lambda-count", type=int, default=80)
    parser.add_argument("--lambda-min-ratio", type=float, default=1e-4)
    parser.add_argument(
        "--elastic-net",
        metavar="l2=RATIO",
        default=None,
        help="elastic net: lambda2 = RATIO * lambda1 at every grid point",
    )
    parser.add_argument("--replicates", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", required=True, metavar="DIR", help="output directory")
    parser.add_argument("--oracle", choices=["on", "off"], default="on",
                        help="compute and cache full-data solves for objective error")
    parser.add_argument("--outer", type=int, default=10, help="max outer steps per update")
    parser.add_argument("--inner", type=int, default=50, help="max CD passes per outer step")
    parser.add_argument("--beta", type=float, default=0.5, help="linesearch shrink factor")
    parser.add_argument("--kmax", type=int, default=20, help="linesearch candidate count - 1")
    parser.add_argument("--alpha-init", type=float, default=1e-4, help="initial damping")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)

    l2_ratio = 0.0
    if args.elastic_net is not None:
        kv = _parse_kv(args.elastic_net, "--elastic-net")
        if set(kv) != {"l2"}:
            raise SystemExit("--elastic-net: expected exactly l2=RATIO")
        l2_ratio = float(kv["l2"])

    solver = SolverConfig(
        max_outer=args.outer,
        max_inner=args.inner,
        linesearch_beta=args.beta,
        linesearch_kmax=args.kmax,
        alpha_init=args.alpha_init,
    )
    spec = SweepSpec(
        data_path=args.data,
        synthetic=_synthetic_from(args.synthetic) if args.synthetic else None,
        partitions=args.partitions,
        init=args.init,
        mode=args.mode,
        k_updates=args.updates,
        lambda_count=args.lambda_count,
        lambda_min_ratio=args.lambda_min_ratio,
        l2_ratio=l2_ratio,
        replicates=args.replicates,
        seed=args.seed,
        oracle=args.oracle == "on",
        solver=solver,
    )
    paths = run_sweep(spec, args.out)
    for name, path in paths.items():
        print(f"{name}: {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
