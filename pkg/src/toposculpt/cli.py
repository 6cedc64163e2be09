"""Command-line interface.

Subcommands: phantom, refine, ph, skeletonize, metrics, eval-suite. Every
run writes a JSON manifest recording the configuration, input/output file
digests, and stage timings. Exit codes: 0 success, 1 usage error, 2
input/format error, 3 numerical failure; each failure prints one
machine-parsable line to stderr, prefixed ``toposculpt:usage:``,
``toposculpt:input:``, or ``toposculpt:numeric:``.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from . import __version__, cli_io, evalsuite
from .cubical_ph import betti0_at, compute_ph0
from .errors import RefinementNumericalError, ToposculptError
from .metrics import evaluate_case
from .phantom import PhantomConfig, generate_case
from .refine import CurriculumConfig, OptimizerConfig, run
from .soft_skeleton import POOL_CUBIC, POOL_SEPARABLE, SkeletonParams, soft_skel
from .tib_loss import TibWeights, TopoPrior
from .volume import ROLE_BINARY, ROLE_PROBABILITY, Connectivity, binarize

USAGE_PREFIX = "toposculpt:usage:"
INPUT_PREFIX = "toposculpt:input:"
NUMERIC_PREFIX = "toposculpt:numeric:"

DEFAULT_LEARNING_RATE = OptimizerConfig().learning_rate


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _csv_tuple(text: str, n: int, cast):
    parts = text.split(",")
    if len(parts) != n:
        raise _UsageError(f"expected {n} comma-separated values, got {text!r}")
    try:
        return tuple(cast(p) for p in parts)
    except ValueError as exc:
        raise _UsageError(str(exc))


def parse_seeds(spec: str) -> list[int]:
    """Seed list syntax: comma-separated entries, each ``N`` or ``A..B``."""
    seeds: list[int] = []
    for part in spec.split(","):
        part = part.strip()
        if not part:
            continue
        if ".." in part:
            lo, hi = part.split("..", 1)
            try:
                lo_i, hi_i = int(lo), int(hi)
            except ValueError:
                raise _UsageError(f"bad seed range {part!r}")
            if hi_i < lo_i:
                raise _UsageError(f"bad seed range {part!r}")
            seeds.extend(range(lo_i, hi_i + 1))
        else:
            try:
                seeds.append(int(part))
            except ValueError:
                raise _UsageError(f"bad seed {part!r}")
    if not seeds:
        raise _UsageError("empty seed list")
    return seeds


def _build_parser() -> _Parser:
    p = _Parser(prog="toposculpt", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"toposculpt {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    ph = sub.add_parser("phantom", help="generate a synthetic corrupted tubular phantom")
    ph.add_argument("--seed", type=int, required=True)
    ph.add_argument("--size", default="96,96,96", help="dims as X,Y,Z")
    ph.add_argument("--spacing", default="1,1,1")
    ph.add_argument("--generations", type=int, default=3)
    ph.add_argument("--breaks", type=int, default=0)
    ph.add_argument("--blobs", type=int, default=0)
    ph.add_argument("--root-radius", type=float, default=3.5)
    ph.add_argument("--noise", type=float, default=0.03)
    ph.add_argument("--break-radius", default=None, help="LO,HI; default: local radius + U(1,2)")
    ph.add_argument("--blob-radius", default="2,3")
    ph.add_argument("--out", required=True, help="output directory")

    rf = sub.add_parser("refine", help="topologically refine a probability volume")
    rf.add_argument("--input", required=True)
    rf.add_argument("--out", required=True)
    rf.add_argument("--trajectory", default=None, help="per-iteration CSV log path")
    rf.add_argument("--prior-beta0", type=int, default=1)
    rf.add_argument("--alpha", type=float, default=1e4)
    rf.add_argument("--beta", type=float, default=1e3)
    rf.add_argument("--gamma", type=float, default=0.1)
    rf.add_argument("--t", type=int, default=30)
    rf.add_argument("--T", type=int, default=90)
    rf.add_argument("--k", type=int, default=3)
    rf.add_argument("--lr", type=float, default=DEFAULT_LEARNING_RATE)
    rf.add_argument("--optimizer", choices=["adamw", "plain-gradient"], default="adamw")
    rf.add_argument("--skel-iters", type=int, default=4)
    rf.add_argument("--pooling", choices=[POOL_SEPARABLE, POOL_CUBIC], default=POOL_SEPARABLE)
    rf.add_argument("--conn", type=int, choices=[6, 18, 26], default=26)

    hp = sub.add_parser("ph", help="compute the 0-dim persistence barcode")
    hp.add_argument("--input", required=True)
    hp.add_argument("--out", required=True, help="barcode JSON path")
    hp.add_argument("--betti-at", type=float, default=None, help="also print components above this threshold")
    hp.add_argument("--conn", type=int, choices=[6, 18, 26], default=26)

    sk = sub.add_parser("skeletonize", help="soft-skeletonize a volume")
    sk.add_argument("--input", required=True)
    sk.add_argument("--iters", type=int, required=True)
    sk.add_argument("--pooling", choices=[POOL_SEPARABLE, POOL_CUBIC], default=POOL_SEPARABLE)
    sk.add_argument("--out", required=True)

    mt = sub.add_parser("metrics", help="evaluate a binary prediction against ground truth")
    mt.add_argument("--pred", required=True)
    mt.add_argument("--gt", required=True)
    mt.add_argument("--centerline", default=None)
    mt.add_argument("--nsd-tol", type=float, default=1.0, help="surface-dice tolerance, mm")
    mt.add_argument("--skel-iters", type=int, default=4)
    mt.add_argument("--conn", type=int, choices=[6, 18, 26], default=26)
    mt.add_argument("--out", required=True, help="metrics CSV path")

    ev = sub.add_parser("eval-suite", help="full phantom->refine->metrics pipeline over seeds")
    ev.add_argument("--seeds", required=True, help="e.g. 0..9 or 1,4,7")
    ev.add_argument("--out", required=True, help="output directory")
    ev.add_argument("--threads", type=int, default=None,
                    help=f"parallel cases (default: ${evalsuite.THREADS_ENV_VAR} or 1)")
    ev.add_argument("--lr", type=float, default=DEFAULT_LEARNING_RATE)
    ev.add_argument("--no-ablation", action="store_true")
    return p


def _manifest(subcommand: str, config: dict) -> cli_io.RunManifest:
    return cli_io.RunManifest(tool_version=__version__, subcommand=subcommand, config=config)


def _cmd_phantom(args) -> int:
    dims = _csv_tuple(args.size, 3, int)
    spacing = _csv_tuple(args.spacing, 3, float)
    break_radius = _csv_tuple(args.break_radius, 2, float) if args.break_radius else None
    blob_radius = _csv_tuple(args.blob_radius, 2, float)
    cfg = PhantomConfig(
        dims=dims,
        spacing=spacing,
        seed=args.seed,
        generations=args.generations,
        root_radius=args.root_radius,
        breaks=args.breaks,
        blobs=args.blobs,
        break_radius=break_radius,
        blob_radius=blob_radius,
        noise_amplitude=args.noise,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = _manifest("phantom", _public_fields(cfg))
    t0 = time.perf_counter()
    case = generate_case(cfg)
    manifest.timings_s["generate"] = time.perf_counter() - t0

    cli_io.write_volume(case.gt_mask, out / "gt.rvol")
    cli_io.write_volume(case.init_prob, out / "init_prob.rvol")
    cli_io.export_centerline(case.centerline, out / "centerline.json")
    (out / "corruption.json").write_text(json.dumps(case.corruption_record, indent=1) + "\n")
    for name in ("gt.rvol", "init_prob.rvol", "centerline.json", "corruption.json"):
        manifest.add_output(name, out / name)
    manifest.save(out / "manifest.json")
    return 0


def _public_fields(cfg) -> dict:
    from dataclasses import asdict

    def clean(x):
        if isinstance(x, tuple):
            return list(x)
        return x

    return {k: clean(v) for k, v in asdict(cfg).items()}


def _cmd_refine(args) -> int:
    p0 = cli_io.read_volume(args.input, role=ROLE_PROBABILITY)
    prior = TopoPrior(args.prior_beta0)
    weights = TibWeights(alpha=args.alpha, beta=args.beta, gamma=args.gamma)
    curriculum = CurriculumConfig(
        dense_end=args.t, total_iters=args.T, sample_interval=args.k, late_gamma=args.gamma
    )
    optimizer = OptimizerConfig(learning_rate=args.lr, method=args.optimizer)
    skel = SkeletonParams(iterations=args.skel_iters, pooling=args.pooling)
    conn = Connectivity(args.conn)

    config = {
        "prior_beta0": prior.beta0,
        "alpha": weights.alpha,
        "beta": weights.beta,
        "gamma": weights.gamma,
        "t": curriculum.dense_end,
        "T": curriculum.total_iters,
        "k": curriculum.sample_interval,
        "lr": optimizer.learning_rate,
        "optimizer": optimizer.method,
        "skel_iters": skel.iterations,
        "pooling": skel.pooling,
        "connectivity": int(conn),
    }
    manifest = _manifest("refine", config)
    manifest.add_input("input", args.input)

    t0 = time.perf_counter()
    try:
        refined, trajectory = run(p0, prior, weights, skel, optimizer, curriculum, conn)
    except RefinementNumericalError as exc:
        if args.trajectory and exc.trajectory:
            cli_io.export_trajectory(exc.trajectory, args.trajectory)
        raise
    manifest.timings_s["refine"] = time.perf_counter() - t0

    cli_io.write_volume(refined, args.out)
    manifest.add_output("refined", args.out)
    if args.trajectory:
        cli_io.export_trajectory(trajectory, args.trajectory)
        manifest.add_output("trajectory", args.trajectory)
    manifest.save(_manifest_path(args.out))
    return 0


def _manifest_path(out_path) -> Path:
    out = Path(out_path)
    return out.with_name(out.name + ".manifest.json")


def _cmd_ph(args) -> int:
    vol = cli_io.read_volume(args.input, role=ROLE_PROBABILITY)
    conn = Connectivity(args.conn)
    manifest = _manifest("ph", {"connectivity": int(conn), "betti_at": args.betti_at})
    manifest.add_input("input", args.input)
    t0 = time.perf_counter()
    barcode = compute_ph0(vol, conn)
    manifest.timings_s["ph"] = time.perf_counter() - t0
    cli_io.export_barcode(barcode, args.out)
    manifest.add_output("barcode", args.out)
    manifest.save(_manifest_path(args.out))
    if args.betti_at is not None:
        print(betti0_at(vol, args.betti_at, conn))
    return 0


def _cmd_skeletonize(args) -> int:
    vol = cli_io.read_volume(args.input)
    params = SkeletonParams(iterations=args.iters, pooling=args.pooling)
    manifest = _manifest("skeletonize", {"iters": params.iterations, "pooling": params.pooling})
    manifest.add_input("input", args.input)
    t0 = time.perf_counter()
    skel = soft_skel(vol, params)
    manifest.timings_s["skeletonize"] = time.perf_counter() - t0
    cli_io.write_volume(skel, args.out)
    manifest.add_output("skeleton", args.out)
    manifest.save(_manifest_path(args.out))
    return 0


def _cmd_metrics(args) -> int:
    pred = cli_io.read_volume(args.pred, role=ROLE_BINARY)
    gt = cli_io.read_volume(args.gt, role=ROLE_BINARY)
    centerline = cli_io.read_centerline(args.centerline) if args.centerline else None
    skel = SkeletonParams(iterations=args.skel_iters)
    conn = Connectivity(args.conn)
    manifest = _manifest(
        "metrics",
        {"nsd_tol_mm": args.nsd_tol, "skel_iters": skel.iterations, "connectivity": int(conn)},
    )
    manifest.add_input("pred", args.pred)
    manifest.add_input("gt", args.gt)
    if args.centerline:
        manifest.add_input("centerline", args.centerline)
    t0 = time.perf_counter()
    report = evaluate_case(pred, gt, centerline, args.nsd_tol, skel, conn)
    manifest.timings_s["metrics"] = time.perf_counter() - t0
    case_id = Path(args.pred).stem
    cli_io.export_metrics([(case_id, report)], args.out)
    manifest.add_output("metrics", args.out)
    manifest.save(_manifest_path(args.out))
    return 0


def _cmd_eval_suite(args) -> int:
    seeds = parse_seeds(args.seeds)
    cfg = evalsuite.SuiteConfig(
        optimizer=OptimizerConfig(learning_rate=args.lr),
        include_ablation=not args.no_ablation,
    )
    manifest = _manifest(
        "eval-suite",
        {
            "seeds": seeds,
            "threads": args.threads,
            "lr": args.lr,
            "ablation": not args.no_ablation,
            "phantom": _public_fields(cfg.phantom),
            "weights": _public_fields(cfg.weights),
            "curriculum": _public_fields(cfg.curriculum),
        },
    )
    t0 = time.perf_counter()
    results, summary = evalsuite.run_suite(seeds, cfg, args.out, args.threads)
    manifest.timings_s["suite"] = time.perf_counter() - t0
    out = Path(args.out)
    manifest.add_output("metrics", out / "metrics.csv")
    manifest.add_output("summary", out / "summary.json")
    manifest.save(out / "manifest.json")
    for key in sorted(summary):
        print(f"{key}: {summary[key]}")
    return 0


_COMMANDS = {
    "phantom": _cmd_phantom,
    "refine": _cmd_refine,
    "ph": _cmd_ph,
    "skeletonize": _cmd_skeletonize,
    "metrics": _cmd_metrics,
    "eval-suite": _cmd_eval_suite,
}


def cli_main(argv=None) -> int:
    """Parse arguments, dispatch, and map failures to exit codes."""
    parser = _build_parser()
    try:
        try:
            args = parser.parse_args(argv)
        except SystemExit as exc:  # --help/--version path
            return int(exc.code or 0)
        return _COMMANDS[args.command](args)
    except _UsageError as exc:
        print(f"{USAGE_PREFIX} {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    except RefinementNumericalError as exc:
        print(f"{NUMERIC_PREFIX} {exc}", file=sys.stderr)
        return 3
    except (ToposculptError, OSError) as exc:
        print(f"{INPUT_PREFIX} {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
