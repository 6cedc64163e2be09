"""Seeded phantom -> refine -> metrics pipeline and its aggregate report.

Each case generates a corrupted phantom, scores the initial binarized map,
runs the full refinement (and optionally the correction-only ablation with
both integrity weights zeroed), and scores the results. Per-case work is
independent, so cases may run in a process pool; the aggregate CSV and
summary are written once at the end, in seed order, by the caller.
"""

from __future__ import annotations

import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import cli_io
from .metrics import MetricReport, evaluate_case
from .phantom import PhantomConfig, generate_case
from .refine import CurriculumConfig, OptimizerConfig, TrajectoryRecord, run
from .soft_skeleton import SkeletonParams
from .tib_loss import TibWeights, TopoPrior
from .volume import Connectivity, binarize

THREADS_ENV_VAR = "TOPOSCULPT_THREADS"


@dataclass(frozen=True)
class SuiteConfig:
    """Everything a suite run needs besides the seed list."""

    phantom: PhantomConfig = PhantomConfig()  # seed/breaks/blobs set per case
    breaks_range: tuple[int, int] = (4, 6)
    blobs_range: tuple[int, int] = (3, 5)
    prior: TopoPrior = TopoPrior(1)
    weights: TibWeights = TibWeights()
    curriculum: CurriculumConfig = CurriculumConfig()
    optimizer: OptimizerConfig = OptimizerConfig()
    nsd_tolerance_mm: float = 1.0
    include_ablation: bool = True
    conn: Connectivity = Connectivity.C26

    @property
    def skeleton(self) -> SkeletonParams:
        # full thinning needs iterations >= max tube radius
        return SkeletonParams(iterations=int(math.ceil(self.phantom.root_radius)))


@dataclass
class CaseResult:
    seed: int
    breaks: int
    blobs: int
    init: MetricReport
    refined: MetricReport
    ablation: Optional[MetricReport]
    trajectory: list[TrajectoryRecord]
    seconds: dict


def case_phantom_config(seed: int, cfg: SuiteConfig) -> PhantomConfig:
    """Per-seed phantom parameters; corruption counts drawn from the seed."""
    rng = np.random.Generator(np.random.Philox(key=(seed, 2)))
    breaks = int(rng.integers(cfg.breaks_range[0], cfg.breaks_range[1] + 1))
    blobs = int(rng.integers(cfg.blobs_range[0], cfg.blobs_range[1] + 1))
    return replace(cfg.phantom, seed=seed, breaks=breaks, blobs=blobs)


def run_case(seed: int, cfg: SuiteConfig, out_dir: Optional[str] = None) -> CaseResult:
    """Generate, refine, and score one seeded case; optionally write files."""
    timings: dict[str, float] = {}
    pcfg = case_phantom_config(seed, cfg)

    t0 = time.perf_counter()
    case = generate_case(pcfg)
    timings["phantom"] = time.perf_counter() - t0

    skel = cfg.skeleton
    init_bin = binarize(case.init_prob, 0.5)
    t0 = time.perf_counter()
    init_metrics = evaluate_case(
        init_bin, case.gt_mask, case.centerline, cfg.nsd_tolerance_mm, skel, cfg.conn
    )
    timings["metrics_init"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    refined, trajectory = run(
        case.init_prob, cfg.prior, cfg.weights, skel, cfg.optimizer, cfg.curriculum, cfg.conn
    )
    timings["refine"] = time.perf_counter() - t0
    refined_bin = binarize(refined, 0.5)
    t0 = time.perf_counter()
    refined_metrics = evaluate_case(
        refined_bin, case.gt_mask, case.centerline, cfg.nsd_tolerance_mm, skel, cfg.conn
    )
    timings["metrics_refined"] = time.perf_counter() - t0

    ablation_metrics = None
    if cfg.include_ablation:
        ablation_weights = replace(cfg.weights, alpha=0.0, beta=0.0)
        t0 = time.perf_counter()
        ablated, _ = run(
            case.init_prob, cfg.prior, ablation_weights, skel, cfg.optimizer, cfg.curriculum, cfg.conn
        )
        timings["ablation"] = time.perf_counter() - t0
        ablation_metrics = evaluate_case(
            binarize(ablated, 0.5), case.gt_mask, case.centerline,
            cfg.nsd_tolerance_mm, skel, cfg.conn,
        )

    if out_dir is not None:
        case_dir = Path(out_dir) / f"seed{seed:04d}"
        case_dir.mkdir(parents=True, exist_ok=True)
        cli_io.write_volume(case.gt_mask, case_dir / "gt.rvol")
        cli_io.write_volume(case.init_prob, case_dir / "init_prob.rvol")
        cli_io.write_volume(refined, case_dir / "refined.rvol")
        cli_io.export_centerline(case.centerline, case_dir / "centerline.json")
        cli_io.export_trajectory(trajectory, case_dir / "trajectory.csv")
        (case_dir / "corruption.json").write_text(
            json.dumps(case.corruption_record, indent=1) + "\n"
        )

    return CaseResult(
        seed=seed,
        breaks=pcfg.breaks,
        blobs=pcfg.blobs,
        init=init_metrics,
        refined=refined_metrics,
        ablation=ablation_metrics,
        trajectory=trajectory,
        seconds=timings,
    )


def default_threads() -> int:
    raw = os.environ.get(THREADS_ENV_VAR, "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def run_suite(
    seeds: list[int],
    cfg: SuiteConfig = SuiteConfig(),
    out_dir: Optional[str] = None,
    threads: Optional[int] = None,
) -> tuple[list[CaseResult], dict]:
    """Run all seeds (optionally in parallel) and aggregate the outcome.

    Returns (per-case results in seed order, summary dict). When out_dir is
    given, per-case artifacts plus metrics.csv and summary.json are written.
    """
    if threads is None:
        threads = default_threads()
    if threads > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run_case, seeds, [cfg] * len(seeds), [out_dir] * len(seeds)))
    else:
        results = [run_case(s, cfg, out_dir) for s in seeds]

    summary = summarize(results)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        rows = []
        for r in results:
            rows.append((f"seed{r.seed:04d}-init", r.init))
            rows.append((f"seed{r.seed:04d}-refined", r.refined))
            if r.ablation is not None:
                rows.append((f"seed{r.seed:04d}-ablation", r.ablation))
        cli_io.export_metrics(rows, out / "metrics.csv")
        (out / "summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n")
    return results, summary


def summarize(results: list[CaseResult]) -> dict:
    """Aggregate statistics and the quantitative gates for the suite."""
    init_err = np.array([r.init.betti0_error for r in results], dtype=float)
    fin_err = np.array([r.refined.betti0_error for r in results], dtype=float)
    init_td = np.array([r.init.td_pct for r in results])
    fin_td = np.array([r.refined.td_pct for r in results])
    init_bd = np.array([r.init.bd_pct for r in results])
    fin_bd = np.array([r.refined.bd_pct for r in results])
    init_cld = np.array([r.init.cldice_pct for r in results])
    fin_cld = np.array([r.refined.cldice_pct for r in results])

    mean_init_err = float(init_err.mean())
    mean_fin_err = float(fin_err.mean())
    reduction = 1.0 - mean_fin_err / mean_init_err if mean_init_err > 0 else 0.0
    summary = {
        "cases": len(results),
        "seeds": [r.seed for r in results],
        "mean_init_beta0_error": mean_init_err,
        "mean_final_beta0_error": mean_fin_err,
        "beta0_error_reduction": float(reduction),
        "seeds_with_final_beta0_error_le_1": int((fin_err <= 1).sum()),
        "mean_init_td": float(init_td.mean()),
        "mean_refined_td": float(fin_td.mean()),
        "mean_init_bd": float(init_bd.mean()),
        "mean_refined_bd": float(fin_bd.mean()),
        "td_gain": float(fin_td.mean() - init_td.mean()),
        "bd_gain": float(fin_bd.mean() - init_bd.mean()),
        "mean_init_cldice": float(init_cld.mean()),
        "mean_refined_cldice": float(fin_cld.mean()),
        "worst_cldice_change": float((fin_cld - init_cld).min()),
        "max_refine_seconds": float(max(r.seconds.get("refine", 0.0) for r in results)),
    }
    ablations = [r.ablation for r in results if r.ablation is not None]
    if ablations:
        abl_cld = np.array([a.cldice_pct for a in ablations])
        summary["mean_ablation_cldice"] = float(abl_cld.mean())
        summary["cldice_margin_over_ablation"] = float(fin_cld.mean() - abl_cld.mean())
    return summary
