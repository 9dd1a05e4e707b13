#!/usr/bin/env python3
"""
Relevance comparison between PReP and the similarity baselines.

This script fits PReP on planted synthetic networks and reports ROC-AUC
and runtime for PReP, its ablations and every baseline.
"""

import argparse
import logging
import time
from statistics import mean, median, stdev

from prep_hin.baselines import BASE_MEASURES, baseline_scores, prep_ablation
from prep_hin.config import PrepHyperparams
from prep_hin.evaluation import SubTask, evaluate
from prep_hin.inference import PrepInference
from prep_hin.relevance import prep_scores
from prep_hin.synthetic import PlantedConfig, planted_instance

ABLATIONS = ("no-nv", "no-ps", "no-cs")


class ComparisonResult:
    """Store and format the per-seed results of one measure."""

    def __init__(self, name: str):
        self.name = name
        self.aucs: list[float] = []
        self.times: list[float] = []

    def add(self, auc: float, duration: float) -> None:
        self.aucs.append(auc)
        self.times.append(duration)

    def get_stats(self) -> dict[str, float]:
        """Summary statistics of the ROC-AUC values."""
        if not self.aucs:
            return {"mean": 0, "median": 0, "stdev": 0, "seconds": 0}

        return {
            "mean": mean(self.aucs),
            "median": median(self.aucs),
            "stdev": stdev(self.aucs) if len(self.aucs) > 1 else 0,
            "seconds": mean(self.times),
        }

    def __str__(self) -> str:
        stats = self.get_stats()
        return (
            f"{self.name:<16} "
            f"AUC {stats['mean']:.4f} "
            f"(median {stats['median']:.4f}, sd {stats['stdev']:.4f}) "
            f"{stats['seconds']:.2f}s"
        )


def _auc(scores, tasks: list[SubTask]) -> float:
    report = evaluate(scores, tasks, ["roc_auc"], schemes=["uni"])
    return report.averages["roc_auc"]["uni"]


def run_seed(
    cfg: PlantedConfig, h: PrepHyperparams, threads: int
) -> dict[str, tuple[float, float]]:
    """ROC-AUC and seconds per measure on one planted instance."""
    instance = planted_instance(cfg)
    table, tasks = instance.table, instance.subtasks
    candidates = {task.id: task.pairs for task in tasks}
    out: dict[str, tuple[float, float]] = {}

    start = time.perf_counter()
    result = PrepInference(table, h).run()
    scores = prep_scores(table, result.params, result.hyperparams)
    out["prep"] = (_auc(scores, tasks), time.perf_counter() - start)

    for variant in ABLATIONS:
        start = time.perf_counter()
        params = prep_ablation(table, h, variant)
        scores = prep_scores(table, params, h, f"prep-{variant}")
        out[f"prep-{variant}"] = (
            _auc(scores, tasks),
            time.perf_counter() - start,
        )

    for measure in BASE_MEASURES:
        for heuristic in ("mean", "sd"):
            start = time.perf_counter()
            tables = baseline_scores(
                table, measure, heuristic, candidates, threads=threads
            )
            out[f"{measure}-{heuristic}"] = (
                _auc(tables, tasks),
                time.perf_counter() - start,
            )
    return out


def print_comparison(results: dict[str, ComparisonResult]) -> None:
    print(f"\n{'=' * 60}")
    print("RELEVANCE COMPARISON RESULTS")
    print(f"{'=' * 60}\n")
    for result in results.values():
        print(result)

    prep = results["prep"].get_stats()["mean"]
    best_name, best = max(
        (
            (name, r.get_stats()["mean"])
            for name, r in results.items()
            if not name.startswith("prep")
        ),
        key=lambda item: item[1],
    )
    margin = prep - best
    print(f"\nBest baseline: {best_name} ({best:.4f})")
    if margin > 0:
        print(f"  PReP leads by {margin:.4f} AUC")
    else:
        print(f"  PReP trails by {abs(margin):.4f} AUC")
    print(f"\n{'=' * 60}")


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.strip())
    parser.add_argument("--seeds", type=int, default=10)
    parser.add_argument("--nodes", type=int, default=500)
    parser.add_argument("--groups", type=int, default=10)
    parser.add_argument("--k", type=int, default=3)
    parser.add_argument("--beta", type=float, default=0.5)
    parser.add_argument("--max-outer", type=int, default=50)
    parser.add_argument("--threads", type=int, default=4)
    args = parser.parse_args()
    logging.basicConfig(level=logging.WARNING)

    print("PReP versus similarity baselines on planted networks")
    print(f"{args.seeds} seeds, {args.nodes} nodes, {args.groups} groups")
    print("\nThis may take several minutes...\n")

    results: dict[str, ComparisonResult] = {}
    try:
        for seed in range(args.seeds):
            print(f"Running seed {seed}...")
            cfg = PlantedConfig(
                num_nodes=args.nodes, num_groups=args.groups, seed=seed
            )
            h = PrepHyperparams(
                k=args.k,
                beta=args.beta,
                max_outer=args.max_outer,
                seed=seed,
                threads=args.threads,
            )
            for name, (auc, seconds) in run_seed(
                cfg, h, args.threads
            ).items():
                results.setdefault(name, ComparisonResult(name)).add(
                    auc, seconds
                )
        print_comparison(results)
        return 0

    except Exception as e:
        print(f"\n❌ Error running comparison: {e}")
        import traceback

        traceback.print_exc()
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
