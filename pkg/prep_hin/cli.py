"""Command-line entry point: ``prep-hin <command> [options]``.

Every option mirrors a :class:`~prep_hin.config.RunConfig` field. Values
from ``--config`` override the defaults and explicit flags override the
config file.
"""

import argparse
import logging
import sys
import typing as t
from pathlib import Path

from pydantic import ValidationError

from . import __version__
from .baselines import ALL_PAIRS, BASE_MEASURES, baseline_scores
from .config import RunConfig, build_run_config, config_keys
from .counting import count_paths, read_count_table, write_count_table
from .evaluation import (
    SubTask,
    build_entity_resolution_tasks,
    evaluate,
    load_labeled_tasks,
    load_mentions,
    remap_mentions,
)
from .exceptions import InputError, PrepError
from .formats import (
    Header,
    format_float,
    read_header,
    sha256_file,
    sha256_text,
    write_artifact,
)
from .graph import load_graph, load_metapaths
from .inference import FitResult, PrepInference
from .model import (
    hyperparams_from_header,
    read_checkpoint,
    write_checkpoint,
)
from .relevance import prep_scores, read_scores, write_scores
from .synthetic import PlantedConfig, planted_instance

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

Handler = t.Callable[[RunConfig, argparse.Namespace], int]


def _header(cfg: RunConfig | None = None, **inputs: Path | str) -> Header:
    header = Header(kind="", version=__version__)
    for label, value in inputs.items():
        digest = (
            sha256_file(value)
            if isinstance(value, Path)
            else sha256_text(value)
        )
        header.add("input", label, digest)
    if cfg is not None:
        header.add("config", cfg.fingerprint())
    return header


def _output(cfg: RunConfig, explicit: Path | None, default: str) -> Path:
    return explicit if explicit is not None else cfg.output_dir / default


def _subtasks(cfg: RunConfig) -> list[SubTask]:
    if cfg.label_file is not None:
        cfg.require("label_file")
        return load_labeled_tasks(cfg.label_file)
    if cfg.mention_file is not None:
        cfg.require("mention_file")
        tasks, _ = build_entity_resolution_tasks(
            load_mentions(cfg.mention_file)
        )
        return tasks
    raise InputError("evaluation needs a label_file or a mention_file")


# Commands


def cmd_count(cfg: RunConfig, args: argparse.Namespace) -> int:
    cfg.require("node_file", "edge_file", "metapath_file")
    assert cfg.node_file and cfg.edge_file and cfg.metapath_file
    out = _output(cfg, cfg.count_file, "counts.tsv")
    inputs: dict[str, Path | str] = {
        "nodes": cfg.node_file,
        "edges": cfg.edge_file,
        "metapaths": cfg.metapath_file,
        "undirected": ",".join(sorted(cfg.undirected)),
    }
    if cfg.mention_file is not None:
        cfg.require("mention_file")
        inputs["mentions"] = cfg.mention_file
    header = _header(**inputs)

    cached = read_header(out)
    if (
        cached is not None
        and cached.version == __version__
        and cached.inputs() == header.inputs()
    ):
        logger.info("Inputs unchanged; reusing %s", out)
        return 0

    graph = load_graph(cfg.node_file, cfg.edge_file, cfg.undirected)
    if cfg.mention_file is not None:
        _, assignment = build_entity_resolution_tasks(
            load_mentions(cfg.mention_file)
        )
        graph = remap_mentions(graph, assignment)
    table = count_paths(
        graph, load_metapaths(cfg.metapath_file), threads=cfg.threads
    )
    write_count_table(table, out, header)
    logger.info("Wrote %s", out)
    return 0


def _write_trace(result: FitResult, path: Path, header: Header) -> Path:
    header.kind = "trace"
    header.add(
        "columns", "iteration", "objective", "eta", "rho", "phi", "theta"
    )
    header.add("converged", str(result.converged).lower())
    rows = (
        (
            entry.iteration,
            format_float(entry.objective),
            *(format_float(d) for d in entry.deltas()),
        )
        for entry in result.trace
    )
    return write_artifact(path, header, rows)


def cmd_fit(cfg: RunConfig, args: argparse.Namespace) -> int:
    cfg.require("count_file")
    assert cfg.count_file is not None
    table, _ = read_count_table(cfg.count_file)
    result = PrepInference(
        table, cfg.hyperparams(), variant=cfg.variant
    ).run()

    header = _header(cfg, counts=cfg.count_file)
    header.add("variant", cfg.variant)
    header.add("seed", cfg.seed)
    out = _output(cfg, cfg.checkpoint_file, "checkpoint.tsv")
    write_checkpoint(table, result.params, result.hyperparams, out, header)

    trace_path = cfg.output_dir / "trace.tsv"
    _write_trace(result, trace_path, _header(cfg, counts=cfg.count_file))
    logger.info(
        "Wrote %s and %s (%d iterations, O=%.12g)",
        out,
        trace_path,
        result.iterations,
        result.objective,
    )
    return 0


def cmd_score(cfg: RunConfig, args: argparse.Namespace) -> int:
    cfg.require("count_file", "checkpoint_file")
    assert cfg.count_file is not None and cfg.checkpoint_file is not None
    table, _ = read_count_table(cfg.count_file)
    checkpoint = read_checkpoint(cfg.checkpoint_file)
    params = checkpoint.aligned(table)
    h = hyperparams_from_header(checkpoint.header)
    variant = checkpoint.header.first("variant") or "full"
    measure_id = "prep" if variant == "full" else f"prep-{variant}"
    scores = prep_scores(table, params, h, measure_id, cfg.fingerprint())

    header = _header(
        cfg, counts=cfg.count_file, checkpoint=cfg.checkpoint_file
    )
    out = _output(cfg, cfg.score_file, "scores.tsv")
    write_scores(scores, out, header)
    logger.info("Wrote %d %s scores to %s", len(scores), measure_id, out)
    return 0


def cmd_baseline(cfg: RunConfig, args: argparse.Namespace) -> int:
    if cfg.measure not in BASE_MEASURES:
        raise InputError(
            f"baseline needs --measure in {', '.join(BASE_MEASURES)}"
        )
    cfg.require("count_file")
    assert cfg.count_file is not None
    table, _ = read_count_table(cfg.count_file)
    inputs: dict[str, Path | str] = {"counts": cfg.count_file}
    subtasks = None
    if cfg.label_file is not None or cfg.mention_file is not None:
        subtasks = {task.id: task.pairs for task in _subtasks(cfg)}
        source = cfg.label_file or cfg.mention_file
        assert source is not None
        inputs["labels"] = source
    tables = baseline_scores(
        table,
        cfg.measure,
        cfg.heuristic,
        subtasks,
        scope=cfg.weight_scope,
        simrank=cfg.simrank(),
        threads=cfg.threads,
    )
    out = _output(cfg, cfg.score_file, "scores.tsv")
    header = _header(cfg, **inputs)
    if subtasks is None:
        write_scores(tables[ALL_PAIRS], out, header)
    else:
        write_scores(tables, out, header)
    logger.info("Wrote %s scores to %s", cfg.measure, out)
    return 0


def cmd_eval(cfg: RunConfig, args: argparse.Namespace) -> int:
    cfg.require("score_file")
    assert cfg.score_file is not None
    scores, _ = read_scores(cfg.score_file)
    report = evaluate(
        scores,
        _subtasks(cfg),
        metrics=cfg.metrics,
        schemes=cfg.schemes,
        threads=cfg.threads,
        seed=cfg.seed,
        fingerprint=cfg.fingerprint(),
    )
    out = cfg.output_dir / "report.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(report.to_json() + "\n", encoding="utf-8")
    for line in report.summary_lines():
        print(line)
    logger.info("Wrote %s", out)
    return 0


def cmd_synth(cfg: RunConfig, args: argparse.Namespace) -> int:
    planted = PlantedConfig(
        num_nodes=args.nodes,
        num_groups=args.groups,
        num_metapaths=args.num_metapaths,
        planted_fraction=args.planted_fraction,
        boost=args.boost,
        seed=cfg.seed,
    )
    instance = planted_instance(planted)
    header = _header(planted=planted.model_dump_json())
    counts = _output(cfg, cfg.count_file, "counts.tsv")
    write_count_table(instance.table, counts, header)
    labels = _output(cfg, cfg.label_file, "labels.tsv")
    labels.parent.mkdir(parents=True, exist_ok=True)
    with labels.open("w", encoding="utf-8", newline="\n") as fh:
        for task in instance.subtasks:
            for (u, v), label in zip(task.pairs, task.labels):
                fh.write(f"{u}\t{v}\t{int(label)}\t{task.id}\n")
    logger.info("Wrote %s and %s", counts, labels)
    return 0


def cmd_sweep(cfg: RunConfig, args: argparse.Namespace) -> int:
    cfg.require("count_file")
    assert cfg.count_file is not None
    table, _ = read_count_table(cfg.count_file)
    subtasks = _subtasks(cfg)
    rows: list[tuple[str, ...]] = []
    for value in cfg.sweep_values:
        setting = int(value) if cfg.sweep_param == "k" else value
        h = cfg.hyperparams(**{cfg.sweep_param: setting})
        result = PrepInference(table, h, variant=cfg.variant).run()
        scores = prep_scores(table, result.params, result.hyperparams)
        report = evaluate(
            scores,
            subtasks,
            metrics=cfg.metrics,
            schemes=cfg.schemes,
            threads=cfg.threads,
        )
        for metric, by_scheme in report.averages.items():
            for scheme, score in by_scheme.items():
                rows.append(
                    (
                        cfg.sweep_param,
                        str(setting),
                        metric,
                        scheme,
                        format_float(score),
                    )
                )
                print("\t".join(rows[-1]))
    header = _header(cfg, counts=cfg.count_file)
    header.kind = "sweep"
    out = cfg.output_dir / "sweep.tsv"
    write_artifact(out, header, rows)
    logger.info("Wrote %s", out)
    return 0


COMMANDS: dict[str, tuple[Handler, str]] = {
    "count": (cmd_count, "count path instances per pair and meta-path"),
    "fit": (cmd_fit, "fit the PReP model (or an ablation)"),
    "score": (cmd_score, "score pairs with a fitted checkpoint"),
    "baseline": (cmd_baseline, "score pairs with a similarity baseline"),
    "eval": (cmd_eval, "evaluate a score file against labels"),
    "synth": (cmd_synth, "write a planted synthetic count table"),
    "sweep": (cmd_sweep, "evaluate PReP over a range of beta or K"),
}


def _config_parser() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--config", type=Path, help="key = value file")
    options = parent.add_argument_group("run configuration")
    for key in sorted(config_keys()):
        options.add_argument(
            f"--{key.replace('_', '-')}", dest=key, default=None
        )
    return parent


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="prep-hin",
        description="Path-based relevance in heterogeneous networks",
    )
    parser.add_argument(
        "--version", action="version", version=f"%(prog)s {__version__}"
    )
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true")
    verbosity.add_argument("-q", "--quiet", action="store_true")

    parent = _config_parser()
    commands = parser.add_subparsers(dest="command", required=True)
    for name, (handler, help_text) in COMMANDS.items():
        sub = commands.add_parser(name, parents=[parent], help=help_text)
        sub.set_defaults(handler=handler)
        if name == "synth":
            sub.add_argument("--nodes", type=int, default=500)
            sub.add_argument("--groups", type=int, default=10)
            sub.add_argument("--num-metapaths", type=int, default=3)
            sub.add_argument("--planted-fraction", type=float, default=0.05)
            sub.add_argument("--boost", type=float, default=8.0)
    return parser


def main(argv: t.Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.INFO
    if args.verbose:
        level = logging.DEBUG
    elif args.quiet:
        level = logging.WARNING
    logging.basicConfig(level=level, format=LOG_FORMAT)

    overrides = {key: getattr(args, key) for key in config_keys()}
    try:
        cfg = build_run_config(args.config, overrides)
        return int(args.handler(cfg, args))
    except PrepError as exc:
        logger.error("%s", exc)
        return exc.exit_code
    except ValidationError as exc:
        logger.error("invalid configuration:\n%s", exc)
        return InputError.exit_code
    except OSError as exc:
        logger.error("%s", exc)
        return InputError.exit_code


if __name__ == "__main__":
    sys.exit(main())
