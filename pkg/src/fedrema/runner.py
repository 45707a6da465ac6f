"""Experiment driver: builds the data and models from a config, runs
the communication rounds, and emits CSV/JSON metrics."""

from __future__ import annotations

import csv
import json
import os
import time
from dataclasses import dataclass, field

import numpy as np

from fedrema import data, nn, server
from fedrema.config import ExperimentConfig
from fedrema.errors import ConfigurationError
from fedrema.server import RoundReport, RoundState, Strategy

CSV_FIELDS = ["round", "client_id", "accuracy", "mean_accuracy",
              "delta_s_bar", "ccp_active"]


@dataclass
class ExperimentResult:
    reports: list[RoundReport]
    summary: dict = field(default_factory=dict)


def build_datasets(config: ExperimentConfig) -> list[data.ClientDataset]:
    if config.source == "synthetic":
        pool = data.generate_synthetic(
            config.num_classes, config.input_dim, config.class_separation,
            seed=config.seed, samples_per_class=config.pool_per_class)
    elif config.source == "idx":
        pool = data.load_idx(config.images_path, config.labels_path)
    else:
        raise ConfigurationError(f"unknown data source {config.source!r}")
    spec = data.PartitionSpec(
        num_clients=config.clients,
        num_classes=pool.num_classes,
        samples_per_client=config.samples_per_client,
        iid_fraction=config.iid_fraction,
        num_groups=config.num_groups,
        dominant_per_group=config.dominant_per_group,
        seed=config.seed,
        global_without_replacement=config.global_without_replacement,
    )
    return data.partition(pool, spec)


def build_strategy(config: ExperimentConfig) -> Strategy:
    return Strategy(
        name=config.strategy,
        delta=config.delta,
        temperature=config.temperature,
        n_probes=config.n_probes,
        paper_literal_mds=config.paper_literal_mds,
        always_probe=config.always_probe,
    )


def build_state(config: ExperimentConfig, datasets: list[data.ClientDataset],
                ) -> RoundState:
    input_dim = datasets[0].train.inputs.shape[1]
    model = nn.init_model(input_dim, [config.hidden_dim], config.feature_dim,
                          config.num_classes, seed=config.seed)
    sizes = [d.size for d in datasets]
    return RoundState.initial(config.clients, model, sizes, config.seed,
                              delta=config.delta)


def _csv_rows(report: RoundReport):
    dsb = "" if report.delta_s_bar is None else repr(report.delta_s_bar)
    for k, acc in enumerate(report.accuracies):
        yield {
            "round": report.round,
            "client_id": k,
            "accuracy": repr(acc),
            "mean_accuracy": repr(report.mean_accuracy),
            "delta_s_bar": dsb,
            "ccp_active": str(report.ccp_active).lower(),
        }


def _report_to_dict(report: RoundReport) -> dict:
    return {
        "round": report.round,
        "accuracies": report.accuracies,
        "mean_accuracy": report.mean_accuracy,
        "delta_s_bar": report.delta_s_bar,
        "ccp_active": report.ccp_active,
        "relevant_sets": {str(k): sorted(v) for k, v in report.relevant_sets.items()},
        "wall_ms": report.wall_ms,
    }


def report_from_dict(d: dict) -> RoundReport:
    return RoundReport(
        round=d["round"],
        accuracies=list(d["accuracies"]),
        mean_accuracy=d["mean_accuracy"],
        delta_s_bar=d["delta_s_bar"],
        ccp_active=d["ccp_active"],
        relevant_sets={int(k): tuple(v) for k, v in d["relevant_sets"].items()},
        wall_ms=d["wall_ms"],
    )


def emit_metrics(reports: list[RoundReport], fmt: str, path: str) -> None:
    """Write the full metrics file atomically (temp file + rename)."""
    if not reports:
        raise ConfigurationError("no reports to emit")
    tmp = path + ".tmp"
    try:
        if fmt == "csv":
            with open(tmp, "w", newline="") as f:
                writer = csv.DictWriter(f, fieldnames=CSV_FIELDS)
                writer.writeheader()
                for report in reports:
                    writer.writerows(_csv_rows(report))
        elif fmt == "json":
            with open(tmp, "w") as f:
                json.dump([_report_to_dict(r) for r in reports], f, indent=2)
        else:
            raise ConfigurationError(f"unknown metrics format {fmt!r}")
        os.replace(tmp, path)
    except OSError as e:
        raise OSError(f"failed writing metrics to {path}: {e}") from e


def summarize(reports: list[RoundReport]) -> dict:
    means = [r.mean_accuracy for r in reports]
    tail = means[-5:]
    return {
        "rounds": len(reports),
        "best_mean_accuracy": max(means),
        "final_mean_accuracy": means[-1],
        "last5_mean_accuracy": float(np.mean(tail)),
        "ccp_rounds": sum(1 for r in reports if r.ccp_active),
    }


def run_experiment(config: ExperimentConfig,
                   datasets: list[data.ClientDataset] | None = None,
                   out_dir: str | None = None) -> ExperimentResult:
    """Run all rounds; when out_dir is set, the CSV grows one round at a
    time (flushed, so a killed run still leaves parseable output) and a
    JSON mirror plus summary are written at the end."""
    config.validate()
    if datasets is None:
        datasets = build_datasets(config)
    strategy = build_strategy(config)
    state = build_state(config, datasets)

    csv_file = None
    writer = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        csv_file = open(os.path.join(out_dir, "metrics.csv"), "w", newline="")
        writer = csv.DictWriter(csv_file, fieldnames=CSV_FIELDS)
        writer.writeheader()
        csv_file.flush()

    reports: list[RoundReport] = []
    try:
        for _ in range(config.rounds):
            t0 = time.perf_counter()
            report = server.run_round(
                state, strategy, datasets,
                epochs=config.local_epochs,
                batch_size=config.batch_size,
                lr=config.learning_rate,
                parallel=config.parallel,
            )
            report.wall_ms = (time.perf_counter() - t0) * 1000.0
            reports.append(report)
            if writer is not None:
                writer.writerows(_csv_rows(report))
                csv_file.flush()
    finally:
        if csv_file is not None:
            csv_file.close()

    summary = summarize(reports)
    if out_dir is not None:
        emit_metrics(reports, "json", os.path.join(out_dir, "metrics.json"))
        with open(os.path.join(out_dir, "summary.json"), "w") as f:
            json.dump(summary, f, indent=2)
    return ExperimentResult(reports, summary)
