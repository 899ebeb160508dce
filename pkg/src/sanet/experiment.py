"""Seed-averaged experiment orchestration for the two cold-start protocols.

A run trains one model per seed (general protocol) or one per seed and
held-out event (event protocol), always evaluating on propagation-stripped
test samples; structure never leaks into evaluation. Reports carry per-seed
raw values, seed mean/std, and a config fingerprint so that per-seed files
from separate processes can be merged safely.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .data import split_event_aware, split_general, strip_propagation, write_split_descriptor
from .errors import DataError
from .metrics import classification_metrics, confusion, paired_t_test, seed_summary
from .models import ParamSets
from .training import LAMBDA_GRID, TrainingConfig, predict, train_san, train_vanilla

PROTOCOLS = ("general", "event")
DEFAULT_SEEDS = (0, 1, 2, 3, 4)


@dataclass
class SeedOutcome:
    seed: int
    metrics: dict[str, float]
    per_event: dict[str, float] | None = None
    warm_metrics: dict[str, float] | None = None


@dataclass
class ExperimentReport:
    protocol: str
    trainer: str
    config: TrainingConfig
    train_ratio: float | None
    seeds: list[int]
    outcomes: list[SeedOutcome]
    fingerprint: str
    summary: dict
    per_event_summary: dict | None = None

    def metric_per_seed(self, name: str) -> list[float]:
        return [o.metrics[name] for o in self.outcomes]


def normalize_protocol(protocol: str) -> str:
    alias = {"general": "general", "event": "event", "event-aware": "event"}
    if protocol not in alias:
        raise DataError(f"unknown protocol {protocol!r}, expected one of {PROTOCOLS}")
    return alias[protocol]


def config_fingerprint(config: TrainingConfig, protocol: str, train_ratio, trainer: str) -> str:
    payload = {
        "config": dataclasses.asdict(config),
        "protocol": protocol,
        "train_ratio": train_ratio,
        "trainer": trainer,
    }
    digest = hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()
    return digest[:12]


def evaluate_cold(params: ParamSets, test_samples) -> dict[str, float]:
    """Metrics on a cold-start test set; refuses samples carrying trees."""
    test_samples = list(test_samples)
    carrying = [s.id for s in test_samples if s.tree is not None]
    if carrying:
        raise DataError(f"cold-start evaluation got samples with propagation: {carrying[:5]}")
    res = predict(params, test_samples)
    return classification_metrics(confusion(res.labels, [s.label for s in test_samples]))


def _trainer_fn(trainer: str):
    if trainer == "san":
        return train_san
    if trainer == "vanilla":
        return train_vanilla
    raise DataError(f"unknown trainer {trainer!r}, expected 'san' or 'vanilla'")


def _seed_config(config: TrainingConfig, seed: int) -> TrainingConfig:
    return dataclasses.replace(config, seed=seed)


def _run_seed_general(samples, config, seed, train_ratio, trainer, warm_metrics):
    split = split_general(samples, train_ratio, seed=seed)
    cold_test = strip_propagation(split.test)
    params, trace = _trainer_fn(trainer)(split, _seed_config(config, seed))
    outcome = SeedOutcome(seed=seed, metrics=evaluate_cold(params, cold_test))
    if warm_metrics:
        res = predict(params, split.test)
        outcome.warm_metrics = classification_metrics(
            confusion(res.labels, [s.label for s in split.test]))
    return outcome, params, trace


def _run_seed_event(samples, config, seed, trainer, warm_metrics):
    events = sorted({s.event for s in samples if s.event is not None})
    if not events or any(s.event is None for s in samples):
        raise DataError("event protocol needs an event tag on every sample")
    pooled_pred: list[str] = []
    pooled_true: list[str] = []
    warm_pred: list[str] = []
    per_event: dict[str, float] = {}
    last_params = None
    for event in events:
        split = split_event_aware(samples, event)
        cold_test = strip_propagation(split.test)
        params, _ = _trainer_fn(trainer)(split, _seed_config(config, seed))
        res = predict(params, cold_test)
        truth = [s.label for s in cold_test]
        per_event[event] = classification_metrics(confusion(res.labels, truth))["weighted_f1"]
        pooled_pred.extend(res.labels)
        pooled_true.extend(truth)
        if warm_metrics:
            warm_pred.extend(predict(params, split.test).labels)
        last_params = params
    metrics = classification_metrics(confusion(pooled_pred, pooled_true))
    outcome = SeedOutcome(seed=seed, metrics=metrics, per_event=per_event)
    if warm_metrics:
        outcome.warm_metrics = classification_metrics(confusion(warm_pred, pooled_true))
    return outcome, last_params


def run_experiment(
    samples,
    protocol: str,
    config: TrainingConfig,
    seeds=DEFAULT_SEEDS,
    train_ratio: float = 0.75,
    trainer: str = "san",
    warm_metrics: bool = False,
) -> ExperimentReport:
    """Train and evaluate once per seed, then aggregate."""
    samples = list(samples)
    if not samples:
        raise DataError("experiment corpus is empty")
    protocol = normalize_protocol(protocol)
    seeds = [int(s) for s in seeds]
    outcomes: list[SeedOutcome] = []
    for seed in seeds:
        if protocol == "general":
            outcome, _, _ = _run_seed_general(samples, config, seed, train_ratio, trainer, warm_metrics)
        else:
            outcome, _ = _run_seed_event(samples, config, seed, trainer, warm_metrics)
        outcomes.append(outcome)

    summary = seed_summary({o.seed: o.metrics for o in outcomes})
    per_event_summary = None
    if protocol == "event":
        events = sorted(outcomes[0].per_event)
        means = {
            ev: float(np.mean([o.per_event[ev] for o in outcomes])) for ev in events
        }
        per_event_summary = {
            "events": means,
            "average": float(np.mean(list(means.values()))),
        }
    return ExperimentReport(
        protocol=protocol,
        trainer=trainer,
        config=config,
        train_ratio=train_ratio if protocol == "general" else None,
        seeds=seeds,
        outcomes=outcomes,
        fingerprint=config_fingerprint(config, protocol,
                                       train_ratio if protocol == "general" else None, trainer),
        summary=summary,
        per_event_summary=per_event_summary,
    )


def compare_reports(report_a: ExperimentReport, report_b: ExperimentReport, metric: str = "accuracy") -> float:
    """Paired two-sided p-value over per-seed values of one metric."""
    if report_a.seeds != report_b.seeds:
        raise DataError(f"reports pair different seeds: {report_a.seeds} vs {report_b.seeds}")
    return paired_t_test(report_a.metric_per_seed(metric), report_b.metric_per_seed(metric))


@dataclass
class SweepResult:
    baseline: ExperimentReport
    by_lambda: dict[float, ExperimentReport]
    best_lambda: float
    best_p_value: float

    @property
    def best_report(self) -> ExperimentReport:
        return self.by_lambda[self.best_lambda]


def run_lambda_sweep(
    samples,
    protocol: str,
    config: TrainingConfig,
    lambdas=LAMBDA_GRID,
    seeds=DEFAULT_SEEDS,
    train_ratio: float = 0.75,
    metric: str = "accuracy",
) -> SweepResult:
    """Vanilla baseline vs the adversarial trainer across the trade-off grid.

    The best trade-off maximizes the seed-mean of ``metric``; its report is
    compared against the baseline with a paired t-test.
    """
    baseline = run_experiment(samples, protocol, config, seeds, train_ratio, trainer="vanilla")
    by_lambda: dict[float, ExperimentReport] = {}
    for lam in lambdas:
        cfg = dataclasses.replace(config, adversarial=True, trade_off=float(lam))
        by_lambda[float(lam)] = run_experiment(samples, protocol, cfg, seeds, train_ratio, trainer="san")
    best = max(by_lambda, key=lambda lam: by_lambda[lam].summary["mean"][metric])
    p = compare_reports(by_lambda[best], baseline, metric=metric)
    return SweepResult(baseline=baseline, by_lambda=by_lambda, best_lambda=best, best_p_value=p)


# ---------------------------------------------------------------------------
# report files


def report_to_dict(report: ExperimentReport) -> dict:
    return {
        "fingerprint": report.fingerprint,
        "protocol": report.protocol,
        "trainer": report.trainer,
        "config": dataclasses.asdict(report.config),
        "train_ratio": report.train_ratio,
        "seeds": report.seeds,
        "per_seed": [
            {
                "seed": o.seed,
                "metrics": o.metrics,
                "per_event": o.per_event,
                "warm_metrics": o.warm_metrics,
            }
            for o in report.outcomes
        ],
        "summary": report.summary,
        "per_event_summary": report.per_event_summary,
    }


def report_from_dict(payload: dict) -> ExperimentReport:
    outcomes = [
        SeedOutcome(
            seed=int(entry["seed"]),
            metrics=entry["metrics"],
            per_event=entry.get("per_event"),
            warm_metrics=entry.get("warm_metrics"),
        )
        for entry in payload["per_seed"]
    ]
    return ExperimentReport(
        protocol=payload["protocol"],
        trainer=payload["trainer"],
        config=TrainingConfig(**payload["config"]),
        train_ratio=payload["train_ratio"],
        seeds=[int(s) for s in payload["seeds"]],
        outcomes=outcomes,
        fingerprint=payload["fingerprint"],
        summary=payload["summary"],
        per_event_summary=payload.get("per_event_summary"),
    )


def write_report(report: ExperimentReport, path) -> None:
    """One timestamp header line, then deterministic JSON."""
    stamp = datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
    body = json.dumps(report_to_dict(report), indent=2, sort_keys=True)
    Path(path).write_text(f"# generated {stamp}\n{body}\n")


def read_report(path) -> ExperimentReport:
    path = Path(path)
    if not path.exists():
        raise DataError(f"report file not found: {path}")
    lines = [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]
    try:
        payload = json.loads("\n".join(lines))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid report ({exc})") from exc
    return report_from_dict(payload)


def merge_reports(reports) -> ExperimentReport:
    """Combine per-seed reports produced under one fingerprint."""
    reports = list(reports)
    if not reports:
        raise DataError("no reports to merge")
    first = reports[0]
    outcomes: dict[int, SeedOutcome] = {}
    for rep in reports:
        if rep.fingerprint != first.fingerprint:
            raise DataError(
                f"cannot merge reports with different fingerprints: "
                f"{rep.fingerprint} vs {first.fingerprint}"
            )
        for o in rep.outcomes:
            if o.seed in outcomes:
                raise DataError(f"seed {o.seed} appears in more than one report")
            outcomes[o.seed] = o
    seeds = sorted(outcomes)
    ordered = [outcomes[s] for s in seeds]
    per_event_summary = None
    if first.protocol == "event":
        events = sorted(ordered[0].per_event)
        means = {ev: float(np.mean([o.per_event[ev] for o in ordered])) for ev in events}
        per_event_summary = {"events": means, "average": float(np.mean(list(means.values())))}
    return ExperimentReport(
        protocol=first.protocol,
        trainer=first.trainer,
        config=first.config,
        train_ratio=first.train_ratio,
        seeds=seeds,
        outcomes=ordered,
        fingerprint=first.fingerprint,
        summary=seed_summary({o.seed: o.metrics for o in ordered}),
        per_event_summary=per_event_summary,
    )


# ---------------------------------------------------------------------------
# embedding dumps


def dump_embeddings(params: ParamSets, samples, tags, path) -> None:
    """One JSON line per sample: id, split tag, label, and the hidden row."""
    samples = list(samples)
    tags = list(tags)
    if len(samples) != len(tags):
        raise DataError(f"got {len(samples)} samples but {len(tags)} tags")
    res = predict(params, samples)
    lines = []
    for s, tag, h in zip(samples, tags, res.hidden):
        lines.append(json.dumps({"id": s.id, "tag": tag, "label": s.label, "h": h.tolist()}))
    Path(path).write_text("\n".join(lines) + "\n")


def load_embeddings(path) -> list[dict]:
    out = []
    for line in Path(path).read_text().splitlines():
        if line.strip():
            rec = json.loads(line)
            rec["h"] = np.asarray(rec["h"], dtype=np.float64)
            out.append(rec)
    return out


def dump_split_embeddings(params: ParamSets, split, path) -> None:
    """Dump train-full, train-stripped, and cold test representations."""
    from .data import make_training_copies

    full, stripped = make_training_copies(split.train)
    cold_test = strip_propagation(split.test)
    samples = full + stripped + cold_test
    tags = (["train-full"] * len(full) + ["train-stripped"] * len(stripped)
            + ["test"] * len(cold_test))
    dump_embeddings(params, samples, tags, path)
