"""Command-line interface: generate, train, eval, gradcheck, report."""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import experiment as xp
from .data import load_corpus, save_corpus, split_event_aware, split_general, strip_propagation, write_split_descriptor
from .errors import ConfigError, DataError, DimensionError, NumericError, SanetError
from .models import ENCODER_KINDS, load_checkpoint, save_checkpoint
from .synthetic import SyntheticConfig, generate_synthetic, mean_depth_by_label
from .training import (
    LAMBDA_GRID,
    TrainingConfig,
    gradient_check_report,
    train_san,
    train_vanilla,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

GRADCHECK_TOLERANCE = 1e-4


@dataclass
class RunConfig:
    training: TrainingConfig = field(default_factory=TrainingConfig)
    synthetic: SyntheticConfig = field(default_factory=SyntheticConfig)
    protocol: str = "general"
    seeds: list[int] = field(default_factory=lambda: list(xp.DEFAULT_SEEDS))
    train_ratio: float = 0.75
    lambda_grid: list[float] = field(default_factory=lambda: list(LAMBDA_GRID))


def _apply_known(cls_instance, payload: dict, section: str):
    known = {f.name for f in dataclasses.fields(cls_instance)}
    unknown = set(payload) - known
    if unknown:
        raise ConfigError(f"unknown {section} config keys: {sorted(unknown)}")
    return dataclasses.replace(cls_instance, **payload)


def load_run_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        payload = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid config file ({exc})") from exc
    cfg = RunConfig()
    known = {"training", "synthetic", "protocol", "seeds", "train_ratio", "lambda_grid"}
    unknown = set(payload) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if "training" in payload:
        cfg.training = _apply_known(cfg.training, payload["training"], "training")
    if "synthetic" in payload:
        cfg.synthetic = _apply_known(cfg.synthetic, payload["synthetic"], "synthetic")
    cfg.protocol = payload.get("protocol", cfg.protocol)
    cfg.seeds = [int(s) for s in payload.get("seeds", cfg.seeds)]
    cfg.train_ratio = float(payload.get("train_ratio", cfg.train_ratio))
    cfg.lambda_grid = [float(v) for v in payload.get("lambda_grid", cfg.lambda_grid)]
    return cfg


def _bool_flag(value: str) -> bool:
    lowered = value.lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected true/false, got {value!r}")


def _warn(msg: str) -> None:
    print(f"warning: {msg}", file=sys.stderr)


def _override_training(cfg: TrainingConfig, args) -> TrainingConfig:
    updates = {}
    mapping = {
        "encoder": "encoder", "hidden_dim": "hidden_dim", "lr": "learning_rate",
        "trade_off": "trade_off", "epochs": "epochs", "batch_size": "batch_size",
        "seed": "seed", "adversarial": "adversarial", "grl_coeff": "grl_coeff",
        "grl_ramp_epochs": "grl_ramp_epochs",
        "validation_fraction": "validation_fraction", "patience": "patience",
    }
    for arg_name, field_name in mapping.items():
        value = getattr(args, arg_name, None)
        if value is not None:
            updates[field_name] = value
    return dataclasses.replace(cfg, **updates)


def _override_synthetic(cfg: SyntheticConfig, args) -> SyntheticConfig:
    updates = {}
    for name in ("n_samples", "fake_ratio", "d_in", "content_separation",
                 "structure_separation", "max_depth", "max_branching", "n_events"):
        value = getattr(args, name, None)
        if value is not None:
            updates[name] = value
    return dataclasses.replace(cfg, **updates)


def _add_training_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--encoder", choices=ENCODER_KINDS)
    parser.add_argument("--hidden-dim", dest="hidden_dim", type=int)
    parser.add_argument("--lr", type=float)
    parser.add_argument("--lambda", dest="trade_off", type=float)
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--batch-size", dest="batch_size", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--adversarial", type=_bool_flag)
    parser.add_argument("--grl-coeff", dest="grl_coeff", type=float)
    parser.add_argument("--grl-ramp-epochs", dest="grl_ramp_epochs", type=int)
    parser.add_argument("--validation-fraction", dest="validation_fraction", type=float)
    parser.add_argument("--patience", type=int)


def _check_lambda(trade_off: float, grid) -> None:
    if not any(abs(trade_off - g) < 1e-12 for g in grid):
        _warn(f"trade-off {trade_off} is outside the default search grid {list(grid)}")


def _resolve_run_config(args) -> RunConfig:
    cfg = load_run_config(args.config) if getattr(args, "config", None) else RunConfig()
    cfg.training = _override_training(cfg.training, args)
    cfg.synthetic = _override_synthetic(cfg.synthetic, args)
    if getattr(args, "protocol", None):
        cfg.protocol = args.protocol
    if getattr(args, "seeds", None):
        cfg.seeds = [int(s) for s in args.seeds.split(",")]
    if getattr(args, "train_ratio", None) is not None:
        cfg.train_ratio = args.train_ratio
    return cfg


# ---------------------------------------------------------------------------
# commands


def cmd_generate(args) -> int:
    cfg = _resolve_run_config(args)
    seed = args.seed if args.seed is not None else 0
    samples = generate_synthetic(cfg.synthetic, seed=seed)
    save_corpus(samples, args.out)
    n_fake = sum(1 for s in samples if s.label == "fake")
    depths = mean_depth_by_label(samples)
    events = sorted({s.event for s in samples if s.event is not None})
    per_event = {ev: sum(1 for s in samples if s.event == ev) for ev in events}
    print(f"wrote {len(samples)} samples to {args.out}")
    print(f"labels: fake={n_fake} real={len(samples) - n_fake}")
    print(f"events: {per_event}")
    print(f"mean depth: fake={depths['fake']:.3f} real={depths['real']:.3f}")
    return EXIT_OK


def _build_split(samples, cfg: RunConfig, args):
    protocol = xp.normalize_protocol(cfg.protocol)
    if protocol == "general":
        split_seed = args.split_seed if args.split_seed is not None else cfg.training.seed
        return split_general(samples, cfg.train_ratio, seed=split_seed)
    event = getattr(args, "held_out_event", None)
    if not event:
        raise ConfigError("event protocol needs --held-out-event")
    return split_event_aware(samples, event)


def cmd_train(args) -> int:
    cfg = _resolve_run_config(args)
    _check_lambda(cfg.training.trade_off, cfg.lambda_grid)
    samples = load_corpus(args.corpus)
    if not samples:
        raise DataError(f"corpus {args.corpus} is empty")
    split = _build_split(samples, cfg, args)
    if args.split_descriptor:
        write_split_descriptor(split, args.split_descriptor)
    trainer = train_vanilla if args.vanilla else train_san
    params, trace = trainer(split, cfg.training)
    provenance = {"training": dataclasses.asdict(cfg.training),
                  "protocol": cfg.protocol, "vanilla": bool(args.vanilla)}
    save_checkpoint(params, args.out, provenance=provenance)
    if args.trace:
        lines = [json.dumps({"provenance": provenance})]
        lines += [json.dumps(rec.as_dict()) for rec in trace]
        Path(args.trace).write_text("\n".join(lines) + "\n")
    last = trace[-1]
    print(f"trained {cfg.training.encoder} for {last.epoch} epochs; "
          f"final total loss {last.loss_total:.6f}")
    if last.val_accuracy is not None:
        best = max(r.val_accuracy for r in trace)
        print(f"best validation accuracy {best:.4f}")
    print(f"checkpoint written to {args.out}")
    return EXIT_OK


def _print_general_summary(report) -> None:
    mean = report.summary["mean"]
    print("protocol=general layout: Acc  ma-F1  F1-fake  F1-real")
    for outcome in report.outcomes:
        m = outcome.metrics
        print(f"seed {outcome.seed}: {m['accuracy']:.4f}  {m['macro_f1']:.4f}  "
              f"{m['f1_fake']:.4f}  {m['f1_real']:.4f}")
    print(f"mean:   {mean['accuracy']:.4f}  {mean['macro_f1']:.4f}  "
          f"{mean['f1_fake']:.4f}  {mean['f1_real']:.4f}")


def _print_event_summary(report) -> None:
    pes = report.per_event_summary
    events = sorted(pes["events"])
    header = "  ".join(events)
    print(f"protocol=event layout: Acc  weighted-F1 per event ({header})  Avg")
    mean = report.summary["mean"]
    row = "  ".join(f"{pes['events'][ev]:.4f}" for ev in events)
    print(f"mean: Acc={mean['accuracy']:.4f}  {row}  Avg={pes['average']:.4f}")


def cmd_eval(args) -> int:
    cfg = _resolve_run_config(args)
    samples = load_corpus(args.corpus)
    if not samples:
        raise DataError(f"corpus {args.corpus} is empty")
    protocol = xp.normalize_protocol(cfg.protocol)
    if protocol == "event" and any(s.event is None for s in samples):
        raise ConfigError("event protocol needs event tags on every corpus sample")

    if args.checkpoint:
        params = load_checkpoint(args.checkpoint)
        from .data import feature_dim

        if feature_dim(samples) != params.d_in:
            raise DimensionError(
                f"checkpoint expects d_in={params.d_in}, corpus has {feature_dim(samples)}")
        split = _build_split(samples, cfg, args)
        cold_test = strip_propagation(split.test)
        metrics = xp.evaluate_cold(params, cold_test)
        outcome = xp.SeedOutcome(seed=cfg.training.seed, metrics=metrics)
        report = xp.ExperimentReport(
            protocol=protocol, trainer="checkpoint", config=cfg.training,
            train_ratio=cfg.train_ratio if protocol == "general" else None,
            seeds=[cfg.training.seed], outcomes=[outcome],
            fingerprint=xp.config_fingerprint(
                cfg.training, protocol,
                cfg.train_ratio if protocol == "general" else None, "checkpoint"),
            summary={"mean": dict(metrics), "std": {k: 0.0 for k in metrics}},
        )
        if args.dump_embeddings:
            xp.dump_split_embeddings(params, split, args.dump_embeddings)
    elif args.sweep_lambda:
        _check_lambda(cfg.training.trade_off, cfg.lambda_grid)
        sweep = xp.run_lambda_sweep(
            samples, protocol, cfg.training, lambdas=cfg.lambda_grid,
            seeds=cfg.seeds, train_ratio=cfg.train_ratio)
        report = sweep.best_report
        print(f"baseline mean accuracy {sweep.baseline.summary['mean']['accuracy']:.4f}")
        for lam in sorted(sweep.by_lambda):
            acc = sweep.by_lambda[lam].summary["mean"]["accuracy"]
            print(f"lambda {lam}: mean accuracy {acc:.4f}")
        print(f"best lambda {sweep.best_lambda} (paired p={sweep.best_p_value:.6f})")
    else:
        trainer = "vanilla" if args.vanilla else "san"
        report = xp.run_experiment(
            samples, protocol, cfg.training, seeds=cfg.seeds,
            train_ratio=cfg.train_ratio, trainer=trainer, warm_metrics=args.warm)
        if args.dump_embeddings:
            split = _build_split(samples, cfg, args)
            params, _ = (train_vanilla if args.vanilla else train_san)(
                split, dataclasses.replace(cfg.training, seed=cfg.seeds[0]))
            xp.dump_split_embeddings(params, split, args.dump_embeddings)

    if report.protocol == "event" and report.per_event_summary is not None:
        _print_event_summary(report)
    else:
        _print_general_summary(report)
    if args.out:
        xp.write_report(report, args.out)
        print(f"report written to {args.out}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    kinds = list(ENCODER_KINDS) if args.encoder in (None, "all") else [args.encoder]
    seed = args.seed if args.seed is not None else 0
    trade_off = args.trade_off if args.trade_off is not None else 1.0
    report = gradient_check_report(
        encoder_kinds=kinds,
        d_in=args.d_in if args.d_in is not None else 6,
        hidden_dim=args.hidden_dim if args.hidden_dim is not None else 8,
        seed=seed,
        trade_off=trade_off,
        epsilon=args.epsilon,
        inject_fault=args.inject_fault,
    )
    failed = []
    for kind, err in report.items():
        verdict = "PASS" if err <= GRADCHECK_TOLERANCE else "FAIL"
        print(f"{kind:6s} max_rel_err={err:.3e}  {verdict}")
        if verdict == "FAIL":
            failed.append(kind)
    if failed:
        print(f"gradient check failed for: {', '.join(failed)}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_report(args) -> int:
    reports = [xp.read_report(p) for p in args.inputs]
    merged = xp.merge_reports(reports)
    if merged.protocol == "event" and merged.per_event_summary is not None:
        _print_event_summary(merged)
    else:
        _print_general_summary(merged)
    if args.out:
        xp.write_report(merged, args.out)
        print(f"merged report written to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sanet",
        description="Cold-start fake news detection with structure-adversarial training",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic cascade corpus")
    p.add_argument("--config", "-c")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", "-o", required=True)
    p.add_argument("--n-samples", dest="n_samples", type=int)
    p.add_argument("--fake-ratio", dest="fake_ratio", type=float)
    p.add_argument("--d-in", dest="d_in", type=int)
    p.add_argument("--content-separation", dest="content_separation", type=float)
    p.add_argument("--structure-separation", dest="structure_separation", type=float)
    p.add_argument("--max-depth", dest="max_depth", type=int)
    p.add_argument("--max-branching", dest="max_branching", type=int)
    p.add_argument("--n-events", dest="n_events", type=int)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train one model and write a checkpoint")
    p.add_argument("--corpus", required=True)
    p.add_argument("--config", "-c")
    p.add_argument("--out", "-o", required=True)
    p.add_argument("--trace")
    p.add_argument("--vanilla", action="store_true", help="train without the discriminator")
    p.add_argument("--protocol", choices=("general", "event", "event-aware"))
    p.add_argument("--train-ratio", dest="train_ratio", type=float)
    p.add_argument("--split-seed", dest="split_seed", type=int)
    p.add_argument("--held-out-event", dest="held_out_event")
    p.add_argument("--split-descriptor", dest="split_descriptor")
    _add_training_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="run the seed-averaged experiment or score a checkpoint")
    p.add_argument("--corpus", required=True)
    p.add_argument("--config", "-c")
    p.add_argument("--out", "-o")
    p.add_argument("--checkpoint")
    p.add_argument("--protocol", choices=("general", "event", "event-aware"))
    p.add_argument("--seeds", help="comma-separated seed list")
    p.add_argument("--train-ratio", dest="train_ratio", type=float)
    p.add_argument("--split-seed", dest="split_seed", type=int)
    p.add_argument("--held-out-event", dest="held_out_event")
    p.add_argument("--vanilla", action="store_true")
    p.add_argument("--warm", action="store_true", help="also report warm-test metrics")
    p.add_argument("--sweep-lambda", dest="sweep_lambda", action="store_true")
    p.add_argument("--dump-embeddings", dest="dump_embeddings")
    _add_training_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference check of the full objective")
    p.add_argument("--encoder", choices=ENCODER_KINDS + ("all",))
    p.add_argument("--seed", type=int)
    p.add_argument("--d-in", dest="d_in", type=int)
    p.add_argument("--hidden-dim", dest="hidden_dim", type=int)
    p.add_argument("--lambda", dest="trade_off", type=float)
    p.add_argument("--epsilon", type=float, default=1e-5)
    p.add_argument("--inject-fault", dest="inject_fault", action="store_true",
                   help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("report", help="merge per-seed report files")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--out", "-o")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, DimensionError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except SanetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
