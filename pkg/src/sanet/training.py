"""Adversarial and vanilla training loops over propagation-tree corpora.

Each training batch pairs every sampled item's full variant (structure
label 1) with its propagation-stripped twin (structure label 0). The
encoder simultaneously minimizes the detection loss and, through the
gradient reversal between encoder and discriminator, maximizes the
discriminator loss, so a single backward pass realizes the update rules:
the discriminator descends its own loss while the encoder ascends it.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .data import LABELS, DatasetSplit, feature_dim, label_index, make_training_copies
from .errors import ConfigError, DataError, NumericError
from .models import ParamSets, class_logits, disc_logits, encode_batch, encode_sample, init_params

LAMBDA_GRID = (0.1, 1.0, 1.5, 2.0, 5.0, 10.0)
_CLAMP = 1e-12


@dataclass
class TrainingConfig:
    encoder: str = "gcn"
    hidden_dim: int = 64
    learning_rate: float = 0.001
    trade_off: float = 1.0  # weight of the stripped-copy objective
    epochs: int = 200
    batch_size: int = 16
    seed: int = 0
    adversarial: bool = True
    grl_coeff: float = 1.0
    grl_ramp_epochs: int = 0  # 0 keeps the coefficient constant
    validation_fraction: float = 0.1
    patience: int = 30

    def validate(self) -> None:
        # learning_rate 0 is allowed: it degenerates to a no-op trainer,
        # which keeps "zero step leaves parameters at init" testable
        if self.learning_rate < 0:
            raise ConfigError(f"learning_rate must be nonnegative, got {self.learning_rate}")
        if self.trade_off < 0:
            raise ConfigError(f"trade_off must be nonnegative, got {self.trade_off}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be at least 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be positive, got {self.batch_size}")
        if self.grl_coeff < 0:
            raise ConfigError(f"grl_coeff must be nonnegative, got {self.grl_coeff}")
        if self.grl_ramp_epochs < 0:
            raise ConfigError(f"grl_ramp_epochs must be nonnegative, got {self.grl_ramp_epochs}")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ConfigError(f"validation_fraction must lie in [0, 1), got {self.validation_fraction}")
        if self.patience < 1:
            raise ConfigError(f"patience must be positive, got {self.patience}")


@dataclass
class EpochRecord:
    epoch: int
    loss_cls_full: float
    loss_cls_stripped: float
    loss_disc_full: float
    loss_disc_stripped: float
    loss_total: float
    val_accuracy: float | None

    def as_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "loss_cls_full": self.loss_cls_full,
            "loss_cls_stripped": self.loss_cls_stripped,
            "loss_disc_full": self.loss_disc_full,
            "loss_disc_stripped": self.loss_disc_stripped,
            "loss_total": self.loss_total,
            "val_accuracy": self.val_accuracy,
        }


@dataclass(eq=False)
class PredictionResult:
    labels: list[str]
    probabilities: np.ndarray  # n x 2, columns (fake, real)
    hidden: np.ndarray  # n x d_h
    has_structure: list[bool]


# ---------------------------------------------------------------------------
# losses


def loss_cls(y_hat, y) -> float:
    """Mean cross-entropy of predicted class probabilities vs true labels."""
    p = np.clip(np.asarray(y_hat, dtype=np.float64), _CLAMP, 1.0 - _CLAMP)
    if p.ndim == 1:
        p = p[None, :]
    idx = np.asarray([label_index(v) if isinstance(v, str) else int(v) for v in np.atleast_1d(y)])
    return float(-np.log(p[np.arange(len(idx)), idx]).mean())


def loss_disc(y_hat_d, y_d) -> float:
    """Mean binary cross-entropy of structure predictions vs structure labels."""
    p = np.clip(np.asarray(y_hat_d, dtype=np.float64).reshape(-1), _CLAMP, 1.0 - _CLAMP)
    t = np.asarray(y_d, dtype=np.float64).reshape(-1)
    return float(-(t * np.log(p) + (1.0 - t) * np.log(1.0 - p)).mean())


def loss_san(l_cls: float, l_d: float) -> float:
    """Adversarial objective value: classification loss minus discriminator loss."""
    return l_cls - l_d


def total_loss(san_full: float, san_stripped: float, trade_off: float) -> float:
    """Two-copy combination: full objective plus trade_off times stripped."""
    if trade_off < 0:
        raise ConfigError(f"trade_off must be nonnegative, got {trade_off}")
    return san_full + trade_off * san_stripped


# ---------------------------------------------------------------------------
# forward helpers


def _labels(samples) -> np.ndarray:
    return np.array([label_index(s.label) for s in samples], dtype=np.int64)


def grl_coefficient(config: TrainingConfig, epoch: int) -> float:
    """Reversal strength at a given epoch; linear warm-up when ramped."""
    if config.grl_ramp_epochs <= 0:
        return config.grl_coeff
    return config.grl_coeff * min(1.0, epoch / config.grl_ramp_epochs)


def batch_objective(params: ParamSets, full, stripped, config: TrainingConfig, grl_coeff=None):
    """Build the optimization graph for one paired batch.

    Returns (graph loss tensor, component dict). The graph uses the
    gradient-reversed discriminator path, so descending it applies the
    sign-flipped encoder update while the discriminator still descends.
    """
    coeff = config.grl_coeff if grl_coeff is None else grl_coeff
    targets = _labels(full)
    h_full = encode_batch(params, full)
    ce_full = ad.softmax_cross_entropy(class_logits(h_full, params), targets)
    parts = {"loss_cls_full": float(ce_full.value), "loss_cls_stripped": 0.0,
             "loss_disc_full": 0.0, "loss_disc_stripped": 0.0}
    graph = ce_full
    if config.adversarial:
        d_full = ad.softmax_cross_entropy(
            disc_logits(h_full, params, coeff), np.ones(len(full), dtype=np.int64))
        parts["loss_disc_full"] = float(d_full.value)
        graph = ad.add(graph, d_full)
    if config.trade_off > 0:
        h_str = encode_batch(params, stripped)
        ce_str = ad.softmax_cross_entropy(class_logits(h_str, params), targets)
        parts["loss_cls_stripped"] = float(ce_str.value)
        stripped_graph = ce_str
        if config.adversarial:
            d_str = ad.softmax_cross_entropy(
                disc_logits(h_str, params, coeff), np.zeros(len(stripped), dtype=np.int64))
            parts["loss_disc_stripped"] = float(d_str.value)
            stripped_graph = ad.add(stripped_graph, d_str)
        graph = ad.add(graph, ad.scale(stripped_graph, config.trade_off))
    san_full = loss_san(parts["loss_cls_full"], parts["loss_disc_full"])
    san_str = loss_san(parts["loss_cls_stripped"], parts["loss_disc_stripped"])
    parts["loss_total"] = total_loss(san_full, san_str, config.trade_off)
    return graph, parts


def san_value_objective(params: ParamSets, full, stripped, config: TrainingConfig) -> ad.Tensor:
    """The two-copy objective as a plain value graph (no gradient reversal).

    Its tape gradient w.r.t. encoder and classifier parameters is the true
    derivative of the adversarial objective, which is what the encoder
    update descends; use it to verify those parameter groups against
    finite differences.
    """
    targets = _labels(full)

    def copy_term(batch, y_d):
        h = encode_batch(params, batch)
        ce = ad.softmax_cross_entropy(class_logits(h, params), targets)
        d = ad.softmax_cross_entropy(
            ad.affine(h, params.discriminator["w"], params.discriminator["b"]),
            np.full(len(batch), y_d, dtype=np.int64))
        return ad.sub(ce, d)

    graph = copy_term(full, 1)
    if config.trade_off > 0:
        graph = ad.add(graph, ad.scale(copy_term(stripped, 0), config.trade_off))
    return graph


def disc_value_objective(params: ParamSets, full, stripped, config: TrainingConfig) -> ad.Tensor:
    """Discriminator loss over both copies; the quantity its own update descends."""

    def term(batch, y_d):
        h = encode_batch(params, batch)
        return ad.softmax_cross_entropy(
            ad.affine(h, params.discriminator["w"], params.discriminator["b"]),
            np.full(len(batch), y_d, dtype=np.int64))

    graph = term(full, 1)
    if config.trade_off > 0:
        graph = ad.add(graph, ad.scale(term(stripped, 0), config.trade_off))
    return graph


def _corrupted(t: ad.Tensor) -> ad.Tensor:
    """Identity with a deliberately wrong gradient (fault-injection hook)."""
    out = ad.scale(t, 1.0)
    original = out._push

    def push(g):
        original(g * 1.01)

    if out._push is not None:
        out._push = push
    return out


def gradient_check_report(
    encoder_kinds=None,
    d_in: int = 6,
    hidden_dim: int = 8,
    seed: int = 0,
    trade_off: float = 1.0,
    epsilon: float = 1e-5,
    inject_fault: bool = False,
) -> dict[str, float]:
    """Max relative gradient error of the full objective per encoder kind.

    Checks encoder+classifier parameters against the objective value and
    discriminator parameters against the discriminator loss, on a seeded
    4-sample batch processed into the usual two copies. Central differences
    are only meaningful away from relu kinks, so the default seed is one
    whose batch keeps all pre-activations clear of zero.
    """
    from .models import ENCODER_KINDS
    from .synthetic import SyntheticConfig, generate_synthetic

    kinds = list(encoder_kinds) if encoder_kinds else list(ENCODER_KINDS)
    corpus = generate_synthetic(
        SyntheticConfig(n_samples=4, d_in=d_in, max_depth=3, max_branching=2, n_events=1),
        seed=seed,
    )
    full, stripped = make_training_copies(corpus)
    config = TrainingConfig(hidden_dim=hidden_dim, trade_off=trade_off, seed=seed)
    report: dict[str, float] = {}
    for kind in kinds:
        params = init_params(kind, d_in, hidden_dim, seed)

        def san_loss():
            graph = san_value_objective(params, full, stripped, config)
            return _corrupted(graph) if inject_fault else graph

        def disc_loss():
            return disc_value_objective(params, full, stripped, config)

        err_main = ad.finite_difference_check(
            san_loss, params.encoder_params() + params.classifier_params(), epsilon)
        err_disc = ad.finite_difference_check(disc_loss, params.discriminator_params(), epsilon)
        report[kind] = max(err_main, err_disc)
    return report


def _accuracy(params: ParamSets, samples) -> float:
    preds = predict(params, samples)
    truth = [s.label for s in samples]
    return float(np.mean([p == t for p, t in zip(preds.labels, truth)]))


# ---------------------------------------------------------------------------
# training loops


def _train(train_samples, config: TrainingConfig, on_epoch=None) -> tuple[ParamSets, list[EpochRecord]]:
    config.validate()
    train_samples = list(train_samples)
    if not train_samples:
        raise DataError("training set is empty")
    d_in = feature_dim(train_samples)
    params = init_params(config.encoder, d_in, config.hidden_dim, config.seed)

    seq = np.random.SeedSequence(config.seed)
    val_rng, batch_rng = (np.random.default_rng(s) for s in seq.spawn(2))

    n = len(train_samples)
    n_val = int(n * config.validation_fraction)
    perm = val_rng.permutation(n)
    val_set = [train_samples[i] for i in perm[:n_val]]
    fit_set = [train_samples[i] for i in perm[n_val:]]
    if not fit_set:
        raise DataError("validation split left no training samples")
    # a structure-aware trainer selects its checkpoint under the cold
    # deployment condition; the plain trainer validates on what it trains on
    cold_aware = config.adversarial or config.trade_off > 0
    val_used = make_training_copies(val_set)[1] if cold_aware else val_set

    full, stripped = make_training_copies(fit_set)
    active = params.encoder_params() + params.classifier_params()
    if config.adversarial:
        active += params.discriminator_params()

    trace: list[EpochRecord] = []
    best_params = None
    best_acc = -1.0
    best_epoch = 0
    for epoch in range(1, config.epochs + 1):
        order = batch_rng.permutation(len(full))
        coeff = grl_coefficient(config, epoch)
        sums = {"loss_cls_full": 0.0, "loss_cls_stripped": 0.0,
                "loss_disc_full": 0.0, "loss_disc_stripped": 0.0, "loss_total": 0.0}
        for start in range(0, len(order), config.batch_size):
            idx = order[start:start + config.batch_size]
            batch_full = [full[i] for i in idx]
            batch_str = [stripped[i] for i in idx]
            ad.zero_grads(active)
            graph, parts = batch_objective(params, batch_full, batch_str, config, grl_coeff=coeff)
            if not np.isfinite(parts["loss_total"]):
                raise NumericError(
                    f"non-finite loss at epoch {epoch}: {parts}; aborting training"
                )
            ad.backward(graph)
            ad.sgd_step(active, config.learning_rate)
            for key in sums:
                sums[key] += parts[key] * len(idx)
        means = {key: sums[key] / len(full) for key in sums}
        val_acc = _accuracy(params, val_used) if val_used else None
        trace.append(EpochRecord(epoch=epoch, val_accuracy=val_acc, **means))
        if on_epoch is not None:
            on_epoch(epoch, params)
        if val_used:
            if val_acc > best_acc:
                best_acc, best_epoch, best_params = val_acc, epoch, params.copy()
            elif epoch - best_epoch >= config.patience:
                break
    final = best_params if best_params is not None else params
    ad.zero_grads(final.all_params())
    return final, trace


def train_san(split: DatasetSplit, config: TrainingConfig, on_epoch=None) -> tuple[ParamSets, list[EpochRecord]]:
    """Two-copy adversarial training on the split's training set."""
    return _train(split.train, config, on_epoch=on_epoch)


def train_vanilla(split: DatasetSplit, config: TrainingConfig, on_epoch=None) -> tuple[ParamSets, list[EpochRecord]]:
    """Plain cross-entropy training on full samples only (no discriminator)."""
    cfg = dataclasses.replace(config, adversarial=False, trade_off=0.0)
    return _train(split.train, cfg, on_epoch=on_epoch)


def predict(params: ParamSets, samples) -> PredictionResult:
    """Class predictions, probabilities, and hidden rows for any sample mix.

    Ties in the probability vector resolve toward class index 0 (fake).
    """
    samples = list(samples)
    labels: list[str] = []
    probs = np.zeros((len(samples), 2))
    hidden = np.zeros((len(samples), params.d_h))
    flags: list[bool] = []
    for i, s in enumerate(samples):
        rep = encode_sample(params, s.x, s.tree)
        p = ad.softmax(class_logits(rep.h, params).value)[0]
        probs[i] = p
        hidden[i] = rep.h.value[0]
        labels.append(LABELS[int(np.argmax(p))])
        flags.append(rep.has_structure)
    return PredictionResult(labels=labels, probabilities=probs, hidden=hidden, has_structure=flags)
