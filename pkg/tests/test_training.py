"""Losses, the adversarial coupling, training loops, and prediction."""

import dataclasses

import numpy as np
import pytest

from sanet import autodiff as ad
from sanet import training
from sanet.data import (
    DatasetSplit,
    NewsSample,
    SplitInfo,
    make_training_copies,
    split_general,
    strip_propagation,
)
from sanet.errors import ConfigError, DataError, NumericError
from sanet.models import ENCODER_KINDS, class_logits, disc_logits, encode_sample, init_params
from sanet.synthetic import SyntheticConfig, generate_synthetic
from sanet.training import (
    TrainingConfig,
    batch_objective,
    disc_value_objective,
    gradient_check_report,
    loss_cls,
    loss_disc,
    loss_san,
    predict,
    san_value_objective,
    total_loss,
    train_san,
    train_vanilla,
)

LN2 = 0.6931471805599453


def small_split(n=24, d_in=6, seed=0, n_events=2):
    corpus = generate_synthetic(
        SyntheticConfig(n_samples=n, d_in=d_in, n_events=n_events, max_depth=3), seed=seed
    )
    return split_general(corpus, 0.75, seed=seed)


def quick_config(**overrides):
    base = dict(encoder="gcn", hidden_dim=8, learning_rate=0.05, epochs=3,
                batch_size=8, seed=0, validation_fraction=0.0)
    base.update(overrides)
    return TrainingConfig(**base)


# ---------------------------------------------------------------------------
# loss functions


def test_loss_cls_uniform_is_ln2():
    assert loss_cls([0.5, 0.5], "fake") == pytest.approx(LN2, abs=1e-12)
    assert loss_cls([0.5, 0.5], "real") == pytest.approx(LN2, abs=1e-12)


def test_loss_cls_exact_match_is_zero():
    assert loss_cls([1.0, 0.0], "fake") == pytest.approx(0.0, abs=1e-10)


def test_loss_cls_high_precision_oracle():
    # -ln 0.9, frozen from a 30-digit evaluation
    assert loss_cls([0.9, 0.1], "fake") == pytest.approx(0.105360515657826301, abs=1e-15)


def test_loss_disc_values():
    assert loss_disc(0.5, 1) == pytest.approx(LN2, abs=1e-12)
    assert loss_disc(1.0, 1) == pytest.approx(0.0, abs=1e-10)
    # -ln 0.8, frozen from a 30-digit evaluation
    assert loss_disc(0.2, 0) == pytest.approx(0.223143551314209756, abs=1e-15)


def test_loss_san_is_difference():
    assert loss_san(0.7, 0.6) == pytest.approx(0.1, abs=1e-15)
    assert loss_san(0.42, 0.0) == 0.42


def test_total_loss_arithmetic():
    assert total_loss(0.1, 0.2, 2.0) == pytest.approx(0.5, abs=1e-15)
    assert total_loss(0.3, 123.0, 0.0) == 0.3
    assert total_loss(0.25, 0.5, 1.0) == total_loss(0.5, 0.25, 1.0)


def test_total_loss_affine_in_trade_off():
    # slope equals the stripped-copy constant
    c = 0.37
    lambdas = (0.1, 1.0, 1.5, 2.0, 5.0, 10.0)
    values = [total_loss(0.9, c, lam) for lam in lambdas]
    for (l1, v1), (l2, v2) in zip(zip(lambdas, values), zip(lambdas[1:], values[1:])):
        assert (v2 - v1) / (l2 - l1) == pytest.approx(c, abs=1e-12)


def test_total_loss_rejects_negative_trade_off():
    with pytest.raises(ConfigError):
        total_loss(0.1, 0.1, -1.0)


# ---------------------------------------------------------------------------
# adversarial coupling


@pytest.mark.parametrize("kind", ENCODER_KINDS)
def test_grl_reverses_encoder_gradient_exactly(kind):
    split = small_split()
    batch = split.train[:4]
    params = init_params(kind, 6, 8, seed=0)
    y_d = np.ones(len(batch), dtype=np.int64)

    def disc_loss(with_grl):
        rows = [encode_sample(params, s.x, s.tree).h for s in batch]
        h = ad.concat(rows, axis=0)
        if with_grl:
            logits = disc_logits(h, params, 1.0)
        else:
            logits = ad.affine(h, params.discriminator["w"], params.discriminator["b"])
        return ad.softmax_cross_entropy(logits, y_d)

    enc = params.encoder_params()
    disc = params.discriminator_params()
    ad.zero_grads(enc + disc)
    ad.backward(disc_loss(True))
    g_enc_rev = [p.grad.copy() for p in enc]
    g_disc_rev = [p.grad.copy() for p in disc]
    ad.zero_grads(enc + disc)
    ad.backward(disc_loss(False))
    for with_grl, plain in zip(g_enc_rev, (p.grad for p in enc)):
        assert np.max(np.abs(with_grl + plain)) <= 1e-12
    for with_grl, plain in zip(g_disc_rev, (p.grad for p in disc)):
        assert np.array_equal(with_grl, plain)
    ad.zero_grads(enc + disc)


def test_discriminator_step_decreases_its_loss_on_frozen_encoder():
    split = small_split()
    full, stripped = make_training_copies(split.train[:6])
    params = init_params("gcn", 6, 8, seed=1)
    config = quick_config()

    def value():
        return float(disc_value_objective(params, full, stripped, config).value)

    before = value()
    ad.zero_grads(params.all_params())
    ad.backward(disc_value_objective(params, full, stripped, config))
    ad.sgd_step(params.discriminator_params(), 0.01)
    assert value() < before


@pytest.mark.parametrize("kind", ENCODER_KINDS)
def test_full_objective_gradient_check_per_encoder(kind):
    report = gradient_check_report(encoder_kinds=[kind])
    assert report[kind] <= 1e-4


def test_training_graph_matches_value_graph_gradients():
    # the gradient-reversed optimization graph must reproduce the true
    # gradients of the objective value for encoder+classifier and of the
    # discriminator loss for the discriminator
    split = small_split()
    full, stripped = make_training_copies(split.train[:4])
    params = init_params("gcn", 6, 8, seed=2)
    config = quick_config(adversarial=True, trade_off=1.5)

    ad.zero_grads(params.all_params())
    graph, _ = batch_objective(params, full, stripped, config)
    ad.backward(graph)
    got = {n: t.grad.copy() for n, t in params.named()}

    ad.zero_grads(params.all_params())
    ad.backward(san_value_objective(params, full, stripped, config))
    for n, t in params.named():
        if not n.startswith("discriminator"):
            assert np.max(np.abs(got[n] - t.grad)) <= 1e-12, n

    ad.zero_grads(params.all_params())
    ad.backward(disc_value_objective(params, full, stripped, config))
    for n, t in params.named():
        if n.startswith("discriminator"):
            assert np.max(np.abs(got[n] - t.grad)) <= 1e-12, n
    ad.zero_grads(params.all_params())


def test_one_step_matches_hand_differentiated_tiny_model():
    # 1-dimensional mlp encoder, hand-set weights, batch of one sample,
    # lambda = 2; the oracle below spells out the chain rule term by term
    x = 0.8
    lam, eta = 2.0, 0.1
    a, b, c, d = 0.5, 0.1, 1.2, -0.3
    wf, bf = np.array([[0.7, -0.4]]), np.array([0.2, -0.1])
    wd, bd = np.array([[0.3, 0.5]]), np.array([0.0, 0.1])

    params = init_params("mlp", 1, 1, seed=0)
    for name, value in {
        "encoder.w1": [[a]], "encoder.b1": [b], "encoder.w2": [[c]], "encoder.b2": [d],
        "classifier.w": wf, "classifier.b": bf,
        "discriminator.w": wd, "discriminator.b": bd,
    }.items():
        dict(params.named())[name].value = np.asarray(value, dtype=np.float64)

    from sanet.data import PropagationTree, TreeNode

    tree = PropagationTree(
        nodes=[TreeNode("n0", 0, np.array([x])), TreeNode("n1", 1, np.array([x + 0.1]))],
        edges=[("n0", "n1")], root_id="n0",
    )
    sample = NewsSample(id="s", x=np.array([x]), label="fake", tree=tree)
    full, stripped = [sample], strip_propagation([sample])
    config = quick_config(encoder="mlp", trade_off=lam, adversarial=True)

    ad.zero_grads(params.all_params())
    graph, _ = batch_objective(params, full, stripped, config)
    ad.backward(graph)
    ad.sgd_step(params.all_params(), eta)

    # --- hand-computed oracle -------------------------------------------
    h1 = max(0.0, a * x + b)
    h = c * h1 + d
    act = 1.0 if a * x + b > 0 else 0.0

    def soft(u):
        e = np.exp(u - u.max())
        return e / e.sum()

    p = soft(h * wf[0] + bf)         # class probabilities, target fake = 0
    q = soft(h * wd[0] + bd)         # structure probabilities
    dce_du = p - np.array([1.0, 0.0])
    dld_dv_full = q - np.array([0.0, 1.0])   # structure label 1
    dld_dv_str = q - np.array([1.0, 0.0])    # structure label 0

    # classifier sees both copies (identical h for the mlp encoder)
    g_wf = (1 + lam) * h * dce_du
    g_bf = (1 + lam) * dce_du
    # discriminator descends its own loss on both copies
    g_wd = h * (dld_dv_full + lam * dld_dv_str)
    g_bd = dld_dv_full + lam * dld_dv_str
    # encoder: classification pulls, reversed discriminator pushes
    dce_dh = float(dce_du @ wf[0])
    dld_dh = float((dld_dv_full + lam * dld_dv_str) @ wd[0])
    dh_total = (1 + lam) * dce_dh - dld_dh
    g_c, g_d = dh_total * h1, dh_total
    g_a, g_b = dh_total * c * act * x, dh_total * c * act

    named = dict(params.named())
    assert named["encoder.w1"].value[0, 0] == pytest.approx(a - eta * g_a, abs=1e-12)
    assert named["encoder.b1"].value[0] == pytest.approx(b - eta * g_b, abs=1e-12)
    assert named["encoder.w2"].value[0, 0] == pytest.approx(c - eta * g_c, abs=1e-12)
    assert named["encoder.b2"].value[0] == pytest.approx(d - eta * g_d, abs=1e-12)
    assert np.allclose(named["classifier.w"].value, wf - eta * g_wf, atol=1e-12)
    assert np.allclose(named["classifier.b"].value, bf - eta * g_bf, atol=1e-12)
    assert np.allclose(named["discriminator.w"].value, wd - eta * g_wd, atol=1e-12)
    assert np.allclose(named["discriminator.b"].value, bd - eta * g_bd, atol=1e-12)


# ---------------------------------------------------------------------------
# training loops


def test_vanilla_reduction_is_bitwise_identical():
    split = small_split()
    config = quick_config(epochs=10, validation_fraction=0.1)
    trajectory_a, trajectory_b = [], []
    san_cfg = dataclasses.replace(config, adversarial=False, trade_off=0.0)
    pa, _ = train_san(split, san_cfg, on_epoch=lambda e, p: trajectory_a.append(
        {n: t.value.tobytes() for n, t in p.named()}))
    pb, _ = train_vanilla(split, config, on_epoch=lambda e, p: trajectory_b.append(
        {n: t.value.tobytes() for n, t in p.named()}))
    assert len(trajectory_a) == len(trajectory_b)
    for snap_a, snap_b in zip(trajectory_a, trajectory_b):
        assert snap_a == snap_b
    for (n, ta), (_, tb) in zip(pa.named(), pb.named()):
        assert ta.value.tobytes() == tb.value.tobytes(), n


def test_training_is_deterministic_per_seed():
    split = small_split()
    config = quick_config(epochs=4, adversarial=True, validation_fraction=0.1)
    pa, tra = train_san(split, config)
    pb, trb = train_san(split, config)
    for (n, ta), (_, tb) in zip(pa.named(), pb.named()):
        assert ta.value.tobytes() == tb.value.tobytes(), n
    assert [r.as_dict() for r in tra] == [r.as_dict() for r in trb]


def test_vanilla_loss_trace_non_increasing_on_separable_data():
    # linearly separable 20-sample set; epoch-mean loss must go down
    rng = np.random.default_rng(0)
    samples = []
    for i in range(20):
        label = "fake" if i < 10 else "real"
        x = rng.normal(0, 0.1, 4) + (2.0 if label == "fake" else -2.0)
        samples.append(NewsSample(id=f"s{i}", x=x, label=label))
    split = DatasetSplit(train=samples, test=[], provenance=SplitInfo(kind="general"))
    config = quick_config(encoder="mlp", hidden_dim=4, learning_rate=0.01,
                          epochs=12, batch_size=20)
    _, trace = train_vanilla(split, config)
    losses = [r.loss_cls_full for r in trace]
    assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))


def test_zero_epochs_is_a_config_error():
    split = small_split()
    with pytest.raises(ConfigError, match="epochs"):
        train_vanilla(split, quick_config(epochs=0))


def test_zero_learning_rate_keeps_initial_parameters():
    split = small_split()
    config = quick_config(learning_rate=0.0, epochs=3)
    params, _ = train_vanilla(split, config)
    from sanet.data import feature_dim

    init = init_params(config.encoder, feature_dim(split.train), config.hidden_dim, config.seed)
    for (n, t), (_, t0) in zip(params.named(), init.named()):
        assert t.value.tobytes() == t0.value.tobytes(), n


def test_empty_training_set_rejected():
    split = DatasetSplit(train=[], test=[], provenance=SplitInfo(kind="general"))
    with pytest.raises(DataError, match="empty"):
        train_san(split, quick_config())


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_loss_aborts_with_diagnostic(monkeypatch):
    split = small_split()

    def bad_init(kind, d_in, d_h, seed):
        params = init_params(kind, d_in, d_h, seed)
        params.classifier["b"].value[0] = np.inf
        return params

    monkeypatch.setattr(training, "init_params", bad_init)
    with pytest.raises(NumericError, match="non-finite"):
        train_san(split, quick_config())


def test_early_stopping_respects_patience():
    split = small_split(n=40)
    config = quick_config(epochs=100, validation_fraction=0.2, patience=3,
                          learning_rate=0.0)  # accuracy can never improve
    _, trace = train_san(split, config)
    assert len(trace) < 100


def test_batches_pair_full_and_stripped_ids(monkeypatch):
    split = small_split()
    seen = []
    real = training.batch_objective

    def spy(params, full, stripped, config, **kw):
        seen.append((tuple(s.id for s in full), tuple(s.id for s in stripped)))
        return real(params, full, stripped, config, **kw)

    monkeypatch.setattr(training, "batch_objective", spy)
    train_san(split, quick_config(epochs=1, adversarial=True, batch_size=4))
    assert seen
    for full_ids, stripped_ids in seen:
        assert full_ids == stripped_ids
        assert len(full_ids) >= 1


def test_trace_components_satisfy_loss_bundle_identity():
    split = small_split()
    config = quick_config(epochs=3, adversarial=True, trade_off=1.5)
    _, trace = train_san(split, config)
    for rec in trace:
        assert rec.loss_cls_full >= 0 and rec.loss_cls_stripped >= 0
        assert rec.loss_disc_full >= 0 and rec.loss_disc_stripped >= 0
        san_full = rec.loss_cls_full - rec.loss_disc_full
        san_str = rec.loss_cls_stripped - rec.loss_disc_stripped
        assert rec.loss_total == pytest.approx(san_full + 1.5 * san_str, abs=1e-9)


# ---------------------------------------------------------------------------
# prediction


def test_predict_tie_breaks_toward_fake():
    params = init_params("mlp", 2, 4, seed=0)
    for name, t in params.named():
        if name.startswith("classifier"):
            t.value = np.zeros_like(t.value)  # uniform probabilities
    res = predict(params, [NewsSample(id="s", x=np.array([1.0, 2.0]), label="real")])
    assert np.allclose(res.probabilities[0], [0.5, 0.5])
    assert res.labels == ["fake"]


def test_predict_handles_cold_and_full_samples():
    split = small_split()
    params, _ = train_san(split, quick_config(epochs=2))
    cold = strip_propagation(split.test)
    res = predict(params, cold + split.test)
    n = len(cold)
    assert res.probabilities.shape == (2 * n, 2)
    assert np.allclose(res.probabilities.sum(axis=1), 1.0, atol=1e-9)
    assert res.has_structure == [False] * n + [True] * n
    assert res.hidden.shape == (2 * n, 8)


def test_predict_full_equals_stripped_when_structure_is_irrelevant():
    # zero message-passing weights collapse every graph to the same zero
    # representation, so the full sample and its stripped twin must agree
    split = small_split()
    params = init_params("gcn", 6, 8, seed=0)
    params.encoder["w1"].value = np.zeros_like(params.encoder["w1"].value)
    params.encoder["w2"].value = np.zeros_like(params.encoder["w2"].value)
    full = split.train[:5]
    stripped = strip_propagation(full)
    res_full = predict(params, full)
    res_str = predict(params, stripped)
    assert res_full.labels == res_str.labels
    assert np.array_equal(res_full.probabilities, res_str.probabilities)


def test_predict_rejects_dimension_mismatch():
    params = init_params("mlp", 3, 4, seed=0)
    from sanet.errors import DimensionError

    with pytest.raises(DimensionError):
        predict(params, [NewsSample(id="s", x=np.zeros(5), label="fake")])
