"""Experiment orchestration, report files, merging, and embedding dumps."""

import dataclasses

import numpy as np
import pytest

from sanet.data import strip_propagation
from sanet.errors import DataError
from sanet.experiment import (
    compare_reports,
    config_fingerprint,
    dump_embeddings,
    dump_split_embeddings,
    evaluate_cold,
    load_embeddings,
    merge_reports,
    read_report,
    report_from_dict,
    report_to_dict,
    run_experiment,
    run_lambda_sweep,
    write_report,
)
from sanet.models import init_params
from sanet.synthetic import SyntheticConfig, generate_synthetic
from sanet.training import TrainingConfig

CFG = TrainingConfig(encoder="gcn", hidden_dim=8, learning_rate=0.05, epochs=3,
                     batch_size=8, validation_fraction=0.0)


@pytest.fixture(scope="module")
def corpus():
    return generate_synthetic(
        SyntheticConfig(n_samples=60, d_in=6, n_events=3, max_depth=3), seed=5)


def test_run_experiment_general_shape(corpus):
    report = run_experiment(corpus, "general", CFG, seeds=(0, 1), trainer="vanilla")
    assert report.seeds == [0, 1]
    assert len(report.outcomes) == 2
    for o in report.outcomes:
        assert set(o.metrics) == {"accuracy", "f1_fake", "f1_real", "macro_f1", "weighted_f1"}
    for name, mean in report.summary["mean"].items():
        values = [o.metrics[name] for o in report.outcomes]
        assert min(values) <= mean <= max(values)


def test_run_experiment_is_deterministic(corpus):
    a = run_experiment(corpus, "general", CFG, seeds=(0, 1))
    b = run_experiment(corpus, "general", CFG, seeds=(0, 1))
    assert report_to_dict(a) == report_to_dict(b)


def test_run_experiment_event_protocol(corpus):
    report = run_experiment(corpus, "event", CFG, seeds=(0,))
    assert report.per_event_summary is not None
    events = report.per_event_summary["events"]
    assert sorted(events) == ["e0", "e1", "e2"]
    assert report.per_event_summary["average"] == pytest.approx(
        np.mean(list(events.values())), abs=1e-12)
    assert report.outcomes[0].per_event is not None


def test_event_protocol_requires_tags(corpus):
    untagged = [dataclasses.replace(s, event=None) for s in corpus]
    with pytest.raises(DataError, match="event"):
        run_experiment(untagged, "event", CFG, seeds=(0,))


def test_unknown_protocol_rejected(corpus):
    with pytest.raises(DataError, match="protocol"):
        run_experiment(corpus, "sideways", CFG, seeds=(0,))


def test_evaluate_cold_refuses_propagation(corpus):
    params = init_params("gcn", 6, 8, seed=0)
    with pytest.raises(DataError, match="propagation"):
        evaluate_cold(params, corpus[:4])
    metrics = evaluate_cold(params, strip_propagation(corpus[:10]))
    assert 0.0 <= metrics["accuracy"] <= 1.0


def test_warm_metrics_flag(corpus):
    report = run_experiment(corpus, "general", CFG, seeds=(0,), warm_metrics=True)
    assert report.outcomes[0].warm_metrics is not None
    report2 = run_experiment(corpus, "general", CFG, seeds=(0,))
    assert report2.outcomes[0].warm_metrics is None


def test_compare_reports_requires_matching_seeds(corpus):
    a = run_experiment(corpus, "general", CFG, seeds=(0, 1))
    b = run_experiment(corpus, "general", CFG, seeds=(0, 2))
    with pytest.raises(DataError, match="seeds"):
        compare_reports(a, b)


def test_lambda_sweep_selects_best_mean(corpus):
    sweep = run_lambda_sweep(corpus, "general", CFG, lambdas=(0.1, 1.0), seeds=(0, 1))
    assert set(sweep.by_lambda) == {0.1, 1.0}
    means = {lam: rep.summary["mean"]["accuracy"] for lam, rep in sweep.by_lambda.items()}
    assert sweep.best_lambda == max(means, key=means.get)
    assert 0.0 <= sweep.best_p_value <= 1.0


def test_report_round_trip(tmp_path, corpus):
    report = run_experiment(corpus, "general", CFG, seeds=(0, 1))
    path = tmp_path / "report.json"
    write_report(report, path)
    first_line = path.read_text().splitlines()[0]
    assert first_line.startswith("# generated ")
    back = read_report(path)
    assert report_to_dict(back) == report_to_dict(report)


def test_report_bytes_deterministic_after_header(tmp_path, corpus):
    report = run_experiment(corpus, "general", CFG, seeds=(0,))
    p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
    write_report(report, p1)
    write_report(report, p2)
    body1 = p1.read_text().splitlines()[1:]
    body2 = p2.read_text().splitlines()[1:]
    assert body1 == body2


def test_merge_reports(tmp_path, corpus):
    full = run_experiment(corpus, "general", CFG, seeds=(0, 1, 2))
    parts = [run_experiment(corpus, "general", CFG, seeds=(s,)) for s in (0, 1, 2)]
    merged = merge_reports(parts)
    assert report_to_dict(merged) == report_to_dict(full)


def test_merge_rejects_mismatched_fingerprints(corpus):
    a = run_experiment(corpus, "general", CFG, seeds=(0,))
    other = dataclasses.replace(CFG, learning_rate=0.01)
    b = run_experiment(corpus, "general", other, seeds=(1,))
    with pytest.raises(DataError, match="fingerprint"):
        merge_reports([a, b])


def test_merge_rejects_duplicate_seeds(corpus):
    a = run_experiment(corpus, "general", CFG, seeds=(0,))
    with pytest.raises(DataError, match="seed 0"):
        merge_reports([a, a])


def test_fingerprint_sensitivity():
    a = config_fingerprint(CFG, "general", 0.75, "san")
    b = config_fingerprint(dataclasses.replace(CFG, trade_off=2.0), "general", 0.75, "san")
    c = config_fingerprint(CFG, "general", 0.75, "vanilla")
    assert a != b and a != c


def test_report_from_dict_round_trip(corpus):
    report = run_experiment(corpus, "event", CFG, seeds=(0,))
    payload = report_to_dict(report)
    again = report_to_dict(report_from_dict(payload))
    assert again == payload


# ---------------------------------------------------------------------------
# embedding dumps


def test_dump_embeddings_one_record_per_sample(tmp_path, corpus):
    params = init_params("gcn", 6, 8, seed=0)
    path = tmp_path / "emb.jsonl"
    dump_embeddings(params, corpus[:7], ["test"] * 7, path)
    records = load_embeddings(path)
    assert len(records) == 7
    assert all(r["h"].shape == (8,) for r in records)
    assert [r["id"] for r in records] == [s.id for s in corpus[:7]]


def test_dump_embeddings_round_trip_exact(tmp_path, corpus):
    params = init_params("gcn", 6, 8, seed=1)
    path = tmp_path / "emb.jsonl"
    samples = strip_propagation(corpus[:5])
    dump_embeddings(params, samples, ["test"] * 5, path)
    from sanet.training import predict

    hidden = predict(params, samples).hidden
    records = load_embeddings(path)
    for rec, row in zip(records, hidden):
        assert np.array_equal(rec["h"], row)


def test_dump_split_embeddings_tags(tmp_path, corpus):
    from sanet.data import split_general

    params = init_params("gcn", 6, 8, seed=0)
    split = split_general(corpus, 0.75, seed=0)
    path = tmp_path / "emb.jsonl"
    dump_split_embeddings(params, split, path)
    records = load_embeddings(path)
    tags = [r["tag"] for r in records]
    assert tags.count("train-full") == len(split.train)
    assert tags.count("train-stripped") == len(split.train)
    assert tags.count("test") == len(split.test)


def test_dump_embeddings_length_mismatch(tmp_path, corpus):
    params = init_params("gcn", 6, 8, seed=0)
    with pytest.raises(DataError):
        dump_embeddings(params, corpus[:3], ["a"], tmp_path / "x.jsonl")
