import numpy as np
import pytest

from ruleminer.dataset import Dataset, LabeledString, SamplerConfig, sample_strings
from ruleminer.fsa import TPS, UnknownSymbolError, security_target
from ruleminer.rnn import (
    ModelConfig,
    RnnModel,
    TrainingDiverged,
    encode_one_hot,
    evaluate,
    forward,
    gradient_check,
    load_model,
    model_from_text,
    model_to_text,
    record_traces,
    save_model,
    train,
)


@pytest.fixture(scope="module")
def target():
    return security_target()


@pytest.fixture(scope="module")
def small_data(target):
    train_set = sample_strings(target, SamplerConfig(count=200, max_len=10, seed=31))
    test_set = sample_strings(
        target, SamplerConfig(count=400, max_len=10, seed=32),
        exclude=set(train_set.words()))
    return train_set, test_set


@pytest.fixture(scope="module")
def trained(target, small_data):
    train_set, test_set = small_data
    cfg = ModelConfig(cell="gru", hidden_size=4, input_size=3,
                      epochs=1200, learning_rate=0.02, seed=2)
    model = RnnModel.initialize(cfg, target.alphabet)
    report = train(model, train_set, test_set, eval_every=0)
    return model, report, train_set, test_set


def zero_model(cell="gru", hidden=4) -> RnnModel:
    cfg = ModelConfig(cell=cell, hidden_size=hidden, input_size=3, seed=0)
    model = RnnModel.initialize(cfg, TPS)
    model.params = {k: np.zeros_like(v) for k, v in model.params.items()}
    return model


# ---------------------------------------------------------------------------
# Encoding


@pytest.mark.parametrize("symbol,expected", [
    ("t", [1.0, 0.0, 0.0]),
    ("p", [0.0, 1.0, 0.0]),
    ("s", [0.0, 0.0, 1.0]),
])
def test_one_hot_positions(symbol, expected):
    assert encode_one_hot(symbol, TPS).tolist() == expected


def test_one_hot_unknown_symbol():
    with pytest.raises(UnknownSymbolError):
        encode_one_hot("x", TPS)


# ---------------------------------------------------------------------------
# Forward


def test_zero_model_outputs_half():
    prob, trace = forward(zero_model(), "tpst")
    assert prob == 0.5
    assert all(p == 0.5 for _, _, p in trace.steps)
    assert trace.prediction is False  # exactly 0.5 counts as reject


def test_forward_trace_shape(trained):
    model, _, _, _ = trained
    prob, trace = forward(model, "tps")
    assert len(trace.steps) == 3
    assert [s for s, _, _ in trace.steps] == ["t", "p", "s"]
    assert all(h.shape == (4,) for _, h, _ in trace.steps)
    assert 0.0 <= prob <= 1.0


def test_trained_model_accepts_secure_path(trained):
    model, _, _, _ = trained
    prob, _ = forward(model, "tps")
    assert prob > 0.5


def test_forward_is_pure(trained):
    model, _, _, _ = trained
    first_prob, first = forward(model, "tpsst")
    second_prob, second = forward(model, "tpsst")
    assert first_prob == second_prob
    for (s1, h1, p1), (s2, h2, p2) in zip(first.steps, second.steps):
        assert s1 == s2 and p1 == p2 and np.array_equal(h1, h2)


def test_forward_rejects_empty_word(trained):
    model, _, _, _ = trained
    with pytest.raises(ValueError):
        forward(model, "")


def test_gru_hidden_states_stay_bounded(trained):
    model, _, train_set, _ = trained
    for trace in record_traces(model, train_set)[:50]:
        for _, hidden, _ in trace.steps:
            assert np.all(np.abs(hidden) < 1.0)


# ---------------------------------------------------------------------------
# Training


def test_zero_epochs_leaves_model_unchanged(target, small_data):
    train_set, test_set = small_data
    cfg = ModelConfig(cell="gru", hidden_size=4, input_size=3, epochs=0, seed=5)
    model = RnnModel.initialize(cfg, target.alphabet)
    before = model_to_text(model)
    report = train(model, train_set, test_set)
    assert report.losses == []
    assert model_to_text(model) == before


def test_training_reduces_loss_and_test_error(trained):
    _, report, _, test_set = trained
    assert report.losses[-1] < report.losses[0]
    assert report.losses[-1] < 1e-2


def test_trained_model_is_accurate(trained):
    model, _, train_set, test_set = trained
    assert evaluate(model, train_set) == 0.0
    assert evaluate(model, test_set) <= 0.01


def test_training_is_deterministic(target, small_data):
    train_set, test_set = small_data
    cfg = ModelConfig(cell="lstm", hidden_size=4, input_size=3,
                      epochs=40, learning_rate=0.01, dropout=0.02, seed=9)
    reports = []
    for _ in range(2):
        model = RnnModel.initialize(cfg, target.alphabet)
        reports.append(train(model, train_set, test_set, eval_every=0))
    assert reports[0].losses == reports[1].losses
    assert reports[0].checksum == reports[1].checksum


def test_memorization_capacity(target):
    words = ["t", "p", "s", "tp", "ts", "pt", "ps", "st", "sp", "tt"]
    data = Dataset(TPS, [LabeledString(w, target.accepts(w)) for w in words])
    cfg = ModelConfig(cell="gru", hidden_size=8, input_size=3,
                      epochs=800, learning_rate=0.05, seed=1)
    model = RnnModel.initialize(cfg, target.alphabet)
    report = train(model, data, data, eval_every=0)
    assert report.losses[-1] < 1e-3


def test_checkpoints_snapshot_models(target, small_data):
    train_set, test_set = small_data
    cfg = ModelConfig(cell="gru", hidden_size=4, input_size=3,
                      epochs=30, learning_rate=0.01, seed=3)
    model = RnnModel.initialize(cfg, target.alphabet)
    report = train(model, train_set, test_set, checkpoints=(10, 30), eval_every=0)
    assert set(report.snapshots) == {10, 30}
    assert model_to_text(report.snapshots[30]) == model_to_text(model)
    assert model_to_text(report.snapshots[10]) != model_to_text(model)


def test_divergence_aborts_with_report(target, small_data):
    train_set, test_set = small_data
    cfg = ModelConfig(cell="gru", hidden_size=4, input_size=3, epochs=10, seed=4)
    model = RnnModel.initialize(cfg, target.alphabet)
    model.params["w_out"][:] = np.nan
    with pytest.raises(TrainingDiverged) as err:
        train(model, train_set, test_set)
    assert err.value.epoch == 1
    assert len(err.value.report.losses) == 1


def test_dropout_training_still_learns(target, small_data):
    train_set, test_set = small_data
    cfg = ModelConfig(cell="gru", hidden_size=8, input_size=3,
                      epochs=300, learning_rate=0.02, dropout=0.05, seed=6)
    model = RnnModel.initialize(cfg, target.alphabet)
    report = train(model, train_set, test_set, eval_every=0)
    assert report.losses[-1] < report.losses[0]


# ---------------------------------------------------------------------------
# Evaluation and traces


def test_constant_half_model_rejects_everything(target, small_data):
    train_set, _ = small_data
    fraction_positive = train_set.positive_fraction()
    assert evaluate(zero_model(), train_set) == pytest.approx(fraction_positive)


def test_record_traces_one_per_example(trained):
    model, _, train_set, _ = trained
    traces = record_traces(model, train_set)
    assert len(traces) == len(train_set)
    for trace, ex in zip(traces, train_set):
        assert trace.word == ex.word
        assert len(trace.steps) == len(ex.word)
        assert np.array_equal(trace.initial_hidden, np.zeros(4))


def test_record_traces_dropout_free_and_idempotent(target, small_data):
    train_set, _ = small_data
    cfg = ModelConfig(cell="gru", hidden_size=4, input_size=3,
                      epochs=20, learning_rate=0.01, dropout=0.10, seed=8)
    model = RnnModel.initialize(cfg, target.alphabet)
    train(model, train_set, train_set, eval_every=0)
    first = record_traces(model, train_set)
    second = record_traces(model, train_set)
    for a, b in zip(first, second):
        assert a.word == b.word
        for (s1, h1, p1), (s2, h2, p2) in zip(a.steps, b.steps):
            assert s1 == s2 and p1 == p2 and np.array_equal(h1, h2)


def test_traces_of_duplicate_words_are_identical(trained):
    model, _, _, _ = trained
    data = Dataset(TPS, [LabeledString("tps", True)])
    one = record_traces(model, data)[0]
    _, two = forward(model, "tps")
    for (s1, h1, p1), (s2, h2, p2) in zip(one.steps, two.steps):
        assert s1 == s2 and np.allclose(h1, h2) and p1 == pytest.approx(p2)


# ---------------------------------------------------------------------------
# Gradient checks


@pytest.mark.parametrize("cell", ["gru", "lstm"])
def test_gradient_check_small_models(cell):
    cfg = ModelConfig(cell=cell, hidden_size=4, input_size=3, seed=7)
    model = RnnModel.initialize(cfg, TPS)
    assert gradient_check(model, LabeledString("tpsts", True)) < 1e-4


@pytest.mark.parametrize("cell", ["gru", "lstm"])
def test_gradient_check_single_step(cell):
    cfg = ModelConfig(cell=cell, hidden_size=4, input_size=3, seed=12)
    model = RnnModel.initialize(cfg, TPS)
    assert gradient_check(model, LabeledString("p", False)) < 1e-6


# ---------------------------------------------------------------------------
# Config validation and model files


@pytest.mark.parametrize("kwargs", [
    {"cell": "elman"},
    {"dropout": 0.2},
    {"epochs": 6000},
    {"learning_rate": 0.0},
    {"hidden_size": 0},
])
def test_config_rejects_out_of_band_values(kwargs):
    with pytest.raises(ValueError):
        ModelConfig(**kwargs)


def test_model_file_round_trip(trained, tmp_path):
    model, _, train_set, _ = trained
    path = tmp_path / "model.txt"
    save_model(model, path)
    loaded = load_model(path)
    assert model_to_text(loaded) == model_to_text(model)
    for ex in train_set.examples[:20]:
        assert forward(loaded, ex.word)[0] == forward(model, ex.word)[0]


def test_model_text_rejects_bad_header():
    with pytest.raises(ValueError):
        model_from_text("not a model\n")
