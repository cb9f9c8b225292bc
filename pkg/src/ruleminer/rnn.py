"""Small recurrent binary classifiers over path words.

GRU and LSTM cells implemented directly in numpy with full-batch
backpropagation through time. Words are fed one one-hot symbol per step and
only the final hidden state drives the classification logit; the per-step
output probabilities are still recorded because the machine extractor
consumes them as transition outputs.
"""

from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset, LabeledString
from .fsa import Alphabet, UnknownSymbolError
from .seeding import derive_seed

GATE_COUNT = {"gru": 3, "lstm": 4}


class TrainingDiverged(RuntimeError):
    """Loss became non-finite; carries the partial report for diagnosis."""

    def __init__(self, epoch: int, report: "TrainReport"):
        super().__init__(f"non-finite training loss at epoch {epoch}")
        self.epoch = epoch
        self.report = report


class ModelFormatError(ValueError):
    """Malformed model text file."""


@dataclass(frozen=True)
class ModelConfig:
    cell: str = "gru"
    hidden_size: int = 8
    input_size: int = 3
    dropout: float = 0.0
    epochs: int = 5000
    learning_rate: float = 0.01
    seed: int = 0

    def __post_init__(self) -> None:
        if self.cell not in GATE_COUNT:
            raise ValueError(f"cell must be one of {sorted(GATE_COUNT)}, got {self.cell!r}")
        if self.hidden_size < 1 or self.input_size < 1:
            raise ValueError("hidden_size and input_size must be positive")
        if not 0.0 <= self.dropout <= 0.10:
            raise ValueError("dropout must lie in [0, 0.10]")
        if not 0 <= self.epochs <= 5000:
            raise ValueError("epochs must lie in [0, 5000]")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


@dataclass
class TraceRecord:
    """Per-step recording of one inference run.

    ``steps`` holds one (input symbol, post-step hidden state, output
    probability) tuple per consumed symbol; ``initial_hidden`` is the state
    the run started from (the zero vector for freshly evaluated models).
    """

    word: str
    steps: list[tuple[str, np.ndarray, float]]
    prediction: bool
    initial_hidden: np.ndarray


@dataclass
class TrainReport:
    losses: list[float] = field(default_factory=list)
    test_history: list[tuple[int, float]] = field(default_factory=list)
    wall_clock: float = 0.0
    checksum: str = ""
    snapshots: dict[int, "RnnModel"] = field(default_factory=dict)
    timed_out: bool = False
    stopped_epoch: int = 0


@dataclass
class RnnModel:
    """Cell weights plus the scalar output head.

    Parameters are gate-stacked: ``w_x`` is (G*N, L), ``w_h`` is (G*N, N)
    and ``b`` is (G*N,) with G gates in order z, r, c for GRU and
    i, f, g, o for LSTM. The head maps the final hidden state to one logit.
    """

    config: ModelConfig
    alphabet: Alphabet
    params: dict[str, np.ndarray]

    @classmethod
    def initialize(cls, config: ModelConfig, alphabet: Alphabet) -> "RnnModel":
        if len(alphabet) != config.input_size:
            raise ValueError("config.input_size must match the alphabet size")
        rng = np.random.default_rng(config.seed)
        n, l = config.hidden_size, config.input_size
        g = GATE_COUNT[config.cell]
        # uniform init scaled by each matrix's fan-in
        params = {
            "w_x": rng.uniform(-1, 1, (g * n, l)) / np.sqrt(l),
            "w_h": rng.uniform(-1, 1, (g * n, n)) / np.sqrt(n),
            "b": rng.uniform(-1, 1, g * n) / np.sqrt(n),
            "w_out": rng.uniform(-1, 1, n) / np.sqrt(n),
            "b_out": rng.uniform(-1, 1, 1) / np.sqrt(n),
        }
        return cls(config, alphabet, params)

    def copy(self) -> "RnnModel":
        return RnnModel(self.config, self.alphabet,
                        {k: v.copy() for k, v in self.params.items()})


PARAM_ORDER = ("w_x", "w_h", "b", "w_out", "b_out")


def encode_one_hot(symbol: str, alphabet: Alphabet) -> np.ndarray:
    vec = np.zeros(len(alphabet))
    vec[alphabet.index(symbol)] = 1.0
    return vec


def _encode_words(words: list[str], alphabet: Alphabet) -> np.ndarray:
    """(B, T, L) one-hot tensor for same-length words."""
    t = len(words[0])
    x = np.zeros((len(words), t, len(alphabet)))
    for i, w in enumerate(words):
        for j, symbol in enumerate(w):
            x[i, j, alphabet.index(symbol)] = 1.0
    return x


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _bce(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    # numerically stable BCE on logits
    return np.maximum(logits, 0.0) - logits * labels + np.log1p(np.exp(-np.abs(logits)))


# ---------------------------------------------------------------------------
# Cell forward/backward over a (B, T, L) batch


def _forward_steps(model: RnnModel, x: np.ndarray):
    """Run the cell over all timesteps; returns per-step hidden states
    (B, T, N) and the cache needed for the backward pass."""
    cfg = model.config
    n = cfg.hidden_size
    b_sz, t_len, _ = x.shape
    p = model.params
    h = np.zeros((b_sz, n))
    hs = np.empty((b_sz, t_len, n))
    cache = []
    if cfg.cell == "gru":
        wz, wr, wc = p["w_x"][:n], p["w_x"][n:2 * n], p["w_x"][2 * n:]
        uz, ur, uc = p["w_h"][:n], p["w_h"][n:2 * n], p["w_h"][2 * n:]
        bz, br, bc = p["b"][:n], p["b"][n:2 * n], p["b"][2 * n:]
        for t in range(t_len):
            xt = x[:, t]
            z = _sigmoid(xt @ wz.T + h @ uz.T + bz)
            r = _sigmoid(xt @ wr.T + h @ ur.T + br)
            c = np.tanh(xt @ wc.T + (r * h) @ uc.T + bc)
            h_new = (1.0 - z) * h + z * c
            cache.append((xt, h, z, r, c))
            h = h_new
            hs[:, t] = h
    else:
        c_state = np.zeros((b_sz, n))
        for t in range(t_len):
            xt = x[:, t]
            a = xt @ p["w_x"].T + h @ p["w_h"].T + p["b"]
            i = _sigmoid(a[:, :n])
            f = _sigmoid(a[:, n:2 * n])
            g = np.tanh(a[:, 2 * n:3 * n])
            o = _sigmoid(a[:, 3 * n:])
            c_new = f * c_state + i * g
            tanh_c = np.tanh(c_new)
            h_new = o * tanh_c
            cache.append((xt, h, c_state, i, f, g, o, tanh_c))
            h, c_state = h_new, c_new
            hs[:, t] = h
    return hs, cache


def _backward_steps(model: RnnModel, cache, d_h_final: np.ndarray) -> dict[str, np.ndarray]:
    """BPTT from a gradient on the final hidden state; returns summed
    parameter gradients for the cell (head gradients handled by callers)."""
    cfg = model.config
    n = cfg.hidden_size
    p = model.params
    grads = {k: np.zeros_like(v) for k, v in p.items() if k in ("w_x", "w_h", "b")}
    dh = d_h_final
    if cfg.cell == "gru":
        wz, wr, wc = p["w_x"][:n], p["w_x"][n:2 * n], p["w_x"][2 * n:]
        uz, ur, uc = p["w_h"][:n], p["w_h"][n:2 * n], p["w_h"][2 * n:]
        for xt, h_prev, z, r, c in reversed(cache):
            dz = dh * (c - h_prev)
            dc = dh * z
            dh_prev = dh * (1.0 - z)
            dac = dc * (1.0 - c * c)
            drh = dac @ uc
            dr = drh * h_prev
            dh_prev += drh * r
            dar = dr * r * (1.0 - r)
            dh_prev += dar @ ur
            daz = dz * z * (1.0 - z)
            dh_prev += daz @ uz
            grads["w_x"][:n] += daz.T @ xt
            grads["w_x"][n:2 * n] += dar.T @ xt
            grads["w_x"][2 * n:] += dac.T @ xt
            grads["w_h"][:n] += daz.T @ h_prev
            grads["w_h"][n:2 * n] += dar.T @ h_prev
            grads["w_h"][2 * n:] += dac.T @ (r * h_prev)
            grads["b"][:n] += daz.sum(axis=0)
            grads["b"][n:2 * n] += dar.sum(axis=0)
            grads["b"][2 * n:] += dac.sum(axis=0)
            dh = dh_prev
    else:
        dc_next = np.zeros_like(dh)
        for xt, h_prev, c_prev, i, f, g, o, tanh_c in reversed(cache):
            do = dh * tanh_c
            dc = dc_next + dh * o * (1.0 - tanh_c * tanh_c)
            di = dc * g
            df = dc * c_prev
            dg = dc * i
            dc_next = dc * f
            da = np.concatenate(
                [di * i * (1.0 - i), df * f * (1.0 - f),
                 dg * (1.0 - g * g), do * o * (1.0 - o)], axis=1)
            grads["w_x"] += da.T @ xt
            grads["w_h"] += da.T @ h_prev
            grads["b"] += da.sum(axis=0)
            dh = da @ p["w_h"]
        # dc_next on h_0/c_0 is discarded: initial states are constants
    return grads


def _head_probs(model: RnnModel, hs: np.ndarray) -> np.ndarray:
    p = model.params
    return _sigmoid(hs @ p["w_out"] + p["b_out"][0])


def forward(model: RnnModel, word: str) -> tuple[float, TraceRecord]:
    """Inference on one word: final acceptance probability plus the full
    per-step trace. Pure function of (model, word)."""
    if not word:
        raise ValueError("words must be non-empty")
    model.alphabet.check_word(word)
    x = _encode_words([word], model.alphabet)
    hs, _ = _forward_steps(model, x)
    probs = _head_probs(model, hs[0])
    steps = [(word[t], hs[0, t].copy(), float(probs[t])) for t in range(len(word))]
    prob = float(probs[-1])
    return prob, TraceRecord(word, steps, prob > 0.5,
                             np.zeros(model.config.hidden_size))


def record_traces(model: RnnModel, d: Dataset) -> list[TraceRecord]:
    """One inference-mode trace per example (dropout never applies here)."""
    by_length: dict[int, list[int]] = {}
    for idx, ex in enumerate(d.examples):
        by_length.setdefault(len(ex.word), []).append(idx)
    traces: list[TraceRecord | None] = [None] * len(d.examples)
    zero = np.zeros(model.config.hidden_size)
    for length in sorted(by_length):
        idxs = by_length[length]
        words = [d.examples[i].word for i in idxs]
        x = _encode_words(words, model.alphabet)
        hs, _ = _forward_steps(model, x)
        probs = _head_probs(model, hs)
        for row, i in enumerate(idxs):
            steps = [
                (words[row][t], hs[row, t].copy(), float(probs[row, t]))
                for t in range(length)
            ]
            traces[i] = TraceRecord(words[row], steps, float(probs[row, -1]) > 0.5, zero.copy())
    return traces  # type: ignore[return-value]


def evaluate(model: RnnModel, d: Dataset) -> float:
    """Misclassification fraction; probability exactly 0.5 counts as reject."""
    if not d.examples:
        return 0.0
    wrong = 0
    by_length: dict[int, list[int]] = {}
    for idx, ex in enumerate(d.examples):
        by_length.setdefault(len(ex.word), []).append(idx)
    for length in sorted(by_length):
        idxs = by_length[length]
        x = _encode_words([d.examples[i].word for i in idxs], model.alphabet)
        hs, _ = _forward_steps(model, x)
        probs = _head_probs(model, hs[:, -1])
        for row, i in enumerate(idxs):
            if (probs[row] > 0.5) != d.examples[i].label:
                wrong += 1
    return wrong / len(d.examples)


# ---------------------------------------------------------------------------
# Training


def _example_gradients(model: RnnModel, x: np.ndarray, labels: np.ndarray):
    """Summed loss and parameter gradients for one same-length batch."""
    p = model.params
    hs, cache = _forward_steps(model, x)
    h_last = hs[:, -1]
    logits = h_last @ p["w_out"] + p["b_out"][0]
    losses = _bce(logits, labels)
    dlogit = _sigmoid(logits) - labels
    grads = {
        "w_out": dlogit @ h_last,
        "b_out": np.array([dlogit.sum()]),
    }
    d_h_final = np.outer(dlogit, p["w_out"])
    grads.update(_backward_steps(model, cache, d_h_final))
    return float(losses.sum()), grads


def train(
    model: RnnModel,
    train_set: Dataset,
    test_set: Dataset,
    cfg: ModelConfig | None = None,
    checkpoints: tuple[int, ...] = (),
    eval_every: int = 500,
    time_limit: float | None = None,
) -> TrainReport:
    """Full-batch BPTT with Adam on binary cross-entropy.

    Input-layer dropout applies during training only. Snapshot copies of
    the model are taken at the requested checkpoint epochs. Deterministic
    for a fixed (config, data) pair. A wall-clock ``time_limit`` stops
    training early at an epoch boundary and marks the report.
    """
    cfg = cfg or model.config
    if cfg.epochs and not train_set.examples:
        raise ValueError("cannot train on an empty dataset")
    started = time.monotonic()
    report = TrainReport()
    drop_rng = np.random.default_rng(derive_seed(cfg.seed, "input-dropout"))

    groups = []
    by_length: dict[int, list[LabeledString]] = {}
    for ex in train_set.examples:
        by_length.setdefault(len(ex.word), []).append(ex)
    for length in sorted(by_length):
        exs = by_length[length]
        x = _encode_words([e.word for e in exs], model.alphabet)
        y = np.array([float(e.label) for e in exs])
        groups.append((x, y))
    n_total = len(train_set.examples)

    adam_m = {k: np.zeros_like(v) for k, v in model.params.items()}
    adam_v = {k: np.zeros_like(v) for k, v in model.params.items()}
    beta1, beta2, eps = 0.9, 0.999, 1e-8

    for epoch in range(1, cfg.epochs + 1):
        loss_sum = 0.0
        grad_sum = {k: np.zeros_like(v) for k, v in model.params.items()}
        for x, y in groups:
            if cfg.dropout > 0.0:
                keep = drop_rng.random(x.shape) >= cfg.dropout
                x = x * keep / (1.0 - cfg.dropout)
            loss, grads = _example_gradients(model, x, y)
            loss_sum += loss
            for k, g in grads.items():
                grad_sum[k] += g
        mean_loss = loss_sum / n_total
        report.losses.append(mean_loss)
        if not np.isfinite(mean_loss):
            report.wall_clock = time.monotonic() - started
            raise TrainingDiverged(epoch, report)
        for k in model.params:
            g = grad_sum[k] / n_total
            adam_m[k] = beta1 * adam_m[k] + (1 - beta1) * g
            adam_v[k] = beta2 * adam_v[k] + (1 - beta2) * g * g
            m_hat = adam_m[k] / (1 - beta1 ** epoch)
            v_hat = adam_v[k] / (1 - beta2 ** epoch)
            model.params[k] = model.params[k] - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + eps)
        at_checkpoint = epoch in checkpoints
        if at_checkpoint:
            report.snapshots[epoch] = model.copy()
        if at_checkpoint or epoch == cfg.epochs or (eval_every and epoch % eval_every == 0):
            report.test_history.append((epoch, evaluate(model, test_set)))
        report.stopped_epoch = epoch
        if time_limit is not None and time.monotonic() - started > time_limit:
            report.timed_out = True
            break

    report.wall_clock = time.monotonic() - started
    report.checksum = model_checksum(model)
    return report


def gradient_check(model: RnnModel, example: LabeledString, step: float = 1e-5) -> float:
    """Max relative error between BPTT gradients and central finite
    differences over every parameter, on one example's loss."""
    x = _encode_words([example.word], model.alphabet)
    y = np.array([float(example.label)])
    _, analytic = _example_gradients(model, x, y)

    def loss_at() -> float:
        p = model.params
        hs, _ = _forward_steps(model, x)
        logit = hs[:, -1] @ p["w_out"] + p["b_out"][0]
        return float(_bce(logit, y)[0])

    worst = 0.0
    for key in PARAM_ORDER:
        flat = model.params[key].reshape(-1)
        grad_flat = analytic[key].reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + step
            up = loss_at()
            flat[i] = original - step
            down = loss_at()
            flat[i] = original
            numeric = (up - down) / (2 * step)
            denom = max(abs(grad_flat[i]) + abs(numeric), 1e-8)
            worst = max(worst, abs(grad_flat[i] - numeric) / denom)
    return worst


# ---------------------------------------------------------------------------
# Model files


def model_to_text(model: RnnModel) -> str:
    cfg = model.config
    lines = [
        "rnn v1",
        f"cell: {cfg.cell}",
        f"hidden: {cfg.hidden_size}",
        f"input: {cfg.input_size}",
        "alphabet: " + " ".join(model.alphabet),
        f"dropout: {cfg.dropout!r}",
        f"epochs: {cfg.epochs}",
        f"learning_rate: {cfg.learning_rate!r}",
        f"seed: {cfg.seed}",
    ]
    for key in PARAM_ORDER:
        arr = model.params[key]
        shape = " ".join(str(d) for d in arr.shape)
        lines.append(f"param {key} {shape}")
        # repr of a Python float round-trips the exact float64 bits
        lines.append(" ".join(repr(float(v)) for v in arr.reshape(-1)))
    return "\n".join(lines) + "\n"


def model_from_text(text: str) -> RnnModel:
    lines = [ln.rstrip("\n") for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != "rnn v1":
        raise ModelFormatError("expected 'rnn v1' header")
    header: dict[str, str] = {}
    idx = 1
    while idx < len(lines) and not lines[idx].startswith("param "):
        key, _, value = lines[idx].partition(":")
        header[key.strip()] = value.strip()
        idx += 1
    try:
        alphabet = Alphabet(tuple(header["alphabet"].split()))
        cfg = ModelConfig(
            cell=header["cell"],
            hidden_size=int(header["hidden"]),
            input_size=int(header["input"]),
            dropout=float(header["dropout"]),
            epochs=int(header["epochs"]),
            learning_rate=float(header["learning_rate"]),
            seed=int(header["seed"]),
        )
    except KeyError as exc:
        raise ModelFormatError(f"missing model header field {exc}") from exc
    params = {}
    while idx < len(lines):
        head = lines[idx].split()
        if head[0] != "param" or len(head) < 2:
            raise ModelFormatError(f"malformed parameter header {lines[idx]!r}")
        key = head[1]
        shape = tuple(int(d) for d in head[2:])
        values = np.array([float(v) for v in lines[idx + 1].split()])
        params[key] = values.reshape(shape)
        idx += 2
    missing = set(PARAM_ORDER) - set(params)
    if missing:
        raise ModelFormatError(f"model file missing parameters {sorted(missing)}")
    return RnnModel(cfg, alphabet, params)


def model_checksum(model: RnnModel) -> str:
    return hashlib.sha256(model_to_text(model).encode()).hexdigest()


def save_model(model: RnnModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(model_to_text(model))


def load_model(path) -> RnnModel:
    with open(path, encoding="utf-8") as fh:
        return model_from_text(fh.read())
