"""Single-layer LSTM -> dropout -> sigmoid head, trained with BPTT and Adam.

Pure numpy, float64. Gate order inside stacked matrices is (i, f, g, o).
Padded steps (before the first real step) leave h and c untouched.
"""

from __future__ import annotations

import copy
import json
import logging
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .evaluation import UndefinedMetricError, auroc

log = logging.getLogger(__name__)

GATES = ("i", "f", "g", "o")
CHECKPOINT_VERSION = 1


class TrainingDivergedError(RuntimeError):
    pass


def sigmoid(z):
    # split by sign so exp never overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass
class LstmParams:
    W_i: np.ndarray
    W_f: np.ndarray
    W_g: np.ndarray
    W_o: np.ndarray
    U_i: np.ndarray
    U_f: np.ndarray
    U_g: np.ndarray
    U_o: np.ndarray
    b_i: np.ndarray
    b_f: np.ndarray
    b_g: np.ndarray
    b_o: np.ndarray
    w: np.ndarray
    b: np.ndarray
    # input standardization, not trained
    x_mean: np.ndarray = field(default=None)
    x_scale: np.ndarray = field(default=None)

    TRAINABLE = ("W_i", "W_f", "W_g", "W_o", "U_i", "U_f", "U_g", "U_o",
                 "b_i", "b_f", "b_g", "b_o", "w", "b")

    def __post_init__(self):
        H, D = self.W_i.shape
        if self.x_mean is None:
            self.x_mean = np.zeros(D)
        if self.x_scale is None:
            self.x_scale = np.ones(D)
        self.b = np.asarray(self.b).reshape(())
        expected = {"W": (H, D), "U": (H, H), "b": (H,)}
        for gate in GATES:
            for kind in ("W", "U", "b"):
                arr = getattr(self, f"{kind}_{gate}")
                if arr.shape != expected[kind]:
                    raise ValueError(f"{kind}_{gate} has shape {arr.shape}, expected {expected[kind]}")
        if self.w.shape != (H,) or self.x_mean.shape != (D,) or self.x_scale.shape != (D,):
            raise ValueError("head or scaler shape mismatch")

    @property
    def hidden_size(self) -> int:
        return self.W_i.shape[0]

    @property
    def input_size(self) -> int:
        return self.W_i.shape[1]

    @classmethod
    def zeros(cls, hidden_size: int, input_size: int) -> "LstmParams":
        H, D = hidden_size, input_size
        kw = {}
        for g in GATES:
            kw[f"W_{g}"] = np.zeros((H, D))
            kw[f"U_{g}"] = np.zeros((H, H))
            kw[f"b_{g}"] = np.zeros(H)
        return cls(**kw, w=np.zeros(H), b=np.array(0.0))

    @classmethod
    def init(cls, hidden_size: int, input_size: int, rng: np.random.Generator) -> "LstmParams":
        s = 1.0 / math.sqrt(hidden_size)
        p = cls.zeros(hidden_size, input_size)
        for name in cls.TRAINABLE:
            arr = getattr(p, name)
            setattr(p, name, rng.uniform(-s, s, size=arr.shape))
        p.b = np.asarray(p.b).reshape(())
        p.b_f = np.ones(hidden_size)
        return p

    def trainable(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in self.TRAINABLE}

    def copy(self) -> "LstmParams":
        return copy.deepcopy(self)

    def stacked(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        W = np.concatenate([getattr(self, f"W_{g}") for g in GATES])
        U = np.concatenate([getattr(self, f"U_{g}") for g in GATES])
        b = np.concatenate([getattr(self, f"b_{g}") for g in GATES])
        return W, U, b

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(getattr(self, f.name))) for f in fields(self))


def step_mask(lengths: np.ndarray, T: int) -> np.ndarray:
    lengths = np.asarray(lengths)
    return np.arange(T)[None, :] >= (T - lengths)[:, None]


def _prepare(params: LstmParams, X, lengths, dtype=np.float64):
    X = np.asarray(X, dtype=dtype)
    if X.ndim == 2:
        X = X[None]
    if X.shape[-1] != params.input_size:
        raise ValueError(f"input width {X.shape[-1]} != model input size {params.input_size}")
    if not np.all(np.isfinite(X)):
        raise ValueError("non-finite input features")
    N, T, _ = X.shape
    if lengths is None:
        lengths = np.full(N, T)
    lengths = np.asarray(lengths, dtype=np.int64).reshape(N)
    if np.any(lengths < 1) or np.any(lengths > T):
        raise ValueError("every sequence needs between 1 and T real steps")
    return (X - params.x_mean) / params.x_scale, step_mask(lengths, T)


def forward(params: LstmParams, X, lengths=None, dropout_mask=None, cache: bool = False,
            dtype=np.float64):
    """Probabilities for a batch ``X (N, T, D)`` (or one sequence ``(T, D)``).

    ``dropout_mask`` (N, H) multiplies the final hidden state and must
    already include the 1/(1-rate) scaling; None means inference.
    """
    Xs, mask = _prepare(params, X, lengths, dtype)
    N, T, _ = Xs.shape
    H = params.hidden_size
    W, U, b = params.stacked()
    h = np.zeros((N, H), dtype=Xs.dtype)
    c = np.zeros((N, H), dtype=Xs.dtype)
    steps = []
    for t in range(T):
        z = Xs[:, t] @ W.T + h @ U.T + b
        i = sigmoid(z[:, :H])
        f = sigmoid(z[:, H:2 * H])
        g = np.tanh(z[:, 2 * H:3 * H])
        o = sigmoid(z[:, 3 * H:])
        c_new = f * c + i * g
        tc = np.tanh(c_new)
        h_new = o * tc
        m = mask[:, t][:, None]
        if cache:
            steps.append((Xs[:, t], h, c, i, f, g, o, tc, m))
        c = np.where(m, c_new, c)
        h = np.where(m, h_new, h)
    hd = h if dropout_mask is None else h * dropout_mask
    p = sigmoid(hd @ params.w + params.b)
    if cache:
        return p, {"steps": steps, "h": h, "hd": hd, "dropout": dropout_mask}
    return p


def bce_loss(p, y, eps: float = 1e-12) -> float:
    """Mean binary cross-entropy with probabilities clamped to [eps, 1-eps]."""
    p = np.asarray(p)
    p = np.clip(p, eps, 1.0 - eps)
    y = np.asarray(y, dtype=p.dtype)
    loss = np.mean(-(y * np.log(p) + (1.0 - y) * np.log1p(-p)))
    return loss if loss.dtype == np.longdouble else float(loss)


def backward(params: LstmParams, X, lengths, y, dropout_mask=None) -> tuple[float, dict[str, np.ndarray]]:
    """Mean batch BCE and its exact gradient for every trainable parameter."""
    p, cache = forward(params, X, lengths, dropout_mask, cache=True)
    y = np.asarray(y, dtype=float).reshape(-1)
    N = len(y)
    H = params.hidden_size
    loss = bce_loss(p, y)
    dlogit = (p - y) / N
    grads = {"w": cache["hd"].T @ dlogit, "b": np.asarray(dlogit.sum())}
    dh = np.outer(dlogit, params.w)
    if dropout_mask is not None:
        dh = dh * dropout_mask
    dc = np.zeros_like(dh)
    W, U, _ = params.stacked()
    dW = np.zeros_like(W)
    dU = np.zeros_like(U)
    db = np.zeros(4 * H)
    for x_t, h_prev, c_prev, i, f, g, o, tc, m in reversed(cache["steps"]):
        dh_new = np.where(m, dh, 0.0)
        dc_new = np.where(m, dc, 0.0) + dh_new * o * (1.0 - tc * tc)
        dz = np.concatenate([
            dc_new * g * i * (1.0 - i),
            dc_new * c_prev * f * (1.0 - f),
            dc_new * i * (1.0 - g * g),
            dh_new * tc * o * (1.0 - o),
        ], axis=1)
        dW += dz.T @ x_t
        dU += dz.T @ h_prev
        db += dz.sum(axis=0)
        dh = dz @ U + np.where(m, 0.0, dh)
        dc = dc_new * f + np.where(m, 0.0, dc)
    for k, gate in enumerate(GATES):
        sl = slice(k * H, (k + 1) * H)
        grads[f"W_{gate}"] = dW[sl]
        grads[f"U_{gate}"] = dU[sl]
        grads[f"b_{gate}"] = db[sl]
    return loss, grads


def grad_check(params: LstmParams, sample, eps: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``sample`` is ``(x (T, D), length, label)``; dropout is off. The
    perturbed losses are evaluated in extended precision (long double) so
    round-off in the difference quotient stays far below the 1e-8 floor
    of the relative error.
    """
    x, length, label = sample
    if length < 1:
        raise ValueError("grad_check needs at least one real step")
    X = np.asarray(x, dtype=float)[None]
    lengths = np.array([length])
    y = np.array([float(label)])
    _, grads = backward(params, X, lengths, y)
    ext = np.longdouble
    probe = params.copy()
    for f in fields(probe):
        setattr(probe, f.name, np.asarray(getattr(probe, f.name), dtype=ext))
    Xe, ye, step = X.astype(ext), y.astype(ext), ext(eps)
    worst = 0.0
    for name in LstmParams.TRAINABLE:
        flat = getattr(probe, name).reshape(-1)
        g_flat = np.asarray(grads[name]).reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + step
            lp = bce_loss(forward(probe, Xe, lengths, dtype=ext), ye)
            flat[j] = orig - step
            lm = bce_loss(forward(probe, Xe, lengths, dtype=ext), ye)
            flat[j] = orig
            num = float((lp - lm) / (2 * step))
            a = float(g_flat[j])
            worst = max(worst, abs(a - num) / max(abs(a), abs(num), 1e-8))
    return worst


@dataclass
class TrainConfig:
    hidden_size: int = 32
    dropout_rate: float = 0.2
    learning_rate: float = 1e-3
    epochs: int = 50
    batch_size: int = 32
    early_stopping_patience: int | None = 5
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")
        for name in ("hidden_size", "epochs", "batch_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.early_stopping_patience is not None and self.early_stopping_patience < 1:
            raise ValueError("early_stopping_patience must be positive or None")


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_auroc: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    selected_epoch: int = -1
    monitor: str = "auroc"

    def to_dict(self) -> dict:
        return {
            "train_loss": self.train_loss,
            "val_auroc": self.val_auroc,
            "val_loss": self.val_loss,
            "selected_epoch": self.selected_epoch,
            "monitor": self.monitor,
        }


def fit_scaler(X: np.ndarray, lengths: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mean / std of each feature over real (unpadded) steps."""
    real = X[step_mask(lengths, X.shape[1])]
    mean = real.mean(axis=0)
    scale = real.std(axis=0)
    scale[scale == 0] = 1.0
    return mean, scale


def predict(params: LstmParams, X, lengths, batch_size: int = 4096) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    out = [forward(params, X[i:i + batch_size], lengths[i:i + batch_size]) for i in range(0, len(X), batch_size)]
    return np.concatenate(out) if out else np.zeros(0)


def train(train_set, val_set, config: TrainConfig) -> tuple[LstmParams, TrainHistory]:
    """Adam training with early stopping on validation AUROC.

    ``train_set`` / ``val_set`` are ``(X, lengths, y)`` arrays. Returns the
    parameters of the best validation epoch.
    """
    Xtr, Ltr, ytr = (np.asarray(a) for a in train_set)
    Xva, Lva, yva = (np.asarray(a) for a in val_set)
    if len(ytr) == 0 or len(yva) == 0:
        raise ValueError("train and validation sets must be non-empty")
    ss = config.seed if isinstance(config.seed, np.random.SeedSequence) else np.random.SeedSequence(config.seed)
    init_ss, run_ss = ss.spawn(2)
    rng = np.random.default_rng(run_ss)
    params = LstmParams.init(config.hidden_size, Xtr.shape[-1], np.random.default_rng(init_ss))
    params.x_mean, params.x_scale = fit_scaler(Xtr, Ltr)

    history = TrainHistory()
    if len(np.unique(yva)) < 2:
        log.warning("validation set has a single class; early stopping monitors validation loss")
        history.monitor = "loss"

    names = LstmParams.TRAINABLE
    m = {k: np.zeros_like(getattr(params, k), dtype=float) for k in names}
    v = {k: np.zeros_like(getattr(params, k), dtype=float) for k in names}
    step = 0
    best_score, best_params, since_best = -np.inf, params.copy(), 0
    H, N = config.hidden_size, len(ytr)
    keep = 1.0 - config.dropout_rate
    for epoch in range(config.epochs):
        order = rng.permutation(N)
        total = 0.0
        for start in range(0, N, config.batch_size):
            idx = order[start:start + config.batch_size]
            drop = None
            if config.dropout_rate > 0:
                drop = (rng.random((len(idx), H)) < keep) / keep
            loss, grads = backward(params, Xtr[idx], Ltr[idx], ytr[idx], drop)
            if not math.isfinite(loss):
                raise TrainingDivergedError(f"non-finite training loss at epoch {epoch}, step {step}")
            total += loss * len(idx)
            step += 1
            c1 = 1.0 - config.beta1**step
            c2 = 1.0 - config.beta2**step
            for k in names:
                gk = grads[k]
                m[k] = config.beta1 * m[k] + (1.0 - config.beta1) * gk
                v[k] = config.beta2 * v[k] + (1.0 - config.beta2) * gk * gk
                update = config.learning_rate * (m[k] / c1) / (np.sqrt(v[k] / c2) + config.adam_eps)
                setattr(params, k, getattr(params, k) - update)
        history.train_loss.append(total / N)
        pv = predict(params, Xva, Lva)
        history.val_loss.append(bce_loss(pv, yva))
        try:
            history.val_auroc.append(auroc(pv, yva))
        except UndefinedMetricError:
            history.val_auroc.append(float("nan"))
        score = history.val_auroc[-1] if history.monitor == "auroc" else -history.val_loss[-1]
        if score > best_score:
            best_score, best_params, since_best = score, params.copy(), 0
            history.selected_epoch = epoch
        else:
            since_best += 1
            if config.early_stopping_patience is not None and since_best >= config.early_stopping_patience:
                break
    return best_params, history


# checkpoints: plain text, one tensor per block, values as float.hex for exact round-trip

def save_checkpoint(path, params: LstmParams, meta: dict | None = None) -> None:
    lines = [f"# delirium-risk lstm checkpoint v{CHECKPOINT_VERSION}",
             "meta " + json.dumps(meta or {}, sort_keys=True)]
    for f in fields(params):
        arr = np.asarray(getattr(params, f.name), dtype=float)
        lines.append(f"tensor {f.name} {' '.join(str(d) for d in arr.shape)}".rstrip())
        lines.append(" ".join(float(x).hex() for x in arr.ravel()))
    Path(path).write_text("\n".join(lines) + "\n")


def load_checkpoint(path) -> tuple[LstmParams, dict]:
    text = Path(path).read_text().splitlines()
    if not text or not text[0].startswith("# delirium-risk lstm checkpoint v"):
        raise ValueError(f"{path}: not a checkpoint file")
    version = int(text[0].rsplit("v", 1)[1])
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    meta = json.loads(text[1][len("meta "):])
    tensors = {}
    for header, body in zip(text[2::2], text[3::2]):
        parts = header.split()
        name, shape = parts[1], tuple(int(d) for d in parts[2:])
        values = [float.fromhex(tok) for tok in body.split()]
        tensors[name] = np.array(values, dtype=float).reshape(shape)
    return LstmParams(**tensors), meta
