"""Neural-network surrogate for the key-rate solver.

A fixed feedforward net (29 inputs, hidden layers of 400 tanh and 200
sigmoid units, one linear output) maps standardized feature vectors to
negative-log key rates.  Training minimizes an asymmetric loss

    mean[ gamma * (e^2 + max(e, -log10(eps))) - (1 - gamma) * min(e, 0) ]

over residuals e = prediction - target in log space.  The linear penalty on
e < 0 pushes predictions below the solver's rate (a low prediction is a
*secure* prediction), while the quadratic-plus-max part caps how far below;
with (gamma, eps) = (0.2, 0.8) the intended relative deviation band is
(eps - 1, 0).

Everything is plain numpy and deterministic for a fixed seed: weight
initialization, batch shuffling and dropout masks all come from one PCG64
stream, so two trainings with the same seed produce bitwise-identical
bundles.
"""

import io
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

INPUT_SIZE = 29
HIDDEN_1 = 400
HIDDEN_2 = 200
LAYER_SIZES = (INPUT_SIZE, HIDDEN_1, HIDDEN_2, 1)

PARAMETER_COUNT = (
    INPUT_SIZE * HIDDEN_1 + HIDDEN_1
    + HIDDEN_1 * HIDDEN_2 + HIDDEN_2
    + HIDDEN_2 * 1 + 1
)

MODEL_MAGIC = "dmcvqkd-model 1"


class InvalidDatasetError(ValueError):
    """Training data empty or malformed."""


class InvalidLabelError(ValueError):
    """Key-rate label outside (0, inf)."""


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite during training; carries the epoch trace."""

    def __init__(self, message, history):
        super().__init__(message)
        self.history = history


class ModelFormatError(ValueError):
    """Model file failed to parse or shapes are inconsistent."""


@dataclass(frozen=True)
class LossHyperparams:
    gamma: float = 0.2
    epsilon: float = 0.8

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must be in (0, 1), got {self.gamma}")
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError(f"epsilon must be in (0, 1), got {self.epsilon}")

    @property
    def kink(self):
        """Location of the max() kink, -log10(epsilon) > 0."""
        return -math.log10(self.epsilon)


@dataclass
class PreprocStats:
    """Per-column standardization parameters (population sigma)."""

    means: np.ndarray
    sigmas: np.ndarray
    pass_through: np.ndarray  # True where sigma == 0: column is left unchanged


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 200
    batch_size: int = 256
    dropout: float = 0.1
    val_fraction: float = 0.05
    patience: int = 20
    seed: int = 0


@dataclass
class ModelBundle:
    """Trained weights plus everything needed to reproduce predictions."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray
    preproc: PreprocStats
    loss_hp: LossHyperparams
    metadata: dict = field(default_factory=dict)

    def parameter_count(self):
        return sum(a.size for a in (self.w1, self.b1, self.w2, self.b2, self.w3, self.b3))


# ---------------------------------------------------------------------------
# preprocessing


def preprocess_fit(features):
    """Column means and population standard deviations of the training inputs."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2 or x.shape[1] != INPUT_SIZE:
        raise InvalidDatasetError(
            f"need at least 2 samples of {INPUT_SIZE} features, got shape {x.shape}"
        )
    means = x.mean(axis=0)
    sigmas = x.std(axis=0)
    return PreprocStats(means=means, sigmas=sigmas, pass_through=sigmas == 0.0)


def preprocess_apply(features, stats):
    """Standardize with training-set statistics; sigma-zero columns pass through."""
    x = np.asarray(features, dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    out = x.copy()
    active = ~stats.pass_through
    out[:, active] = (x[:, active] - stats.means[active]) / stats.sigmas[active]
    return out[0] if single else out


def label_transform(y):
    """Key rate to regression target, y* = -log10(y); requires y > 0."""
    y = np.asarray(y, dtype=np.float64)
    if np.any(y <= 0.0):
        raise InvalidLabelError("key-rate labels must be positive")
    return -np.log10(y)


def label_inverse(y_star):
    """Regression output back to a key rate, y = 10^(-y*)."""
    return np.power(10.0, -np.asarray(y_star, dtype=np.float64))


# ---------------------------------------------------------------------------
# network


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def forward(model, x_star):
    """Network output for standardized inputs (dropout disabled)."""
    x = np.atleast_2d(np.asarray(x_star, dtype=np.float64))
    if x.shape[1] != INPUT_SIZE:
        raise ModelFormatError(f"expected {INPUT_SIZE} inputs, got {x.shape[1]}")
    t1 = np.tanh(x @ model.w1.T + model.b1)
    s2 = _sigmoid(t1 @ model.w2.T + model.b2)
    out = (s2 @ model.w3.T + model.b3)[:, 0]
    return float(out[0]) if np.asarray(x_star).ndim == 1 else out


def loss(errors, hp):
    """Mean asymmetric training loss over residuals e = y*_pred - y*_true."""
    e = np.asarray(errors, dtype=np.float64)
    c = hp.kink
    return float(np.mean(
        hp.gamma * (e ** 2 + np.maximum(e, c)) - (1.0 - hp.gamma) * np.minimum(e, 0.0)
    ))


def loss_subgradient(errors, hp):
    """d(loss)/de per sample: max'(e,c)=1 iff e>c, min'(e,0)=1 iff e<0."""
    e = np.asarray(errors, dtype=np.float64)
    c = hp.kink
    return hp.gamma * (2.0 * e + (e > c)) - (1.0 - hp.gamma) * (e < 0.0)


def init_weights(rng):
    """Symmetric-uniform (Glorot) initialization, biases at zero."""
    ws = []
    for fan_in, fan_out in zip(LAYER_SIZES[:-1], LAYER_SIZES[1:]):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        ws.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        ws.append(np.zeros(fan_out))
    return ws  # w1, b1, w2, b2, w3, b3


def _batch_gradients(params, x, y, hp, masks):
    """Loss and parameter gradients on one (already standardized) batch."""
    w1, b1, w2, b2, w3, b3 = params
    m1, m2 = masks
    n = x.shape[0]
    t1 = np.tanh(x @ w1.T + b1)
    h1 = t1 * m1
    s2 = _sigmoid(h1 @ w2.T + b2)
    h2 = s2 * m2
    out = (h2 @ w3.T + b3)[:, 0]
    e = out - y
    val = loss(e, hp)
    dout = (loss_subgradient(e, hp) / n)[:, None]
    dw3 = dout.T @ h2
    db3 = dout.sum(axis=0)
    dh2 = dout @ w3
    ds2 = dh2 * m2 * s2 * (1.0 - s2)
    dw2 = ds2.T @ h1
    db2 = ds2.sum(axis=0)
    dh1 = ds2 @ w2
    dt1 = dh1 * m1 * (1.0 - t1 ** 2)
    dw1 = dt1.T @ x
    db1 = dt1.sum(axis=0)
    return val, [dw1, db1, dw2, db2, dw3, db3]


def train(features, labels, hp=None, config=None):
    """Fit the surrogate on solver-labeled data.

    Adam on mini-batches with inverted dropout on both hidden layers; a
    validation slice (``config.val_fraction`` of the data) drives early
    stopping with best-weight restore.  Standardization statistics are
    fitted on the full training set passed in, never on test data.
    """
    hp = hp or LossHyperparams()
    config = config or TrainConfig()
    x = np.asarray(features, dtype=np.float64)
    y_rates = np.asarray(labels, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise InvalidDatasetError(f"empty or malformed training set, shape {x.shape}")
    if x.shape[0] != y_rates.shape[0]:
        raise InvalidDatasetError("features and labels disagree in length")

    stats = preprocess_fit(x)
    xs = preprocess_apply(x, stats)
    ys = label_transform(y_rates)

    rng = np.random.Generator(np.random.PCG64(config.seed))
    params = init_weights(rng)

    n = xs.shape[0]
    n_val = max(1, int(round(config.val_fraction * n))) if n > 1 else 0
    perm = rng.permutation(n)
    val_idx, train_idx = perm[:n_val], perm[n_val:]
    if train_idx.size == 0 or val_idx.size == 0:
        train_idx = val_idx = perm
    xv, yv = xs[val_idx], ys[val_idx]
    xt, yt = xs[train_idx], ys[train_idx]

    adam_m = [np.zeros_like(p) for p in params]
    adam_v = [np.zeros_like(p) for p in params]
    beta1, beta2, adam_eps = 0.9, 0.999, 1e-8
    step = 0
    keep = 1.0 - config.dropout

    best_val = math.inf
    best_params = [p.copy() for p in params]
    best_epoch = 0
    history = []
    for epoch in range(config.epochs):
        order = rng.permutation(xt.shape[0])
        epoch_loss = 0.0
        nb = 0
        for lo in range(0, xt.shape[0], config.batch_size):
            idx = order[lo:lo + config.batch_size]
            xb, yb = xt[idx], yt[idx]
            if config.dropout > 0.0:
                m1 = (rng.random((xb.shape[0], HIDDEN_1)) < keep) / keep
                m2 = (rng.random((xb.shape[0], HIDDEN_2)) < keep) / keep
            else:
                m1 = np.ones((xb.shape[0], HIDDEN_1))
                m2 = np.ones((xb.shape[0], HIDDEN_2))
            val, grads = _batch_gradients(params, xb, yb, hp, (m1, m2))
            if not math.isfinite(val):
                raise TrainingDivergedError(
                    f"loss became non-finite in epoch {epoch}", history
                )
            step += 1
            for i, g in enumerate(grads):
                adam_m[i] = beta1 * adam_m[i] + (1.0 - beta1) * g
                adam_v[i] = beta2 * adam_v[i] + (1.0 - beta2) * g * g
                mhat = adam_m[i] / (1.0 - beta1 ** step)
                vhat = adam_v[i] / (1.0 - beta2 ** step)
                params[i] = params[i] - config.learning_rate * mhat / (np.sqrt(vhat) + adam_eps)
            epoch_loss += val
            nb += 1
        model_now = _bundle(params, stats, hp, {})
        val_loss = loss(forward(model_now, xv) - yv, hp)
        history.append((epoch_loss / max(1, nb), val_loss))
        if val_loss < best_val:
            best_val = val_loss
            best_params = [p.copy() for p in params]
            best_epoch = epoch
        elif epoch - best_epoch >= config.patience:
            break

    metadata = {
        "seed": config.seed,
        "epochs_run": len(history),
        "best_epoch": best_epoch,
        "best_val_loss": best_val,
        "n_train": int(xt.shape[0]),
        "n_val": int(xv.shape[0]),
        "xi_min": float(x[:, 28].min()),
        "xi_max": float(x[:, 28].max()),
        "train_loss_history": [h[0] for h in history],
        "val_loss_history": [h[1] for h in history],
    }
    return _bundle(best_params, stats, hp, metadata)


def _bundle(params, stats, hp, metadata):
    w1, b1, w2, b2, w3, b3 = params
    return ModelBundle(w1=w1, b1=b1, w2=w2, b2=b2, w3=w3, b3=b3,
                       preproc=stats, loss_hp=hp, metadata=metadata)


def predict(model, features):
    """Key rate(s) for raw feature vector(s): standardize, forward, 10^(-out)."""
    xs = preprocess_apply(features, model.preproc)
    out = label_inverse(forward(model, xs))
    return float(out) if np.asarray(features).ndim == 1 else out


# ---------------------------------------------------------------------------
# serialization: one text header line + json header + raw float64 blob


_BLOB_FIELDS = ("means", "sigmas", "w1", "b1", "w2", "b2", "w3", "b3")


def _blob_arrays(model):
    return (
        model.preproc.means, model.preproc.sigmas,
        model.w1, model.b1, model.w2, model.b2, model.w3, model.b3,
    )


def save_model(model, path):
    """Write the bundle: versioned header, json metadata, little-endian blob."""
    arrays = _blob_arrays(model)
    header = {
        "layer_sizes": list(LAYER_SIZES),
        "gamma": model.loss_hp.gamma,
        "epsilon": model.loss_hp.epsilon,
        "pass_through": [int(v) for v in model.preproc.pass_through],
        "metadata": model.metadata,
        "shapes": [list(a.shape) for a in arrays],
    }
    buf = io.BytesIO()
    buf.write((MODEL_MAGIC + "\n").encode())
    buf.write((json.dumps(header) + "\n").encode())
    for a in arrays:
        buf.write(np.ascontiguousarray(a, dtype="<f8").tobytes())
    tmp = str(path) + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(buf.getvalue())
    os.replace(tmp, path)


def load_model(path):
    """Read a bundle written by :func:`save_model`; bitwise inverse."""
    with open(path, "rb") as fh:
        magic = fh.readline().decode().rstrip("\n")
        if magic != MODEL_MAGIC:
            raise ModelFormatError(f"bad magic line {magic!r}")
        try:
            header = json.loads(fh.readline().decode())
        except json.JSONDecodeError as exc:
            raise ModelFormatError(f"bad header: {exc}") from exc
        if tuple(header["layer_sizes"]) != LAYER_SIZES:
            raise ModelFormatError(f"unsupported layer sizes {header['layer_sizes']}")
        arrays = []
        for name, shape in zip(_BLOB_FIELDS, header["shapes"]):
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(count * 8)
            if len(raw) != count * 8:
                raise ModelFormatError(f"truncated blob while reading {name}")
            arrays.append(np.frombuffer(raw, dtype="<f8").reshape(shape).copy())
        if fh.read(1):
            raise ModelFormatError("trailing bytes after weight blob")
    means, sigmas, w1, b1, w2, b2, w3, b3 = arrays
    stats = PreprocStats(
        means=means, sigmas=sigmas,
        pass_through=np.asarray(header["pass_through"], dtype=bool),
    )
    hp = LossHyperparams(gamma=header["gamma"], epsilon=header["epsilon"])
    return ModelBundle(w1=w1, b1=b1, w2=w2, b2=b2, w3=w3, b3=b3,
                       preproc=stats, loss_hp=hp, metadata=header["metadata"])
