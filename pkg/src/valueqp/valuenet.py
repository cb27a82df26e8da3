"""Fully-connected value regressor with its own optimizer.

Architecture: 33 -> 256 -> 256 -> 256 -> 42, tanh hidden activations,
linear output.  Trained with Adam on a mean-absolute-error loss over
per-component normalized targets.  Inputs are normalized too (tanh
saturates on raw meter/radian scales).

At inference the 36 tail numbers are reshaped to 6x6, symmetrized,
and eigenvalue-clamped so the QP Hessian is positive definite.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .features import FEATURE_DIM, TARGET_DIM

DEFAULT_SIZES = (FEATURE_DIM, 256, 256, 256, TARGET_DIM)

MODEL_MAGIC = b"VQPM"
MODEL_VERSION = 1


class ModelFormatError(RuntimeError):
    pass


class PredictionError(RuntimeError):
    """Non-finite network output at inference."""


@dataclass
class MlpModel:
    weights: list          # [(fan_in, fan_out), ...]
    biases: list           # [(fan_out,), ...]

    @property
    def sizes(self) -> tuple:
        return (self.weights[0].shape[0],) + tuple(
            w.shape[1] for w in self.weights
        )

    def num_params(self) -> int:
        return sum(w.size for w in self.weights) + sum(
            b.size for b in self.biases
        )


def init_model(
    rng: np.random.Generator, sizes: tuple = DEFAULT_SIZES
) -> MlpModel:
    """Uniform +-sqrt(6 / (fan_in + fan_out)) init per layer."""
    weights = []
    biases = []
    for a, b in zip(sizes[:-1], sizes[1:]):
        bound = np.sqrt(6.0 / (a + b))
        weights.append(rng.uniform(-bound, bound, size=(a, b)))
        biases.append(np.zeros(b))
    return MlpModel(weights=weights, biases=biases)


def forward(model: MlpModel, x: np.ndarray) -> np.ndarray:
    """Evaluate the network on (33,) or (N, 33) inputs."""
    single = np.ndim(x) == 1
    a = np.atleast_2d(np.asarray(x, float))
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        a = a @ w + b
        if i < last:
            a = np.tanh(a)
    return a[0] if single else a


def _forward_cached(model: MlpModel, x: np.ndarray):
    acts = [x]
    a = x
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        a = a @ w + b
        if i < last:
            a = np.tanh(a)
        acts.append(a)
    return a, acts


def l1_loss_and_grads(model: MlpModel, x: np.ndarray, target: np.ndarray):
    """Mean absolute error over all output components and its
    parameter gradients.  The subgradient at a zero residual is 0."""
    y, acts = _forward_cached(model, x)
    resid = y - target
    loss = float(np.mean(np.abs(resid)))
    d = np.sign(resid) / resid.size

    grads_w = [None] * len(model.weights)
    grads_b = [None] * len(model.biases)
    last = len(model.weights) - 1
    for i in range(last, -1, -1):
        a_prev = acts[i]
        grads_w[i] = a_prev.T @ d
        grads_b[i] = d.sum(axis=0)
        if i > 0:
            d = (d @ model.weights[i].T) * (1.0 - acts[i] ** 2)
    return loss, grads_w, grads_b


@dataclass
class Normalizer:
    """Per-component mean/std for features and targets (std floored)."""

    feat_mean: np.ndarray
    feat_std: np.ndarray
    target_mean: np.ndarray
    target_std: np.ndarray

    STD_FLOOR = 1e-8

    @classmethod
    def fit(cls, features: np.ndarray, targets: np.ndarray) -> "Normalizer":
        return cls(
            feat_mean=features.mean(axis=0),
            feat_std=np.maximum(features.std(axis=0), cls.STD_FLOOR),
            target_mean=targets.mean(axis=0),
            target_std=np.maximum(targets.std(axis=0), cls.STD_FLOOR),
        )

    def normalize_features(self, phi: np.ndarray) -> np.ndarray:
        return (phi - self.feat_mean) / self.feat_std

    def normalize_targets(self, t: np.ndarray) -> np.ndarray:
        return (t - self.target_mean) / self.target_std

    def denormalize_targets(self, t: np.ndarray) -> np.ndarray:
        return t * self.target_std + self.target_mean


@dataclass
class TrainConfig:
    epochs: int = 256
    batch: int = 128
    learning_rate: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    val_fraction: float = 0.1
    sizes: tuple = DEFAULT_SIZES

    def __post_init__(self) -> None:
        if self.epochs < 1 or self.batch < 1:
            raise ValueError("epochs and batch must be >= 1")


class AdamState:
    def __init__(self, model: MlpModel):
        self.m_w = [np.zeros_like(w) for w in model.weights]
        self.v_w = [np.zeros_like(w) for w in model.weights]
        self.m_b = [np.zeros_like(b) for b in model.biases]
        self.v_b = [np.zeros_like(b) for b in model.biases]
        self.t = 0

    def update(self, model: MlpModel, grads_w, grads_b, cfg: TrainConfig):
        self.t += 1
        c1 = 1.0 - cfg.beta1**self.t
        c2 = 1.0 - cfg.beta2**self.t
        for i in range(len(model.weights)):
            for p, g, m, v in (
                (model.weights[i], grads_w[i], self.m_w[i], self.v_w[i]),
                (model.biases[i], grads_b[i], self.m_b[i], self.v_b[i]),
            ):
                m *= cfg.beta1
                m += (1.0 - cfg.beta1) * g
                v *= cfg.beta2
                v += (1.0 - cfg.beta2) * g * g
                p -= cfg.learning_rate * (m / c1) / (np.sqrt(v / c2) + cfg.eps)


def train(dataset, cfg: TrainConfig):
    """Fit the regressor; returns (model, normalizer, curves).

    ``curves`` is an (epochs, 2) array of train/validation L1 in
    normalized units per epoch.  Statistics come from the training
    split only.  Deterministic for a fixed seed.
    """
    n = len(dataset)
    if n == 0:
        raise ValueError("dataset is empty")
    rng = np.random.default_rng(cfg.seed)
    perm = rng.permutation(n)
    n_val = int(round(n * cfg.val_fraction))
    val_idx = perm[:n_val]
    train_idx = perm[n_val:]
    if train_idx.size == 0:
        raise ValueError("validation fraction leaves no training data")

    feats = dataset.features
    targs = dataset.targets
    norm = Normalizer.fit(feats[train_idx], targs[train_idx])
    x_train = norm.normalize_features(feats[train_idx])
    t_train = norm.normalize_targets(targs[train_idx])
    x_val = norm.normalize_features(feats[val_idx])
    t_val = norm.normalize_targets(targs[val_idx])

    model = init_model(rng, cfg.sizes)
    adam = AdamState(model)
    curves = np.zeros((cfg.epochs, 2))
    n_train = train_idx.size
    for epoch in range(cfg.epochs):
        order = rng.permutation(n_train)
        losses = []
        for start in range(0, n_train, cfg.batch):
            batch = order[start : start + cfg.batch]
            loss, gw, gb = l1_loss_and_grads(model, x_train[batch], t_train[batch])
            if not np.isfinite(loss):
                raise RuntimeError(
                    f"non-finite loss at epoch {epoch}, batch index {start // cfg.batch}"
                )
            adam.update(model, gw, gb, cfg)
            losses.append(loss)
        curves[epoch, 0] = np.mean(losses)
        if val_idx.size:
            pred = forward(model, x_val)
            curves[epoch, 1] = np.mean(np.abs(pred - t_val))
    return model, norm, curves


def median_baseline_l1(train_targets: np.ndarray, val_targets: np.ndarray) -> float:
    """Validation L1 of the constant per-component median predictor."""
    med = np.median(train_targets, axis=0)
    return float(np.mean(np.abs(val_targets - med)))


def predict_expansion(
    model: MlpModel,
    normalizer: Normalizer,
    phi: np.ndarray,
    eps_eig: float = 1e-4,
) -> tuple[np.ndarray, np.ndarray]:
    """Predict (g, H) with H symmetrized and eigenvalue-clamped.

    Eigenvalues below ``eps_eig`` are replaced by ``eps_eig`` so the
    returned matrix is positive definite (Cholesky-factorizable).
    """
    raw = forward(model, normalizer.normalize_features(np.asarray(phi, float)))
    y = normalizer.denormalize_targets(raw)
    return project_prediction(y, eps_eig)


def project_prediction(
    y: np.ndarray, eps_eig: float = 1e-4
) -> tuple[np.ndarray, np.ndarray]:
    """Split a raw 42-vector and make the Hessian block PSD."""
    y = np.asarray(y, float).reshape(TARGET_DIM)
    g = y[:6].copy()
    H = y[6:].reshape(6, 6)
    Hs = 0.5 * (H + H.T)
    if not np.all(np.isfinite(Hs)):
        raise PredictionError("non-finite Hessian prediction")
    w, V = np.linalg.eigh(Hs)
    w = np.maximum(w, eps_eig)
    H_psd = (V * w) @ V.T
    H_psd = 0.5 * (H_psd + H_psd.T)
    return g, H_psd


# ---------------------------------------------------------------------------
# model file


def save_model(
    model: MlpModel,
    normalizer: Normalizer,
    path,
    eps_eig: float = 1e-4,
    config_hash: str = "",
) -> None:
    header = {
        "sizes": list(model.sizes),
        "eps_eig": eps_eig,
        "config_hash": config_hash,
    }
    blob = json.dumps(header, sort_keys=True).encode()
    arrays = [
        normalizer.feat_mean,
        normalizer.feat_std,
        normalizer.target_mean,
        normalizer.target_std,
    ]
    for w, b in zip(model.weights, model.biases):
        arrays.extend([w, b])
    with open(path, "wb") as f:
        f.write(MODEL_MAGIC)
        f.write(struct.pack("<II", MODEL_VERSION, len(blob)))
        f.write(blob)
        for a in arrays:
            f.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_model(path) -> tuple[MlpModel, Normalizer, dict]:
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != MODEL_MAGIC:
        raise ModelFormatError(f"{path}: bad magic {raw[:4]!r}")
    version, hlen = struct.unpack_from("<II", raw, 4)
    if version != MODEL_VERSION:
        raise ModelFormatError(f"{path}: unsupported version {version}")
    header = json.loads(raw[12 : 12 + hlen])
    sizes = tuple(header["sizes"])
    off = 12 + hlen
    buf = np.frombuffer(raw, dtype="<f8", offset=off)

    def take(shape):
        nonlocal buf
        size = int(np.prod(shape))
        if buf.size < size:
            raise ModelFormatError(f"{path}: truncated payload")
        out = buf[:size].reshape(shape).copy()
        buf = buf[size:]
        return out

    norm = Normalizer(
        feat_mean=take((sizes[0],)),
        feat_std=take((sizes[0],)),
        target_mean=take((sizes[-1],)),
        target_std=take((sizes[-1],)),
    )
    weights = []
    biases = []
    for a, b in zip(sizes[:-1], sizes[1:]):
        weights.append(take((a, b)))
        biases.append(take((b,)))
    if buf.size:
        raise ModelFormatError(f"{path}: {buf.size} trailing values")
    return MlpModel(weights=weights, biases=biases), norm, header
