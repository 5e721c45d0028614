"""Minimal fully connected ReLU network with softmax head.

Implements exactly what the study protocol needs and nothing more: forward
passes with optional inverted dropout, manual backpropagation, AdamW with
decoupled weight decay, mini-batch training with early stopping on the
validation loss, and JSON weight checkpoints. Three interchangeable losses
share the backbone: plain cross entropy, cross entropy with a per-network
class-bias term, and the evidential Dirichlet loss.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit, gammaln
from scipy.special import polygamma, psi

log = logging.getLogger(__name__)

__all__ = [
    "TrainingDiverged",
    "MLPConfig",
    "TrainConfig",
    "NetworkWeights",
    "SIZE_PRESETS",
    "BATCH_SCHEDULE",
    "batch_size_for",
    "init_weights",
    "softmax",
    "softplus",
    "forward",
    "make_dropout_masks",
    "cross_entropy",
    "CrossEntropyLoss",
    "ConflictualLoss",
    "EvidentialLoss",
    "AdamW",
    "train",
    "validation_cross_entropy",
    "save_weights",
    "load_weights",
]

#: (hidden layers, hidden width) presets used in the hyperparameter sweeps.
SIZE_PRESETS: dict[str, tuple[int, int]] = {
    "small": (1, 20),
    "medium": (3, 200),
    "large": (8, 2000),
}

#: Mini-batch sizes paired with the training-set sizes of the data sweep.
BATCH_SCHEDULE: tuple[tuple[int, int], ...] = (
    (250, 128), (500, 128), (1000, 256), (2000, 256),
    (3000, 1024), (5000, 1024), (10000, 2048),
)

_LOG_CLIP = 1e-9


class TrainingDiverged(RuntimeError):
    """Raised when activations or losses stop being finite during training."""


def batch_size_for(n_train: int) -> int:
    """Batch size from the schedule: entry of the largest size <= n_train."""
    chosen = BATCH_SCHEDULE[0][1]
    for n, b in BATCH_SCHEDULE:
        if n_train >= n:
            chosen = b
    return chosen


@dataclass(frozen=True)
class MLPConfig:
    hidden_layers: int
    hidden_width: int
    input_dim: int = 2
    output_dim: int = 2
    dropout_rate: float = 0.0

    def __post_init__(self):
        if self.hidden_layers < 1 or self.hidden_width < 1:
            raise ValueError("hidden_layers and hidden_width must be positive")
        if not (0.0 <= self.dropout_rate < 1.0):
            raise ValueError("dropout_rate must lie in [0, 1)")

    @classmethod
    def sized(cls, name: str, dropout_rate: float = 0.0) -> "MLPConfig":
        layers, width = SIZE_PRESETS[name]
        return cls(hidden_layers=layers, hidden_width=width, dropout_rate=dropout_rate)

    @property
    def layer_dims(self) -> list[int]:
        return [self.input_dim] + [self.hidden_width] * self.hidden_layers + [self.output_dim]


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float
    weight_decay: float
    batch_size: int
    seed: int
    max_epochs: int = 200
    patience: int = 20

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size < 1:
            raise ValueError("learning_rate must be positive and batch_size >= 1")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be nonnegative")


@dataclass
class NetworkWeights:
    """Per-layer weight matrices (in x out) and bias vectors."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def copy(self) -> "NetworkWeights":
        return NetworkWeights([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def all_finite(self) -> bool:
        return all(np.isfinite(p).all() for p in self.params())


def init_weights(config: MLPConfig, rng: np.random.Generator) -> NetworkWeights:
    """Kaiming-uniform fan-in initialization for ReLU layers, zero biases."""
    dims = config.layer_dims
    weights, biases = [], []
    for d_in, d_out in zip(dims[:-1], dims[1:]):
        bound = math.sqrt(6.0 / d_in)
        weights.append(rng.uniform(-bound, bound, size=(d_in, d_out)))
        biases.append(np.zeros(d_out))
    return NetworkWeights(weights, biases)


def softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def softplus(z):
    z = np.asarray(z, dtype=float)
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


def make_dropout_masks(config: MLPConfig, n: int, rng: np.random.Generator):
    """Inverted-dropout masks, one per hidden layer, pre-scaled by 1/(1-p).

    Returns None when the dropout rate is 0 so no random numbers are drawn.
    """
    p = config.dropout_rate
    if p == 0.0:
        return None
    keep = 1.0 - p
    return [
        (rng.random((n, config.hidden_width)) >= p).astype(float) / keep
        for _ in range(config.hidden_layers)
    ]


def _forward_cached(net: NetworkWeights, x: np.ndarray, masks=None):
    """Forward pass keeping per-layer inputs and pre-activations for backprop."""
    a = np.asarray(x, dtype=float)
    inputs, preacts = [a], []
    n_hidden = net.n_layers - 1
    for l in range(n_hidden):
        z = a @ net.weights[l] + net.biases[l]
        preacts.append(z)
        a = np.maximum(z, 0.0)
        if masks is not None:
            a = a * masks[l]
        inputs.append(a)
    logits = a @ net.weights[-1] + net.biases[-1]
    return logits, (inputs, preacts, masks)


def forward(net: NetworkWeights, x: np.ndarray, dropout_masks=None):
    """Evaluate the network; returns (logits, softmax probabilities).

    Raises TrainingDiverged if activations stop being finite.
    """
    x = np.asarray(x, dtype=float)
    squeeze = x.ndim == 1
    logits, _ = _forward_cached(net, np.atleast_2d(x), dropout_masks)
    if not np.isfinite(logits).all():
        raise TrainingDiverged("non-finite activations in forward pass")
    probs = softmax(logits)
    if squeeze:
        return logits[0], probs[0]
    return logits, probs


def _backprop(net: NetworkWeights, cache, grad_logits: np.ndarray):
    """Gradients of a scalar loss w.r.t. all parameters given dLoss/dlogits."""
    inputs, preacts, masks = cache
    grads_w = [None] * net.n_layers
    grads_b = [None] * net.n_layers
    g = grad_logits
    grads_w[-1] = inputs[-1].T @ g
    grads_b[-1] = g.sum(axis=0)
    # Summed per output column so swapping class heads mirrors the arithmetic
    # exactly (a fused matmul accumulation is not operand-order symmetric).
    w_out = net.weights[-1]
    da = g[:, :1] * w_out[:, 0][None, :]
    for j in range(1, w_out.shape[1]):
        da = da + g[:, j:j + 1] * w_out[:, j][None, :]
    for l in range(net.n_layers - 2, -1, -1):
        if masks is not None:
            da = da * masks[l]
        dz = da * (preacts[l] > 0.0)
        grads_w[l] = inputs[l].T @ dz
        grads_b[l] = dz.sum(axis=0)
        if l > 0:
            da = dz @ net.weights[l].T
    grads = []
    for gw, gb in zip(grads_w, grads_b):
        grads.extend((gw, gb))
    return grads


def cross_entropy(onehot: np.ndarray, probs: np.ndarray) -> float:
    """Summed cross entropy -sum_i sum_j c_ij log q_ij with clipped probabilities."""
    q = np.clip(probs, _LOG_CLIP, None)
    return float(-(onehot * np.log(q)).sum())


class CrossEntropyLoss:
    """Plain softmax cross entropy (sum over the batch)."""

    def probs(self, logits: np.ndarray) -> np.ndarray:
        return softmax(logits)

    def value(self, logits: np.ndarray, onehot: np.ndarray, epoch: int = 0) -> float:
        return cross_entropy(onehot, softmax(logits))

    def grad_logits(self, logits: np.ndarray, onehot: np.ndarray, epoch: int = 0) -> np.ndarray:
        # General form (sum_j c_j) q - c, valid for rows with zero or
        # fractional label weight; reduces to q - c on one-hot rows.
        return onehot.sum(axis=1, keepdims=True) * softmax(logits) - onehot


class ConflictualLoss(CrossEntropyLoss):
    """Cross entropy plus a constant pull of strength beta toward one class.

    The extra term is -beta log q_b summed over the batch, b being the class
    this ensemble member is biased toward; beta = 0 recovers plain cross
    entropy exactly.
    """

    def __init__(self, bias_class: int, beta: float):
        if bias_class not in (1, 2):
            raise ValueError("bias_class must be 1 or 2")
        if beta < 0:
            raise ValueError("beta must be nonnegative")
        self.bias_class = bias_class
        self.beta = float(beta)

    def value(self, logits, onehot, epoch: int = 0) -> float:
        q = softmax(logits)
        ce = cross_entropy(onehot, q)
        qb = np.clip(q[:, self.bias_class - 1], _LOG_CLIP, None)
        return ce - self.beta * float(np.log(qb).sum())

    def grad_logits(self, logits, onehot, epoch: int = 0) -> np.ndarray:
        q = softmax(logits)
        target = np.zeros_like(q)
        target[:, self.bias_class - 1] = 1.0
        ce = onehot.sum(axis=1, keepdims=True) * q - onehot
        return ce + self.beta * (q - target)


class EvidentialLoss:
    """Dirichlet evidence loss: digamma Bayes risk plus annealed KL regularizer.

    Class evidence is softplus(logit), alpha = evidence + 1; the KL term
    penalizes divergence of the label-masked alpha from the uniform Dirichlet
    and its weight grows linearly with the epoch: lambda0 * t / anneal_epochs.
    """

    def __init__(self, lambda0: float, anneal_epochs: int = 200):
        if lambda0 < 0:
            raise ValueError("lambda0 must be nonnegative")
        self.lambda0 = float(lambda0)
        self.anneal_epochs = int(anneal_epochs)

    def weight(self, epoch: int) -> float:
        return self.lambda0 * epoch / self.anneal_epochs

    def probs(self, logits: np.ndarray) -> np.ndarray:
        alpha = softplus(logits) + 1.0
        return alpha / alpha.sum(axis=-1, keepdims=True)

    @staticmethod
    def _kl_to_uniform(alpha_tilde: np.ndarray) -> np.ndarray:
        """KL( Dirichlet(alpha_tilde) || Dirichlet(1, .., 1) ) per row, closed form."""
        s = alpha_tilde.sum(axis=-1)
        k = alpha_tilde.shape[-1]
        lognorm = gammaln(s) - gammaln(alpha_tilde).sum(axis=-1) - gammaln(float(k))
        tilt = ((alpha_tilde - 1.0) * (psi(alpha_tilde) - psi(s)[..., None])).sum(axis=-1)
        return lognorm + tilt

    def value(self, logits, onehot, epoch: int = 0) -> float:
        alpha = softplus(logits) + 1.0
        s = alpha.sum(axis=-1)
        risk = (onehot * (psi(s)[:, None] - psi(alpha))).sum()
        lam = self.weight(epoch)
        if lam == 0.0:
            return float(risk)
        alpha_tilde = onehot + (1.0 - onehot) * alpha
        return float(risk + lam * self._kl_to_uniform(alpha_tilde).sum())

    def grad_logits(self, logits, onehot, epoch: int = 0) -> np.ndarray:
        alpha = softplus(logits) + 1.0
        s = alpha.sum(axis=-1, keepdims=True)
        trigamma = lambda x: polygamma(1, x)  # noqa: E731
        d_risk = trigamma(s) - onehot * trigamma(alpha)
        lam = self.weight(epoch)
        if lam != 0.0:
            alpha_tilde = onehot + (1.0 - onehot) * alpha
            s_tilde = alpha_tilde.sum(axis=-1, keepdims=True)
            k = logits.shape[-1]
            d_kl = (alpha_tilde - 1.0) * trigamma(alpha_tilde) - (s_tilde - k) * trigamma(s_tilde)
            d_alpha = d_risk + lam * (1.0 - onehot) * d_kl
        else:
            d_alpha = d_risk
        return d_alpha * expit(logits)


class AdamW:
    """Adam with decoupled weight decay (beta1=0.9, beta2=0.999, eps=1e-8)."""

    def __init__(self, params: list[np.ndarray], lr: float, weight_decay: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            update = (m / b1c) / (np.sqrt(v / b2c) + self.eps)
            p -= self.lr * update
            if self.weight_decay != 0.0:
                p -= self.lr * self.weight_decay * p


def validation_cross_entropy(net: NetworkWeights, loss, val_x: np.ndarray, val_onehot: np.ndarray) -> float:
    """Mean cross entropy of the loss's predictive probabilities on a holdout set."""
    with np.errstate(over="ignore", invalid="ignore"):
        logits, _ = _forward_cached(net, val_x)
        if not np.isfinite(logits).all():
            raise TrainingDiverged("non-finite activations on validation set")
        return cross_entropy(val_onehot, loss.probs(logits)) / len(val_x)


def train(
    mlp_cfg: MLPConfig,
    tcfg: TrainConfig,
    train_x: np.ndarray,
    train_onehot: np.ndarray,
    val_x: np.ndarray,
    val_onehot: np.ndarray,
    loss=None,
    initial: NetworkWeights | None = None,
) -> tuple[NetworkWeights, float]:
    """Mini-batch AdamW training with early stopping on validation loss.

    The run seed drives initialization, epoch shuffles and dropout masks
    through one generator, so identical configuration and data reproduce the
    final weights bit for bit. Training stops after ``max_epochs`` or when
    the validation loss has not improved for ``patience`` epochs; the weight
    snapshot with the lowest validation loss is returned together with that
    loss. A NaN loss aborts with TrainingDiverged.
    """
    if loss is None:
        loss = CrossEntropyLoss()
    rng = np.random.default_rng(tcfg.seed)
    net = initial.copy() if initial is not None else init_weights(mlp_cfg, rng)
    params = net.params()
    opt = AdamW(params, tcfg.learning_rate, tcfg.weight_decay)
    n = len(train_x)
    train_x = np.asarray(train_x, dtype=float)
    train_onehot = np.asarray(train_onehot, dtype=float)

    best_val = math.inf
    best_net = net.copy()
    since_improve = 0
    for epoch in range(tcfg.max_epochs):
        perm = rng.permutation(n)
        for start in range(0, n, tcfg.batch_size):
            idx = perm[start:start + tcfg.batch_size]
            xb, yb = train_x[idx], train_onehot[idx]
            masks = make_dropout_masks(mlp_cfg, len(idx), rng)
            # Diverging weights overflow before they go NaN; the explicit
            # finiteness check is the detector, not the fp warnings.
            with np.errstate(over="ignore", invalid="ignore"):
                logits, cache = _forward_cached(net, xb, masks)
                if not np.isfinite(logits).all():
                    raise TrainingDiverged(f"non-finite activations at epoch {epoch}")
                grad_logits = loss.grad_logits(logits, yb, epoch) / len(idx)
                grads = _backprop(net, cache, grad_logits)
                opt.step(params, grads)
        val_loss = validation_cross_entropy(net, loss, val_x, val_onehot)
        if not math.isfinite(val_loss):
            raise TrainingDiverged(f"non-finite validation loss at epoch {epoch}")
        if val_loss < best_val:
            best_val = val_loss
            best_net = net.copy()
            since_improve = 0
        else:
            since_improve += 1
            if since_improve >= tcfg.patience:
                break
    return best_net, best_val


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def weights_to_dict(net: NetworkWeights) -> dict:
    """JSON-ready dict: per-layer shapes plus row-major flattened values."""
    return {
        "layers": [
            {
                "shape": list(w.shape),
                "w": w.reshape(-1).tolist(),
                "b": b.tolist(),
            }
            for w, b in zip(net.weights, net.biases)
        ]
    }


def weights_from_dict(d: dict) -> NetworkWeights:
    weights, biases = [], []
    for layer in d["layers"]:
        shape = tuple(layer["shape"])
        weights.append(np.asarray(layer["w"], dtype=float).reshape(shape))
        biases.append(np.asarray(layer["b"], dtype=float))
    return NetworkWeights(weights, biases)


def save_weights(path, net: NetworkWeights) -> None:
    Path(path).write_text(json.dumps(weights_to_dict(net)))


def load_weights(path) -> NetworkWeights:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(str(path))
    return weights_from_dict(json.loads(path.read_text()))
