"""Four uncertainty-aware neural classifiers behind one interface.

* ensemble: independently trained networks whose softmax outputs are
  posterior draws (mean / population-std aggregation),
* conflictual ensemble: same, with half the members biased toward each
  class through an extra loss term,
* evidential: a single network whose softplus evidence parameterizes a
  Dirichlet over class probabilities,
* dropout: a single network trained with dropout that keeps dropout active
  at inference and treats stochastic forward passes as posterior draws.

All of them produce per-point class-2 predictive means with
standard-deviation uncertainties and are deterministic given a fit seed.
"""

from __future__ import annotations

import abc
import logging
from dataclasses import dataclass

import numpy as np

from . import neuralnet as nn
from .posterior import PredictiveBatch, mc_estimate
from .synthdata import Dataset

log = logging.getLogger(__name__)

__all__ = [
    "ProbabilisticClassifier",
    "EnsembleClassifier",
    "ConflictualEnsembleClassifier",
    "EvidentialClassifier",
    "DropoutClassifier",
    "DirichletOutput",
    "nne_predict",
    "edl_forward",
    "edl_predict",
    "mcd_predict",
    "spawn_seeds",
]


def spawn_seeds(seed: int, n: int) -> list[int]:
    """Derive ``n`` independent child seeds from one root seed."""
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(n, dtype=np.uint64)]


class ProbabilisticClassifier(abc.ABC):
    """Common fit/predict contract for all algorithms in the study."""

    @abc.abstractmethod
    def fit(self, train: Dataset, validation: Dataset, seed: int) -> "ProbabilisticClassifier":
        """Train on ``train`` using ``validation`` for early stopping and
        model selection; all randomness derives from ``seed``."""

    @abc.abstractmethod
    def predict(self, x: np.ndarray) -> PredictiveBatch:
        """Class-2 predictive mean and uncertainty for query points (n, 2)."""


def _train_config(classifier, n_train: int, seed: int) -> nn.TrainConfig:
    batch = classifier.batch_size or nn.batch_size_for(n_train)
    return nn.TrainConfig(
        learning_rate=classifier.learning_rate,
        weight_decay=classifier.weight_decay,
        batch_size=batch,
        seed=seed,
        max_epochs=classifier.max_epochs,
        patience=classifier.patience,
    )


def nne_predict(members: list[nn.NetworkWeights], x: np.ndarray) -> PredictiveBatch:
    """Aggregate member softmax outputs into a predictive batch."""
    if len(members) < 2:
        raise ValueError("need at least 2 surviving ensemble members")
    samples = np.stack([nn.forward(m, x)[1][:, 1] for m in members])
    return mc_estimate(samples)


class EnsembleClassifier(ProbabilisticClassifier):
    """Ensemble of independently initialized and shuffled networks."""

    algorithm = "nne"

    def __init__(self, mlp: nn.MLPConfig | None = None, learning_rate: float = 1e-3,
                 weight_decay: float = 0.01, n_members: int = 20, batch_size: int | None = None,
                 max_epochs: int = 200, patience: int = 20):
        self.mlp = mlp or nn.MLPConfig.sized("medium")
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.n_members = n_members
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.members: list[nn.NetworkWeights] = []
        self.member_val_losses: list[float] = []
        self.diverged_members = 0

    def _member_loss(self, index: int):
        return nn.CrossEntropyLoss()

    def fit(self, train: Dataset, validation: Dataset, seed: int):
        seeds = spawn_seeds(seed, self.n_members)
        x, y = train.x, train.onehot
        vx, vy = validation.x, validation.onehot
        self.members, self.member_val_losses = [], []
        self.diverged_members = 0
        for i, member_seed in enumerate(seeds):
            tcfg = _train_config(self, len(train), member_seed)
            try:
                weights, val = nn.train(self.mlp, tcfg, x, y, vx, vy, loss=self._member_loss(i))
            except nn.TrainingDiverged as err:
                log.warning("%s member %d diverged: %s", self.algorithm, i, err)
                self.diverged_members += 1
                continue
            self.members.append(weights)
            self.member_val_losses.append(val)
        if len(self.members) < 2:
            raise nn.TrainingDiverged(
                f"only {len(self.members)} of {self.n_members} ensemble members survived")
        return self

    def predict(self, x: np.ndarray) -> PredictiveBatch:
        return nne_predict(self.members, x)

    def member_probs(self, x: np.ndarray) -> np.ndarray:
        """(members, points) class-2 probabilities, one row per member."""
        return np.stack([nn.forward(m, x)[1][:, 1] for m in self.members])

    def hyperparameters(self) -> dict:
        return {
            "size": [self.mlp.hidden_layers, self.mlp.hidden_width],
            "dropout_rate": self.mlp.dropout_rate,
            "learning_rate": self.learning_rate,
            "weight_decay": self.weight_decay,
            "n_members": self.n_members,
            "batch_size": self.batch_size,
            "max_epochs": self.max_epochs,
            "patience": self.patience,
        }

    def to_dict(self) -> dict:
        return {
            "members": [nn.weights_to_dict(m) for m in self.members],
            "member_val_losses": self.member_val_losses,
            "diverged_members": self.diverged_members,
        }

    def restore(self, model: dict) -> "EnsembleClassifier":
        self.members = [nn.weights_from_dict(d) for d in model["members"]]
        self.member_val_losses = list(model.get("member_val_losses", []))
        self.diverged_members = int(model.get("diverged_members", 0))
        return self


class ConflictualEnsembleClassifier(EnsembleClassifier):
    """Ensemble whose members are split evenly between the two classes and
    trained with an extra pull of strength beta toward their class."""

    algorithm = "cl"

    def __init__(self, beta: float = 0.1, **kwargs):
        super().__init__(**kwargs)
        if self.n_members % 2 != 0:
            raise ValueError("conflictual ensembles need an even member count")
        self.beta = float(beta)

    @property
    def bias_classes(self) -> list[int]:
        half = self.n_members // 2
        return [1] * half + [2] * (self.n_members - half)

    def _member_loss(self, index: int):
        return nn.ConflictualLoss(self.bias_classes[index], self.beta)

    def hyperparameters(self) -> dict:
        out = super().hyperparameters()
        out["beta"] = self.beta
        return out


# ---------------------------------------------------------------------------
# Evidential network
# ---------------------------------------------------------------------------

@dataclass
class DirichletOutput:
    """Dirichlet concentration per query point; evidence is alpha - 1."""

    alpha: np.ndarray  # (n, 2), entries >= 1

    def __post_init__(self):
        self.alpha = np.atleast_2d(np.asarray(self.alpha, dtype=float))
        if (self.alpha < 1.0 - 1e-12).any():
            raise ValueError("Dirichlet concentrations must be >= 1")

    @property
    def evidence(self) -> np.ndarray:
        return self.alpha - 1.0

    @property
    def strength(self) -> np.ndarray:
        return self.alpha.sum(axis=1)


def edl_forward(net: nn.NetworkWeights, x: np.ndarray) -> DirichletOutput:
    """Map logits to Dirichlet concentrations alpha = softplus(logit) + 1."""
    logits, _ = nn.forward(net, np.atleast_2d(x))
    return DirichletOutput(nn.softplus(logits) + 1.0)


def edl_predict(net: nn.NetworkWeights, x: np.ndarray) -> PredictiveBatch:
    """Mean and standard deviation of the predicted Dirichlet for class 2."""
    out = edl_forward(net, x)
    s = out.strength
    mean = out.alpha[:, 1] / s
    uncertainty = np.sqrt(mean * (1.0 - mean) / (s + 1.0))
    return PredictiveBatch(mean=mean, uncertainty=uncertainty)


class EvidentialClassifier(ProbabilisticClassifier):
    """Single evidential network chosen among candidates by validation loss."""

    algorithm = "edl"

    def __init__(self, mlp: nn.MLPConfig | None = None, learning_rate: float = 1e-3,
                 weight_decay: float = 0.01, lambda0: float = 0.002, n_candidates: int = 20,
                 batch_size: int | None = None, max_epochs: int = 200, patience: int = 20,
                 keep_candidates: bool = False):
        self.mlp = mlp or nn.MLPConfig.sized("medium")
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.lambda0 = float(lambda0)
        self.n_candidates = n_candidates
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.keep_candidates = keep_candidates
        self.weights: nn.NetworkWeights | None = None
        self.candidate_weights: list[nn.NetworkWeights] = []
        self.candidate_val_losses: list[float] = []
        self.diverged_members = 0

    def fit(self, train: Dataset, validation: Dataset, seed: int):
        seeds = spawn_seeds(seed, self.n_candidates)
        x, y = train.x, train.onehot
        vx, vy = validation.x, validation.onehot
        loss = nn.EvidentialLoss(self.lambda0, anneal_epochs=self.max_epochs)
        best, best_val = None, np.inf
        self.candidate_weights, self.candidate_val_losses = [], []
        self.diverged_members = 0
        for i, cand_seed in enumerate(seeds):
            tcfg = _train_config(self, len(train), cand_seed)
            try:
                weights, val = nn.train(self.mlp, tcfg, x, y, vx, vy, loss=loss)
            except nn.TrainingDiverged as err:
                log.warning("edl candidate %d diverged: %s", i, err)
                self.diverged_members += 1
                continue
            self.candidate_val_losses.append(val)
            if self.keep_candidates:
                self.candidate_weights.append(weights)
            if val < best_val:
                best, best_val = weights, val
        if best is None:
            raise nn.TrainingDiverged("all evidential candidates diverged")
        self.weights = best
        return self

    def predict(self, x: np.ndarray) -> PredictiveBatch:
        if self.weights is None:
            raise RuntimeError("classifier is not fitted")
        return edl_predict(self.weights, x)

    def hyperparameters(self) -> dict:
        return {
            "size": [self.mlp.hidden_layers, self.mlp.hidden_width],
            "learning_rate": self.learning_rate,
            "weight_decay": self.weight_decay,
            "lambda0": self.lambda0,
            "n_candidates": self.n_candidates,
            "batch_size": self.batch_size,
            "max_epochs": self.max_epochs,
            "patience": self.patience,
        }

    def to_dict(self) -> dict:
        return {
            "weights": nn.weights_to_dict(self.weights),
            "candidate_val_losses": self.candidate_val_losses,
            "diverged_members": self.diverged_members,
        }

    def restore(self, model: dict) -> "EvidentialClassifier":
        self.weights = nn.weights_from_dict(model["weights"])
        self.candidate_val_losses = list(model.get("candidate_val_losses", []))
        self.diverged_members = int(model.get("diverged_members", 0))
        return self


# ---------------------------------------------------------------------------
# Monte Carlo dropout
# ---------------------------------------------------------------------------

def mcd_predict(net: nn.NetworkWeights, config: nn.MLPConfig, x: np.ndarray,
                passes: int = 500, seed: int = 0) -> PredictiveBatch:
    """Stochastic forward passes with fresh dropout masks as posterior draws."""
    if passes < 1:
        raise ValueError("need at least one forward pass")
    x = np.atleast_2d(np.asarray(x, dtype=float))
    rng = np.random.default_rng(seed)
    samples = np.empty((passes, len(x)))
    for t in range(passes):
        masks = nn.make_dropout_masks(config, len(x), rng)
        _, probs = nn.forward(net, x, dropout_masks=masks)
        samples[t] = probs[:, 1]
    return mc_estimate(samples)


class DropoutClassifier(ProbabilisticClassifier):
    """Single dropout network; dropout stays active at inference."""

    algorithm = "mcd"

    def __init__(self, mlp: nn.MLPConfig | None = None, learning_rate: float = 1e-3,
                 weight_decay: float = 0.01, dropout_rate: float = 0.3, passes: int = 500,
                 n_candidates: int = 20, batch_size: int | None = None,
                 max_epochs: int = 200, patience: int = 20, keep_candidates: bool = False):
        base = mlp or nn.MLPConfig.sized("medium")
        self.mlp = nn.MLPConfig(base.hidden_layers, base.hidden_width, base.input_dim,
                                base.output_dim, dropout_rate)
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.passes = passes
        self.n_candidates = n_candidates
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.keep_candidates = keep_candidates
        self.weights: nn.NetworkWeights | None = None
        self.inference_seed: int | None = None
        self.candidate_weights: list[nn.NetworkWeights] = []
        self.candidate_val_losses: list[float] = []
        self.diverged_members = 0

    def fit(self, train: Dataset, validation: Dataset, seed: int):
        seeds = spawn_seeds(seed, self.n_candidates + 1)
        self.inference_seed = seeds[-1]
        x, y = train.x, train.onehot
        vx, vy = validation.x, validation.onehot
        best, best_val = None, np.inf
        self.candidate_weights, self.candidate_val_losses = [], []
        self.diverged_members = 0
        for i, cand_seed in enumerate(seeds[:-1]):
            tcfg = _train_config(self, len(train), cand_seed)
            try:
                weights, val = nn.train(self.mlp, tcfg, x, y, vx, vy, loss=nn.CrossEntropyLoss())
            except nn.TrainingDiverged as err:
                log.warning("mcd candidate %d diverged: %s", i, err)
                self.diverged_members += 1
                continue
            self.candidate_val_losses.append(val)
            if self.keep_candidates:
                self.candidate_weights.append(weights)
            if val < best_val:
                best, best_val = weights, val
        if best is None:
            raise nn.TrainingDiverged("all dropout candidates diverged")
        self.weights = best
        return self

    def predict(self, x: np.ndarray, seed: int | None = None) -> PredictiveBatch:
        if self.weights is None:
            raise RuntimeError("classifier is not fitted")
        inference = self.inference_seed if seed is None else seed
        return mcd_predict(self.weights, self.mlp, x, passes=self.passes, seed=inference)

    def hyperparameters(self) -> dict:
        return {
            "size": [self.mlp.hidden_layers, self.mlp.hidden_width],
            "dropout_rate": self.mlp.dropout_rate,
            "learning_rate": self.learning_rate,
            "weight_decay": self.weight_decay,
            "passes": self.passes,
            "n_candidates": self.n_candidates,
            "batch_size": self.batch_size,
            "max_epochs": self.max_epochs,
            "patience": self.patience,
        }

    def to_dict(self) -> dict:
        return {
            "weights": nn.weights_to_dict(self.weights),
            "dropout_rate": self.mlp.dropout_rate,
            "inference_seed": self.inference_seed,
            "candidate_val_losses": self.candidate_val_losses,
            "diverged_members": self.diverged_members,
        }

    def restore(self, model: dict) -> "DropoutClassifier":
        self.weights = nn.weights_from_dict(model["weights"])
        # Mask shapes must match the checkpointed architecture, not the default.
        self.mlp = nn.MLPConfig(
            hidden_layers=self.weights.n_layers - 1,
            hidden_width=self.weights.weights[0].shape[1],
            dropout_rate=float(model.get("dropout_rate", self.mlp.dropout_rate)),
        )
        self.inference_seed = model.get("inference_seed")
        self.candidate_val_losses = list(model.get("candidate_val_losses", []))
        self.diverged_members = int(model.get("diverged_members", 0))
        return self
