"""Mini-batch training on the pooled multi-domain objective, and AUC-based
evaluation, overall and per domain.

Training minimizes the mean binary cross-entropy over the concatenated
multi-domain training set with Adam; batches are drawn from the pooled
shuffled set with no per-domain scheduling. The returned parameters are the
snapshot with the best validation overall AUC.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .data import MultiDomainDataset
from .errors import ConfigError, TrainingError, UndefinedAucError
from .hashing import stage_seed
from .nn import Adam, EncodedDataset, encode_dataset, model_fingerprint
from .tensor import bce_with_logits, sigmoid_array


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 256
    epochs: int = 5
    learning_rate: float = 1e-3
    seed: int = 0
    patience: int | None = None  # epochs without a new best valid AUC; None = never stop early
    shuffle: bool = True

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.learning_rate < 0:
            raise ConfigError("learning_rate must be non-negative")
        if self.patience is not None and self.patience < 1:
            raise ConfigError("patience must be >= 1 when set")

    def to_dict(self) -> dict:
        return {
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "learning_rate": self.learning_rate,
            "seed": self.seed,
            "patience": self.patience,
            "shuffle": self.shuffle,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(f"bad train config: {exc}") from exc


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)  # per-epoch mean
    valid_auc: list[float] = field(default_factory=list)
    best_epoch: int = -1
    best_valid_auc: float = float("nan")
    steps: int = 0

    def to_dict(self) -> dict:
        return {
            "train_loss": self.train_loss,
            "valid_auc": self.valid_auc,
            "best_epoch": self.best_epoch,
            "best_valid_auc": self.best_valid_auc,
            "steps": self.steps,
        }


def auc(labels: np.ndarray, scores: np.ndarray) -> float:
    """Area under the ROC curve via the rank-sum identity.

    Equals the probability that a random positive outscores a random
    negative, counting ties as half; midranks make that exact.
    """
    labels = np.asarray(labels)
    scores = np.asarray(scores, dtype=np.float64)
    if labels.shape != scores.shape:
        raise ValueError("labels and scores must align")
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise UndefinedAucError("AUC needs at least one positive and one negative label")
    ranks = rankdata(scores)  # average rank on ties
    pos_rank_sum = ranks[labels == 1].sum()
    return float((pos_rank_sum - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def predict_scores(model, enc: EncodedDataset, batch_size: int = 8192) -> np.ndarray:
    """Predicted positive-class probabilities, computed in batches."""
    n = len(enc)
    out = np.empty(n)
    for start in range(0, n, batch_size):
        idx = np.arange(start, min(start + batch_size, n))
        out[idx] = sigmoid_array(model.forward(enc.slice(idx)).data)
    return out


def _as_encoded(ds) -> EncodedDataset:
    return ds if isinstance(ds, EncodedDataset) else encode_dataset(ds)


def train(model, train_ds, valid_ds, cfg: TrainConfig) -> TrainHistory:
    """Adam on mean BCE over the pooled set; early stop on validation AUC.

    At the end the model carries the parameters of the epoch with the best
    validation AUC, not the final ones.
    """
    train_enc = _as_encoded(train_ds)
    valid_enc = _as_encoded(valid_ds)
    if len(train_enc) == 0 or len(valid_enc) == 0:
        raise TrainingError("cannot train on an empty split")
    params = model.parameters()
    opt = Adam(params, lr=cfg.learning_rate)
    rng = np.random.default_rng(stage_seed(cfg.seed, "train-loop"))
    history = TrainHistory()
    best_snapshot: dict[str, np.ndarray] | None = None
    best_auc = -np.inf
    since_best = 0
    n = len(train_enc)
    step = 0

    for epoch in range(cfg.epochs):
        order = rng.permutation(n) if cfg.shuffle else np.arange(n)
        losses: list[float] = []
        for start in range(0, n, cfg.batch_size):
            batch = train_enc.slice(order[start : start + cfg.batch_size])
            opt.zero_grad()
            loss = bce_with_logits(model.forward(batch), batch.labels)
            if not np.isfinite(loss.data):
                raise TrainingError(f"non-finite loss at step {step}")
            loss.backward()
            opt.step()
            losses.append(loss.item())
            step += 1
        history.train_loss.append(float(np.mean(losses)))
        epoch_auc = auc(valid_enc.labels.astype(int), predict_scores(model, valid_enc))
        history.valid_auc.append(epoch_auc)
        if epoch_auc > best_auc:
            best_auc = epoch_auc
            best_snapshot = {k: p.data.copy() for k, p in params.items()}
            history.best_epoch = epoch
            since_best = 0
        else:
            since_best += 1
            if cfg.patience is not None and since_best > cfg.patience:
                break

    history.steps = step
    history.best_valid_auc = float(best_auc)
    if best_snapshot is not None:
        for k, p in params.items():
            p.data = best_snapshot[k]
    return history


@dataclass
class EvalReport:
    """Overall and per-domain AUC; undefined per-domain entries are None."""

    overall_auc: float
    domain_auc: list[float | None]
    domain_counts: list[int]
    model_fingerprint: str
    variant: str = ""

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "overall_auc": self.overall_auc,
            "domain_auc": self.domain_auc,
            "domain_counts": self.domain_counts,
            "model_fingerprint": self.model_fingerprint,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(
            overall_auc=float(d["overall_auc"]),
            domain_auc=[None if a is None else float(a) for a in d["domain_auc"]],
            domain_counts=[int(c) for c in d["domain_counts"]],
            model_fingerprint=d["model_fingerprint"],
            variant=d.get("variant", ""),
        )

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    def format_table(self) -> str:
        lines = [f"{'segment':<12} {'samples':>9} {'AUC':>8}"]
        for k, (a, c) in enumerate(zip(self.domain_auc, self.domain_counts)):
            shown = "   n/a" if a is None else f"{a:.4f}"
            lines.append(f"domain {k:<5} {c:>9} {shown:>8}")
        lines.append(f"{'Overall':<12} {sum(self.domain_counts):>9} {self.overall_auc:>8.4f}")
        return "\n".join(lines)


def evaluate(model, test_ds, variant: str = "") -> EvalReport:
    """Overall AUC on the pooled test set plus per-domain AUCs.

    A domain whose test labels are single-class gets None instead of a
    number; the overall figure always uses the full pooled set.
    """
    enc = _as_encoded(test_ds)
    scores = predict_scores(model, enc)
    labels = enc.labels.astype(int)
    overall = auc(labels, scores)
    num_domains = enc.schema.num_domains
    domain_auc: list[float | None] = []
    counts: list[int] = []
    for k in range(num_domains):
        mask = enc.domains == k
        counts.append(int(mask.sum()))
        try:
            domain_auc.append(auc(labels[mask], scores[mask]))
        except UndefinedAucError:
            domain_auc.append(None)
    return EvalReport(
        overall_auc=overall,
        domain_auc=domain_auc,
        domain_counts=counts,
        model_fingerprint=model_fingerprint(model),
        variant=variant,
    )
