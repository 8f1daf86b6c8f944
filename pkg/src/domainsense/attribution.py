"""Integrated-gradients attribution over pooled feature embeddings.

The attribution input is the (batch, num_features, dim) embedding block,
attributed against the all-zero baseline along the straight-line path. The
per-feature score is the sum over embedding dimensions, so each sample
yields one scalar per feature. A right-endpoint Riemann sum approximates
the path integral; on a linear model any step count is exact, and the
completeness identity (attributions summing to the logit difference) holds
in the limit of many steps.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, FingerprintMismatchError
from .nn import EncodedDataset, model_fingerprint
from .tensor import Tensor


@dataclass(frozen=True)
class IgConfig:
    steps: int = 5
    batch_size: int = 1024

    def __post_init__(self) -> None:
        if self.steps < 1:
            raise ConfigError("steps must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")

    def to_dict(self) -> dict:
        return {"steps": self.steps, "batch_size": self.batch_size}


def integrated_gradients(model, enc: EncodedDataset, steps: int = 5) -> np.ndarray:
    """Per-feature attributions for one encoded batch, shape (B, m).

    All interpolation points are stacked into a single forward/backward
    pass: the input leaf holds steps * B rows, and since samples never
    interact inside the model, the gradient of the summed logit recovers
    each row's own gradient.
    """
    scores, _ = _ig_with_gap(model, enc, steps)
    return scores


def _ig_with_gap(model, enc: EncodedDataset, steps: int) -> tuple[np.ndarray, np.ndarray]:
    z = model.pooled_embeddings(enc).data  # (B, m, d), constant from here on
    batch, m, d = z.shape
    alphas = np.arange(1, steps + 1, dtype=np.float64) / steps  # right endpoints
    stacked = (alphas[:, None, None, None] * z[None]).reshape(steps * batch, m, d)
    leaf = Tensor(stacked, requires_grad=True)
    logits = model.forward_from_embeddings(leaf)
    logits.sum().backward()
    assert leaf.grad is not None
    grads = leaf.grad.reshape(steps, batch, m, d)
    avg_grad = grads.mean(axis=0)
    scores = ((z - 0.0) * avg_grad).sum(axis=2)

    # completeness diagnostic: sum of attributions vs logit(x) - logit(0)
    f_x = logits.data.reshape(steps, batch)[-1]
    f_0 = model.forward_from_embeddings(Tensor(np.zeros_like(z))).data
    gap = np.abs(scores.sum(axis=1) - (f_x - f_0))
    return scores, gap


@dataclass
class AttributionMatrix:
    """Per-sample, per-feature attribution scores with provenance hashes."""

    values: np.ndarray  # (n, m) float64
    feature_names: list[str]
    domains: np.ndarray  # (n,) int64
    labels: np.ndarray  # (n,) int64
    completeness_gap: np.ndarray  # (n,) float64
    steps: int
    dataset_fingerprint: str
    model_fingerprint: str

    def __post_init__(self) -> None:
        n, m = self.values.shape
        if m != len(self.feature_names):
            raise ConfigError("attribution width does not match feature list")
        if len(self.domains) != n or len(self.labels) != n:
            raise ConfigError("attribution metadata length mismatch")

    @property
    def num_samples(self) -> int:
        return self.values.shape[0]

    def column(self, feature: str) -> np.ndarray:
        return self.values[:, self.feature_names.index(feature)]

    def fingerprint(self) -> str:
        from .hashing import canonical_json, content_hash

        meta = {
            "feature_names": self.feature_names,
            "steps": self.steps,
            "dataset_fingerprint": self.dataset_fingerprint,
            "model_fingerprint": self.model_fingerprint,
        }
        return content_hash(
            canonical_json(meta),
            np.ascontiguousarray(self.values).tobytes(),
            np.ascontiguousarray(self.domains, dtype=np.int64).tobytes(),
        )

    def save(self, path: str) -> None:
        meta = {
            "feature_names": self.feature_names,
            "steps": self.steps,
            "dataset_fingerprint": self.dataset_fingerprint,
            "model_fingerprint": self.model_fingerprint,
        }
        np.savez(
            path,
            __meta__=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8),
            values=self.values,
            domains=self.domains,
            labels=self.labels,
            completeness_gap=self.completeness_gap,
        )

    @classmethod
    def load(cls, path: str) -> "AttributionMatrix":
        with np.load(path) as z:
            meta = json.loads(bytes(z["__meta__"]).decode())
            return cls(
                values=z["values"],
                feature_names=list(meta["feature_names"]),
                domains=z["domains"],
                labels=z["labels"],
                completeness_gap=z["completeness_gap"],
                steps=int(meta["steps"]),
                dataset_fingerprint=meta["dataset_fingerprint"],
                model_fingerprint=meta["model_fingerprint"],
            )

    def verify_dataset(self, fingerprint: str, where: str = "attribution") -> None:
        if self.dataset_fingerprint != fingerprint:
            raise FingerprintMismatchError(
                f"{where}: attribution matrix was computed on a different dataset"
            )


def attribute_dataset(
    model,
    enc: EncodedDataset,
    config: IgConfig | None = None,
    dataset_fingerprint: str = "",
) -> AttributionMatrix:
    """Attribute every sample, in batches. Non-finite scores abort with the
    index of the first offending sample so bad inputs are traceable."""
    config = config or IgConfig()
    n = len(enc)
    m = enc.schema.num_features
    values = np.empty((n, m))
    gaps = np.empty(n)
    for start in range(0, n, config.batch_size):
        idx = np.arange(start, min(start + config.batch_size, n))
        scores, gap = _ig_with_gap(model, enc.slice(idx), config.steps)
        bad = ~np.isfinite(scores).all(axis=1)
        if bad.any():
            first = int(idx[np.argmax(bad)])
            raise ConfigError(f"non-finite attribution at sample index {first}")
        values[idx] = scores
        gaps[idx] = gap
    return AttributionMatrix(
        values=values,
        feature_names=list(enc.schema.feature_names),
        domains=enc.domains.astype(np.int64),
        labels=enc.labels.astype(np.int64),
        completeness_gap=gaps,
        steps=config.steps,
        dataset_fingerprint=dataset_fingerprint,
        model_fingerprint=model_fingerprint(model),
    )
