"""Small builders shared across test modules."""

from __future__ import annotations

import numpy as np

from domainsense import AttributionMatrix, FeatureSchema, FeatureSpec, Tensor


def build_tiny_schema() -> FeatureSchema:
    return FeatureSchema(
        features=(
            FeatureSpec(name="color", kind="categorical", vocab=("red", "green", "blue")),
            FeatureSpec(name="shape", kind="categorical", vocab=("circle", "square")),
            FeatureSpec(
                name="amount", kind="numerical", num_bins=4, bin_edges=(0.0, 1.0, 2.0, 3.0, 4.0)
            ),
            FeatureSpec(
                name="tags",
                kind="categorical",
                arity="sequential",
                vocab=("a", "b", "c"),
                max_seq_len=4,
            ),
        ),
        domain_field="domain",
        label_field="label",
        num_domains=3,
    )


def make_attrib(dataset, values=None, steps: int = 5) -> AttributionMatrix:
    """Attribution matrix wired to *dataset* with given (or unit) scores."""
    n = len(dataset)
    m = dataset.schema.num_features
    if values is None:
        values = np.ones((n, m))
    return AttributionMatrix(
        values=np.asarray(values, dtype=np.float64),
        feature_names=list(dataset.schema.feature_names),
        domains=dataset.domains.astype(np.int64),
        labels=dataset.labels.astype(np.int64),
        completeness_gap=np.zeros(n),
        steps=steps,
        dataset_fingerprint=dataset.fingerprint(),
        model_fingerprint="test-model",
    )


class LinearStub:
    """F(z) = sum_j w_j z_j + b over the flattened embedding block.

    Carries its own fixed embedding block, so the encoded input is ignored;
    handy because path attributions are exact on linear maps.
    """

    def __init__(self, z: np.ndarray, w: np.ndarray, b: float = 0.0):
        self.z = np.asarray(z, dtype=np.float64)
        self.w = np.asarray(w, dtype=np.float64)
        self.b = float(b)

    def pooled_embeddings(self, enc) -> Tensor:
        return Tensor(self.z)

    def forward_from_embeddings(self, leaf: Tensor) -> Tensor:
        batch, m, d = leaf.shape
        w_col = Tensor(self.w.reshape(m * d, 1))
        return (leaf.reshape(batch, m * d) @ w_col).reshape(batch) + self.b


def extract_mlp(model) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Weights/biases of a DnnModel tower, in forward order."""
    weights = [layer.W.data for layer in model.layers] + [model.head.W.data]
    biases = [layer.b.data for layer in model.layers] + [model.head.b.data]
    return weights, biases


def rand_simplex(rng: np.random.Generator, n: int) -> np.ndarray:
    p = rng.random(n) + 1e-9
    return p / p.sum()
