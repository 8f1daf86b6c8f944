import numpy as np
import pytest

from domainsense import (
    AttributionMatrix,
    ConfigError,
    DnnConfig,
    DnnModel,
    FingerprintMismatchError,
    IgConfig,
    attribute_dataset,
    encode_dataset,
    integrated_gradients,
)
from helpers import LinearStub


def test_linear_model_exact_any_steps():
    rng = np.random.default_rng(0)
    batch, m, d = 4, 5, 3
    z = rng.normal(size=(batch, m, d))
    w = rng.normal(size=(m * d,))
    model = LinearStub(z, w, b=0.7)
    expected = (z * w.reshape(m, d)).sum(axis=2)  # per-feature w . x
    for steps in (1, 7):
        scores = integrated_gradients(model, None, steps=steps)
        np.testing.assert_allclose(scores, expected, atol=1e-12)
        # completeness is exact too: sums equal F(x) - F(0)
        np.testing.assert_allclose(
            scores.sum(axis=1), z.reshape(batch, -1) @ w, atol=1e-12
        )


def test_completeness_gap_shrinks_with_steps(tiny_schema, tiny_dataset):
    model = DnnModel(
        tiny_schema, DnnConfig(embedding_dim=4, hidden_sizes=(16, 8)), np.random.default_rng(1)
    )
    # zero biases would make the tower positively homogeneous, so the
    # path integrand would be constant and any step count exact; random
    # biases put real curvature along the path
    rng = np.random.default_rng(2)
    for name, p in model.parameters().items():
        if name.endswith(".b"):
            p.data[:] = rng.normal(scale=0.3, size=p.data.shape)
    for t in model.embeddings.tables.values():
        t.data *= 40.0
    enc = encode_dataset(tiny_dataset)
    coarse = attribute_dataset(model, enc, IgConfig(steps=3))
    fine = attribute_dataset(model, enc, IgConfig(steps=300))
    assert coarse.completeness_gap.max() > 1e-6  # the coarse sum really is off
    assert fine.completeness_gap.max() < coarse.completeness_gap.max() / 10
    assert fine.completeness_gap.max() < 1e-3


def test_attribute_dataset_shapes_and_determinism(tiny_schema, tiny_dataset):
    model = DnnModel(tiny_schema, DnnConfig(embedding_dim=4, hidden_sizes=(8,)), np.random.default_rng(2))
    enc = encode_dataset(tiny_dataset)
    a = attribute_dataset(model, enc, IgConfig(steps=4, batch_size=4), dataset_fingerprint="fp")
    b = attribute_dataset(model, enc, IgConfig(steps=4, batch_size=9), dataset_fingerprint="fp")
    assert a.values.shape == (9, 4)
    # batching must not change results
    np.testing.assert_allclose(a.values, b.values, atol=1e-12)
    np.testing.assert_allclose(a.completeness_gap, b.completeness_gap, atol=1e-12)
    assert a.feature_names == tiny_schema.feature_names
    assert a.steps == 4


def test_attribution_rows_follow_samples(tiny_schema, tiny_dataset):
    model = DnnModel(tiny_schema, DnnConfig(embedding_dim=4, hidden_sizes=(8,)), np.random.default_rng(3))
    enc = encode_dataset(tiny_dataset)
    full = attribute_dataset(model, enc, IgConfig(steps=5))
    perm = np.array([4, 0, 7, 2])
    part = attribute_dataset(model, enc.slice(perm), IgConfig(steps=5))
    np.testing.assert_allclose(part.values, full.values[perm], atol=1e-12)
    np.testing.assert_array_equal(part.domains, full.domains[perm])


def test_zeroed_embedding_gets_zero_attribution(tiny_schema, tiny_dataset):
    model = DnnModel(tiny_schema, DnnConfig(embedding_dim=4, hidden_sizes=(8,)), np.random.default_rng(4))
    model.embeddings.tables["shape"].data[:] = 0.0
    enc = encode_dataset(tiny_dataset)
    attrib = attribute_dataset(model, enc, IgConfig(steps=3))
    np.testing.assert_array_equal(attrib.column("shape"), 0.0)
    assert np.abs(attrib.column("color")).max() > 0


def test_non_finite_scores_name_the_sample(tiny_schema, tiny_dataset):
    model = DnnModel(tiny_schema, DnnConfig(embedding_dim=4, hidden_sizes=(8,)), np.random.default_rng(5))
    model.head.W.data[0, 0] = np.nan
    enc = encode_dataset(tiny_dataset)
    with pytest.raises(ConfigError, match="sample index 0"):
        attribute_dataset(model, enc, IgConfig(steps=2))


def test_matrix_save_load_verify(tiny_schema, tiny_dataset, tmp_path):
    model = DnnModel(tiny_schema, DnnConfig(embedding_dim=4, hidden_sizes=(8,)), np.random.default_rng(6))
    enc = encode_dataset(tiny_dataset)
    attrib = attribute_dataset(
        model, enc, IgConfig(steps=3), dataset_fingerprint=tiny_dataset.fingerprint()
    )
    path = str(tmp_path / "attrib.npz")
    attrib.save(path)
    loaded = AttributionMatrix.load(path)
    np.testing.assert_array_equal(loaded.values, attrib.values)
    assert loaded.fingerprint() == attrib.fingerprint()
    assert loaded.model_fingerprint == attrib.model_fingerprint

    loaded.verify_dataset(tiny_dataset.fingerprint())  # no raise
    with pytest.raises(FingerprintMismatchError, match="different dataset"):
        loaded.verify_dataset("not-the-fingerprint")


def test_matrix_validation():
    with pytest.raises(ConfigError, match="width"):
        AttributionMatrix(
            values=np.zeros((2, 3)),
            feature_names=["a"],
            domains=np.zeros(2, dtype=np.int64),
            labels=np.zeros(2, dtype=np.int64),
            completeness_gap=np.zeros(2),
            steps=1,
            dataset_fingerprint="",
            model_fingerprint="",
        )
    with pytest.raises(ConfigError, match="length"):
        AttributionMatrix(
            values=np.zeros((2, 1)),
            feature_names=["a"],
            domains=np.zeros(3, dtype=np.int64),
            labels=np.zeros(2, dtype=np.int64),
            completeness_gap=np.zeros(2),
            steps=1,
            dataset_fingerprint="",
            model_fingerprint="",
        )


def test_ig_config_validation():
    with pytest.raises(ConfigError):
        IgConfig(steps=0)
    with pytest.raises(ConfigError):
        IgConfig(batch_size=0)
