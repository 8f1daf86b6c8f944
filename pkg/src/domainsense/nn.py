"""Embedding tables, dense layers, the plain DNN baseline, and Adam.

All models share the same input convention: every feature (categorical
value, numerical bin, or pooled token sequence) becomes one d-dimensional
embedding row, giving a (batch, num_features, dim) block that towers
flatten and process. Models also expose forward_from_embeddings so path
attributions can treat that block as the input leaf.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .data import MultiDomainDataset
from .errors import ConfigError, FingerprintMismatchError, SchemaError
from .hashing import canonical_json, content_hash
from .schema import CATEGORICAL, FeatureSchema
from .tensor import Tensor, concat


# -- encoded views -----------------------------------------------------------


@dataclass
class EncodedDataset:
    """Index-level view of a dataset: everything a model consumes.

    scalars holds (n,) int64 value indices per scalar feature (bins already
    applied for numericals); seqs holds (tokens (n, L), lengths (n,)).
    """

    schema: FeatureSchema
    scalars: dict[str, np.ndarray]
    seqs: dict[str, tuple[np.ndarray, np.ndarray]]
    labels: np.ndarray
    domains: np.ndarray

    def __len__(self) -> int:
        return len(self.labels)

    def slice(self, idx: np.ndarray) -> "EncodedDataset":
        return EncodedDataset(
            schema=self.schema,
            scalars={k: v[idx] for k, v in self.scalars.items()},
            seqs={k: (t[idx], l[idx]) for k, (t, l) in self.seqs.items()},
            labels=self.labels[idx],
            domains=self.domains[idx],
        )


def encode_dataset(dataset: MultiDomainDataset) -> EncodedDataset:
    scalars: dict[str, np.ndarray] = {}
    seqs: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    for spec in dataset.schema.features:
        if spec.is_sequential:
            seqs[spec.name] = dataset.sequence_indices(spec.name)
        else:
            scalars[spec.name] = dataset.value_indices(spec.name)
    return EncodedDataset(
        schema=dataset.schema,
        scalars=scalars,
        seqs=seqs,
        labels=dataset.labels.astype(np.float64),
        domains=dataset.domains,
    )


# -- initializers ------------------------------------------------------------


def dense_init(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def embedding_init(rng: np.random.Generator, rows: int, dim: int) -> np.ndarray:
    return rng.uniform(-0.01, 0.01, size=(rows, dim))


# -- layers ------------------------------------------------------------------


class Dense:
    """Affine layer y = x W + b; weights uniform in +-1/sqrt(fan_in), bias 0."""

    def __init__(self, rng: np.random.Generator, fan_in: int, fan_out: int, name: str):
        self.name = name
        self.fan_in = fan_in
        self.fan_out = fan_out
        self.W = Tensor(dense_init(rng, fan_in, fan_out), requires_grad=True)
        self.b = Tensor(np.zeros(fan_out), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return x @ self.W + self.b

    def parameters(self) -> dict[str, Tensor]:
        return {f"{self.name}.W": self.W, f"{self.name}.b": self.b}


class EmbeddingSet:
    """One embedding table per schema feature, all with the same dim.

    Sequential features mean-pool their token rows; empty sequences pool to
    the zero vector. pooled() returns the (B, m, d) block with gradients
    wired back to the tables.
    """

    def __init__(self, schema: FeatureSchema, dim: int, rng: np.random.Generator):
        self.schema = schema
        self.dim = dim
        self.tables: dict[str, Tensor] = {}
        for spec in schema.features:
            rows = spec.num_values
            self.tables[spec.name] = Tensor(
                embedding_init(rng, rows, dim), requires_grad=True
            )

    def pooled(self, enc: EncodedDataset) -> Tensor:
        parts: list[Tensor] = []
        batch = len(enc)
        for spec in self.schema.features:
            table = self.tables[spec.name]
            if spec.is_sequential:
                tokens, lengths = enc.seqs[spec.name]
                emb = table.rows(tokens)  # (B, L, d)
                pad = tokens.shape[1]
                mask = (np.arange(pad)[None, :] < lengths[:, None]).astype(float)
                inv = 1.0 / np.maximum(lengths, 1)
                pooled = (emb * Tensor(mask[:, :, None])).sum(axis=1)
                pooled = pooled * Tensor(inv[:, None])
            else:
                pooled = table.rows(enc.scalars[spec.name])  # (B, d)
            parts.append(pooled.reshape(batch, 1, self.dim))
        return concat(parts, axis=1)

    def parameters(self) -> dict[str, Tensor]:
        return {f"emb.{name}": t for name, t in self.tables.items()}


# -- the shared-bottom baseline model ----------------------------------------


@dataclass(frozen=True)
class DnnConfig:
    embedding_dim: int = 8
    hidden_sizes: tuple[int, ...] = (128, 64, 32)

    def __post_init__(self) -> None:
        if self.embedding_dim < 1:
            raise ConfigError("embedding_dim must be positive")
        if not self.hidden_sizes or any(h < 1 for h in self.hidden_sizes):
            raise ConfigError("hidden_sizes must be positive")

    def to_dict(self) -> dict:
        return {"embedding_dim": self.embedding_dim, "hidden_sizes": list(self.hidden_sizes)}

    @classmethod
    def from_dict(cls, d: dict) -> "DnnConfig":
        return cls(
            embedding_dim=int(d.get("embedding_dim", 8)),
            hidden_sizes=tuple(d.get("hidden_sizes", (128, 64, 32))),
        )


class DnnModel:
    """Embeddings -> flatten -> ReLU MLP -> scalar logit."""

    kind = "dnn"

    def __init__(self, schema: FeatureSchema, config: DnnConfig, rng: np.random.Generator):
        self.schema = schema
        self.config = config
        self.embeddings = EmbeddingSet(schema, config.embedding_dim, rng)
        self.layers: list[Dense] = []
        width = schema.num_features * config.embedding_dim
        for i, h in enumerate(config.hidden_sizes):
            self.layers.append(Dense(rng, width, h, f"tower.{i}"))
            width = h
        self.head = Dense(rng, width, 1, "tower.head")

    @property
    def num_features(self) -> int:
        return self.schema.num_features

    @property
    def embedding_dim(self) -> int:
        return self.config.embedding_dim

    def pooled_embeddings(self, enc: EncodedDataset) -> Tensor:
        return self.embeddings.pooled(enc)

    def forward_from_embeddings(self, z: Tensor) -> Tensor:
        batch = z.shape[0]
        x = z.reshape(batch, self.num_features * self.embedding_dim)
        for layer in self.layers:
            x = layer(x).relu()
        return self.head(x).reshape(batch)

    def forward(self, enc: EncodedDataset) -> Tensor:
        return self.forward_from_embeddings(self.pooled_embeddings(enc))

    def parameters(self) -> dict[str, Tensor]:
        out = dict(self.embeddings.parameters())
        for layer in self.layers:
            out.update(layer.parameters())
        out.update(self.head.parameters())
        return out

    def config_dict(self) -> dict:
        return self.config.to_dict()


# -- optimizer ---------------------------------------------------------------


class Adam:
    """Adam with the standard bias correction.

    From zero state the first update is exactly -lr * g / (|g| + eps),
    which makes single-step behaviour easy to pin down in tests.
    """

    def __init__(
        self,
        params: dict[str, Tensor],
        lr: float = 1e-3,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
    ):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self._m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self._v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for name, p in self.params.items():
            if p.grad is None:
                continue
            g = p.grad
            m = self._m[name]
            v = self._v[name]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            m_hat = m / (1 - b1**self.t)
            v_hat = v / (1 - b2**self.t)
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


# -- checkpoints ---------------------------------------------------------------


def model_fingerprint(model) -> str:
    """Content hash over architecture, schema, and every parameter array."""
    meta = {
        "kind": model.kind,
        "config": model.config_dict(),
        "schema_hash": model.schema.schema_hash(),
    }
    params = model.parameters()
    parts: list[bytes | str] = [canonical_json(meta)]
    for name in sorted(params):
        parts.append(name)
        parts.append(np.ascontiguousarray(params[name].data).tobytes())
    return content_hash(*parts)


def save_checkpoint(model, path: str, extra_meta: dict | None = None) -> str:
    """Write parameters plus a JSON meta record; returns the fingerprint."""
    fp = model_fingerprint(model)
    meta = {
        "kind": model.kind,
        "config": model.config_dict(),
        "schema_hash": model.schema.schema_hash(),
        "fingerprint": fp,
    }
    if extra_meta:
        meta.update(extra_meta)
    arrays = {name: p.data for name, p in model.parameters().items()}
    np.savez(path, __meta__=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8), **arrays)
    return fp


def read_checkpoint_meta(path: str) -> dict:
    with np.load(path) as z:
        return json.loads(bytes(z["__meta__"]).decode())


def load_checkpoint(path: str, schema: FeatureSchema):
    """Rebuild a model from a checkpoint, verifying it matches *schema*."""
    with np.load(path) as z:
        meta = json.loads(bytes(z["__meta__"]).decode())
        arrays = {k: z[k] for k in z.files if k != "__meta__"}
    if meta["schema_hash"] != schema.schema_hash():
        raise FingerprintMismatchError(
            f"{path}: checkpoint was trained against a different schema"
        )
    kind = meta["kind"]
    rng = np.random.default_rng(0)  # immediately overwritten by stored arrays
    if kind == "dnn":
        model = DnnModel(schema, DnnConfig.from_dict(meta["config"]), rng)
    elif kind == "memory":
        from .memory import MemoryModel, MemoryConfig

        model = MemoryModel(schema, MemoryConfig.from_dict(meta["config"]), rng)
    else:
        raise ConfigError(f"{path}: unknown model kind {kind!r}")
    load_state(model, arrays, where=path)
    if model_fingerprint(model) != meta["fingerprint"]:
        raise FingerprintMismatchError(f"{path}: parameter content does not match fingerprint")
    return model


def load_state(model, arrays: dict[str, np.ndarray], where: str = "checkpoint") -> None:
    params = model.parameters()
    missing = sorted(set(params) - set(arrays))
    extra = sorted(set(arrays) - set(params))
    if missing or extra:
        raise SchemaError(f"{where}: parameter names mismatch (missing={missing}, extra={extra})")
    for name, p in params.items():
        arr = np.asarray(arrays[name], dtype=np.float64)
        if arr.shape != p.data.shape:
            raise SchemaError(
                f"{where}: shape mismatch for {name}: {arr.shape} vs {p.data.shape}"
            )
        p.data = arr.copy()
