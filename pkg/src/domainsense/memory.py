"""Dual-tower memory model with cross-attention retrievers.

A base tower consumes all feature embeddings; an extractor tower consumes
only the selected sensitive features' embeddings and exposes its hidden
states. Retriever blocks let the base path attend into the extractor: one
at the embedding layer (tokens = the m feature embeddings, keys/values =
the raw sensitive embeddings) and one between each pair of hidden layers
(hidden vectors treated as length-h sequences of 1-dim tokens). The final
logit is the sum of both towers' logits. Every piece can be switched off
independently; with everything off the model degenerates to the plain DNN.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, SchemaError
from .nn import Dense, EmbeddingSet, EncodedDataset, dense_init
from .schema import FeatureSchema
from .tensor import Tensor

KERNELS = ("linear", "softmax")


# -- attention kernels --------------------------------------------------------


def _as_tensor(x) -> tuple[Tensor, bool]:
    if isinstance(x, Tensor):
        return x, True
    return Tensor(np.asarray(x, dtype=np.float64)), False


def linear_attention(q, k, v):
    """Kernelized attention with feature map phi(x) = ELU(x) + 1.

    out_i = sum_j phi(Q_i) phi(K_j)^T V_j / sum_j phi(Q_i) phi(K_j)^T,
    computed through the aggregates S = phi(K)^T V and z = sum_j phi(K_j),
    so the cost is linear in both token counts. phi is strictly positive,
    so the denominator cannot vanish for finite inputs.

    Accepts arrays or graph tensors; returns the same kind it was given.
    """
    qt, q_was_tensor = _as_tensor(q)
    kt, k_was_tensor = _as_tensor(k)
    vt, v_was_tensor = _as_tensor(v)
    for name, t in (("Q", qt), ("K", kt), ("V", vt)):
        if not np.isfinite(t.data).all():
            raise ValueError(f"non-finite values in attention input {name}")
    phi_q = qt.elu() + 1.0
    phi_k = kt.elu() + 1.0
    s = phi_k.transpose_last() @ vt  # (..., d', d_v)
    z = phi_k.sum(axis=-2, keepdims=True)  # (..., 1, d')
    numer = phi_q @ s  # (..., n, d_v)
    denom = (phi_q * z).sum(axis=-1, keepdims=True)  # (..., n, 1)
    out = numer / denom
    return out if (q_was_tensor or k_was_tensor or v_was_tensor) else out.data


def softmax_attention(q, k, v):
    """Scaled dot-product attention, the quadratic-cost comparison kernel."""
    qt, q_was_tensor = _as_tensor(q)
    kt, k_was_tensor = _as_tensor(k)
    vt, v_was_tensor = _as_tensor(v)
    d_prime = qt.shape[-1]
    scores = (qt @ kt.transpose_last()) * (1.0 / np.sqrt(d_prime))
    out = scores.softmax_last() @ vt
    return out if (q_was_tensor or k_was_tensor or v_was_tensor) else out.data


def attention(q, k, v, kernel: str):
    if kernel == "linear":
        return linear_attention(q, k, v)
    if kernel == "softmax":
        return softmax_attention(q, k, v)
    raise ConfigError(f"unknown attention kernel {kernel!r}; expected one of {KERNELS}")


# -- retriever block ----------------------------------------------------------


class Retriever:
    """Cross-attention + output projection + two residual stages.

    A = Attention(Z W_Q, Z_ext W_K, Z_ext W_V) W_O; Z^A = Z + A;
    Z' = FFN(Z^A) + Z^A with FFN(x) = ReLU(x W_1 + b_1) W_2 + b_2.
    Projections carry no bias.
    """

    def __init__(
        self,
        rng: np.random.Generator,
        d: int,
        d_prime: int,
        ffn_hidden: int,
        name: str,
        kernel: str,
    ):
        self.name = name
        self.d = d
        self.d_prime = d_prime
        self.ffn_hidden = ffn_hidden
        self.kernel = kernel
        self.W_Q = Tensor(dense_init(rng, d, d_prime), requires_grad=True)
        self.W_K = Tensor(dense_init(rng, d, d_prime), requires_grad=True)
        self.W_V = Tensor(dense_init(rng, d, d_prime), requires_grad=True)
        self.W_O = Tensor(dense_init(rng, d_prime, d), requires_grad=True)
        self.W_1 = Tensor(dense_init(rng, d, ffn_hidden), requires_grad=True)
        self.b_1 = Tensor(np.zeros(ffn_hidden), requires_grad=True)
        self.W_2 = Tensor(dense_init(rng, ffn_hidden, d), requires_grad=True)
        self.b_2 = Tensor(np.zeros(d), requires_grad=True)

    def __call__(self, z: Tensor, z_ext: Tensor) -> Tensor:
        a = attention(z @ self.W_Q, z_ext @ self.W_K, z_ext @ self.W_V, self.kernel)
        a = a @ self.W_O
        z_a = z + a
        ffn = ((z_a @ self.W_1 + self.b_1).relu()) @ self.W_2 + self.b_2
        return ffn + z_a

    def parameters(self) -> dict[str, Tensor]:
        return {
            f"{self.name}.W_Q": self.W_Q,
            f"{self.name}.W_K": self.W_K,
            f"{self.name}.W_V": self.W_V,
            f"{self.name}.W_O": self.W_O,
            f"{self.name}.W_1": self.W_1,
            f"{self.name}.b_1": self.b_1,
            f"{self.name}.W_2": self.W_2,
            f"{self.name}.b_2": self.b_2,
        }


# -- configuration ------------------------------------------------------------


@dataclass(frozen=True)
class MemoryConfig:
    """Architecture of the dual-tower model.

    num_features is the schema's feature count m; it rides along so the
    analytic cost counter can work from the config alone.
    """

    sensitive_features: tuple[str, ...]
    num_features: int
    embedding_dim: int = 8
    base_hidden: tuple[int, ...] = (128, 64, 32)
    ext_hidden: tuple[int, ...] | None = None
    attn_dim_emb: int = 16
    attn_dim_hidden: int = 4
    ffn_mult: int = 4
    kernel: str = "linear"
    use_emb_attn: bool = True
    use_hidden_attn: bool = True
    use_aux_logit: bool = True

    def __post_init__(self) -> None:
        if len(self.sensitive_features) < 1:
            raise ConfigError("the sensitive feature set must not be empty")
        if len(set(self.sensitive_features)) != len(self.sensitive_features):
            raise ConfigError("duplicate names in the sensitive feature set")
        if self.num_features < 1:
            raise ConfigError("num_features must be positive")
        if len(self.sensitive_features) > self.num_features:
            raise ConfigError("more sensitive features than features")
        if not self.base_hidden or any(h < 1 for h in self.base_hidden):
            raise ConfigError("base_hidden must be positive")
        ext = self.ext_hidden
        if ext is not None and len(ext) != len(self.base_hidden):
            raise ConfigError("both towers must have the same number of layers")
        if ext is not None and any(h < 1 for h in ext):
            raise ConfigError("ext_hidden must be positive")
        if self.kernel not in KERNELS:
            raise ConfigError(f"unknown kernel {self.kernel!r}")
        if min(self.embedding_dim, self.attn_dim_emb, self.attn_dim_hidden, self.ffn_mult) < 1:
            raise ConfigError("dimensions must be positive")

    @property
    def extractor_hidden(self) -> tuple[int, ...]:
        return self.ext_hidden if self.ext_hidden is not None else self.base_hidden

    @property
    def num_layers(self) -> int:
        return len(self.base_hidden)

    @property
    def num_sensitive(self) -> int:
        return len(self.sensitive_features)

    def to_dict(self) -> dict:
        return {
            "sensitive_features": list(self.sensitive_features),
            "num_features": self.num_features,
            "embedding_dim": self.embedding_dim,
            "base_hidden": list(self.base_hidden),
            "ext_hidden": None if self.ext_hidden is None else list(self.ext_hidden),
            "attn_dim_emb": self.attn_dim_emb,
            "attn_dim_hidden": self.attn_dim_hidden,
            "ffn_mult": self.ffn_mult,
            "kernel": self.kernel,
            "use_emb_attn": self.use_emb_attn,
            "use_hidden_attn": self.use_hidden_attn,
            "use_aux_logit": self.use_aux_logit,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MemoryConfig":
        kwargs = dict(d)
        kwargs["sensitive_features"] = tuple(kwargs["sensitive_features"])
        kwargs["base_hidden"] = tuple(kwargs.get("base_hidden", (128, 64, 32)))
        if kwargs.get("ext_hidden") is not None:
            kwargs["ext_hidden"] = tuple(kwargs["ext_hidden"])
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(f"bad memory config: {exc}") from exc


# -- the model ----------------------------------------------------------------


class MemoryModel:
    kind = "memory"

    def __init__(self, schema: FeatureSchema, config: MemoryConfig, rng: np.random.Generator):
        if config.num_features != schema.num_features:
            raise SchemaError(
                f"config expects {config.num_features} features, schema has {schema.num_features}"
            )
        for name in config.sensitive_features:
            schema.feature(name)  # raises on unknown names
        self.schema = schema
        self.config = config
        d = config.embedding_dim
        self.embeddings = EmbeddingSet(schema, d, rng)
        self.sensitive_idx = [schema.index_of(n) for n in config.sensitive_features]

        width = schema.num_features * d
        self.base_layers: list[Dense] = []
        for i, h in enumerate(config.base_hidden):
            self.base_layers.append(Dense(rng, width, h, f"tower.{i}"))
            width = h
        self.head = Dense(rng, width, 1, "tower.head")

        width = config.num_sensitive * d
        self.ext_layers: list[Dense] = []
        for i, h in enumerate(config.extractor_hidden):
            self.ext_layers.append(Dense(rng, width, h, f"ext.{i}"))
            width = h
        self.ext_head = Dense(rng, width, 1, "ext.head")
        # start from pure base behaviour: the auxiliary logit begins at 0
        self.ext_head.W.data[:] = 0.0

        self.emb_retriever: Retriever | None = None
        if config.use_emb_attn:
            self.emb_retriever = Retriever(
                rng, d, config.attn_dim_emb, config.ffn_mult * d, "retr.emb", config.kernel
            )
        self.hidden_retrievers: list[Retriever] = []
        if config.use_hidden_attn:
            for i in range(config.num_layers - 1):
                self.hidden_retrievers.append(
                    Retriever(
                        rng, 1, config.attn_dim_hidden, config.ffn_mult, f"retr.hid{i}", config.kernel
                    )
                )

    @property
    def num_features(self) -> int:
        return self.schema.num_features

    @property
    def embedding_dim(self) -> int:
        return self.config.embedding_dim

    def pooled_embeddings(self, enc: EncodedDataset) -> Tensor:
        return self.embeddings.pooled(enc)

    def _extractor_pass(self, z_sens: Tensor) -> tuple[list[Tensor], Tensor]:
        batch = z_sens.shape[0]
        x = z_sens.reshape(batch, self.config.num_sensitive * self.embedding_dim)
        hiddens: list[Tensor] = []
        for layer in self.ext_layers:
            x = layer(x).relu()
            hiddens.append(x)
        logit = self.ext_head(x).reshape(batch)
        return hiddens, logit

    def forward_from_embeddings(self, z: Tensor) -> Tensor:
        cfg = self.config
        batch = z.shape[0]
        # extractor always reads the raw sensitive embeddings, untouched by
        # the embedding-site retriever
        z_sens = z.select_tokens(self.sensitive_idx)
        needs_extractor = cfg.use_hidden_attn or cfg.use_aux_logit
        ext_hiddens: list[Tensor] = []
        ext_logit: Tensor | None = None
        if needs_extractor:
            ext_hiddens, ext_logit = self._extractor_pass(z_sens)

        z_in = self.emb_retriever(z, z_sens) if cfg.use_emb_attn else z
        x = z_in.reshape(batch, self.num_features * self.embedding_dim)
        last = len(self.base_layers) - 1
        for i, layer in enumerate(self.base_layers):
            x = layer(x).relu()
            if cfg.use_hidden_attn and i < last:
                h = x.shape[1]
                h_ext = ext_hiddens[i].shape[1]
                tokens = x.reshape(batch, h, 1)
                ext_tokens = ext_hiddens[i].reshape(batch, h_ext, 1)
                x = self.hidden_retrievers[i](tokens, ext_tokens).reshape(batch, h)
        base_logit = self.head(x).reshape(batch)
        if cfg.use_aux_logit:
            assert ext_logit is not None
            return base_logit + ext_logit
        return base_logit

    def forward(self, enc: EncodedDataset) -> Tensor:
        return self.forward_from_embeddings(self.pooled_embeddings(enc))

    def parameters(self) -> dict[str, Tensor]:
        out = dict(self.embeddings.parameters())
        for layer in self.base_layers:
            out.update(layer.parameters())
        out.update(self.head.parameters())
        for layer in self.ext_layers:
            out.update(layer.parameters())
        out.update(self.ext_head.parameters())
        if self.emb_retriever is not None:
            out.update(self.emb_retriever.parameters())
        for r in self.hidden_retrievers:
            out.update(r.parameters())
        return out

    def config_dict(self) -> dict:
        return self.config.to_dict()


# -- analytic cost model -------------------------------------------------------


def dense_flops(fan_in: int, fan_out: int) -> int:
    """Multiply-adds of one affine map on one row: 2*in*out plus out bias adds."""
    return 2 * fan_in * fan_out + fan_out


def retriever_flops(
    n: int, n_k: int, d: int, d_prime: int, ffn_hidden: int, kernel: str
) -> dict[str, int]:
    """Closed-form per-sample cost of one retriever site.

    Every linear-kernel term is proportional to n or n_k, so doubling both
    token counts exactly doubles the total. The softmax kernel's score and
    apply stages carry an n*n_k factor, reported as score_term.
    """
    proj = 2 * n * d * d_prime + 2 * n_k * d * d_prime + 2 * n_k * d * d_prime
    out_proj = 2 * n * d_prime * d
    residuals = 2 * n * d
    ffn = n * (2 * d * ffn_hidden + ffn_hidden) + n * ffn_hidden + n * (2 * ffn_hidden * d + d)
    if kernel == "linear":
        phi = n * d_prime + n_k * d_prime
        aggregate = 2 * n_k * d_prime * d_prime + n_k * d_prime
        readout = 2 * n * d_prime * d_prime + 2 * n * d_prime + n * d_prime
        attn = phi + aggregate + readout
        score_term = 0
    elif kernel == "softmax":
        score_term = 2 * n * n_k * d_prime
        scale_and_softmax = 4 * n * n_k
        apply = 2 * n * n_k * d_prime
        attn = score_term + scale_and_softmax + apply
    else:
        raise ConfigError(f"unknown kernel {kernel!r}")
    return {
        "total": proj + attn + out_proj + residuals + ffn,
        "score_term": score_term,
        "n": n,
        "n_k": n_k,
    }


@dataclass
class FlopsReport:
    kernel: str
    components: dict[str, int]
    retriever_sites: dict[str, dict[str, int]]
    total: int

    def to_dict(self) -> dict:
        return {
            "kernel": self.kernel,
            "components": dict(self.components),
            "retriever_sites": {k: dict(v) for k, v in self.retriever_sites.items()},
            "total": self.total,
        }

    def format_table(self) -> str:
        width = max(len(k) for k in [*self.components, "total"]) + 2
        lines = [f"forward FLOPs per sample (kernel={self.kernel})"]
        for name, count in self.components.items():
            lines.append(f"  {name:<{width}} {count:>14,}")
        lines.append(f"  {'total':<{width}} {self.total:>14,}")
        return "\n".join(lines)


def count_flops(config: MemoryConfig) -> FlopsReport:
    """Analytic per-sample forward cost of a configured model.

    Embedding lookups are table reads, counted as 0. Tower costs are the
    dense multiply-add counts plus one op per activation element.
    """
    d = config.embedding_dim
    m = config.num_features
    n_s = config.num_sensitive
    components: dict[str, int] = {"embeddings": 0}
    sites: dict[str, dict[str, int]] = {}

    def tower_cost(in_width: int, hidden: tuple[int, ...]) -> int:
        cost = 0
        width = in_width
        for h in hidden:
            cost += dense_flops(width, h) + h  # + h for the ReLU
            width = h
        return cost + dense_flops(width, 1)

    components["base_tower"] = tower_cost(m * d, config.base_hidden)
    if config.use_hidden_attn or config.use_aux_logit:
        components["extractor"] = tower_cost(n_s * d, config.extractor_hidden)
    else:
        components["extractor"] = 0

    if config.use_emb_attn:
        site = retriever_flops(m, n_s, d, config.attn_dim_emb, config.ffn_mult * d, config.kernel)
        sites["retr.emb"] = site
        components["retr.emb"] = site["total"]
    if config.use_hidden_attn:
        ext_hidden = config.extractor_hidden
        for i in range(config.num_layers - 1):
            site = retriever_flops(
                config.base_hidden[i],
                ext_hidden[i],
                1,
                config.attn_dim_hidden,
                config.ffn_mult,
                config.kernel,
            )
            sites[f"retr.hid{i}"] = site
            components[f"retr.hid{i}"] = site["total"]
    if config.use_aux_logit:
        components["logit_merge"] = 1
    total = sum(components.values())
    return FlopsReport(
        kernel=config.kernel, components=components, retriever_sites=sites, total=total
    )
