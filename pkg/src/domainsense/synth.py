"""Synthetic multi-domain click data with planted domain-sensitive features.

Each sample belongs to one of K imbalanced domains. A planted feature
differs across domains in two coupled ways: its value distribution is a
mixture (1 - s) * shared + s * per-domain-block, and its label effect gets
a per-domain additive delta scaled by effect_shift. Non-planted features
share one distribution and one effect everywhere, so domain-sensitivity
rankings have an unambiguous ground truth.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import MultiDomainDataset
from .errors import ConfigError
from .hashing import stage_seed
from .schema import (
    CATEGORICAL,
    NUMERICAL,
    SCALAR,
    SEQUENTIAL,
    FeatureSchema,
    FeatureSpec,
    equal_frequency_edges,
)


@dataclass(frozen=True)
class SyntheticConfig:
    """Knobs for the generator; defaults give a small smoke-test dataset."""

    seed: int = 0
    num_samples: int = 10_000
    domain_proportions: tuple[float, ...] = (0.8, 0.1, 0.06, 0.04)
    num_cat_scalar: int = 6
    num_cat_planted: int = 2
    num_num_scalar: int = 4
    num_num_planted: int = 1
    num_cat_seq: int = 2
    num_seq_planted: int = 0
    vocab_size: int = 10
    num_bins: int = 10
    value_shift: float = 0.7
    effect_shift: float = 2.0
    effect_scale: float = 0.6
    base_positive_rate: float = 0.25
    seq_len_range: tuple[int, int] = (1, 6)
    max_seq_len: int = 10
    include_domain_feature: bool = False
    split_fractions: tuple[float, float, float] = (0.8, 0.1, 0.1)

    def __post_init__(self) -> None:
        props = np.asarray(self.domain_proportions, dtype=float)
        if props.ndim != 1 or len(props) < 2:
            raise ConfigError("need at least 2 domain proportions")
        if (props <= 0).any():
            raise ConfigError("domain proportions must be positive")
        if abs(props.sum() - 1.0) > 1e-6:
            raise ConfigError("domain proportions must sum to 1")
        if self.num_cat_planted > self.num_cat_scalar:
            raise ConfigError("more planted categorical features than categorical features")
        if self.num_num_planted > self.num_num_scalar:
            raise ConfigError("more planted numerical features than numerical features")
        if self.num_seq_planted > self.num_cat_seq:
            raise ConfigError("more planted sequential features than sequential features")
        if self.vocab_size < len(props):
            raise ConfigError("vocab_size must be >= number of domains for disjoint blocks")
        if not 0.0 <= self.value_shift <= 1.0:
            raise ConfigError("value_shift must lie in [0, 1]")
        if self.effect_shift < 0:
            raise ConfigError("effect_shift must be non-negative")
        if not 0.0 < self.base_positive_rate < 1.0:
            raise ConfigError("base_positive_rate must lie in (0, 1)")
        fr = np.asarray(self.split_fractions, dtype=float)
        if len(fr) != 3 or (fr <= 0).any() or abs(fr.sum() - 1.0) > 1e-6:
            raise ConfigError("split_fractions must be 3 positive values summing to 1")
        if self.num_samples < 10:
            raise ConfigError("num_samples too small to split")

    @property
    def num_domains(self) -> int:
        return len(self.domain_proportions)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "num_samples": self.num_samples,
            "domain_proportions": list(self.domain_proportions),
            "num_cat_scalar": self.num_cat_scalar,
            "num_cat_planted": self.num_cat_planted,
            "num_num_scalar": self.num_num_scalar,
            "num_num_planted": self.num_num_planted,
            "num_cat_seq": self.num_cat_seq,
            "num_seq_planted": self.num_seq_planted,
            "vocab_size": self.vocab_size,
            "num_bins": self.num_bins,
            "value_shift": self.value_shift,
            "effect_shift": self.effect_shift,
            "effect_scale": self.effect_scale,
            "base_positive_rate": self.base_positive_rate,
            "seq_len_range": list(self.seq_len_range),
            "max_seq_len": self.max_seq_len,
            "include_domain_feature": self.include_domain_feature,
            "split_fractions": list(self.split_fractions),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticConfig":
        kwargs = dict(d)
        for key in ("domain_proportions", "seq_len_range", "split_fractions"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(f"bad synthetic config: {exc}") from exc


@dataclass
class SyntheticBundle:
    """Generator output: resolved schema, three splits, and ground truth."""

    schema: FeatureSchema
    train: MultiDomainDataset
    valid: MultiDomainDataset
    test: MultiDomainDataset
    truth: dict


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _solve_bias(raw_logits: np.ndarray, target_rate: float) -> float:
    """Bisection for the intercept that hits the target mean positive rate.

    The mean of sigmoid(raw + b) is strictly increasing in b, so plain
    bisection on a generous bracket converges to float precision.
    """
    lo, hi = -30.0, 30.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if _sigmoid(raw_logits + mid).mean() < target_rate:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _domain_blocks(num_values: int, num_domains: int) -> list[np.ndarray]:
    """Partition value indices into contiguous, non-empty per-domain blocks."""
    bounds = np.linspace(0, num_values, num_domains + 1).round().astype(int)
    return [np.arange(bounds[k], bounds[k + 1]) for k in range(num_domains)]


def _mixed_categorical_probs(
    rng: np.random.Generator,
    num_values: int,
    num_domains: int,
    shift: float,
) -> np.ndarray:
    """Per-domain pmfs (K, V): shared Dirichlet blended with disjoint blocks."""
    shared = rng.dirichlet(np.full(num_values, 2.0))
    probs = np.tile(shared, (num_domains, 1))
    if shift > 0:
        for k, block in enumerate(_domain_blocks(num_values, num_domains)):
            block_pmf = np.zeros(num_values)
            block_pmf[block] = rng.dirichlet(np.full(len(block), 2.0))
            probs[k] = (1.0 - shift) * shared + shift * block_pmf
    return probs


def _sample_categorical(
    rng: np.random.Generator, probs: np.ndarray, domains: np.ndarray
) -> np.ndarray:
    """Draw one value per sample from its domain's pmf via inverse CDF."""
    cdf = np.cumsum(probs, axis=1)
    cdf[:, -1] = 1.0
    u = rng.random(len(domains))
    rows = cdf[domains]
    return (u[:, None] > rows).sum(axis=1).astype(np.int64)


def generate_synthetic(config: SyntheticConfig) -> SyntheticBundle:
    rng = np.random.default_rng(stage_seed(config.seed, "synth"))
    K = config.num_domains
    n = config.num_samples

    domains = rng.choice(K, size=n, p=np.asarray(config.domain_proportions))

    feature_specs: list[FeatureSpec] = []
    columns: dict[str, np.ndarray] = {}
    seq_lengths: dict[str, np.ndarray] = {}
    planted: list[str] = []
    raw_logit = np.zeros(n)

    def cat_vocab(prefix: str, size: int) -> tuple[str, ...]:
        return tuple(f"{prefix}_v{i}" for i in range(size))

    # Scalar categorical features. Planted ones get per-domain pmfs and
    # per-domain effect deltas; the rest share one pmf and one effect vector.
    for j in range(config.num_cat_scalar):
        name = f"cat{j}"
        is_planted = j < config.num_cat_planted
        shift = config.value_shift if is_planted else 0.0
        probs = _mixed_categorical_probs(rng, config.vocab_size, K, shift)
        values = _sample_categorical(rng, probs, domains)
        beta = rng.normal(0.0, config.effect_scale, size=config.vocab_size)
        coef = np.tile(beta, (K, 1))
        if is_planted:
            coef = coef + config.effect_shift * rng.normal(
                0.0, config.effect_scale, size=(K, config.vocab_size)
            )
            planted.append(name)
        raw_logit += coef[domains, values]
        feature_specs.append(
            FeatureSpec(name=name, kind=CATEGORICAL, arity=SCALAR, vocab=cat_vocab(name, config.vocab_size))
        )
        columns[name] = values

    # Scalar numerical features on [0, 1]. Planted ones mix a shared uniform
    # with per-domain disjoint intervals and get a domain-varying slope.
    for j in range(config.num_num_scalar):
        name = f"num{j}"
        is_planted = j < config.num_num_planted
        shared = rng.random(n)
        if is_planted:
            lo = domains / K
            block = lo + rng.random(n) / K
            pick = rng.random(n) < config.value_shift
            values = np.where(pick, block, shared)
        else:
            values = shared
        slope = rng.normal(0.0, 2.0 * config.effect_scale)
        slopes = np.full(K, slope)
        if is_planted:
            slopes = slopes + config.effect_shift * rng.normal(
                0.0, 2.0 * config.effect_scale, size=K
            )
            planted.append(name)
        raw_logit += slopes[domains] * (values - 0.5)
        feature_specs.append(
            FeatureSpec(name=name, kind=NUMERICAL, arity=SCALAR, num_bins=config.num_bins)
        )
        columns[name] = values

    # Sequential categorical features: variable-length token lists; the
    # label effect is the mean of per-token coefficients.
    lo_len, hi_len = config.seq_len_range
    for j in range(config.num_cat_seq):
        name = f"seq{j}"
        is_planted = j < config.num_seq_planted
        shift = config.value_shift if is_planted else 0.0
        probs = _mixed_categorical_probs(rng, config.vocab_size, K, shift)
        lengths = rng.integers(lo_len, hi_len + 1, size=n)
        tokens = np.zeros((n, config.max_seq_len), dtype=np.int64)
        contrib = np.zeros(n)
        beta = rng.normal(0.0, config.effect_scale, size=config.vocab_size)
        coef = np.tile(beta, (K, 1))
        if is_planted:
            coef = coef + config.effect_shift * rng.normal(
                0.0, config.effect_scale, size=(K, config.vocab_size)
            )
            planted.append(name)
        max_len = int(lengths.max()) if n else 0
        for t in range(max_len):
            active = lengths > t
            draws = _sample_categorical(rng, probs, domains[active])
            tokens[active, t] = draws
            contrib[active] += coef[domains[active], draws]
        nonzero = lengths > 0
        contrib[nonzero] /= lengths[nonzero]
        raw_logit += contrib
        feature_specs.append(
            FeatureSpec(
                name=name,
                kind=CATEGORICAL,
                arity=SEQUENTIAL,
                vocab=cat_vocab(name, config.vocab_size),
                max_seq_len=config.max_seq_len,
            )
        )
        columns[name] = tokens
        seq_lengths[name] = lengths.astype(np.int64)

    # Optional explicit domain-identity feature. Off by default: it would
    # dominate any sensitivity ranking and crowd out the planted features.
    if config.include_domain_feature:
        name = "domain_id"
        feature_specs.append(
            FeatureSpec(
                name=name, kind=CATEGORICAL, arity=SCALAR, vocab=cat_vocab(name, K)
            )
        )
        columns[name] = domains.copy()

    bias = _solve_bias(raw_logit, config.base_positive_rate)
    labels = (rng.random(n) < _sigmoid(raw_logit + bias)).astype(np.int64)

    schema = FeatureSchema(
        features=tuple(feature_specs),
        domain_field="domain",
        label_field="label",
        num_domains=K,
    )
    full = MultiDomainDataset(
        schema=schema,
        columns=columns,
        seq_lengths=seq_lengths,
        domains=domains,
        labels=labels,
    )

    perm = rng.permutation(n)
    f_train, f_valid, _ = config.split_fractions
    n_train = int(round(n * f_train))
    n_valid = int(round(n * f_valid))
    train = full.subset(perm[:n_train])
    valid = full.subset(perm[n_train : n_train + n_valid])
    test = full.subset(perm[n_train + n_valid :])

    # Bin edges come from the training split only, then bind to every split.
    for spec in schema.features:
        if spec.kind == NUMERICAL:
            edges = equal_frequency_edges(train.columns[spec.name], config.num_bins)
            resolved = FeatureSpec(
                name=spec.name,
                kind=NUMERICAL,
                arity=spec.arity,
                num_bins=len(edges) - 1,
                bin_edges=edges,
            )
            schema = schema.with_feature(resolved)
    train = train.with_schema(schema)
    valid = valid.with_schema(schema)
    test = test.with_schema(schema)

    truth = {
        "planted_features": planted,
        "bias": float(bias),
        "achieved_positive_rate": float(labels.mean()),
        "config": config.to_dict(),
    }
    return SyntheticBundle(schema=schema, train=train, valid=valid, test=test, truth=truth)
