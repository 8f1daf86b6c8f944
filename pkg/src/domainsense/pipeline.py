"""End-to-end orchestration: train base model, attribute, rank, train the
memory model, evaluate, and the two comparative studies.

Every stage derives its randomness from the root seed through a named
sub-seed, so re-running one stage reproduces it exactly, and every
persisted artifact records the content fingerprints of its inputs.
"""

from __future__ import annotations

import json
import time
from contextlib import contextmanager
from dataclasses import dataclass, field, replace

import numpy as np

from . import __about__
from .attribution import AttributionMatrix, IgConfig, attribute_dataset
from .data import MultiDomainDataset
from .errors import ConfigError
from .hashing import stage_seed
from .memory import MemoryConfig, MemoryModel
from .nn import DnnConfig, DnnModel, encode_dataset, model_fingerprint, save_checkpoint
from .sensitivity import SensitivityReport, rank_features
from .synth import SyntheticConfig, generate_synthetic
from .training import EvalReport, TrainConfig, TrainHistory, evaluate, train


@dataclass
class PipelineConfig:
    """Resolved configuration for one full run.

    memory_section carries the architecture keys of MemoryConfig except the
    sensitive feature set, which the ranking stage fills in.
    """

    seed: int = 0
    dnn: DnnConfig = field(default_factory=DnnConfig)
    memory_section: dict = field(default_factory=dict)
    train_base: TrainConfig = field(default_factory=TrainConfig)
    train_memory: TrainConfig = field(default_factory=TrainConfig)
    ig: IgConfig = field(default_factory=IgConfig)
    top_k: dict[str, int] = field(
        default_factory=lambda: {"categorical-scalar": 2, "numerical-scalar": 1}
    )
    weight_mode: str = "abs"
    threads: int = 1

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "dnn": self.dnn.to_dict(),
            "memory": dict(self.memory_section),
            "train_base": self.train_base.to_dict(),
            "train_memory": self.train_memory.to_dict(),
            "attribution": self.ig.to_dict(),
            "ranking": {"top_k": dict(self.top_k), "weight_mode": self.weight_mode},
            "threads": self.threads,
        }

    @classmethod
    def from_document(cls, doc: dict) -> "PipelineConfig":
        ranking = doc.get("ranking", {})
        return cls(
            seed=int(doc.get("seed", 0)),
            dnn=DnnConfig.from_dict(doc.get("dnn", {})),
            memory_section=dict(doc.get("memory", {})),
            train_base=TrainConfig.from_dict(doc.get("train_base", {})),
            train_memory=TrainConfig.from_dict(doc.get("train_memory", {})),
            ig=IgConfig(**doc.get("attribution", {})),
            top_k={str(k): int(v) for k, v in ranking.get("top_k", {"categorical-scalar": 2, "numerical-scalar": 1}).items()},
            weight_mode=ranking.get("weight_mode", "abs"),
            threads=int(doc.get("threads", 1)),
        )

    def build_memory_config(
        self,
        sensitive: list[str],
        num_features: int,
        flag_overrides: dict | None = None,
    ) -> MemoryConfig:
        section = dict(self.memory_section)
        section.pop("sensitive_features", None)
        section.pop("num_features", None)
        if flag_overrides:
            section.update(flag_overrides)
        section.setdefault("embedding_dim", self.dnn.embedding_dim)
        section.setdefault("base_hidden", list(self.dnn.hidden_sizes))
        return MemoryConfig.from_dict(
            {"sensitive_features": list(sensitive), "num_features": num_features, **section}
        )


@dataclass
class RunManifest:
    """Record of one run: what ran, from what, producing what."""

    subcommand: str
    seed: int
    config: dict
    input_fingerprints: dict[str, str]
    output_paths: dict[str, str]
    duration_s: float
    version: str = __about__.__version__

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "subcommand": self.subcommand,
            "seed": self.seed,
            "config": self.config,
            "input_fingerprints": self.input_fingerprints,
            "output_paths": self.output_paths,
            "duration_s": self.duration_s,
        }

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")


@contextmanager
def _stage(name: str):
    """Prefix any stage failure with the stage name, keeping the type."""
    try:
        yield
    except Exception as exc:
        if not getattr(exc, "_staged", False):
            exc._staged = True  # type: ignore[attr-defined]
            exc.args = (f"stage {name!r}: {exc}",) + exc.args[1:]
        raise


@dataclass
class PipelineResult:
    base_model: DnnModel
    base_history: TrainHistory
    attrib: AttributionMatrix
    report: SensitivityReport
    memory_model: MemoryModel
    memory_history: TrainHistory
    eval_base: EvalReport
    eval_memory: EvalReport
    output_paths: dict[str, str] = field(default_factory=dict)


def train_base_model(
    train_ds: MultiDomainDataset,
    valid_ds: MultiDomainDataset,
    config: PipelineConfig,
) -> tuple[DnnModel, TrainHistory]:
    rng = np.random.default_rng(stage_seed(config.seed, "base-init"))
    model = DnnModel(train_ds.schema, config.dnn, rng)
    cfg = replace(config.train_base, seed=stage_seed(config.seed, "train-base"))
    history = train(model, train_ds, valid_ds, cfg)
    return model, history


def train_memory_model(
    train_ds: MultiDomainDataset,
    valid_ds: MultiDomainDataset,
    config: PipelineConfig,
    sensitive: list[str],
    flag_overrides: dict | None = None,
    seed_label: str = "memory",
) -> tuple[MemoryModel, TrainHistory]:
    if not sensitive:
        raise ConfigError("the selected sensitive feature set is empty")
    mem_cfg = config.build_memory_config(
        sensitive, train_ds.schema.num_features, flag_overrides
    )
    rng = np.random.default_rng(stage_seed(config.seed, f"{seed_label}-init"))
    model = MemoryModel(train_ds.schema, mem_cfg, rng)
    cfg = replace(config.train_memory, seed=stage_seed(config.seed, f"train-{seed_label}"))
    history = train(model, train_ds, valid_ds, cfg)
    return model, history


def run_pipeline(
    train_ds: MultiDomainDataset,
    valid_ds: MultiDomainDataset,
    test_ds: MultiDomainDataset,
    config: PipelineConfig,
    out_dir: str | None = None,
) -> PipelineResult:
    """The full method: base model, attribution, ranking, memory model."""
    if sum(config.top_k.values()) <= 0:
        raise ConfigError("top_k selects no features; the sensitive set would be empty")

    with _stage("train-base"):
        base_model, base_history = train_base_model(train_ds, valid_ds, config)

    with _stage("attribute"):
        attrib = attribute_dataset(
            base_model,
            encode_dataset(train_ds),
            config.ig,
            dataset_fingerprint=train_ds.fingerprint(),
        )

    with _stage("rank"):
        report = rank_features(
            train_ds,
            attrib,
            top_k=config.top_k,
            weight_mode=config.weight_mode,
            threads=config.threads,
        )
        sensitive = report.selected_features()
        if not sensitive:
            raise ConfigError("ranking selected no sensitive features")

    with _stage("train-memory"):
        memory_model, memory_history = train_memory_model(
            train_ds, valid_ds, config, sensitive
        )

    with _stage("evaluate"):
        eval_base = evaluate(base_model, test_ds, variant="SharedDNN")
        eval_memory = evaluate(memory_model, test_ds, variant="Memory")

    paths: dict[str, str] = {}
    if out_dir is not None:
        import os

        os.makedirs(out_dir, exist_ok=True)
        paths["base_checkpoint"] = os.path.join(out_dir, "base.ckpt.npz")
        save_checkpoint(base_model, paths["base_checkpoint"])
        paths["attribution"] = os.path.join(out_dir, "attribution.npz")
        attrib.save(paths["attribution"])
        paths["sensitivity"] = os.path.join(out_dir, "sensitivity.json")
        report.save(paths["sensitivity"])
        paths["memory_checkpoint"] = os.path.join(out_dir, "memory.ckpt.npz")
        save_checkpoint(memory_model, paths["memory_checkpoint"])
        paths["eval_base"] = os.path.join(out_dir, "eval_base.json")
        eval_base.save(paths["eval_base"])
        paths["eval_memory"] = os.path.join(out_dir, "eval_memory.json")
        eval_memory.save(paths["eval_memory"])

    return PipelineResult(
        base_model=base_model,
        base_history=base_history,
        attrib=attrib,
        report=report,
        memory_model=memory_model,
        memory_history=memory_history,
        eval_base=eval_base,
        eval_memory=eval_memory,
        output_paths=paths,
    )


# -- comparative studies -------------------------------------------------------


@dataclass
class StudyResult:
    """Per-variant evaluation reports across seeds, plus their means."""

    variants: dict[str, list[EvalReport]]
    seeds: list[int]
    num_domains: int

    def mean_overall(self) -> dict[str, float]:
        return {
            name: float(np.mean([r.overall_auc for r in reports]))
            for name, reports in self.variants.items()
        }

    def mean_domain(self, name: str) -> list[float | None]:
        reports = self.variants[name]
        out: list[float | None] = []
        for k in range(self.num_domains):
            vals = [r.domain_auc[k] for r in reports if r.domain_auc[k] is not None]
            out.append(float(np.mean(vals)) if vals else None)
        return out

    def to_dict(self) -> dict:
        return {
            "seeds": self.seeds,
            "num_domains": self.num_domains,
            "mean_overall": self.mean_overall(),
            "variants": {
                name: [r.to_dict() for r in reports]
                for name, reports in self.variants.items()
            },
        }

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    def format_table(self) -> str:
        """Mean AUC table: one row per domain plus Overall, one column per
        variant."""
        names = list(self.variants)
        header = f"{'segment':<12}" + "".join(f" {n:>12}" for n in names)
        lines = [header]
        per_domain = {n: self.mean_domain(n) for n in names}
        for k in range(self.num_domains):
            row = f"domain {k:<5}"
            for n in names:
                v = per_domain[n][k]
                row += f" {'n/a':>12}" if v is None else f" {v:>12.4f}"
            lines.append(row)
        overall = self.mean_overall()
        lines.append(f"{'Overall':<12}" + "".join(f" {overall[n]:>12.4f}" for n in names))
        return "\n".join(lines)


def _ranked_core(
    bundle, config: PipelineConfig
) -> tuple[DnnModel, EvalReport, SensitivityReport]:
    base_model, _ = train_base_model(bundle.train, bundle.valid, config)
    attrib = attribute_dataset(
        base_model,
        encode_dataset(bundle.train),
        config.ig,
        dataset_fingerprint=bundle.train.fingerprint(),
    )
    report = rank_features(
        bundle.train,
        attrib,
        top_k=config.top_k,
        weight_mode=config.weight_mode,
        threads=config.threads,
    )
    eval_base = evaluate(base_model, bundle.test, variant="SharedDNN")
    return base_model, eval_base, report


def run_selection_study(
    synth_config: SyntheticConfig,
    config: PipelineConfig,
    seeds: list[int],
    out_dir: str | None = None,
) -> StudyResult:
    """Train the memory model with top-k, last-k, and all features as the
    sensitive set, under identical budgets, and report side-by-side AUCs.
    The shared base model rides along as a reference column."""
    variants: dict[str, list[EvalReport]] = {
        "SharedDNN": [],
        "TopK": [],
        "LastK": [],
        "AllFeat": [],
    }
    for seed in seeds:
        bundle = generate_synthetic(replace(synth_config, seed=seed))
        run_cfg = replace(config, seed=seed)
        _, eval_base, report = _ranked_core(bundle, run_cfg)
        variants["SharedDNN"].append(eval_base)
        selections = {
            "TopK": report.select(run_cfg.top_k, best=True),
            "LastK": report.select(run_cfg.top_k, best=False),
            "AllFeat": list(bundle.schema.feature_names),
        }
        for name, sensitive in selections.items():
            label = "memory" if name == "TopK" else f"memory-{name}"
            model, _ = train_memory_model(
                bundle.train, bundle.valid, run_cfg, sensitive, seed_label=label
            )
            variants[name].append(evaluate(model, bundle.test, variant=name))
    result = StudyResult(
        variants=variants, seeds=list(seeds), num_domains=synth_config.num_domains
    )
    if out_dir is not None:
        import os

        os.makedirs(out_dir, exist_ok=True)
        result.save(os.path.join(out_dir, "selection_study.json"))
    return result


ABLATION_FLAGS = {
    "full": {},
    "no_emb_attn": {"use_emb_attn": False},
    "no_hidden_attn": {"use_hidden_attn": False},
    "no_aux_logit": {"use_aux_logit": False},
}


def run_ablation_study(
    synth_config: SyntheticConfig,
    config: PipelineConfig,
    seeds: list[int],
    out_dir: str | None = None,
) -> StudyResult:
    """Full memory model against each single-component ablation."""
    variants: dict[str, list[EvalReport]] = {name: [] for name in ABLATION_FLAGS}
    for seed in seeds:
        bundle = generate_synthetic(replace(synth_config, seed=seed))
        run_cfg = replace(config, seed=seed)
        _, _, report = _ranked_core(bundle, run_cfg)
        sensitive = report.select(run_cfg.top_k, best=True)
        for name, flags in ABLATION_FLAGS.items():
            # the unablated variant reuses the pipeline's seed label, so it
            # reproduces run_pipeline's memory model exactly
            label = "memory" if name == "full" else f"memory-{name}"
            model, _ = train_memory_model(
                bundle.train, bundle.valid, run_cfg, sensitive, flags, seed_label=label
            )
            variants[name].append(evaluate(model, bundle.test, variant=name))
    result = StudyResult(
        variants=variants, seeds=list(seeds), num_domains=synth_config.num_domains
    )
    if out_dir is not None:
        import os

        os.makedirs(out_dir, exist_ok=True)
        result.save(os.path.join(out_dir, "ablation_study.json"))
    return result
