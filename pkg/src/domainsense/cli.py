"""Command-line interface.

Subcommands map one-to-one onto the library's pipeline stages and studies.
Every successful run that writes artifacts also writes a manifest recording
the resolved configuration, input content fingerprints, output paths, and
wall-clock duration. Exit codes: 0 success, 1 usage error, 2 runtime error.
Diagnostics go to stderr; data goes to files or stdout.

Any flag default can be overridden from the environment with the
DOMAINSENSE_ prefix (e.g. DOMAINSENSE_SEED=7, DOMAINSENSE_IG_STEPS=20).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import replace

import numpy as np

from .__about__ import __version__
from .attribution import AttributionMatrix, IgConfig, attribute_dataset
from .data import MultiDomainDataset, load_csv, write_csv
from .errors import ConfigError
from .memory import KERNELS, MemoryConfig, count_flops
from .nn import encode_dataset, load_checkpoint, save_checkpoint
from .pipeline import (
    PipelineConfig,
    RunManifest,
    run_ablation_study,
    run_selection_study,
    train_base_model,
    train_memory_model,
)
from .schema import FeatureSchema
from .sensitivity import (
    GROUPS,
    SensitivityReport,
    WEIGHT_MODES,
    export_distributions_csv,
    rank_features,
)
from .synth import SyntheticConfig, generate_synthetic
from .training import evaluate

log = logging.getLogger("domainsense")

ENV_PREFIX = "DOMAINSENSE_"


class Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; this tool reserves 2 for runtime
    failures, so usage problems exit 1 instead."""

    def error(self, message: str):  # noqa: A003 - argparse API
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _env(name: str, default, cast=str):
    raw = os.environ.get(ENV_PREFIX + name)
    if raw is None:
        return default
    if cast is bool:
        return raw.strip().lower() in ("1", "true", "yes", "on")
    return cast(raw)


def _require(path: str, what: str) -> str:
    if not os.path.exists(path):
        raise FileNotFoundError(f"missing {what}: {path}")
    return path


def _stem(path: str, suffix: str) -> str:
    return path[: -len(suffix)] if path.endswith(suffix) else path


def _load_config_doc(path: str | None) -> dict:
    if path is None:
        return {}
    _require(path, "config file")
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config document must be a JSON object")
    return doc


def _pipeline_config(args) -> PipelineConfig:
    doc = _load_config_doc(getattr(args, "config", None))
    cfg = PipelineConfig.from_document(doc)
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "threads", None) is not None:
        cfg.threads = args.threads
    if getattr(args, "ig_steps", None) is not None:
        cfg.ig = IgConfig(steps=args.ig_steps, batch_size=cfg.ig.batch_size)
    return cfg


def _load_bundle(data: str) -> tuple[FeatureSchema, dict[str, MultiDomainDataset]]:
    stem = _stem(data, ".csv")
    schema = FeatureSchema.load(_require(stem + ".schema.json", "schema file"))
    splits = {}
    for split in ("train", "valid", "test"):
        splits[split] = load_csv(_require(f"{stem}.{split}.csv", f"{split} split"), schema)
    return schema, splits


def _load_eval_split(data: str) -> MultiDomainDataset:
    stem = _stem(data, ".csv")
    schema = FeatureSchema.load(_require(stem + ".schema.json", "schema file"))
    test_path = f"{stem}.test.csv"
    if os.path.exists(test_path):
        return load_csv(test_path, schema)
    return load_csv(_require(data, "dataset file"), schema)


def _write_manifest(
    subcommand: str,
    seed: int,
    config: dict,
    inputs: dict[str, str],
    outputs: dict[str, str],
    started: float,
    path: str,
) -> None:
    RunManifest(
        subcommand=subcommand,
        seed=seed,
        config=config,
        input_fingerprints=inputs,
        output_paths=outputs,
        duration_s=round(time.monotonic() - started, 3),
    ).save(path)
    log.info("manifest written to %s", path)


# -- subcommand handlers -------------------------------------------------------


def _cmd_gen_data(args) -> None:
    started = time.monotonic()
    doc = _load_config_doc(args.config)
    section = doc.get("synthetic", doc)
    if args.seed is not None:
        section = {**section, "seed": args.seed}
    cfg = SyntheticConfig.from_dict(section)
    bundle = generate_synthetic(cfg)
    stem = _stem(args.out, ".csv")
    outputs: dict[str, str] = {}
    bundle.schema.save(stem + ".schema.json")
    outputs["schema"] = stem + ".schema.json"
    for split in ("train", "valid", "test"):
        path = f"{stem}.{split}.csv"
        write_csv(path, getattr(bundle, split))
        outputs[split] = path
    with open(stem + ".truth.json", "w", encoding="utf-8") as fh:
        json.dump(bundle.truth, fh, indent=2)
        fh.write("\n")
    outputs["truth"] = stem + ".truth.json"
    log.info(
        "generated %d train / %d valid / %d test samples, positive rate %.3f",
        len(bundle.train),
        len(bundle.valid),
        len(bundle.test),
        bundle.truth["achieved_positive_rate"],
    )
    _write_manifest(
        "gen-data",
        cfg.seed,
        cfg.to_dict(),
        {},
        outputs,
        started,
        stem + ".manifest.json",
    )


def _cmd_train_base(args) -> None:
    started = time.monotonic()
    cfg = _pipeline_config(args)
    _, splits = _load_bundle(args.data)
    model, history = train_base_model(splits["train"], splits["valid"], cfg)
    fp = save_checkpoint(model, args.out, extra_meta={"history": history.to_dict()})
    log.info("best valid AUC %.4f at epoch %d", history.best_valid_auc, history.best_epoch)
    _write_manifest(
        "train-base",
        cfg.seed,
        cfg.to_dict(),
        {"train": splits["train"].fingerprint(), "valid": splits["valid"].fingerprint()},
        {"checkpoint": args.out, "checkpoint_fingerprint": fp},
        started,
        _stem(args.out, ".npz") + ".manifest.json",
    )


def _cmd_attribute(args) -> None:
    started = time.monotonic()
    cfg = _pipeline_config(args)
    schema, splits = _load_bundle(args.data)
    model = load_checkpoint(_require(args.checkpoint, "model checkpoint"), schema)
    train_ds = splits["train"]
    attrib = attribute_dataset(
        model, encode_dataset(train_ds), cfg.ig, dataset_fingerprint=train_ds.fingerprint()
    )
    attrib.save(args.out)
    log.info(
        "attributed %d samples x %d features (T=%d), max completeness gap %.2e",
        attrib.num_samples,
        len(attrib.feature_names),
        attrib.steps,
        float(attrib.completeness_gap.max()),
    )
    _write_manifest(
        "attribute",
        cfg.seed,
        cfg.ig.to_dict(),
        {"train": train_ds.fingerprint(), "model": attrib.model_fingerprint},
        {"attribution": args.out, "attribution_fingerprint": attrib.fingerprint()},
        started,
        _stem(args.out, ".npz") + ".manifest.json",
    )


def _top_k_from_args(args) -> dict[str, int]:
    top_k = {
        "categorical-scalar": args.top_k_categorical,
        "numerical-scalar": args.top_k_numerical,
        "categorical-sequential": args.top_k_categorical_seq,
        "numerical-sequential": args.top_k_numerical_seq,
    }
    return {g: k for g, k in top_k.items() if k > 0}


def _cmd_rank(args) -> None:
    started = time.monotonic()
    _, splits = _load_bundle(args.data)
    train_ds = splits["train"]
    attrib = AttributionMatrix.load(_require(args.attribution, "attribution file"))
    report = rank_features(
        train_ds,
        attrib,
        top_k=_top_k_from_args(args),
        weight_mode=args.weight_mode,
        threads=args.threads or 1,
    )
    report.save(args.out)
    stem = _stem(args.out, ".json")
    from .report import save_sensitivity_figure, sensitivity_table

    outputs = {"report": args.out}
    export_distributions_csv(report, stem + ".dists.csv")
    outputs["distributions_csv"] = stem + ".dists.csv"
    outputs["figure"] = save_sensitivity_figure(report, stem + ".ds.png")
    print(sensitivity_table(report))
    _write_manifest(
        "rank",
        args.seed if args.seed is not None else 0,
        {"top_k": _top_k_from_args(args), "weight_mode": args.weight_mode},
        {
            "train": train_ds.fingerprint(),
            "attribution": attrib.fingerprint(),
            "model": attrib.model_fingerprint,
        },
        outputs,
        started,
        stem + ".manifest.json",
    )


def _flag_overrides(args) -> dict:
    overrides: dict = {}
    if args.kernel is not None:
        overrides["kernel"] = args.kernel
    if args.no_emb_attn:
        overrides["use_emb_attn"] = False
    if args.no_hidden_attn:
        overrides["use_hidden_attn"] = False
    if args.no_aux_logit:
        overrides["use_aux_logit"] = False
    return overrides


def _cmd_train_memory(args) -> None:
    started = time.monotonic()
    cfg = _pipeline_config(args)
    _, splits = _load_bundle(args.data)
    report = SensitivityReport.load(_require(args.sensitivity, "sensitivity report"))
    if report.dataset_fingerprint != splits["train"].fingerprint():
        raise ConfigError(
            f"{args.sensitivity}: report was computed on a different training set"
        )
    if args.sensitive:
        sensitive = [s.strip() for s in args.sensitive.split(",") if s.strip()]
    else:
        sensitive = report.selected_features()
    model, history = train_memory_model(
        splits["train"], splits["valid"], cfg, sensitive, _flag_overrides(args)
    )
    fp = save_checkpoint(model, args.out, extra_meta={"history": history.to_dict()})
    log.info(
        "memory model over sensitive set %s; best valid AUC %.4f",
        sensitive,
        history.best_valid_auc,
    )
    _write_manifest(
        "train-memory",
        cfg.seed,
        {**cfg.to_dict(), "sensitive_features": sensitive},
        {
            "train": splits["train"].fingerprint(),
            "valid": splits["valid"].fingerprint(),
            "sensitivity": args.sensitivity,
        },
        {"checkpoint": args.out, "checkpoint_fingerprint": fp},
        started,
        _stem(args.out, ".npz") + ".manifest.json",
    )


def _cmd_evaluate(args) -> None:
    started = time.monotonic()
    test_ds = _load_eval_split(args.data)
    model = load_checkpoint(_require(args.checkpoint, "model checkpoint"), test_ds.schema)
    rep = evaluate(model, test_ds, variant=model.kind)
    rep.save(args.out)
    stem = _stem(args.out, ".json")
    from .report import save_eval_figure

    figure = save_eval_figure([rep], stem + ".png")
    print(rep.format_table())
    _write_manifest(
        "evaluate",
        args.seed if args.seed is not None else 0,
        {},
        {"test": test_ds.fingerprint(), "model": rep.model_fingerprint},
        {"report": args.out, "figure": figure},
        started,
        stem + ".manifest.json",
    )


def _study_config(args) -> tuple[SyntheticConfig, PipelineConfig, list[int]]:
    doc = _load_config_doc(args.config)
    if "synthetic" not in doc:
        raise ConfigError("study configs need a 'synthetic' section")
    synth = SyntheticConfig.from_dict(doc["synthetic"])
    cfg = PipelineConfig.from_document(doc)
    if args.threads is not None:
        cfg.threads = args.threads
    seeds = [int(s) for s in args.seeds.split(",") if s.strip() != ""]
    if not seeds:
        raise ConfigError("no seeds given")
    return synth, cfg, seeds


def _cmd_study(args, which: str) -> None:
    started = time.monotonic()
    synth, cfg, seeds = _study_config(args)
    os.makedirs(args.out, exist_ok=True)
    runner = run_selection_study if which == "selection" else run_ablation_study
    result = runner(synth, cfg, seeds, out_dir=args.out)
    from .report import save_study_figure

    figure = save_study_figure(result, os.path.join(args.out, f"{which}_study.png"))
    print(result.format_table())
    _write_manifest(
        f"study-{which}",
        seeds[0],
        {**cfg.to_dict(), "synthetic": synth.to_dict(), "seeds": seeds},
        {},
        {
            "study": os.path.join(args.out, f"{which}_study.json"),
            "figure": figure,
        },
        started,
        os.path.join(args.out, f"{which}_study.manifest.json"),
    )


def _cmd_flops(args) -> None:
    doc = _load_config_doc(args.config)
    section = doc.get("memory", doc)
    overrides = _flag_overrides(args)
    mem_cfg = MemoryConfig.from_dict({**section, **overrides})
    report = count_flops(mem_cfg)
    print(report.format_table())
    payload = json.dumps(report.to_dict(), indent=2)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(payload + "\n")
        log.info("wrote %s", args.out)
    else:
        print(payload)


def _cmd_export_dists(args) -> None:
    started = time.monotonic()
    report = SensitivityReport.load(_require(args.sensitivity, "sensitivity report"))
    export_distributions_csv(report, args.out)
    stem = _stem(args.out, ".csv")
    from .report import save_distribution_figure

    outputs = {"csv": args.out}
    for name in report.selected_features():
        outputs[f"figure:{name}"] = save_distribution_figure(
            report, name, f"{stem}.{name}.png"
        )
    log.info("exported %d feature distributions", len(report.features))
    _write_manifest(
        "export-dists",
        0,
        {"weight_mode": report.weight_mode},
        {"sensitivity": report.attribution_fingerprint},
        outputs,
        started,
        stem + ".manifest.json",
    )


# -- parser ---------------------------------------------------------------------


def _add_common(p: Parser, *, seed: bool = True, config: bool = False, threads: bool = False):
    if seed:
        p.add_argument(
            "--seed", type=int, default=_env("SEED", None, int), help="root random seed"
        )
    if config:
        p.add_argument("--config", default=_env("CONFIG", None), help="JSON config document")
    if threads:
        p.add_argument(
            "--threads",
            type=int,
            default=_env("THREADS", None, int),
            help="worker threads for per-feature jobs",
        )


def _add_memory_flags(p: Parser):
    p.add_argument(
        "--kernel",
        choices=KERNELS,
        default=_env("KERNEL", None),
        help="attention kernel override",
    )
    p.add_argument("--no-emb-attn", action="store_true", help="disable the embedding-site retriever")
    p.add_argument("--no-hidden-attn", action="store_true", help="disable hidden-site retrievers")
    p.add_argument("--no-aux-logit", action="store_true", help="disable the auxiliary logit merge")


def build_parser() -> Parser:
    parser = Parser(prog="domainsense", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=Parser)

    p = sub.add_parser("gen-data", help="generate a synthetic multi-domain dataset bundle")
    _add_common(p, config=True)
    p.add_argument("--out", required=True, help="bundle path; writes <stem>.{train,valid,test}.csv etc.")
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("train-base", help="train the shared baseline model")
    _add_common(p, config=True, threads=True)
    p.add_argument("--data", required=True, help="dataset bundle path")
    p.add_argument("--out", required=True, help="checkpoint output (.npz)")
    p.set_defaults(func=_cmd_train_base)

    p = sub.add_parser("attribute", help="integrated-gradients attribution of the training split")
    _add_common(p, config=True)
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True, help="base model checkpoint")
    p.add_argument(
        "--ig-steps", type=int, default=_env("IG_STEPS", None, int), help="interpolation steps"
    )
    p.add_argument("--out", required=True, help="attribution matrix output (.npz)")
    p.set_defaults(func=_cmd_attribute)

    p = sub.add_parser("rank", help="rank features by domain sensitivity")
    _add_common(p, threads=True)
    p.add_argument("--data", required=True)
    p.add_argument("--attribution", required=True, help="attribution matrix from `attribute`")
    p.add_argument("--top-k-categorical", type=int, default=_env("TOP_K_CATEGORICAL", 2, int))
    p.add_argument("--top-k-numerical", type=int, default=_env("TOP_K_NUMERICAL", 1, int))
    p.add_argument(
        "--top-k-categorical-seq", type=int, default=_env("TOP_K_CATEGORICAL_SEQ", 0, int)
    )
    p.add_argument(
        "--top-k-numerical-seq", type=int, default=_env("TOP_K_NUMERICAL_SEQ", 0, int)
    )
    p.add_argument(
        "--weight-mode", choices=WEIGHT_MODES, default=_env("WEIGHT_MODE", "abs")
    )
    p.add_argument("--out", required=True, help="sensitivity report output (.json)")
    p.set_defaults(func=_cmd_rank)

    p = sub.add_parser("train-memory", help="train the memory model on selected features")
    _add_common(p, config=True, threads=True)
    p.add_argument("--data", required=True)
    p.add_argument("--sensitivity", required=True, help="sensitivity report from `rank`")
    p.add_argument(
        "--sensitive", default=None, help="comma list overriding the report's selected set"
    )
    _add_memory_flags(p)
    p.add_argument("--out", required=True, help="checkpoint output (.npz)")
    p.set_defaults(func=_cmd_train_memory)

    p = sub.add_parser("evaluate", help="overall and per-domain AUC of a checkpoint")
    _add_common(p)
    p.add_argument("--data", required=True, help="bundle (test split used) or a single csv")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True, help="evaluation report output (.json)")
    p.set_defaults(func=_cmd_evaluate)

    for which in ("selection", "ablation"):
        p = sub.add_parser(
            f"study-{which}",
            help=f"multi-seed {which} study on synthetic data",
        )
        _add_common(p, seed=False, config=True, threads=True)
        p.add_argument("--seeds", default=_env("SEEDS", "0,1,2,3,4"), help="comma list of seeds")
        p.add_argument("--out", required=True, help="output directory")
        p.set_defaults(func=lambda a, w=which: _cmd_study(a, w))

    p = sub.add_parser("flops", help="analytic forward-cost report for a memory config")
    _add_common(p, seed=False, config=True)
    _add_memory_flags(p)
    p.add_argument("--out", default=None, help="optional JSON output path")
    p.set_defaults(func=_cmd_flops)

    p = sub.add_parser("export-dists", help="export per-domain distributions as CSV + figures")
    _add_common(p, seed=False)
    p.add_argument("--sensitivity", required=True, help="sensitivity report from `rank`")
    p.add_argument("--out", required=True, help="CSV output path")
    p.set_defaults(func=_cmd_export_dists)

    return parser


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else int(exc.code)
    logging.basicConfig(
        stream=sys.stderr, level=logging.INFO, format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        args.func(args)
        return 0
    except Exception as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
