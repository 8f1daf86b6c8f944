import json
import os

import numpy as np
import pytest

from domainsense import (
    AttributionMatrix,
    ConfigError,
    DnnConfig,
    EvalReport,
    IgConfig,
    PipelineConfig,
    RunManifest,
    SensitivityReport,
    StudyResult,
    SyntheticConfig,
    TrainConfig,
    encode_dataset,
    generate_synthetic,
    load_checkpoint,
    model_fingerprint,
    run_ablation_study,
    run_pipeline,
    run_selection_study,
)
from domainsense.pipeline import ABLATION_FLAGS, _stage, train_memory_model


def _pipe_config(seed=1):
    return PipelineConfig(
        seed=seed,
        dnn=DnnConfig(embedding_dim=4, hidden_sizes=(12, 8)),
        memory_section={"attn_dim_emb": 4, "attn_dim_hidden": 2, "ffn_mult": 2},
        train_base=TrainConfig(batch_size=128, epochs=1, learning_rate=5e-3),
        train_memory=TrainConfig(batch_size=128, epochs=1, learning_rate=5e-3),
        ig=IgConfig(steps=2, batch_size=512),
        top_k={"categorical-scalar": 1, "numerical-scalar": 1},
    )


@pytest.fixture(scope="module")
def tiny_synth():
    return SyntheticConfig(
        seed=1,
        num_samples=600,
        domain_proportions=(0.5, 0.3, 0.2),
        num_cat_scalar=2,
        num_cat_planted=1,
        num_num_scalar=1,
        num_num_planted=1,
        num_cat_seq=1,
        vocab_size=5,
        num_bins=4,
        max_seq_len=4,
        seq_len_range=(1, 3),
    )


@pytest.fixture(scope="module")
def study_runs(tiny_synth, tmp_path_factory):
    """One pipeline run plus both studies on the same seed and config, so
    the fingerprint-reuse contracts can be cross-checked."""
    config = _pipe_config(seed=1)
    root = tmp_path_factory.mktemp("studies")
    bundle = generate_synthetic(tiny_synth)
    pipe = run_pipeline(
        bundle.train, bundle.valid, bundle.test, config, out_dir=str(root / "run")
    )
    selection = run_selection_study(tiny_synth, config, seeds=[1], out_dir=str(root / "sel"))
    ablation = run_ablation_study(tiny_synth, config, seeds=[1], out_dir=str(root / "abl"))
    return bundle, config, pipe, selection, ablation, root


def test_pipeline_selects_and_labels(study_runs):
    bundle, config, pipe, _, _, _ = study_runs
    sensitive = pipe.report.selected_features()
    assert 1 <= len(sensitive) <= 2
    assert sensitive == list(pipe.memory_model.config.sensitive_features)
    assert pipe.eval_base.variant == "SharedDNN"
    assert pipe.eval_memory.variant == "Memory"
    assert pipe.attrib.dataset_fingerprint == bundle.train.fingerprint()
    assert pipe.attrib.model_fingerprint == model_fingerprint(pipe.base_model)
    assert pipe.eval_base.model_fingerprint == model_fingerprint(pipe.base_model)


def test_pipeline_artifacts_load_back(study_runs):
    bundle, _, pipe, _, _, _ = study_runs
    paths = pipe.output_paths
    expected = {
        "base_checkpoint",
        "attribution",
        "sensitivity",
        "memory_checkpoint",
        "eval_base",
        "eval_memory",
    }
    assert set(paths) == expected
    for p in paths.values():
        assert os.path.exists(p)

    enc = encode_dataset(bundle.test)
    base = load_checkpoint(paths["base_checkpoint"], bundle.schema)
    np.testing.assert_array_equal(base.forward(enc).data, pipe.base_model.forward(enc).data)
    mem = load_checkpoint(paths["memory_checkpoint"], bundle.schema)
    np.testing.assert_array_equal(
        mem.forward(enc).data, pipe.memory_model.forward(enc).data
    )

    attrib = AttributionMatrix.load(paths["attribution"])
    assert attrib.fingerprint() == pipe.attrib.fingerprint()
    attrib.verify_dataset(bundle.train.fingerprint())  # chained artifact matches

    report = SensitivityReport.load(paths["sensitivity"])
    assert report.selected_features() == pipe.report.selected_features()

    loaded_eval = EvalReport.from_dict(json.load(open(paths["eval_memory"])))
    assert loaded_eval == pipe.eval_memory


def test_pipeline_is_deterministic(study_runs, tiny_synth):
    bundle, config, pipe, _, _, _ = study_runs
    again = run_pipeline(bundle.train, bundle.valid, bundle.test, config)
    assert model_fingerprint(again.base_model) == model_fingerprint(pipe.base_model)
    assert model_fingerprint(again.memory_model) == model_fingerprint(pipe.memory_model)
    assert again.attrib.fingerprint() == pipe.attrib.fingerprint()
    assert again.eval_memory.overall_auc == pipe.eval_memory.overall_auc


def test_selection_study_shape(study_runs):
    _, _, _, selection, _, root = study_runs
    assert set(selection.variants) == {"SharedDNN", "TopK", "LastK", "AllFeat"}
    assert selection.seeds == [1]
    assert selection.num_domains == 3
    for name, reports in selection.variants.items():
        assert len(reports) == 1
        assert reports[0].variant == name
        assert 0.0 <= reports[0].overall_auc <= 1.0
    assert set(selection.mean_overall()) == set(selection.variants)
    assert len(selection.mean_domain("TopK")) == 3
    table = selection.format_table()
    assert "Overall" in table and "TopK" in table and "AllFeat" in table
    saved = json.load(open(root / "sel" / "selection_study.json"))
    assert set(saved["variants"]) == set(selection.variants)
    assert saved["seeds"] == [1]


def test_ablation_study_shape(study_runs):
    _, _, _, _, ablation, root = study_runs
    assert set(ablation.variants) == set(ABLATION_FLAGS)
    assert set(ABLATION_FLAGS) == {"full", "no_emb_attn", "no_hidden_attn", "no_aux_logit"}
    for name, reports in ablation.variants.items():
        assert len(reports) == 1
        assert reports[0].variant == name
    assert os.path.exists(root / "abl" / "ablation_study.json")


def test_studies_reuse_pipeline_models(study_runs):
    # same seed and config: the study's reference and unablated variants
    # must be the very models the plain pipeline produces
    _, _, pipe, selection, ablation, _ = study_runs
    base_fp = pipe.eval_base.model_fingerprint
    mem_fp = pipe.eval_memory.model_fingerprint
    assert selection.variants["SharedDNN"][0].model_fingerprint == base_fp
    assert selection.variants["TopK"][0].model_fingerprint == mem_fp
    assert ablation.variants["full"][0].model_fingerprint == mem_fp
    # ablations are genuinely different models
    assert ablation.variants["no_emb_attn"][0].model_fingerprint != mem_fp
    assert ablation.variants["no_aux_logit"][0].model_fingerprint != mem_fp


def test_top_k_zero_rejected(study_runs):
    bundle, config, _, _, _, _ = study_runs
    bad = _pipe_config()
    bad.top_k = {"categorical-scalar": 0}
    with pytest.raises(ConfigError, match="top_k"):
        run_pipeline(bundle.train, bundle.valid, bundle.test, bad)


def test_stage_prefix_keeps_type():
    with pytest.raises(ValueError, match=r"stage 'demo': boom"):
        with _stage("demo"):
            raise ValueError("boom")
    # nested stages prefix once, at the innermost name
    with pytest.raises(ValueError) as exc_info:
        with _stage("outer"):
            with _stage("inner"):
                raise ValueError("x")
    assert str(exc_info.value) == "stage 'inner': x"


def test_failing_stage_is_named(study_runs):
    bundle, _, _, _, _, _ = study_runs
    bad = _pipe_config()
    bad.memory_section = dict(bad.memory_section, kernel="bogus")
    with pytest.raises(ConfigError, match=r"stage 'train-memory'"):
        run_pipeline(bundle.train, bundle.valid, bundle.test, bad)


def test_train_memory_model_rejects_empty_selection(study_runs):
    bundle, config, _, _, _, _ = study_runs
    with pytest.raises(ConfigError, match="empty"):
        train_memory_model(bundle.train, bundle.valid, config, [])


def test_pipeline_config_document_roundtrip():
    cfg = _pipe_config(seed=9)
    doc = cfg.to_dict()
    back = PipelineConfig.from_document(doc)
    assert back == cfg
    defaults = PipelineConfig.from_document({})
    assert defaults.seed == 0
    assert defaults.top_k == {"categorical-scalar": 2, "numerical-scalar": 1}
    assert defaults.weight_mode == "abs"


def test_build_memory_config_inherits_dnn_shape():
    cfg = _pipe_config()
    mem = cfg.build_memory_config(["a", "b"], num_features=6)
    assert mem.sensitive_features == ("a", "b")
    assert mem.num_features == 6
    assert mem.embedding_dim == cfg.dnn.embedding_dim
    assert mem.base_hidden == cfg.dnn.hidden_sizes
    assert mem.attn_dim_emb == 4
    flipped = cfg.build_memory_config(["a"], 6, flag_overrides={"use_emb_attn": False})
    assert flipped.use_emb_attn is False
    assert flipped.use_hidden_attn is True
    # stray selection keys in the section cannot collide
    cfg.memory_section["sensitive_features"] = ["zzz"]
    cfg.memory_section["num_features"] = 99
    clean = cfg.build_memory_config(["a"], 6)
    assert clean.sensitive_features == ("a",)
    assert clean.num_features == 6


def test_run_manifest_save(tmp_path):
    manifest = RunManifest(
        subcommand="rank",
        seed=3,
        config={"seed": 3},
        input_fingerprints={"dataset": "abc"},
        output_paths={"report": "x.json"},
        duration_s=0.25,
    )
    path = tmp_path / "manifest.json"
    manifest.save(str(path))
    doc = json.load(open(path))
    assert doc["subcommand"] == "rank"
    assert doc["input_fingerprints"] == {"dataset": "abc"}
    assert doc["version"]


def test_study_result_means_skip_undefined():
    def rep(variant, overall, domain):
        return EvalReport(
            overall_auc=overall,
            domain_auc=domain,
            domain_counts=[5, 5],
            model_fingerprint="fp",
            variant=variant,
        )

    result = StudyResult(
        variants={
            "A": [rep("A", 0.8, [0.7, None]), rep("A", 0.6, [0.5, None])],
            "B": [rep("B", 0.9, [0.9, 0.8]), rep("B", 0.7, [0.7, 0.6])],
        },
        seeds=[0, 1],
        num_domains=2,
    )
    assert result.mean_overall() == {"A": pytest.approx(0.7), "B": pytest.approx(0.8)}
    assert result.mean_domain("A") == [pytest.approx(0.6), None]
    assert result.mean_domain("B")[1] == pytest.approx(0.7)
    table = result.format_table()
    assert "n/a" in table
    assert "Overall" in table
