"""Config defaults, the key = value parser, presets, and validation."""

import pytest

from fuserec.config import (
    ExperimentConfig,
    PRESETS,
    PRESET_ORDER,
    config_to_text,
    copy_config,
    load_config,
    make_preset,
    parse_config_text,
)
from fuserec.errors import ConfigError


EXPECTED_LABELS = {
    "gnn_only": "GNN Only",
    "text_only": "LLM Only",
    "hybrid": "Hybrid (Unoptimized)",
    "hybrid_quant": "Hybrid + Quantization",
    "hybrid_distill": "Hybrid + Distillation",
    "hybrid_lora": "Hybrid + LoRA",
    "hybrid_cache": "Hybrid + DeepSpeed",
    "hybrid_cache_quant": "Hybrid + FPGA + DeepSpeed",
}


def test_preset_labels_exact():
    assert set(PRESETS) == set(EXPECTED_LABELS)
    for name, label in EXPECTED_LABELS.items():
        assert make_preset(name).label == label
    assert PRESET_ORDER == list(EXPECTED_LABELS)


def test_preset_flags_and_variants():
    assert make_preset("gnn_only").variant == "gnn_only"
    assert make_preset("text_only").variant == "text_only"
    q = make_preset("hybrid_quant")
    assert q.variant == "hybrid" and q.flags.quantize and not q.flags.cache
    cq = make_preset("hybrid_cache_quant")
    assert cq.flags.cache and cq.flags.quantize and not cq.flags.distill
    lora = make_preset("hybrid_lora")
    assert lora.flags.lora and not lora.flags.quantize


def test_unknown_preset():
    with pytest.raises(ConfigError, match="unknown preset"):
        make_preset("hybrid_turbo")


def test_preset_inherits_base_knobs():
    base = ExperimentConfig(seed=7)
    base.training.epochs = 3
    cfg = make_preset("hybrid_quant", base)
    assert cfg.seed == 7 and cfg.training.epochs == 3
    # flags always reset to the preset's own switches
    base.flags.distill = True
    assert not make_preset("hybrid_quant", base).flags.distill


def test_defaults():
    cfg = ExperimentConfig()
    assert cfg.variant == "hybrid"
    assert (cfg.dims.d_g, cfg.dims.d_s, cfg.dims.d_h, cfg.dims.L) == (32, 32, 64, 2)
    assert (cfg.dims.lora_rank, cfg.dims.lora_alpha) == (4, 8.0)
    assert cfg.training.epochs == 5
    assert cfg.training.lr == pytest.approx(1e-3)
    assert cfg.training.negatives_per_positive == 4
    assert cfg.training.batch_size == 8192
    assert (cfg.training.distill_temperature, cfg.training.distill_lambda) == (2.0, 0.5)
    assert (cfg.eval.k, cfg.eval.candidates_per_user) == (10, 100)
    assert (cfg.eval.n_latency_requests, cfg.eval.warmup) == (1000, 50)
    cfg.validate()


class TestParser:
    def test_basic_keys(self):
        cfg = parse_config_text(
            """
            # comment line
            variant = gnn_only
            seed = 11
            dims.d_g = 16   # trailing comment
            training.lr = 0.01
            flags.quantize = true
            eval.k = 5
            """
        )
        assert cfg.variant == "gnn_only"
        assert cfg.seed == 11
        assert cfg.dims.d_g == 16
        assert cfg.training.lr == pytest.approx(0.01)
        assert cfg.flags.quantize is True
        assert cfg.eval.k == 5

    def test_bool_spellings(self):
        for raw, want in (("true", True), ("TRUE", True), ("1", True), ("false", False), ("0", False)):
            cfg = parse_config_text(f"flags.cache = {raw}")
            assert cfg.flags.cache is want

    def test_unknown_key_reports_line(self):
        with pytest.raises(ConfigError, match="line 2"):
            parse_config_text("seed = 1\ndims.bogus = 3\n")

    def test_bad_value_reports_line_and_key(self):
        with pytest.raises(ConfigError, match="line 1.*dims.d_g"):
            parse_config_text("dims.d_g = wide\n")

    def test_missing_equals(self):
        with pytest.raises(ConfigError, match="key = value"):
            parse_config_text("just some words\n")

    def test_bad_bool(self):
        with pytest.raises(ConfigError, match="true/false"):
            parse_config_text("flags.lora = yes\n")

    def test_parse_respects_base(self):
        base = make_preset("hybrid_lora")
        cfg = parse_config_text("training.epochs = 9\n", base)
        assert cfg.flags.lora and cfg.training.epochs == 9
        assert base.training.epochs == 5  # base untouched

    def test_roundtrip_through_text(self):
        cfg = make_preset("hybrid_cache_quant")
        cfg.seed = 13
        cfg.training.lr = 0.005
        cfg.dims.lora_alpha = 16.0
        again = parse_config_text(config_to_text(cfg))
        assert again == cfg

    def test_load_config_file(self, tmp_path):
        p = tmp_path / "exp.cfg"
        p.write_text("variant = text_only\nseed = 3\n")
        cfg = load_config(p)
        assert cfg.variant == "text_only" and cfg.seed == 3


def test_shipped_benchmark_protocol_parses():
    import pathlib

    cfg = load_config(pathlib.Path(__file__).resolve().parents[1] / "configs" / "planted.cfg")
    assert cfg.training.epochs > ExperimentConfig().training.epochs
    assert cfg.training.lr > ExperimentConfig().training.lr
    cfg.validate()


class TestValidation:
    def test_bad_variant(self):
        cfg = ExperimentConfig(variant="both")
        with pytest.raises(ConfigError, match="variant"):
            cfg.validate()

    @pytest.mark.parametrize(
        "key,value",
        [
            ("dims.L", "0"),
            ("dims.d_h", "0"),
            ("training.epochs", "-1"),
            ("training.lr", "0"),
            ("training.negatives_per_positive", "0"),
            ("training.batch_size", "0"),
            ("training.distill_temperature", "0"),
            ("training.distill_lambda", "1.5"),
            ("eval.k", "0"),
            ("eval.candidates_per_user", "0"),
        ],
    )
    def test_out_of_range_rejected(self, key, value):
        with pytest.raises(ConfigError):
            parse_config_text(f"{key} = {value}\n")


def test_copy_config_is_deep():
    cfg = make_preset("hybrid")
    dup = copy_config(cfg)
    dup.training.epochs = 99
    dup.flags.quantize = True
    assert cfg.training.epochs == 5 and not cfg.flags.quantize
