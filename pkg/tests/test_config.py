"""Tests for configuration dataclasses, overrides, and JSON round-trips."""

import pytest

from linadapt.config import (
    ARCH_PRESETS,
    AdaptConfig,
    TrainConfig,
    adapt_config_from_json,
    apply_overrides,
    config_to_json,
    train_config_from_json,
)


class TestTrainConfig:
    def test_defaults_fill_paper_preset(self):
        c = TrainConfig()
        assert c.trunk_widths == [300, 300, 300]
        assert c.adapter_widths == [600, 600, 600]

    def test_desk_preset(self):
        c = TrainConfig(arch="desk")
        assert c.trunk_widths == ARCH_PRESETS["desk"]["trunk_widths"]

    def test_explicit_widths_beat_preset(self):
        c = TrainConfig(arch="paper", trunk_widths=[16])
        assert c.trunk_widths == [16]
        assert c.adapter_widths == [600, 600, 600]

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"gamma": 0.0},
            {"gamma": 1.0},
            {"n_train_tasks": 0},
            {"iterations": -1},
            {"batch_size": 0},
            {"adapter_k": 0},
            {"arch": "mainframe"},
            {"updates_per_iteration": -1},
        ],
    )
    def test_invalid_values_rejected(self, kwargs):
        with pytest.raises(ValueError):
            TrainConfig(**kwargs)

    def test_zero_updates_allowed(self):
        assert TrainConfig(updates_per_iteration=0).updates_per_iteration == 0


class TestAdaptConfig:
    def test_defaults(self):
        c = AdaptConfig()
        assert c.adaptation_steps == 30
        assert c.mode == "adapter"

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"adaptation_steps": -1},
            {"adaptation_steps": 500, "horizon": 200},
            {"mode": "telepathy"},
            {"init_head": "best"},
        ],
    )
    def test_invalid_values_rejected(self, kwargs):
        with pytest.raises(ValueError):
            AdaptConfig(**kwargs)

    def test_zero_step_adaptation_allowed(self):
        assert AdaptConfig(adaptation_steps=0).adaptation_steps == 0


class TestOverrides:
    def test_scalar_coercion(self):
        c = apply_overrides(TrainConfig(), ["seed=7", "gamma=0.95", "family=direction"])
        assert c.seed == 7 and c.gamma == 0.95 and c.family == "direction"

    def test_bool_coercion(self):
        c = apply_overrides(TrainConfig(), ["train_adapter=false"])
        assert c.train_adapter is False
        c = apply_overrides(c, ["train_adapter=True"])
        assert c.train_adapter is True

    def test_list_coercion(self):
        c = apply_overrides(TrainConfig(), ["trunk_widths=[8,8]"])
        assert c.trunk_widths == [8, 8]

    def test_original_unchanged(self):
        base = TrainConfig()
        apply_overrides(base, ["seed=99"])
        assert base.seed == 0

    def test_unknown_key_rejected(self):
        with pytest.raises(ValueError):
            apply_overrides(TrainConfig(), ["sede=1"])

    def test_malformed_rejected(self):
        with pytest.raises(ValueError):
            apply_overrides(TrainConfig(), ["seed"])

    def test_override_still_validated(self):
        with pytest.raises(ValueError):
            apply_overrides(TrainConfig(), ["gamma=2.0"])


class TestJson:
    def test_train_roundtrip(self):
        c = TrainConfig(arch="desk", seed=3, head_hidden=[50])
        back = train_config_from_json(config_to_json(c))
        assert back == c

    def test_adapt_roundtrip(self):
        c = AdaptConfig(adaptation_steps=60, mode="gradient_baseline")
        back = adapt_config_from_json(config_to_json(c))
        assert back == c

    def test_json_validates(self):
        text = config_to_json(TrainConfig()).replace('"gamma": 0.99', '"gamma": 7.0')
        with pytest.raises(ValueError):
            train_config_from_json(text)
