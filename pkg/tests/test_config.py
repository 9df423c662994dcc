"""Config grammar: round-trip, strict key validation, layer DSL, presets."""

import pytest

from projnet import ClipPolicy, ConfigError, ProjectionSpec, TrainConfig
from projnet.config import (CIFAR_LAYERS, DataConfig, ExperimentConfig,
                            PRESETS, config_hash, parse_config, parse_layers,
                            preset, serialize_config)
from projnet.harness import SweepSpec
from projnet.nn import output_shapes


def sample_config() -> ExperimentConfig:
    return ExperimentConfig(
        seed=42, out_dir="runs/demo",
        data=DataConfig(kind="synthetic", synthetic_kind="stripes", n_train=100,
                        n_test=50, classes=4, noise=0.35),
        input_shape=(1, 8, 8),
        layers=("conv 3x3 8 s2 p1", "bn", "relu", "flatten", "dense 4"),
        train=TrainConfig(optimizer="adam", learning_rate=0.003,
                          lr_schedule=((100, 0.1),), batch_size=25, epochs=6,
                          projection=ProjectionSpec("sign"),
                          clip=ClipPolicy(enabled=True, global_factor=0.5,
                                          schedule=((50, 1.4),)),
                          seed=42, eval_every=2),
        eval_specs=("none", "sign"),
        sweep=SweepSpec(kind="addnorm", grid=(0.0, 0.2, 0.4), trials=3, seed=42),
    )


class TestRoundTrip:
    def test_parse_serialize_identity(self):
        cfg = sample_config()
        assert parse_config(serialize_config(cfg)) == cfg

    def test_round_trip_all_presets(self):
        for name in PRESETS:
            cfg = preset(name)
            assert parse_config(serialize_config(cfg)) == cfg

    def test_hash_stable_and_sensitive(self):
        cfg = sample_config()
        assert config_hash(cfg) == config_hash(sample_config())
        other = parse_config(serialize_config(cfg).replace("seed = 42", "seed = 43", 1))
        assert config_hash(other) != config_hash(cfg)


class TestValidation:
    def test_unknown_top_level_key(self):
        with pytest.raises(ConfigError, match="unknown key"):
            parse_config("sede = 3\n")

    def test_unknown_section_key(self):
        text = serialize_config(sample_config()) + "\n[train]\nmomentum = 0.9\n"
        with pytest.raises(ConfigError):
            parse_config(text)

    def test_unknown_section(self):
        with pytest.raises(ConfigError, match="unknown key"):
            parse_config("[optimizer]\nkind = 'adam'\n")

    def test_syntax_error_carries_line_info(self):
        with pytest.raises(ConfigError, match="line"):
            parse_config("seed = = 3\n")

    def test_misspelled_projection_rejected(self):
        with pytest.raises(ValueError):
            parse_config('[train]\nprojection = "sing"\n')

    def test_sampled_beta_rejected_as_eval_spec(self):
        with pytest.raises(ConfigError, match="concrete beta"):
            parse_config('[eval]\nspecs = ["power beta=rand"]\n')


class TestLayerDsl:
    def test_inferred_widths_chain(self):
        specs = parse_layers(("conv 3x3 8 s2 p1", "bn", "relu",
                              "conv 3x3 16 s2 p1", "bn", "relu", "flatten",
                              "dense 4"), (1, 8, 8))
        shapes = output_shapes((1, 8, 8), specs)
        assert shapes[-1] == (4,)
        assert specs[0].in_channels == 1
        assert specs[3].in_channels == 8
        assert specs[-1].in_features == 16 * 2 * 2

    def test_bad_layer_strings(self):
        with pytest.raises(ConfigError):
            parse_layers(("conv 3x3",), (1, 8, 8))
        with pytest.raises(ConfigError):
            parse_layers(("dense 4",), (1, 8, 8))  # needs flatten first
        with pytest.raises(ConfigError):
            parse_layers(("pool 2x2",), (1, 8, 8))

    def test_cifar_preset_architecture_chains(self):
        specs = parse_layers(CIFAR_LAYERS, (3, 32, 32))
        assert output_shapes((3, 32, 32), specs)[-1] == (10,)


class TestPresets:
    def test_all_presets_build(self):
        for name in PRESETS:
            cfg = preset(name)
            assert cfg.train.epochs == 500
            assert cfg.train.batch_size == 50
            assert cfg.train.learning_rate == 0.003

    def test_clip_flags_match_names(self):
        assert preset("tr-none-nc").train.clip.enabled is False
        assert preset("tr-sign-c").train.clip.enabled is True
        assert preset("tr-stochm-c").train.projection.gamma == 0.5
        assert preset("tr-power-c").train.projection.beta_sampling is True

    def test_unknown_preset(self):
        with pytest.raises(ConfigError):
            preset("tr-magic-c")

    def test_build_network_and_data_from_config(self):
        cfg = sample_config()
        net = cfg.build_network()
        assert net.input_shape == (1, 8, 8)
        data = cfg.build_data()
        assert data.train.n == 100
        assert data.test.n == 50
