import pytest

from ffa.config import (
    ExperimentConfig,
    apply_overrides,
    parse_config_text,
    serialize_config,
)
from ffa.core import SigmoidProb, SymmetricProb
from ffa.errors import ConfigError

SAMPLE = """
[experiment]
model = hebbian
prob = sigmoid
trace = li
eta = 0.05
epochs = 3
seed = 9

[lif]
decay = 0.8

[grid]
eta = 0.1, 0.2
"""


class TestParsing:
    def test_defaults_when_empty(self):
        cfg = parse_config_text("")
        assert cfg.model == "analog"
        assert cfg.epochs == 10
        assert cfg.grid_eta == (0.001, 0.01, 0.1, 1.0, 10.0)

    def test_values_applied(self):
        cfg = parse_config_text(SAMPLE)
        assert cfg.model == "hebbian"
        assert cfg.trace == "li"
        assert cfg.eta == 0.05
        assert cfg.lif_decay == 0.8
        assert cfg.grid_eta == (0.1, 0.2)
        # untouched fields keep defaults
        assert cfg.batch_size == 50

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown key experiment.learning_rate"):
            parse_config_text("[experiment]\nlearning_rate = 3\n")

    def test_unknown_section_rejected(self):
        with pytest.raises(ConfigError, match=r"unknown section \[optimizer\]"):
            parse_config_text("[optimizer]\nbeta = 1\n")

    def test_bad_value_reported_with_location(self):
        with pytest.raises(ConfigError, match="experiment.epochs"):
            parse_config_text("[experiment]\nepochs = soon\n")

    def test_syntax_error(self):
        with pytest.raises(ConfigError, match="syntax"):
            parse_config_text("not an ini file at all [")


class TestValidation:
    def test_all_problems_in_one_message(self):
        cfg = ExperimentConfig(model="quantum", prob="fuzzy", eta=-1.0, batch_size=0)
        with pytest.raises(ConfigError) as err:
            cfg.validate()
        text = str(err.value)
        for fragment in ("model", "prob", "eta", "batch_size"):
            assert fragment in text

    def test_valid_default_config(self):
        ExperimentConfig().validate()

    def test_online_model_normalizes_batch_size(self):
        cfg = ExperimentConfig(model="hebbian_online", batch_size=50)
        assert cfg.normalized().batch_size == 1
        # non-online models keep theirs
        assert ExperimentConfig(model="hebbian", batch_size=50).normalized().batch_size == 50


class TestRoundTrip:
    def test_serialize_parse_identity(self):
        cfg = parse_config_text(SAMPLE)
        text = serialize_config(cfg)
        again = parse_config_text(text)
        assert again == cfg
        assert serialize_config(again) == text  # idempotent

    def test_default_config_round_trips(self):
        cfg = ExperimentConfig()
        assert parse_config_text(serialize_config(cfg)) == cfg


class TestOverrides:
    def test_flags_win(self):
        cfg = parse_config_text(SAMPLE)
        cfg = apply_overrides(cfg, {"experiment.eta": "0.2", "paths.data_dir": "/tmp/x"})
        assert cfg.eta == 0.2
        assert cfg.data_dir == "/tmp/x"

    def test_bad_override_key(self):
        with pytest.raises(ConfigError, match="unknown key"):
            apply_overrides(ExperimentConfig(), {"experiment.nope": "1"})

    def test_malformed_override(self):
        with pytest.raises(ConfigError, match="section.key"):
            apply_overrides(ExperimentConfig(), {"eta": "1"})


class TestBuilders:
    def test_prob_fn_sigmoid(self):
        cfg = ExperimentConfig(prob="sigmoid", alpha=2.0, theta=1.5)
        assert cfg.prob_fn() == SigmoidProb(alpha=2.0, theta=1.5)

    def test_prob_fn_symmetric(self):
        cfg = ExperimentConfig(prob="symmetric", epsilon=0.25, symmetric_denominator="total")
        assert cfg.prob_fn() == SymmetricProb(epsilon=0.25, denominator="total")

    def test_train_config_carries_seed(self):
        cfg = ExperimentConfig(seed=77, eta=0.5, batch_size=3, epochs=2)
        tc = cfg.train_config()
        assert (tc.seed, tc.eta, tc.batch_size, tc.epochs) == (77, 0.5, 3, 2)

    def test_spiking_config_assembled(self):
        cfg = ExperimentConfig(trace="hard_li", tau_e=0.9, n_hidden=33,
                               lif_decay=0.7, encoder_steps=10, active_window=4)
        sp = cfg.spiking_config()
        assert sp.trace.kind == "hard_li"
        assert sp.tau_e == 0.9
        assert sp.n_out == 33
        assert sp.lif.decay == 0.7
        assert sp.encoder.steps == 10

    def test_mode(self):
        assert ExperimentConfig(model="analog").mode() == "batch"
        assert ExperimentConfig(model="hebbian_online").mode() == "online"
