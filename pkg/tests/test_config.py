"""Run-configuration loading: schema, overrides, rejection messages."""

import pytest

from ecgtriage.config import config_to_dict, load_config
from ecgtriage.errors import ConfigError
from ecgtriage.experiment import VARIANTS
from ecgtriage.quality import HOUR_GATE


def write(tmp_path, text):
    p = tmp_path / "cfg.yaml"
    p.write_text(text)
    return p


class TestDefaults:
    def test_none_path_gives_defaults(self):
        cfg = load_config(None)
        assert cfg.seed == 0
        assert cfg.gate == HOUR_GATE
        assert cfg.max_hours == 48
        assert cfg.experiment.n_splits == 10
        assert cfg.experiment.variants == VARIANTS
        assert cfg.ml.n_trees == 300
        assert cfg.detector.sqi_gate == 0.8

    def test_empty_file_gives_defaults(self, tmp_path):
        cfg = load_config(write(tmp_path, ""))
        assert cfg == load_config(None)

    def test_seed_argument_overrides_default(self):
        assert load_config(None, seed=41).seed == 41


class TestOverrides:
    def test_nested_override(self, tmp_path):
        cfg = load_config(write(tmp_path, """
seed: 3
cohort:
  n_patients: 8
  seizure:
    episode_hr_rise: 0.5
detector:
  sqi_gate: 0.7
ml:
  n_trees: 40
"""))
        assert cfg.seed == 3
        assert cfg.cohort.n_patients == 8
        assert cfg.cohort.seizure.episode_hr_rise == 0.5
        assert cfg.cohort.non_seizure.episode_hr_rise == 0.30
        assert cfg.detector.sqi_gate == 0.7
        assert cfg.ml.n_trees == 40
        # untouched sections keep their defaults
        assert cfg.experiment.n_splits == 10

    def test_seed_argument_beats_file(self, tmp_path):
        cfg = load_config(write(tmp_path, "seed: 3"), seed=9)
        assert cfg.seed == 9

    def test_lists_become_tuples(self, tmp_path):
        cfg = load_config(write(tmp_path, """
experiment:
  variants: ["Age", "META+HRV+MOR"]
  curve_fractions: [0.25, 0.5, 1.0]
"""))
        assert cfg.experiment.variants == ("Age", "META+HRV+MOR")
        assert cfg.experiment.curve_fractions == (0.25, 0.5, 1.0)

    def test_int_widens_to_float_field(self, tmp_path):
        cfg = load_config(write(tmp_path, "gate: 1\ncohort: {duration_s: 900}"))
        assert cfg.gate == 1.0
        assert cfg.cohort.duration_s == 900.0


class TestRejection:
    def test_unknown_top_level_key(self, tmp_path):
        with pytest.raises(ConfigError, match="unknown key gat "):
            load_config(write(tmp_path, "gat: 0.5"))

    def test_unknown_nested_key_names_path(self, tmp_path):
        with pytest.raises(ConfigError,
                           match="unknown key cohort.seizure.hr_mean"):
            load_config(write(tmp_path, "cohort: {seizure: {hr_mean: 1}}"))

    def test_ml_seed_is_reserved(self, tmp_path):
        with pytest.raises(ConfigError, match="master seed"):
            load_config(write(tmp_path, "ml: {seed: 4}"))

    def test_section_must_be_mapping(self, tmp_path):
        with pytest.raises(ConfigError, match="must be a mapping"):
            load_config(write(tmp_path, "detector: fast"))

    def test_root_must_be_mapping(self, tmp_path):
        with pytest.raises(ConfigError, match="must be a mapping"):
            load_config(write(tmp_path, "- 1\n- 2"))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            load_config(tmp_path / "absent.yaml")

    def test_invalid_yaml(self, tmp_path):
        with pytest.raises(ConfigError, match="invalid YAML"):
            load_config(write(tmp_path, "a: [unclosed"))

    def test_wrong_scalar_type(self, tmp_path):
        with pytest.raises(ConfigError, match="experiment.n_splits"):
            load_config(write(tmp_path, "experiment: {n_splits: ten}"))

    @pytest.mark.parametrize("text,frag", [
        ("gate: 1.5", "gate"),
        ("max_hours: 0", "max_hours"),
        ("experiment: {test_frac: 1.0}", "test_frac"),
        ("experiment: {variants: [Height]}", "unknown variant"),
        ("experiment: {workers: 0}", "workers"),
        ("experiment: {curve_fractions: [0.0]}", "curve_fractions"),
    ])
    def test_out_of_range_values(self, tmp_path, text, frag):
        with pytest.raises(ConfigError, match=frag):
            load_config(write(tmp_path, text))


class TestEcho:
    def test_config_to_dict_round_trips_values(self, tmp_path):
        import json

        cfg = load_config(write(tmp_path, """
seed: 11
experiment:
  curve_fractions: [0.5, 1.0]
"""))
        blob = config_to_dict(cfg)
        assert blob["seed"] == 11
        assert blob["experiment"]["curve_fractions"] == [0.5, 1.0]
        assert blob["cohort"]["seizure"]["episode_duration_s"] == 30.0
        json.dumps(blob)  # manifest embedding requires JSON-serializable
