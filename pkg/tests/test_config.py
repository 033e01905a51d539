import pytest

from soapnas.config import (
    RunConfig,
    config_from_text,
    config_to_text,
    desk_config,
    load_config,
    tiny_config,
)
from soapnas.errors import BadConfig


def test_desk_preset_matches_reference_values():
    cfg = desk_config()
    assert (cfg.data_n_maps, cfg.data_height, cfg.data_width) == (300, 32, 32)
    assert cfg.k == 5
    assert cfg.sets_n_per_set == 60
    assert cfg.sets_overlap == 0.5
    assert cfg.factor_x == 7
    assert (cfg.noise_n_archs, cfg.noise_n_retrains, cfg.noise_epochs) == (12, 4, 6)
    assert cfg.supernet_epochs == 8
    assert (cfg.supernet_batch_size, cfg.supernet_ghost_size) == (16, 8)
    assert (cfg.search_n_scored, cfg.search_n_finalists) == (500, 5)
    assert (
        cfg.predictor_n_trees,
        cfg.predictor_max_depth,
        cfg.predictor_shrinkage,
        cfg.predictor_min_samples_leaf,
    ) == (200, 4, 0.1, 2)


def test_config_text_round_trip():
    cfg = tiny_config(seed=7)
    text = config_to_text(cfg)
    back = config_from_text(text)
    assert back == cfg


def test_config_unknown_key_is_error():
    with pytest.raises(BadConfig) as err:
        config_from_text("nonsense_key = 3\n")
    assert "nonsense_key" in str(err.value)


def test_config_bad_value_and_bad_line():
    with pytest.raises(BadConfig):
        config_from_text("seed = banana\n")
    with pytest.raises(BadConfig):
        config_from_text("seed 42\n")


def test_config_comments_and_overrides():
    cfg = config_from_text("# comment\n\nseed = 9\nk = 2\n")
    assert cfg.seed == 9
    assert cfg.k == 2
    # untouched keys keep their defaults
    assert cfg.factor_x == RunConfig().factor_x


def test_config_validation_errors():
    with pytest.raises(BadConfig):
        config_from_text("k = 0\n")
    with pytest.raises(BadConfig):
        config_from_text("factor_x = 0\n")
    with pytest.raises(BadConfig):
        config_from_text("data_val_frac = 0.6\ndata_test_frac = 0.5\n")


def test_load_config_missing_file():
    with pytest.raises(BadConfig) as err:
        load_config("/nonexistent/path.cfg")
    assert "/nonexistent/path.cfg" in str(err.value)


def test_bool_parsing():
    assert config_from_text("include_singletons = true\n").include_singletons is True
    assert config_from_text("include_singletons = off\n").include_singletons is False
    with pytest.raises(BadConfig):
        config_from_text("include_singletons = maybe\n")
