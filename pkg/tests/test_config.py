"""Config parsing tests."""

import pytest

from surftrack.config import (
    PipelineConfig,
    dump_config,
    load_config,
    parse_config,
)


def test_defaults_match_documented_values():
    cfg = PipelineConfig()
    assert cfg.samples_per_frame == 100
    assert cfg.neighborhood_offset == 20
    assert cfg.linear_tol == 0.1
    assert cfg.translation_tol == 4.0
    assert cfg.newton_iters == 10
    assert cfg.start_extent == 20.0
    assert cfg.start_step == 5.0
    assert cfg.wavelengths == (8.0, 16.0, 32.0)
    assert cfg.n_orientations == 6


def test_parse_overrides_and_comments():
    cfg = parse_config(
        "# run settings\n"
        "seed = 42\n"
        "\n"
        "samples_per_frame = 25\n"
        "wavelengths = 4, 8\n"
        "dataset_dir = out/desk\n"
    )
    assert cfg.seed == 42
    assert cfg.samples_per_frame == 25
    assert cfg.wavelengths == (4.0, 8.0)
    assert cfg.dataset_dir == "out/desk"
    assert cfg.newton_iters == 10


def test_parse_rejects_unknown_key_with_line_number():
    with pytest.raises(ValueError, match="<config>:2.*typo_key"):
        parse_config("seed = 1\ntypo_key = 3\n")


def test_parse_rejects_missing_equals():
    with pytest.raises(ValueError, match="key=value"):
        parse_config("seed 1\n")


@pytest.mark.parametrize("line", [
    "samples_per_frame = 0",
    "workers = -2",
    "linear_tol = 0",
    "translation_tol = -1",
    "wavelengths = 8 -16",
])
def test_validate_rejects_nonpositive(line):
    with pytest.raises(ValueError, match="positive"):
        parse_config(line)


def test_validate_rejects_unknown_norm():
    with pytest.raises(ValueError, match="norm"):
        parse_config("norm = manhattan")


def test_dump_round_trips(tmp_path):
    cfg = PipelineConfig(dataset_dir="data/x", seed=9, workers=3,
                         wavelengths=(6.0, 12.0), start_step=2.5)
    path = tmp_path / "run.cfg"
    path.write_text(dump_config(cfg))
    assert load_config(path) == cfg
