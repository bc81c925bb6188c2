"""Flat key = value config files: parsing, errors, overrides, round trip."""

import pytest

from miobserver.config import (
    apply_overrides,
    build_configs,
    format_config,
    load_config,
    parse_config,
)
from miobserver.errors import ConfigError, ParseError
from miobserver.model import ModelConfig, preset
from miobserver.train import TrainConfig


def test_parse_minimal():
    text = """
# comment line
preset = C_C
lr = 0.001          # trailing comment
window = 6
head_inputs = H_n, v_n
alpha = 0.25, 1.0, 1.0
"""
    name, mkv, tkv = parse_config(text)
    assert name == "C_C"
    assert mkv["window"] == 6
    assert mkv["head_inputs"] == ("H_n", "v_n")
    assert mkv["alpha"] == (0.25, 1.0, 1.0)
    assert tkv["lr"] == pytest.approx(0.001)


def test_build_from_preset_with_overrides():
    mcfg, tcfg = build_configs("C_T", {"window": 4, "gamma": 2.0}, {"lr": 0.01})
    base = preset("C_T")
    assert mcfg.window == 4 and mcfg.gamma == 2.0
    assert mcfg.word_attention == base.word_attention
    assert tcfg.lr == 0.01
    assert tcfg.batch_size == TrainConfig().batch_size


def test_build_without_preset_uses_defaults():
    mcfg, tcfg = build_configs(None, {"task": "forecast", "role": "client"}, {})
    assert mcfg == ModelConfig(task="forecast", role="client")
    assert tcfg == TrainConfig()


def test_parse_errors_carry_line_numbers():
    for text, line in [
        ("preset = C_C\nwindow = ", 2),
        ("window == 3", 1),
        ("unknownkey = 5", 1),
        ("lr = fast", 1),
        ("window = 2.5", 1),
        ("lr = 0.1\nlr = 0.2", 2),
        ("preset = C_C\npreset = C_T", 2),
        ("alpha = 0.5, soup", 1),
    ]:
        with pytest.raises(ParseError) as err:
            parse_config(text)
        assert err.value.line == line, text


def test_bad_preset_name_rejected():
    with pytest.raises(ConfigError):
        build_configs("B_Z", {}, {})


def test_semantic_errors_surface_from_dataclass():
    with pytest.raises(ConfigError):
        build_configs(None, {"skeleton": "rnn"}, {})
    with pytest.raises(ConfigError):
        build_configs("C_C", {}, {"batch_size": -1})


def test_apply_overrides():
    mcfg, tcfg = build_configs("F_C", {}, {})
    mcfg2, tcfg2 = apply_overrides(mcfg, tcfg,
                                   ["window=3", "lr=0.005", "hops=1"])
    assert (mcfg2.window, mcfg2.hops) == (3, 1)
    assert tcfg2.lr == 0.005
    # originals untouched
    assert mcfg.window == 8 and tcfg.lr != 0.005
    with pytest.raises(ParseError):
        apply_overrides(mcfg, tcfg, ["window"])
    with pytest.raises(ParseError):
        apply_overrides(mcfg, tcfg, ["sizzle=4"])


def test_format_round_trip():
    mcfg, tcfg = build_configs("C_T", {"window": 5}, {"lr": 0.002, "seed": 9})
    text = format_config(mcfg, tcfg)
    name, mkv, tkv = parse_config(text)
    assert name is None
    m2, t2 = build_configs(name, mkv, tkv)
    assert m2 == mcfg
    assert t2 == tcfg


def test_load_config(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("preset = F_T\nmax_epochs = 2\n")
    mcfg, tcfg = load_config(p)
    assert mcfg.task == "forecast" and mcfg.role == "therapist"
    assert tcfg.max_epochs == 2
    missing = tmp_path / "nope.cfg"
    with pytest.raises(ParseError):
        load_config(missing)
