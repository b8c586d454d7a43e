import pytest

from src.config import get_config, list_presets, load_preset, reset_config
from src.errors import UnknownDataset


def test_defaults():
    config = get_config()
    assert config.threads == 1
    assert config.epochs == 20000
    assert config.presets_dir.endswith("presets")


def test_singleton():
    assert get_config() is get_config()


def test_environment_overrides(monkeypatch, tmp_path):
    monkeypatch.setenv("CONSPARSE_THREADS", "4")
    monkeypatch.setenv("CONSPARSE_EPOCHS", "500")
    reset_config()
    config = get_config()
    assert (config.threads, config.epochs) == (4, 500)
    assert config.output_dir == str(tmp_path / "runs")


def test_thread_floor(monkeypatch):
    monkeypatch.setenv("CONSPARSE_THREADS", "0")
    reset_config()
    assert get_config().threads == 1


def test_bundled_presets():
    names = list_presets()
    for name in ("treloar-20C", "gent-gent", "drucker", "U71Mn", "SS316L", "40Cr3MoV", "midbrain-1"):
        assert name in names


@pytest.mark.parametrize("name,E,nu,sigma_y", [("U71Mn", 220000.0, 0.3, 484.5), ("SS316L", 190000.0, 0.35, 200.0),
                                               ("40Cr3MoV", 207000.0, 0.3, 1000.0)])
def test_steel_presets(name, E, nu, sigma_y):
    preset = load_preset(name)
    assert preset["problem"] == "hardening"
    assert preset["params"] == {"E": E, "nu": nu, "sigma_y": sigma_y}
    assert preset["name"] == name


def test_treloar_preset_modes():
    params = load_preset("treloar-20C")["params"]
    assert (params["train_modes"], params["test_modes"]) == (["UT", "ET"], ["PS"])


def test_unknown_preset():
    with pytest.raises(UnknownDataset):
        load_preset("no-such-material")


def test_non_mapping_preset(monkeypatch, tmp_path):
    (tmp_path / "broken.yaml").write_text("- a\n- b\n", encoding="utf-8")
    monkeypatch.setenv("CONSPARSE_PRESETS_DIR", str(tmp_path))
    reset_config()
    assert list_presets() == ["broken"]
    with pytest.raises(ValueError):
        load_preset("broken")
