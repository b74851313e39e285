import numpy as np
import pytest

from splidar import config as cfg
from splidar.formats import write_pgm
from splidar.model import sbr

SCENE = """# preset
t_r = 10
n_r = 1000
eta = 1
alpha = 0.5
tau = 4   # delay
sigma_t = 0.2
photon_level = 10
sbr = 1
"""


def test_parse_and_build_scene(tmp_path):
    path = tmp_path / "s.cfg"
    path.write_text(SCENE, encoding="utf-8")
    s = cfg.load_scene(path)
    assert s.tau == 4.0 and s.b_lambda == pytest.approx(0.0005)
    assert sbr(s) == pytest.approx(1.0)


def test_background_instead_of_sbr():
    values = cfg.parse_text(SCENE.replace("sbr = 1", "b_lambda = 0.0005"))
    s = cfg.scene_from_values(values)
    assert s.S == pytest.approx(0.01)


def test_pulse_convention_flag():
    s = cfg.scene_from_values(cfg.parse_text(SCENE + "sbr_convention = pulse\n"))
    assert sbr(s, "pulse") == pytest.approx(1.0)
    with pytest.raises(cfg.ConfigError):
        cfg.scene_from_values(cfg.parse_text(SCENE + "sbr_convention = other\n"))


@pytest.mark.parametrize("text,fragment", [
    (SCENE.replace("t_r = 10\n", ""), "t_r"),
    (SCENE + "colour = red\n", "colour"),
    (SCENE + "b_lambda = 1\n", "exactly one"),
    (SCENE.replace("sbr = 1", ""), "exactly one"),
    (SCENE.replace("n_r = 1000", "n_r = many"), "n_r"),
    (SCENE + "tau = 5\n", "duplicate"),
    (SCENE + "just words\n", "expected"),
    (SCENE.replace("sbr = 1", "sbr = -1"), "sbr"),
])
def test_scene_errors(text, fragment):
    with pytest.raises(cfg.ConfigError, match=fragment):
        cfg.scene_from_values(cfg.parse_text(text))


def test_dump_round_trip():
    values = {"sbr": [0.5, 1.0], "pair": "depth", "trials": 10, "include_noiseless": True}
    parsed = cfg.parse_text(cfg.dump(values))
    assert cfg.as_float_list(parsed, "sbr") == [0.5, 1.0]
    assert cfg.as_bool(parsed, "include_noiseless", False) is True


def test_sweep_loader_and_overrides(tmp_path):
    path = tmp_path / "sweep.cfg"
    path.write_text("sbr = 0.5, 2\ntrials = 20\nseed = 4\n")
    spec = cfg.load_sweep(path)
    assert spec.sbrs == (0.5, 2.0) and spec.trials == 20 and spec.seed == 4
    assert spec.n_r == 1000 and spec.pair == "reflectivity"
    spec = cfg.load_sweep(path, seed=9, pair="depth", trials=None)
    assert spec.seed == 9 and spec.pair == "depth" and spec.trials == 20
    path.write_text("sbr = \n")
    with pytest.raises(cfg.ConfigError):
        cfg.load_sweep(path)
    path.write_text("sbr = 1\npair = both\n")
    with pytest.raises(cfg.ConfigError):
        cfg.load_sweep(path)


def test_grid_loader(tmp_path):
    path = tmp_path / "grid.cfg"
    path.write_text(SCENE.replace("sbr = 1", "sbr = 0.5, 1, 2") + "include_noiseless = no\n")
    grid = cfg.load_grid(path)
    assert grid.sbrs == (0.5, 1.0, 2.0) and grid.include_noiseless is False
    path.write_text(SCENE.replace("sbr = 1", "sbr = 0.5, x"))
    with pytest.raises(cfg.ConfigError):
        cfg.load_grid(path)


def test_radiometric_loader(tmp_path):
    write_pgm(tmp_path / "refl.pgm", np.array([[0, 255], [128, 64]]), 255)
    write_pgm(tmp_path / "depth.pgm", np.array([[0, 255], [255, 0]]), 255)
    (tmp_path / "r.cfg").write_text("reflectance_pgm = refl.pgm\ndepth_pgm = depth.pgm\n"
                                    "z_min = 20\nz_max = 40\nsigma_j = 1e-10\n")
    grid, sigma_j, _ = cfg.load_radiometric(tmp_path / "r.cfg")
    assert sigma_j == 1e-10
    assert grid.alpha[0, 0] == 0 and grid.alpha[0, 1] > grid.alpha[1, 0] > 0
    assert grid.tau[0, 1] == pytest.approx(2 * 40 / 2.99792458e8)
    assert grid.acq.n_r == 2250
    (tmp_path / "r.cfg").write_text("reflectance_pgm = refl.pgm\ndepth_pgm = depth.pgm\n")
    with pytest.raises(cfg.ConfigError, match="z_min"):
        cfg.load_radiometric(tmp_path / "r.cfg")


def test_non_utf8_rejected(tmp_path):
    (tmp_path / "x.cfg").write_bytes(b"t_r = \xff\n")
    with pytest.raises(cfg.ConfigError):
        cfg.read(tmp_path / "x.cfg")
