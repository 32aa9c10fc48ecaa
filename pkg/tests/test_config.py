import json

import pytest

from soc1d.bandstructure import InterfaceBandParams
from soc1d.config import ConfigError, load_config, parse_config
from soc1d.hfb import BandPair
from soc1d.waveguide import SubbandIndex

import oracles


def test_defaults():
    cfg = parse_config({})
    assert cfg.interface == InterfaceBandParams()
    assert cfg.waveguide.mu_offset == pytest.approx(oracles.HBAR_OMEGA_Z)
    assert cfg.u0 == -2.0
    assert cfg.band_pair == BandPair()
    assert cfg.sweep.params == cfg.waveguide
    assert cfg.sweep.scf.kgrid == cfg.kgrid
    assert load_config(None) == cfg


def test_overrides_propagate():
    cfg = parse_config({
        "waveguide": {"alpha_v": 0.5, "b_field": 1},
        "u0": -3,
        "mu_offset": 0.0,
        "kgrid": {"n_points": 4001, "k_max": 1.0},
        "band_pair": {"alpha": {"m": 1, "sigma": "down"}, "beta": {"n": 1, "sigma": "up"}},
        "sweep": {"b_range": [0, 2, 3], "warm_start": True},
    })
    assert cfg.waveguide.alpha_v == 0.5 and cfg.waveguide.b_field == 1.0
    assert cfg.waveguide.mu_offset == 0.0
    assert cfg.scf.kgrid.n_points == 4001
    assert cfg.band_pair.alpha == SubbandIndex(1, 0, "down")
    assert cfg.sweep.u0 == -3.0 and cfg.sweep.warm_start
    assert cfg.sweep.b_range == (0.0, 2.0, 3)


@pytest.mark.parametrize(
    "doc, key",
    [
        ({"bogus": 1}, "bogus"),
        ({"scf": {"mixng": 0.3}}, "scf.mixng"),
        ({"waveguide": {"l_y": -1}}, "waveguide"),
        ({"interface": {"delta_e_y": 300}}, "interface"),
        ({"kgrid": {"n_points": 100}}, "kgrid"),
        ({"sweep": {"b_range": [0, 1, 0]}}, "sweep.b_range"),
        ({"sweep": {"mode": "quantum"}}, "sweep.mode"),
        ({"band_pair": {"alpha": {"sigma": "up"}}}, "band_pair"),
        ({"bands": {"kx_min": 1.0, "kx_max": 0.0}}, "bands"),
        ({"scf": {"tol": "small"}}, "scf.tol"),
        ({"waveguide": {"mu_offset": 1.0}}, "waveguide.mu_offset"),
    ],
)
def test_rejections_name_the_key(doc, key):
    with pytest.raises(ConfigError, match=key.replace(".", r"\.")):
        parse_config(doc)


def test_load_from_file(tmp_path):
    f = tmp_path / "c.json"
    f.write_text(json.dumps({"u0": -4}))
    assert load_config(f).u0 == -4.0
    f.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(f)
    with pytest.raises(OSError):
        load_config(tmp_path / "missing.json")
