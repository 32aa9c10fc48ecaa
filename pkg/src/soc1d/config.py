"""Strict JSON run configuration.

Every section is optional; omitted keys take the default of the underlying
dataclass. Unknown keys and out-of-range values are rejected with the dotted
path of the offending key.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .bandstructure import InterfaceBandParams
from .hfb import BandPair, KGrid, MeanFields, ScfOptions
from .sweep import SweepSpec
from .waveguide import SubbandIndex, WaveguideParams, calibrated_mu_offset


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class BandsOptions:
    kx_min: float = -0.8
    kx_max: float = 0.8
    n_points: int = 201


@dataclass(frozen=True)
class AlphaROptions:
    dey_range: tuple = (0.0, 400.0, 60)
    dez_range: tuple = (50.0, 400.0, 60)
    method: str = "fit"
    k_window: float = 0.02
    n_points: int = 21


@dataclass(frozen=True)
class ConductanceOptions:
    b_range: tuple = (0.0, 4.0, 41)
    mu_range: tuple = (0.0, 1.5, 61)
    k_max: float = 0.6
    n_k: int = 4001
    cutoff: float = 2.0


@dataclass(frozen=True)
class OverlapOptions:
    b_range: tuple = (0.0, 3.0, 61)
    alpha_l: tuple = (0.0, 0.25, 0.5, 0.75, 1.0)


@dataclass(frozen=True)
class RunConfig:
    interface: InterfaceBandParams = InterfaceBandParams()
    waveguide: WaveguideParams = WaveguideParams()
    u0: float = -2.0
    band_pair: BandPair = BandPair()
    kgrid: KGrid = KGrid()
    scf: ScfOptions = ScfOptions()
    sweep: SweepSpec = SweepSpec()
    bands: BandsOptions = BandsOptions()
    alpha_r: AlphaROptions = AlphaROptions()
    conductance: ConductanceOptions = ConductanceOptions()
    overlap: OverlapOptions = OverlapOptions()
    out: str | None = None
    mu_offset: float = 0.0


# Single-point defaults for the waveguide when no config overrides them: a point
# inside the paired region of the |U0| = 2 meV nm phase diagram.
_WAVEGUIDE_DEFAULTS = {"b_field": 0.5, "mu": 0.28}


def _check_keys(section: dict, allowed, where: str):
    if not isinstance(section, dict):
        raise ConfigError(f"{where or 'config'}: expected an object")
    for key in section:
        if key not in allowed:
            path = f"{where}.{key}" if where else key
            raise ConfigError(f"unknown config key '{path}'")


def _number(value, where: str, integer: bool = False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"'{where}' must be a number, got {value!r}")
    if integer:
        if float(value) != int(value):
            raise ConfigError(f"'{where}' must be an integer, got {value!r}")
        return int(value)
    if not math.isfinite(value):
        raise ConfigError(f"'{where}' must be finite")
    return float(value)


def _range(value, where: str):
    if not isinstance(value, list) or len(value) != 3:
        raise ConfigError(f"'{where}' must be [min, max, steps]")
    lo = _number(value[0], f"{where}[0]")
    hi = _number(value[1], f"{where}[1]")
    steps = _number(value[2], f"{where}[2]", integer=True)
    if steps < 1:
        raise ConfigError(f"'{where}' needs steps >= 1")
    if hi < lo:
        raise ConfigError(f"'{where}' is empty (max < min)")
    return (lo, hi, steps)


def _build(cls, section: dict, where: str, base=None, special=None):
    """Instantiate a flat dataclass from a JSON object with type coercion."""
    special = special or {}
    base = base if base is not None else cls()
    names = {f.name: f for f in fields(cls)}
    _check_keys(section, names, where)
    kw = {}
    for key, value in section.items():
        path = f"{where}.{key}"
        if key in special:
            kw[key] = special[key](value, path)
            continue
        current = getattr(base, key)
        if isinstance(current, bool):
            if not isinstance(value, bool):
                raise ConfigError(f"'{path}' must be true or false")
            kw[key] = value
        elif isinstance(current, int):
            kw[key] = _number(value, path, integer=True)
        elif isinstance(current, float):
            kw[key] = _number(value, path)
        elif isinstance(current, str):
            if not isinstance(value, str):
                raise ConfigError(f"'{path}' must be a string")
            kw[key] = value
        else:
            raise ConfigError(f"'{path}' cannot be set directly")
    try:
        return replace(base, **kw)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _subband(value, where: str) -> SubbandIndex:
    _check_keys(value, ("m", "n", "sigma"), where)
    m = _number(value.get("m", 0), f"{where}.m", integer=True)
    n = _number(value.get("n", 0), f"{where}.n", integer=True)
    sigma = value.get("sigma", "up")
    if m < 0 or n < 0:
        raise ConfigError(f"'{where}': subband indices must be >= 0")
    if sigma not in ("up", "down"):
        raise ConfigError(f"'{where}.sigma' must be 'up' or 'down'")
    return SubbandIndex(m, n, sigma)


def _band_pair(value, where: str) -> BandPair:
    _check_keys(value, ("alpha", "beta"), where)
    d = BandPair()
    alpha = _subband(value["alpha"], f"{where}.alpha") if "alpha" in value else d.alpha
    beta = _subband(value["beta"], f"{where}.beta") if "beta" in value else d.beta
    try:
        return BandPair(alpha, beta)
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _initial(value, where: str) -> MeanFields | None:
    if value is None:
        return None
    _check_keys(value, ("sigma_alpha", "sigma_beta", "chi_re", "chi_im", "delta"), where)
    g = lambda k: _number(value.get(k, 0.0), f"{where}.{k}")  # noqa: E731
    return MeanFields(g("sigma_alpha"), g("sigma_beta"), complex(g("chi_re"), g("chi_im")), complex(g("delta")))


def _alpha_list(value, where: str) -> tuple:
    if not isinstance(value, list) or not value:
        raise ConfigError(f"'{where}' must be a non-empty list")
    return tuple(_number(v, f"{where}[{i}]") for i, v in enumerate(value))


def _choice(options):
    def check(value, where):
        if value not in options:
            raise ConfigError(f"'{where}' must be one of {list(options)}, got {value!r}")
        return value

    return check


def parse_config(doc: dict) -> RunConfig:
    """Build a RunConfig from a parsed JSON document."""
    top = [f.name for f in fields(RunConfig)]
    _check_keys(doc, top, "")

    interface = _build(InterfaceBandParams, doc.get("interface", {}), "interface")
    wg_base = WaveguideParams(**_WAVEGUIDE_DEFAULTS)
    wg_section = doc.get("waveguide", {})
    if isinstance(wg_section, dict) and "mu_offset" in wg_section:
        raise ConfigError("'waveguide.mu_offset' is set at the top level as 'mu_offset'")
    waveguide = _build(WaveguideParams, wg_section, "waveguide", base=wg_base)

    raw_offset = doc.get("mu_offset", "calibrated")
    if raw_offset == "calibrated":
        mu_offset = calibrated_mu_offset(waveguide)
    else:
        mu_offset = _number(raw_offset, "mu_offset")
    waveguide = waveguide.replace(mu_offset=mu_offset)

    u0 = _number(doc.get("u0", -2.0), "u0")
    band_pair = _band_pair(doc["band_pair"], "band_pair") if "band_pair" in doc else BandPair()
    kgrid = _build(KGrid, doc.get("kgrid", {}), "kgrid")
    scf = _build(ScfOptions, doc.get("scf", {}), "scf", special={"initial": _initial})
    if not 0 < scf.min_mixing <= scf.mixing <= 1:
        raise ConfigError("'scf.mixing' and 'scf.min_mixing' need 0 < min_mixing <= mixing <= 1")
    if scf.tol <= 0 or scf.max_iter < 1:
        raise ConfigError("'scf.tol' must be > 0 and 'scf.max_iter' >= 1")
    scf = replace(scf, kgrid=kgrid)

    sweep = _build(
        SweepSpec,
        doc.get("sweep", {}),
        "sweep",
        base=SweepSpec(params=waveguide, u0=u0, band_pair=band_pair, scf=scf),
        special={"b_range": _range, "mu_range": _range, "mode": _choice(("hfb", "noninteracting"))},
    )
    bands = _build(BandsOptions, doc.get("bands", {}), "bands")
    if bands.n_points < 2 or not bands.kx_max > bands.kx_min:
        raise ConfigError("'bands' k-range is empty: need kx_max > kx_min and n_points >= 2")
    alpha_r = _build(
        AlphaROptions,
        doc.get("alpha_r", {}),
        "alpha_r",
        special={"dey_range": _range, "dez_range": _range, "method": _choice(("fit", "projection"))},
    )
    if alpha_r.dey_range[0] < 0 or alpha_r.dez_range[0] < 0:
        raise ConfigError("'alpha_r' energy ranges must be non-negative")
    conductance = _build(
        ConductanceOptions, doc.get("conductance", {}), "conductance",
        special={"b_range": _range, "mu_range": _range},
    )
    if conductance.b_range[0] < 0:
        raise ConfigError("'conductance.b_range' must be non-negative")
    overlap = _build(
        OverlapOptions, doc.get("overlap", {}), "overlap",
        special={"b_range": _range, "alpha_l": _alpha_list},
    )
    if overlap.b_range[0] < 0:
        raise ConfigError("'overlap.b_range' must be non-negative")
    out = doc.get("out")
    if out is not None and not isinstance(out, str):
        raise ConfigError("'out' must be a string path")
    return RunConfig(
        interface=interface, waveguide=waveguide, u0=u0, band_pair=band_pair, kgrid=kgrid,
        scf=scf, sweep=sweep, bands=bands, alpha_r=alpha_r, conductance=conductance,
        overlap=overlap, out=out, mu_offset=mu_offset,
    )


def load_config(path: str | Path | None) -> RunConfig:
    """Read and validate a JSON config; None gives the defaults.

    OSError propagates (I/O failure); malformed JSON is a ConfigError.
    """
    if path is None:
        return parse_config({})
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return parse_config(doc)


def grid(r: tuple) -> np.ndarray:
    lo, hi, n = r
    return np.linspace(lo, hi, int(n))
