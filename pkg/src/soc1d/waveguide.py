"""Single-particle waveguide with Zeeman field and engineered spin-orbit coupling.

Energies in meV, lengths in nm, field in T. The chemical potential entering the
subband energies is ``mu + mu_offset``; ``mu_offset = 0`` keeps the absolute
zero-point energies of the transverse trap, ``calibrated_mu_offset`` moves the
lowest subband bottom down by hbar*omega_z.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import optimize

from .constants import HBAR2_OVER_ME, MU_B


class KWindowError(RuntimeError):
    """A band is still occupied at the edge of the momentum window."""


@dataclass(frozen=True)
class WaveguideParams:
    m_x: float = 2.0
    m_y: float = 2.0
    m_z: float = 2.0
    l_y: float = 20.0
    l_z: float = 10.0
    g: float = 0.5
    alpha_v: float = 0.0
    alpha_l: float = 0.0
    mu: float = 0.0
    b_field: float = 0.0
    temperature: float = 0.025
    mu_offset: float = 0.0

    def __post_init__(self):
        for name in ("m_x", "m_y", "m_z", "l_y", "l_z"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)}")
        if not self.temperature >= 0:
            raise ValueError(f"temperature must be >= 0, got {self.temperature}")
        if not self.b_field >= 0:
            raise ValueError(f"b_field must be >= 0, got {self.b_field}")
        for name in ("g", "alpha_v", "alpha_l", "mu", "mu_offset"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    def replace(self, **changes) -> "WaveguideParams":
        from dataclasses import replace

        return replace(self, **changes)

    @property
    def hbar_omega_y(self) -> float:
        return HBAR2_OVER_ME / (self.m_y * self.l_y**2)

    @property
    def hbar_omega_z(self) -> float:
        return HBAR2_OVER_ME / (self.m_z * self.l_z**2)

    @property
    def zeeman(self) -> float:
        """g mu_B B, the full spin splitting."""
        return self.g * MU_B * self.b_field


class SubbandIndex(NamedTuple):
    m: int
    n: int
    sigma: str = "up"  # "up" or "down"


class EffectiveFrequencies(NamedTuple):
    hbar_omega_c: float
    hbar_omega: float
    kinetic_factor: float  # omega_y^2 / Omega^2


def calibrated_mu_offset(p: WaveguideParams) -> float:
    """Offset that puts the lowest subband bottom at hbar*Omega/2 + hbar*omega_z/2."""
    return p.hbar_omega_z


def effective_frequencies(p: WaveguideParams) -> EffectiveFrequencies:
    hw_c = 2.0 * MU_B * p.b_field / math.sqrt(p.m_x * p.m_y)
    hw_y = p.hbar_omega_y
    hw = math.hypot(hw_y, hw_c)
    return EffectiveFrequencies(hw_c, hw, (hw_y / hw) ** 2)


def transverse_energy(m: int, n: int, p: WaveguideParams) -> float:
    """Band bottom E_mn(k=0) + mu, i.e. without the chemical potential."""
    ef = effective_frequencies(p)
    return ef.hbar_omega * (m + 0.5) + p.hbar_omega_z * (2 * n + 1.5)


def dispersion(m: int, n: int, k, p: WaveguideParams):
    ef = effective_frequencies(p)
    k = np.asarray(k, dtype=float)
    kin = 0.5 * HBAR2_OVER_ME / p.m_x * k**2 * ef.kinetic_factor
    return kin + transverse_energy(m, n, p) - (p.mu + p.mu_offset)


def spin_block(m: int, n: int, k, p: WaveguideParams) -> np.ndarray:
    """2x2 Hamiltonian of mode (m, n) in the (up, down) basis; shape k.shape + (2, 2)."""
    k = np.asarray(k, dtype=float)
    c = effective_frequencies(p).kinetic_factor
    e = dispersion(m, n, k, p)
    half_z = 0.5 * p.zeeman
    lat = p.alpha_l * c * k
    ver = p.alpha_v * c * k
    h = np.empty(k.shape + (2, 2), dtype=complex)
    h[..., 0, 0] = e - half_z + lat
    h[..., 1, 1] = e + half_z - lat
    h[..., 0, 1] = -1j * ver
    h[..., 1, 0] = 1j * ver
    return h


def spin_block_eigenvalues(m: int, n: int, k, p: WaveguideParams) -> np.ndarray:
    """Closed-form (lower, upper) eigenvalues, shape k.shape + (2,)."""
    k = np.asarray(k, dtype=float)
    c = effective_frequencies(p).kinetic_factor
    e = dispersion(m, n, k, p)
    r = np.hypot(0.5 * p.zeeman - p.alpha_l * c * k, p.alpha_v * c * k)
    return np.stack([e - r, e + r], axis=-1)


def fermi_points(
    m: int,
    n: int,
    p: WaveguideParams,
    k_max: float = 0.6,
    n_k: int = 4001,
    xtol: float = 1e-6,
) -> list[float]:
    """Zero crossings of the lower and upper spin-block branches of mode (m, n).

    Sign changes on a uniform grid, refined by bisection. Branches are the
    ordered eigenvalues: near an avoided crossing whose gap straddles zero the
    eigenstates at the Fermi level belong to the ordered branches, so following
    spin character across the gap would count spurious Fermi points.
    """
    k = np.linspace(-k_max, k_max, n_k)
    w = spin_block_eigenvalues(m, n, k, p)
    if np.any(w[0] <= 0) or np.any(w[-1] <= 0):
        raise KWindowError(
            f"mode ({m},{n}) is occupied at |k| = {k_max} 1/nm; enlarge the k-window"
        )
    roots = []
    for b in range(2):
        pos = w[:, b] > 0
        for i in np.nonzero(pos[:-1] != pos[1:])[0]:
            def branch(x, b=b):
                return float(spin_block_eigenvalues(m, n, x, p)[b])

            roots.append(optimize.bisect(branch, k[i], k[i + 1], xtol=xtol))
    return sorted(roots)


def default_modes(p: WaveguideParams, cutoff: float = 2.0) -> list[tuple[int, int]]:
    """All (m, n) whose band bottom minus the chemical potential is <= cutoff (meV)."""
    ef = effective_frequencies(p)
    mu = p.mu + p.mu_offset
    modes = []
    m = 0
    while ef.hbar_omega * (m + 0.5) + p.hbar_omega_z * 1.5 - mu <= cutoff:
        n = 0
        while transverse_energy(m, n, p) - mu <= cutoff:
            modes.append((m, n))
            n += 1
        m += 1
    return modes


def conductance_noninteracting(
    p: WaveguideParams,
    mode_list=None,
    k_max: float = 0.6,
    n_k: int = 4001,
    cutoff: float = 2.0,
) -> int:
    """Zero-bias conductance in units of e^2/h: half the number of Fermi points."""
    modes = default_modes(p, cutoff) if mode_list is None else mode_list
    crossings = sum(len(fermi_points(m, n, p, k_max, n_k)) for m, n in modes)
    return crossings // 2


def conductance_map(p: WaveguideParams, b_values, mu_values, **kwargs) -> np.ndarray:
    """G over (mu, B): shape (len(mu_values), len(b_values))."""
    out = np.zeros((len(mu_values), len(b_values)), dtype=int)
    for i, mu in enumerate(mu_values):
        for j, b in enumerate(b_values):
            out[i, j] = conductance_noninteracting(
                p.replace(mu=float(mu), b_field=float(b)), **kwargs
            )
    return out


def overlap_appendix_a(b_field: float, alpha_l: float, p: WaveguideParams) -> float:
    """Overlap of the two spin-displaced lateral ground states.

    exp(-e^2 B^2 alpha_l^2 / (m_y hbar^3 Omega^3)), written with
    hbar*omega_cy = 2 mu_B B / m_y and hbar^2/m_y in meV nm^2.
    """
    ef = effective_frequencies(p.replace(b_field=b_field))
    hw_cy = 2.0 * MU_B * b_field / p.m_y
    expo = hw_cy**2 * alpha_l**2 / ((HBAR2_OVER_ME / p.m_y) * ef.hbar_omega**3)
    return math.exp(-expo)
