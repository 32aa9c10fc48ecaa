"""Six-band t2g interface model and extraction of the Rashba coupling.

Basis ordering is (d_yz, d_xz, d_xy) x (up, down), i.e. index 2*orbital + spin.
Energies in meV, momenta in 1/nm, alpha_R in meV nm.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .constants import HBAR2_OVER_ME

_S0 = np.eye(2, dtype=complex)
_SX = np.array([[0, 1], [1, 0]], dtype=complex)
_SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
_SZ = np.array([[1, 0], [0, -1]], dtype=complex)
_Z2 = np.zeros((2, 2), dtype=complex)


class BandStructureError(RuntimeError):
    """Eigensolver failure or an unusable alpha_R fit."""


class FitError(BandStructureError):
    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


class Momentum2D(NamedTuple):
    k_x: float
    k_y: float = 0.0


@dataclass(frozen=True)
class InterfaceBandParams:
    m_h: float = 6.8
    m_l: float = 0.41
    delta_e_z: float = 250.0
    delta_e_y: float = 0.0
    delta_aso: float = 19.3
    delta_z: float = 20.0
    a: float = 0.392

    def __post_init__(self):
        for name in ("m_h", "m_l", "a"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)}")
        for name in ("delta_e_z", "delta_e_y", "delta_aso", "delta_z"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.delta_e_y > self.delta_e_z:
            raise ValueError(
                f"delta_e_y ({self.delta_e_y}) must not exceed delta_e_z ({self.delta_e_z})"
            )


def _spin_kron(orbital: np.ndarray) -> np.ndarray:
    """orbital (..., 3, 3) -> (..., 6, 6) with identity on spin."""
    return np.einsum("...ij,ab->...iajb", orbital, _S0).reshape(orbital.shape[:-2] + (6, 6))


def build_h0(k: Momentum2D, p: InterfaceBandParams) -> np.ndarray:
    """Diagonal kinetic + confinement part; includes the lateral shift -delta_e_y on d_xz."""
    kx, ky = k
    t = 0.5 * HBAR2_OVER_ME
    diag = np.array(
        [
            t * kx**2 / p.m_h + t * ky**2 / p.m_l,
            t * kx**2 / p.m_l + t * ky**2 / p.m_h - p.delta_e_y,
            t * kx**2 / p.m_l + t * ky**2 / p.m_l - p.delta_e_z,
        ]
    )
    return np.diag(np.repeat(diag, 2)).astype(complex)


def build_haso(p: InterfaceBandParams) -> np.ndarray:
    return 1j * p.delta_aso * np.block(
        [
            [_Z2, _SZ, -_SY],
            [-_SZ, _Z2, _SX],
            [_SY, -_SX, _Z2],
        ]
    )


def build_ha(k: Momentum2D, p: InterfaceBandParams) -> np.ndarray:
    kx, ky = k
    orb = np.array([[0, 0, kx], [0, 0, ky], [-kx, -ky, 0]], dtype=complex)
    return _spin_kron(1j * p.delta_z * p.a * orb)


def build_htot(k: Momentum2D, p: InterfaceBandParams) -> np.ndarray:
    return build_h0(k, p) + build_haso(p) + build_ha(k, p)


def _htot_stack(kx: np.ndarray, ky: np.ndarray, p: InterfaceBandParams) -> np.ndarray:
    kx = np.asarray(kx, dtype=float)
    ky = np.broadcast_to(np.asarray(ky, dtype=float), kx.shape)
    t = 0.5 * HBAR2_OVER_ME
    orb = np.zeros(kx.shape + (3, 3), dtype=complex)
    orb[..., 0, 0] = t * kx**2 / p.m_h + t * ky**2 / p.m_l
    orb[..., 1, 1] = t * kx**2 / p.m_l + t * ky**2 / p.m_h - p.delta_e_y
    orb[..., 2, 2] = t * (kx**2 + ky**2) / p.m_l - p.delta_e_z
    g = 1j * p.delta_z * p.a
    orb[..., 0, 2] = g * kx
    orb[..., 1, 2] = g * ky
    orb[..., 2, 0] = -g * kx
    orb[..., 2, 1] = -g * ky
    return _spin_kron(orb) + build_haso(p)


def _eigvalsh(h: np.ndarray) -> np.ndarray:
    try:
        w = np.linalg.eigvalsh(h)
    except np.linalg.LinAlgError as exc:
        raise BandStructureError(f"Hermitian eigensolver did not converge: {exc}") from exc
    if not np.all(np.isfinite(w)):
        raise BandStructureError("eigensolver returned non-finite energies")
    return w


def band_energies(k: Momentum2D, p: InterfaceBandParams) -> np.ndarray:
    """Six ascending eigenvalues of H0' + H_aso + H_a at one momentum."""
    return _eigvalsh(build_htot(k, p))


def band_structure(kx, p: InterfaceBandParams, ky=0.0) -> np.ndarray:
    """Band energies along an array of k_x, shape (len(kx), 6)."""
    return _eigvalsh(_htot_stack(np.atleast_1d(kx), ky, p))


def alpha_r_perturbative(p: InterfaceBandParams) -> float:
    if p.delta_e_z <= 0:
        raise ValueError("perturbative alpha_R requires delta_e_z > 0")
    return 2.0 * p.a * p.delta_z * p.delta_aso / p.delta_e_z


def _alpha_r_fit(p, k_window, n_points, rel_tol, abs_tol):
    kx = np.linspace(-k_window, k_window, n_points)
    e = band_structure(kx, p)
    split = e[:, 1] - e[:, 0]
    ak = np.abs(kx)
    slope = float(np.dot(ak, split) / np.dot(ak, ak))
    resid = split - slope * ak
    rms_res = float(np.sqrt(np.mean(resid**2)))
    rms_split = float(np.sqrt(np.mean(split**2)))
    if rms_res > rel_tol * rms_split + abs_tol:
        raise FitError(
            f"splitting is not linear in |k_x| within |k_x| <= {k_window} 1/nm "
            f"(rms residual {rms_res:.3e} meV vs signal {rms_split:.3e} meV)",
            rms_res,
        )
    return abs(slope) / 2.0


def _alpha_r_projection(p):
    # H_a = k_x * A along k_x; first-order splitting of the lowest Kramers doublet
    # of H0(k=0) + H_aso is 2 alpha_R |k_x|.
    h00 = build_h0(Momentum2D(0.0, 0.0), p) + build_haso(p)
    _, v = np.linalg.eigh(h00)
    doublet = v[:, :2]
    a_mat = build_ha(Momentum2D(1.0, 0.0), p)
    proj = doublet.conj().T @ a_mat @ doublet
    w = np.linalg.eigvalsh(proj)
    return float(w[1] - w[0]) / 2.0


def alpha_r_numeric(
    p: InterfaceBandParams,
    k_window: float = 0.02,
    n_points: int = 21,
    method: str = "fit",
    rel_tol: float = 0.05,
    abs_tol: float = 1e-6,
) -> float:
    """Rashba strength of the two lowest bands along k_x.

    method="fit" fits the splitting E2 - E1 against |k_x| through the origin on a
    uniform window and returns half the slope. method="projection" projects H_a
    onto the lowest doublet of H0(k=0) + H_aso instead.

    Raises FitError when the splitting is not linear on the window
    (rms residual > rel_tol * rms splitting + abs_tol).
    """
    if method == "fit":
        return _alpha_r_fit(p, k_window, n_points, rel_tol, abs_tol)
    if method == "projection":
        return _alpha_r_projection(p)
    raise ValueError(f"unknown alpha_R method {method!r}")


@dataclass
class AlphaRMap:
    dey: np.ndarray
    dez: np.ndarray
    alpha: np.ndarray  # shape (len(dez), len(dey)); NaN where absent or failed
    errors: dict = field(default_factory=dict)  # (i_dez, i_dey) -> message


def alpha_r_map(dey_grid, dez_grid, p: InterfaceBandParams | None = None, **kwargs) -> AlphaRMap:
    """alpha_R over (delta_e_z, delta_e_y); cells with delta_e_y > delta_e_z are NaN."""
    p = p or InterfaceBandParams()
    dey = np.asarray(dey_grid, dtype=float)
    dez = np.asarray(dez_grid, dtype=float)
    out = np.full((dez.size, dey.size), np.nan)
    errors = {}
    for i, ez in enumerate(dez):
        for j, ey in enumerate(dey):
            if ey > ez:
                continue
            try:
                cell = InterfaceBandParams(
                    m_h=p.m_h, m_l=p.m_l, delta_e_z=float(ez), delta_e_y=float(ey),
                    delta_aso=p.delta_aso, delta_z=p.delta_z, a=p.a,
                )
                out[i, j] = alpha_r_numeric(cell, **kwargs)
            except (BandStructureError, ValueError) as exc:
                errors[(i, j)] = str(exc)
    return AlphaRMap(dey, dez, out, errors)
