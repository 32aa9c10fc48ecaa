"""Self-consistent Hartree-Fock-Bogoliubov solver for two opposite-spin subbands.

The Nambu basis at each k is (c_ak, c^+_a,-k, c_bk, c^+_b,-k). Mean fields:
    Sigma_a = U/2pi int <n_b(k)> dk,   Sigma_b = U/2pi int <n_a(k)> dk,
    chi     = U/2pi int <c^+_ak c_bk> dk,
    Delta   = U/2pi int <c_ak c_b,-k> dk,
with U = U0 * omega_y / Omega. The global phase of Delta is rotated to zero after
every update.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit

from .constants import K_B
from .waveguide import (
    KWindowError,
    SubbandIndex,
    WaveguideParams,
    dispersion,
    effective_frequencies,
)

log = logging.getLogger(__name__)

PAIRING_THRESHOLD = 1e-3  # meV


class ScfError(RuntimeError):
    pass


class NotConvergedError(ScfError):
    pass


def _spin_sign(sigma: str) -> float:
    """2*s(sigma): +1 for up, -1 for down."""
    if sigma == "up":
        return 1.0
    if sigma == "down":
        return -1.0
    raise ValueError(f"spin label must be 'up' or 'down', got {sigma!r}")


@dataclass(frozen=True)
class BandPair:
    alpha: SubbandIndex = SubbandIndex(0, 0, "down")
    beta: SubbandIndex = SubbandIndex(0, 0, "up")

    def __post_init__(self):
        for sb in (self.alpha, self.beta):
            _spin_sign(sb.sigma)
            if sb.m < 0 or sb.n < 0:
                raise ValueError(f"subband quantum numbers must be >= 0, got {sb}")
        if self.alpha.sigma == self.beta.sigma:
            raise ValueError("alpha and beta must carry opposite spins")

    @property
    def same_mode(self) -> bool:
        return (self.alpha.m, self.alpha.n) == (self.beta.m, self.beta.n)


@dataclass(frozen=True)
class MeanFields:
    sigma_alpha: float = 0.0
    sigma_beta: float = 0.0
    chi: complex = 0j
    delta: complex = 0j

    def as_array(self) -> np.ndarray:
        return np.array([self.sigma_alpha, self.sigma_beta, self.chi, self.delta], dtype=complex)

    @classmethod
    def from_array(cls, a) -> "MeanFields":
        return cls(float(a[0].real), float(a[1].real), complex(a[2]), complex(a[3]))

    def gauge_fixed(self) -> "MeanFields":
        return replace(self, delta=complex(abs(self.delta)))

    def distance(self, other: "MeanFields") -> float:
        return float(np.max(np.abs(self.as_array() - other.as_array())))


DEFAULT_INITIAL_FIELDS = MeanFields(delta=0.05 + 0j)


@dataclass(frozen=True)
class KGrid:
    k_max: float = 0.5
    n_points: int = 2001

    def __post_init__(self):
        if self.n_points < 3 or self.n_points % 2 == 0:
            raise ValueError(f"n_points must be odd and >= 3, got {self.n_points}")
        if not self.k_max > 0:
            raise ValueError(f"k_max must be > 0, got {self.k_max}")

    @property
    def points(self) -> np.ndarray:
        half = self.k_max * np.linspace(0.0, 1.0, (self.n_points + 1) // 2)
        return np.concatenate([-half[:0:-1], half])


@dataclass(frozen=True)
class ScfOptions:
    kgrid: KGrid = KGrid()
    mixing: float = 0.5
    min_mixing: float = 0.05
    tol: float = 1e-6
    max_iter: int = 500
    initial: MeanFields | None = None
    pairing_threshold: float = PAIRING_THRESHOLD

    def __post_init__(self):
        if not 0 < self.min_mixing <= self.mixing <= 1:
            raise ValueError("need 0 < min_mixing <= mixing <= 1")
        if not self.tol > 0:
            raise ValueError("tol must be > 0")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass(frozen=True)
class Correlations:
    occ_alpha: np.ndarray  # <c^+_ak c_ak>
    occ_beta: np.ndarray  # <c^+_bk c_bk>
    coherence: np.ndarray  # <c^+_ak c_bk>
    pair_ab: np.ndarray  # <c_ak c_b,-k>
    pair_ba: np.ndarray  # <c_bk c_a,-k>


@dataclass(frozen=True)
class ScfState:
    fields: MeanFields
    k: np.ndarray
    quasi_energies: np.ndarray  # (n_k, 2), electron-like member of each conjugate pair
    correlations: Correlations
    iterations: int
    residual: float
    converged: bool
    u: float
    params: WaveguideParams
    band_pair: BandPair
    u0: float
    pairing_threshold: float = PAIRING_THRESHOLD
    warnings: tuple = field(default_factory=tuple)


def u_of_b(u0: float, p: WaveguideParams) -> float:
    return u0 * math.sqrt(effective_frequencies(p).kinetic_factor)


def single_particle_energies(k, pair: BandPair, p: WaveguideParams):
    """xi_alpha(k), xi_beta(k): subband energies including Zeeman, without SOC."""
    xa = dispersion(pair.alpha.m, pair.alpha.n, k, p) - 0.5 * _spin_sign(pair.alpha.sigma) * p.zeeman
    xb = dispersion(pair.beta.m, pair.beta.n, k, p) - 0.5 * _spin_sign(pair.beta.sigma) * p.zeeman
    return xa, xb


def _soc_terms(k, pair: BandPair, p: WaveguideParams):
    """Diagonal lateral-SOC shifts of alpha and beta and the vertical-SOC hopping a->b."""
    c = effective_frequencies(p).kinetic_factor
    lat = p.alpha_l * c * k
    shift_a = _spin_sign(pair.alpha.sigma) * lat
    shift_b = _spin_sign(pair.beta.sigma) * lat
    if pair.same_mode:
        # coefficient of c^+_a c_b; the (up, down) element of the spin block is -i alpha_v c k
        hop = _spin_sign(pair.beta.sigma) * 1j * p.alpha_v * c * k
    else:
        hop = np.zeros_like(k, dtype=complex)
    return shift_a, shift_b, hop


def build_bdg(k, xi_alpha, xi_beta, fields: MeanFields, p: WaveguideParams, pair: BandPair = BandPair()):
    """Nambu matrices, shape k.shape + (4, 4).

    xi_alpha / xi_beta are the (even in k) subband energies at k.
    """
    k = np.asarray(k, dtype=float)
    xi_alpha = np.broadcast_to(np.asarray(xi_alpha, dtype=float), k.shape)
    xi_beta = np.broadcast_to(np.asarray(xi_beta, dtype=float), k.shape)
    sa, sb, hop = _soc_terms(k, pair, p)
    sa_m, sb_m, hop_m = _soc_terms(-k, pair, p)
    d = fields.delta
    t = hop - np.conj(fields.chi)
    t_m = hop_m - np.conj(fields.chi)
    m = np.zeros(k.shape + (4, 4), dtype=complex)
    m[..., 0, 0] = xi_alpha + fields.sigma_alpha + sa
    m[..., 1, 1] = -(xi_alpha + fields.sigma_alpha + sa_m)
    m[..., 2, 2] = xi_beta + fields.sigma_beta + sb
    m[..., 3, 3] = -(xi_beta + fields.sigma_beta + sb_m)
    m[..., 0, 2] = t
    m[..., 2, 0] = np.conj(t)
    m[..., 1, 3] = -np.conj(t_m)
    m[..., 3, 1] = -t_m
    m[..., 0, 3] = d
    m[..., 3, 0] = np.conj(d)
    m[..., 1, 2] = -np.conj(d)
    m[..., 2, 1] = -d
    return m


def _eig2(a, d, b):
    """Eigenpairs of [[a, b], [b*, d]] with a, d real; ascending."""
    mean = 0.5 * (a + d)
    half = 0.5 * (a - d)
    r = np.hypot(half, np.abs(b))
    theta = np.arctan2(np.abs(b), half)
    phase = np.exp(1j * np.angle(b))
    c, s = np.cos(0.5 * theta), np.sin(0.5 * theta)
    # upper: (cos, e^{-i phi'} sin) with b = |b| e^{i phi}
    up = np.stack([c, np.conj(phase) * s], axis=-1)
    lo = np.stack([-phase * s, c + 0j], axis=-1)
    return mean - r, mean + r, lo, up


def bdg_eigensystem(mats: np.ndarray):
    """Ascending eigenvalues and eigenvectors of stacked 4x4 Nambu matrices.

    When the alpha-beta hopping vanishes the matrix splits into the blocks {0, 3}
    and {1, 2}, which are solved in closed form.
    """
    if not (np.any(mats[..., 0, 2]) or np.any(mats[..., 1, 3])):
        n = mats.shape[0]
        e = np.empty((n, 4))
        w = np.zeros((n, 4, 4), dtype=complex)
        for col, (i, j) in ((0, (0, 3)), (2, (1, 2))):
            lo, hi, vlo, vhi = _eig2(mats[:, i, i].real, mats[:, j, j].real, mats[:, i, j])
            e[:, col], e[:, col + 1] = lo, hi
            w[:, i, col], w[:, j, col] = vlo[:, 0], vlo[:, 1]
            w[:, i, col + 1], w[:, j, col + 1] = vhi[:, 0], vhi[:, 1]
        order = np.argsort(e, axis=1, kind="stable")
        rows = np.arange(n)[:, None]
        return e[rows, order], w[rows, :, order].transpose(0, 2, 1)
    try:
        return np.linalg.eigh(mats)
    except np.linalg.LinAlgError as exc:
        raise ScfError(f"BdG eigensolver failed: {exc}") from exc


def fermi(e, temperature: float):
    e = np.asarray(e, dtype=float)
    if temperature <= 0:
        return np.where(e < 0, 1.0, np.where(e > 0, 0.0, 0.5))
    return expit(-e / (K_B * temperature))


def select_quasiparticles(energies: np.ndarray, vectors: np.ndarray):
    """Keep one member of each (E at k, -E at -k) conjugate pair.

    Modes are paired with their hole-conjugate on the mirrored grid point by
    maximal overlap; the member with larger electron weight is kept, ties go to
    the smaller branch index. Requires a grid symmetric about k = 0.

    Returns (keep mask (n_k, 4), number of ties).
    """
    n = energies.shape[0]
    weight = np.abs(vectors[:, 0, :]) ** 2 + np.abs(vectors[:, 2, :]) ** 2
    conj = np.conj(vectors[:, [1, 0, 3, 2], :])  # conjugate partner living at -k
    mirror = vectors[::-1]
    ov = np.abs(np.einsum("kaj,kai->kji", np.conj(mirror), conj))  # [k, partner j', mode i]
    partner = np.argmax(ov, axis=1)  # (n, 4)
    partner_weight = np.take_along_axis(weight[::-1], partner, axis=1)
    keep = weight > partner_weight + 1e-12
    tie = np.abs(weight - partner_weight) <= 1e-12
    branch = np.broadcast_to(np.arange(4), (n, 4))
    ties = int(np.count_nonzero(tie))
    keep |= tie & (branch < partner)
    # self-paired tie at k = 0 with equal index: keep the upper member
    keep |= tie & (branch == partner) & (energies >= 0)
    return keep, ties


def quasiparticle_correlations(k, energies, vectors, temperature: float) -> Correlations:
    """Thermal correlations from Bogoliubov eigenmodes.

    The four modes at k are the selected quasiparticles plus conjugates of the ones
    selected at -k; a conjugate at energy E carries occupation 1 - n(-E) = n(E), so
    the one-body matrix is <Psi^+_j Psi_i> = sum_n W_in W*_jn n(E_n).
    """
    occ = fermi(energies, temperature)
    rho = (vectors * occ[:, None, :]) @ np.conj(np.swapaxes(vectors, 1, 2))
    return Correlations(
        occ_alpha=rho[:, 0, 0].real.copy(),
        occ_beta=rho[:, 2, 2].real.copy(),
        coherence=rho[:, 2, 0].copy(),
        pair_ab=-rho[:, 0, 3],
        pair_ba=-rho[:, 2, 1],
    )


def update_mean_fields(corr: Correlations, u: float, k) -> MeanFields:
    k = np.asarray(k, dtype=float)
    pref = u / (2.0 * math.pi)

    def integ(y):
        if not np.all(np.isfinite(y)):
            raise ScfError("non-finite correlation in mean-field integrand")
        return np.trapezoid(y, k)

    return MeanFields(
        sigma_alpha=float(pref * integ(corr.occ_beta)),
        sigma_beta=float(pref * integ(corr.occ_alpha)),
        chi=complex(pref * integ(corr.coherence)),
        delta=complex(pref * integ(corr.pair_ab)),
    )


@dataclass
class _Snapshot:
    energies: np.ndarray
    vectors: np.ndarray
    corr: Correlations


def _evaluate(fields, k, xa, xb, p, pair):
    mats = build_bdg(k, xa, xb, fields, p, pair)
    e, w = bdg_eigensystem(mats)
    return _Snapshot(e, w, quasiparticle_correlations(k, e, w, p.temperature))


def _branches(snap: _Snapshot, warnings: list) -> np.ndarray:
    keep, ties = select_quasiparticles(snap.energies, snap.vectors)
    if ties:
        warnings.append(f"{ties} degenerate conjugate pairs resolved by branch index")
    counts = keep.sum(axis=1)
    if np.any(counts != 2):
        warnings.append(
            f"{int(np.count_nonzero(counts != 2))} k-points without exactly two selected "
            "modes; falling back to the two most electron-like"
        )
        weight = np.abs(snap.vectors[:, 0, :]) ** 2 + np.abs(snap.vectors[:, 2, :]) ** 2
        top = np.argsort(-weight, axis=1, kind="stable")[:, :2]
        keep = np.zeros_like(keep)
        np.put_along_axis(keep, top, True, axis=1)
    sel = snap.energies[keep].reshape(-1, 2)
    return np.sort(sel, axis=1)


def scf_solve(
    band_pair: BandPair,
    p: WaveguideParams,
    u0: float,
    options: ScfOptions | None = None,
) -> ScfState:
    """Iterate fields -> BdG spectra -> correlations -> fields to a fixed point.

    Linear mixing with the proposed fields (after gauge fixing). When the
    residual grows twice in a row while the update direction reverses, the
    mixing is halved down to ``min_mixing``; oscillation at the floor raises
    ScfError. Exceeding ``max_iter`` returns a state with converged=False.
    """
    opts = options or ScfOptions()
    k = opts.kgrid.points
    u = u_of_b(u0, p)
    xa, xb = single_particle_energies(k, band_pair, p)
    if u == 0:
        fields = MeanFields()
    else:
        fields = opts.initial if opts.initial is not None else DEFAULT_INITIAL_FIELDS
    eta = opts.mixing
    warnings: list[str] = []
    residual = math.inf
    history: list[float] = []
    prev_step = None
    rises = 0
    converged = False
    it = 0
    for it in range(1, opts.max_iter + 1):
        snap = _evaluate(fields, k, xa, xb, p, band_pair)
        proposed = update_mean_fields(snap.corr, u, k).gauge_fixed()
        step = proposed.as_array() - fields.as_array()
        residual = float(np.max(np.abs(step)))
        if residual < opts.tol:
            fields = proposed
            converged = True
            break
        if history and residual > history[-1]:
            rises += 1
        else:
            rises = 0
        reversing = prev_step is not None and np.real(np.vdot(prev_step, step)) < 0
        if rises >= 2 and reversing:
            if eta <= opts.min_mixing:
                raise ScfError(
                    f"mean-field iteration oscillates at minimum mixing {eta} "
                    f"(residual {residual:.3e} meV after {it} iterations)"
                )
            eta = max(eta / 2.0, opts.min_mixing)
            warnings.append(f"oscillation at iteration {it}: mixing reduced to {eta}")
            log.debug("mixing reduced to %s at iteration %d", eta, it)
            rises = 0
        history.append(residual)
        prev_step = step
        fields = MeanFields.from_array((1 - eta) * fields.as_array() + eta * proposed.as_array())
    snap = _evaluate(fields, k, xa, xb, p, band_pair)
    energies = _branches(snap, warnings)
    return ScfState(
        fields=fields,
        k=k,
        quasi_energies=energies,
        correlations=snap.corr,
        iterations=it,
        residual=residual,
        converged=converged,
        u=u,
        params=p,
        band_pair=band_pair,
        u0=u0,
        pairing_threshold=opts.pairing_threshold,
        warnings=tuple(warnings),
    )


def scf_step(state: ScfState) -> MeanFields:
    """One more application of the fixed-point map to a state's fields."""
    xa, xb = single_particle_energies(state.k, state.band_pair, state.params)
    snap = _evaluate(state.fields, state.k, xa, xb, state.params, state.band_pair)
    return update_mean_fields(snap.corr, state.u, state.k).gauge_fixed()


PHASES = ("P", "2S", "1S", "EMPTY")


def count_crossings(branches: np.ndarray) -> int:
    if np.any(branches[0] <= 0) or np.any(branches[-1] <= 0):
        raise KWindowError("a quasiparticle branch is occupied at the k-grid edge; enlarge k_max")
    pos = branches > 0
    return int(np.count_nonzero(pos[:-1] != pos[1:]))


def classify_phase(state: ScfState) -> tuple[str, int]:
    """Phase label and conductance (e^2/h) of a converged state."""
    if not state.converged:
        raise NotConvergedError(
            f"cannot classify a non-converged state (residual {state.residual:.3e} meV "
            f"after {state.iterations} iterations)"
        )
    if abs(state.fields.delta) > state.pairing_threshold:
        return "P", 2
    g = count_crossings(state.quasi_energies) // 2
    label = {0: "EMPTY", 1: "1S"}.get(g, "2S")
    return label, g


def pair_amplitudes(state: ScfState):
    """Singlet and triplet amplitudes <s_k>, <t_k> on the state's grid."""
    c = state.correlations
    s = (c.pair_ab - c.pair_ba) / math.sqrt(2.0)
    t = (c.pair_ab + c.pair_ba) / math.sqrt(2.0)
    return s, t


def singlet_triplet_densities(state: ScfState) -> tuple[float, float]:
    s, t = pair_amplitudes(state)
    n_s = np.trapezoid(np.abs(s) ** 2, state.k) / (2.0 * math.pi)
    n_t = np.trapezoid(np.abs(t) ** 2, state.k) / (2.0 * math.pi)
    return float(n_s), float(n_t)
