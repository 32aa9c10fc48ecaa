"""(B, mu) sweeps of the HFB solver or the noninteracting conductance.

Results persist as a CSV (one line per cell) plus a JSON sidecar holding the
full spec and its content hash; both are needed to resume.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import threading
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .hfb import (
    BandPair,
    KGrid,
    MeanFields,
    ScfError,
    ScfOptions,
    classify_phase,
    scf_solve,
    singlet_triplet_densities,
)
from .waveguide import KWindowError, SubbandIndex, WaveguideParams, conductance_noninteracting

CSV_HEADER = [
    "b_tesla",
    "mu_meV",
    "phase",
    "g_e2_per_h",
    "delta_meV",
    "n_s_inv_nm",
    "n_t_inv_nm",
    "iterations",
    "converged",
]
NOT_CONVERGED = "NC"
FAILED = "FAIL"


class SweepSpecMismatch(ValueError):
    pass


@dataclass(frozen=True)
class SweepSpec:
    b_range: tuple = (0.0, 4.5, 31)
    mu_range: tuple = (0.2, 0.35, 31)
    params: WaveguideParams = WaveguideParams()
    u0: float = -2.0
    band_pair: BandPair = BandPair()
    mode: str = "hfb"
    warm_start: bool = False
    check_cold: bool = False
    scf: ScfOptions = ScfOptions()
    cond_k_max: float = 0.6
    cond_n_k: int = 4001
    cond_cutoff: float = 2.0

    def __post_init__(self):
        for name in ("b_range", "mu_range"):
            lo, hi, steps = getattr(self, name)
            if int(steps) < 1 or int(steps) != steps:
                raise ValueError(f"{name} steps must be a positive integer")
            if not (math.isfinite(lo) and math.isfinite(hi)) or hi < lo:
                raise ValueError(f"{name} must be finite with max >= min")
        if self.b_range[0] < 0:
            raise ValueError("b_range must be non-negative")
        if self.mode not in ("hfb", "noninteracting"):
            raise ValueError(f"mode must be 'hfb' or 'noninteracting', got {self.mode!r}")

    @property
    def b_values(self) -> np.ndarray:
        lo, hi, n = self.b_range
        return np.linspace(lo, hi, int(n))

    @property
    def mu_values(self) -> np.ndarray:
        lo, hi, n = self.mu_range
        return np.linspace(lo, hi, int(n))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["b_range"] = list(self.b_range)
        d["mu_range"] = list(self.mu_range)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SweepSpec":
        d = dict(d)
        d["b_range"] = tuple(d["b_range"])
        d["mu_range"] = tuple(d["mu_range"])
        d["params"] = WaveguideParams(**d["params"])
        bp = d["band_pair"]
        d["band_pair"] = BandPair(SubbandIndex(*bp["alpha"]), SubbandIndex(*bp["beta"]))
        scf = dict(d["scf"])
        scf["kgrid"] = KGrid(**scf["kgrid"])
        if scf.get("initial") is not None:
            init = scf["initial"]
            scf["initial"] = MeanFields(
                init["sigma_alpha"], init["sigma_beta"], complex(*init["chi"]), complex(*init["delta"])
            )
        d["scf"] = ScfOptions(**scf)
        return cls(**d)

    def content_hash(self) -> str:
        blob = json.dumps(_jsonable(self.to_dict()), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


@dataclass(frozen=True)
class CellRecord:
    b: float
    mu: float
    phase: str
    g: int
    delta: float
    n_s: float
    n_t: float
    iterations: int
    converged: bool

    def to_row(self) -> list[str]:
        f = lambda x: format(float(x), ".17g")  # noqa: E731
        return [
            f(self.b), f(self.mu), self.phase, str(self.g), f(self.delta),
            f(self.n_s), f(self.n_t), str(self.iterations), "true" if self.converged else "false",
        ]

    @classmethod
    def from_row(cls, row: dict) -> "CellRecord":
        conv = row["converged"].strip().lower()
        if conv not in ("true", "false"):
            raise ValueError(f"bad converged flag {row['converged']!r}")
        rec = cls(
            b=float(row["b_tesla"]),
            mu=float(row["mu_meV"]),
            phase=row["phase"].strip(),
            g=int(row["g_e2_per_h"]),
            delta=float(row["delta_meV"]),
            n_s=float(row["n_s_inv_nm"]),
            n_t=float(row["n_t_inv_nm"]),
            iterations=int(row["iterations"]),
            converged=conv == "true",
        )
        if rec.phase not in ("P", "2S", "1S", "EMPTY", NOT_CONVERGED, FAILED):
            raise ValueError(f"unknown phase {rec.phase!r}")
        if not all(math.isfinite(x) for x in (rec.b, rec.mu, rec.delta, rec.n_s, rec.n_t)):
            raise ValueError("non-finite value in record")
        return rec


@dataclass
class SweepResult:
    spec: SweepSpec
    records: list  # row-major: index = i_mu * n_b + i_b; None for unsolved cells
    code_version: str = __version__
    timestamp: str = ""
    disagreements: list = field(default_factory=list)

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.spec.mu_values), len(self.spec.b_values)

    def grid(self, attr: str) -> np.ndarray:
        """Cell attribute as a (n_mu, n_b) array."""
        n_mu, n_b = self.shape
        vals = [getattr(r, attr) if r is not None else None for r in self.records]
        return np.array(vals, dtype=object).reshape(n_mu, n_b)

    def complete(self) -> bool:
        return all(r is not None and r.converged for r in self.records)


def _cold_options(spec: SweepSpec) -> ScfOptions:
    return replace(spec.scf, initial=None)


def _solve_cell(spec: SweepSpec, b: float, mu: float, initial: MeanFields | None):
    """Returns (record, converged fields or None)."""
    p = spec.params.replace(b_field=float(b), mu=float(mu))
    if spec.mode == "noninteracting":
        try:
            g = conductance_noninteracting(
                p, k_max=spec.cond_k_max, n_k=spec.cond_n_k, cutoff=spec.cond_cutoff
            )
        except KWindowError:
            return CellRecord(b, mu, FAILED, 0, 0.0, 0.0, 0.0, 0, False), None
        phase = {0: "EMPTY", 1: "1S"}.get(g, "2S")
        return CellRecord(b, mu, phase, g, 0.0, 0.0, 0.0, 0, True), None
    opts = replace(spec.scf, initial=initial)
    try:
        state = scf_solve(spec.band_pair, p, spec.u0, opts)
    except ScfError:
        return CellRecord(b, mu, FAILED, 0, math.nan, math.nan, math.nan, 0, False), None
    delta = abs(state.fields.delta)
    n_s, n_t = singlet_triplet_densities(state)
    if not state.converged:
        return CellRecord(b, mu, NOT_CONVERGED, 0, delta, n_s, n_t, state.iterations, False), None
    try:
        phase, g = classify_phase(state)
    except KWindowError:
        return CellRecord(b, mu, FAILED, 0, delta, n_s, n_t, state.iterations, False), None
    return CellRecord(b, mu, phase, g, delta, n_s, n_t, state.iterations, True), state.fields


def _solve_row(spec: SweepSpec, i_mu: int, b_indices, seeds: dict):
    """Solve the listed cells of one mu row in order of increasing B.

    seeds maps i_b -> MeanFields for cells whose left neighbour is already known.
    Returns list of (index, record, disagreement or None).
    """
    mu = spec.mu_values[i_mu]
    bs = spec.b_values
    out = []
    prev_fields = None
    prev_ib = None
    for i_b in b_indices:
        init = None
        if spec.warm_start:
            if prev_fields is not None and prev_ib == i_b - 1:
                init = prev_fields
            elif i_b in seeds:
                init = seeds[i_b]
        rec, fields = _solve_cell(spec, bs[i_b], mu, init)
        dis = None
        if spec.check_cold and init is not None:
            cold, _ = _solve_cell(spec, bs[i_b], mu, None)
            tol = spec.scf.tol
            if cold.phase != rec.phase or abs(cold.delta - rec.delta) > 10 * tol:
                dis = {
                    "b": float(bs[i_b]), "mu": float(mu),
                    "warm_phase": rec.phase, "warm_delta": rec.delta,
                    "cold_phase": cold.phase, "cold_delta": cold.delta,
                }
        out.append((i_mu * len(bs) + i_b, rec, dis))
        prev_fields, prev_ib = fields, i_b
    return out


class _CsvSink:
    """Appends completed cells to the CSV, one atomic line per cell."""

    def __init__(self, path: Path | None):
        self.path = path
        self.lock = threading.Lock()
        self.fh = None
        if path is not None:
            new = not path.exists() or path.stat().st_size == 0
            self.fh = open(path, "a", newline="")
            if new:
                self.fh.write(",".join(CSV_HEADER) + "\n")
                self.fh.flush()

    def add(self, rec: CellRecord):
        if self.fh is None:
            return
        with self.lock:
            self.fh.write(",".join(rec.to_row()) + "\n")
            self.fh.flush()

    def close(self):
        if self.fh is not None:
            self.fh.close()


def _run_cells(spec: SweepSpec, todo: dict, records: list, threads: int, sink: _CsvSink, disagreements: list):
    """todo: i_mu -> sorted b indices to solve."""
    n_b = len(spec.b_values)

    def seeds_for(i_mu, idxs):
        seeds = {}
        for i_b in idxs:
            left = records[i_mu * n_b + i_b - 1] if i_b > 0 else None
            if left is not None and left.converged and math.isfinite(left.delta):
                seeds[i_b] = MeanFields(delta=complex(left.delta))
        return seeds

    jobs = [(i_mu, idxs, seeds_for(i_mu, idxs)) for i_mu, idxs in sorted(todo.items()) if idxs]

    def collect(results):
        for idx, rec, dis in results:
            records[idx] = rec
            sink.add(rec)
            if dis is not None:
                disagreements.append(dis)

    if threads <= 1 or len(jobs) <= 1:
        for i_mu, idxs, seeds in jobs:
            collect(_solve_row(spec, i_mu, idxs, seeds))
        return
    with ProcessPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(_solve_row, spec, i_mu, idxs, seeds) for i_mu, idxs, seeds in jobs]
        for fut in futures:
            collect(fut.result())


def run_sweep(spec: SweepSpec, threads: int = 1, out: str | os.PathLike | None = None) -> SweepResult:
    """Solve every cell of the (B, mu) grid.

    Warm starts (when enabled) run along increasing B inside each mu row, with
    a cold start at the beginning of every row; rows are distributed over
    ``threads`` worker processes. If ``out`` is given, cells are appended to the
    CSV as they finish and the file is rewritten in grid order at the end.
    """
    n_mu, n_b = len(spec.mu_values), len(spec.b_values)
    result = SweepResult(spec, [None] * (n_mu * n_b), timestamp=_now())
    path = Path(out) if out is not None else None
    if path is not None:
        if path.exists():
            path.unlink()
        write_provenance(result, path)
    todo = {i: list(range(n_b)) for i in range(n_mu)}
    _execute(result, todo, threads, path)
    return result


def _execute(result: SweepResult, todo: dict, threads: int, path: Path | None):
    sink = _CsvSink(path)
    try:
        _run_cells(result.spec, todo, result.records, threads, sink, result.disagreements)
    finally:
        sink.close()
    if path is not None:
        save_sweep(result, path)


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def write_provenance(result: SweepResult, path) -> None:
    spec = result.spec
    doc = {
        "spec": _jsonable(spec.to_dict()),
        "hash": spec.content_hash(),
        "code_version": result.code_version,
        "timestamp": result.timestamp,
        "warm_cold_disagreements": result.disagreements,
    }
    side = sidecar_path(path)
    tmp = side.with_name(side.name + ".tmp")
    tmp.write_text(json.dumps(doc, indent=2, sort_keys=True))
    os.replace(tmp, side)


def save_sweep(result: SweepResult, path) -> None:
    """Write the grid-ordered CSV and its provenance sidecar."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="") as fh:
        fh.write(",".join(CSV_HEADER) + "\n")
        for rec in result.records:
            if rec is not None:
                fh.write(",".join(rec.to_row()) + "\n")
    os.replace(tmp, path)
    write_provenance(result, path)


def load_sweep(path, spec: SweepSpec | None = None) -> SweepResult:
    """Read a persisted sweep. Unparseable or off-grid lines are dropped (left unsolved).

    If ``spec`` is given its hash must match the sidecar.
    """
    path = Path(path)
    side = json.loads(sidecar_path(path).read_text())
    stored = SweepSpec.from_dict(side["spec"])
    if stored.content_hash() != side["hash"]:
        raise SweepSpecMismatch("sidecar hash does not match its own spec")
    if spec is not None and spec.content_hash() != side["hash"]:
        raise SweepSpecMismatch("persisted sweep was produced by a different spec")
    spec = stored
    bs, mus = spec.b_values, spec.mu_values
    n_b = len(bs)
    records = [None] * (len(mus) * n_b)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != CSV_HEADER:
            raise ValueError(f"{path}: unexpected CSV header {header}")
        for row in reader:
            if len(row) != len(CSV_HEADER):
                continue
            try:
                rec = CellRecord.from_row(dict(zip(CSV_HEADER, row)))
            except (ValueError, KeyError):
                continue
            i_b = int(np.argmin(np.abs(bs - rec.b)))
            i_mu = int(np.argmin(np.abs(mus - rec.mu)))
            if bs[i_b] != rec.b or mus[i_mu] != rec.mu:
                continue
            records[i_mu * n_b + i_b] = rec
    return SweepResult(
        spec, records, code_version=side.get("code_version", ""), timestamp=side.get("timestamp", ""),
        disagreements=list(side.get("warm_cold_disagreements", [])),
    )


def resume_sweep(path, spec: SweepSpec, threads: int = 1) -> SweepResult:
    """Recompute only missing, corrupted or non-converged cells of a persisted sweep."""
    result = load_sweep(path, spec)
    n_b = len(spec.b_values)
    todo: dict[int, list[int]] = {}
    for idx, rec in enumerate(result.records):
        if rec is None or not rec.converged:
            todo.setdefault(idx // n_b, []).append(idx % n_b)
    if not todo:
        return result
    result.code_version = __version__
    result.timestamp = _now()
    _execute(result, todo, threads, Path(path))
    return result


def extract_pairing_field(result: SweepResult, mu: float, threshold: float | None = None):
    """Largest B of the paired phase on the row mu, interpolated to the threshold.

    Returns None when the row has no P cell.
    """
    mus = result.spec.mu_values
    i_mu = int(np.argmin(np.abs(mus - mu)))
    if not math.isclose(mus[i_mu], mu, rel_tol=0, abs_tol=1e-9 * max(1.0, abs(mu))):
        raise ValueError(f"no mu row at {mu} meV in the sweep grid")
    thr = result.spec.scf.pairing_threshold if threshold is None else threshold
    bs = result.spec.b_values
    n_b = len(bs)
    row = result.records[i_mu * n_b:(i_mu + 1) * n_b]
    p_idx = [i for i, r in enumerate(row) if r is not None and r.phase == "P"]
    if not p_idx:
        return None
    last = p_idx[-1]
    if last == n_b - 1:
        return float(bs[last])
    nxt = row[last + 1]
    d0 = row[last].delta
    d1 = nxt.delta if nxt is not None and math.isfinite(nxt.delta) else 0.0
    if d0 <= d1:
        return float(bs[last])
    frac = min(max((d0 - thr) / (d0 - d1), 0.0), 1.0)
    return float(bs[last] + frac * (bs[last + 1] - bs[last]))
