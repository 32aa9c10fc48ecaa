"""Command-line entry point: ``soc1d <subcommand> [--config FILE] [--out PATH] ...``

Exit codes: 0 success, 1 usage or configuration error, 2 I/O error,
3 numerical failure (non-convergence only when --fail-hard is given).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import signal
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bandstructure import BandStructureError, alpha_r_map, band_structure
from .config import ConfigError, RunConfig, grid, load_config
from .hfb import ScfError, classify_phase, pair_amplitudes, scf_solve, singlet_triplet_densities
from .sweep import SweepSpecMismatch, resume_sweep, run_sweep, sidecar_path
from .waveguide import KWindowError, conductance_noninteracting, overlap_appendix_a

log = logging.getLogger("soc1d")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3
OVERLAP_WARN = 0.9


class UsageError(Exception):
    pass


class NumericalFailure(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _fmt(x) -> str:
    return format(float(x), ".17g")


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _svg_path(out: Path, suffix: str = "") -> Path:
    return out.with_name(out.stem + suffix + ".svg")


def cmd_bands(cfg: RunConfig, out: Path, args) -> int:
    o = cfg.bands
    kx = np.linspace(o.kx_min, o.kx_max, o.n_points)
    try:
        e = band_structure(kx, cfg.interface)
    except BandStructureError as exc:
        raise NumericalFailure(str(exc)) from None
    header = ["kx_nm_inv"] + [f"e{i}_meV" for i in range(1, 7)]
    _write_csv(out, header, ([_fmt(k)] + [_fmt(v) for v in row] for k, row in zip(kx, e)))
    if args.svg:
        from .plotting import line_plot

        line_plot(kx, e, _svg_path(out), r"$k_x$ (1/nm)", "E (meV)")
    return EXIT_OK


def cmd_alpha_r(cfg: RunConfig, out: Path, args) -> int:
    o = cfg.alpha_r
    dey, dez = grid(o.dey_range), grid(o.dez_range)
    res = alpha_r_map(dey, dez, cfg.interface, method=o.method, k_window=o.k_window, n_points=o.n_points)
    for (i, j), msg in sorted(res.errors.items()):
        log.warning("alpha_R failed at dey=%g dez=%g: %s", dey[j], dez[i], msg)
    rows = []
    for i, ez in enumerate(dez):
        for j, ey in enumerate(dey):
            if ey > ez:
                continue
            rows.append([_fmt(ey), _fmt(ez), _fmt(res.alpha[i, j])])
    _write_csv(out, ["dey_meV", "dez_meV", "alpha_r_meV_nm"], rows)
    if args.svg:
        from .plotting import heatmap

        heatmap(dey, dez, res.alpha, _svg_path(out), r"$\Delta E_y$ (meV)", r"$\Delta E_z$ (meV)",
                r"$\alpha_R$ (meV nm)")
    if res.errors and args.fail_hard:
        raise NumericalFailure(f"{len(res.errors)} alpha_R cells failed")
    return EXIT_OK


def _overlap_check(p, b_values):
    alpha = p.alpha_l
    if alpha == 0:
        return
    b_values = np.asarray(b_values, dtype=float)
    dense = np.linspace(b_values.min(), b_values.max(), 801)
    worst = min(overlap_appendix_a(float(b), alpha, p) for b in np.concatenate([dense, b_values]))
    if worst < OVERLAP_WARN:
        log.warning(
            "spin-displaced lateral states overlap only %.4f (< %.1f) on this B range; "
            "the spin-independent guiding-centre approximation is degraded", worst, OVERLAP_WARN,
        )


def cmd_conductance(cfg: RunConfig, out: Path, args) -> int:
    o = cfg.conductance
    p = cfg.waveguide
    bs, mus = grid(o.b_range), grid(o.mu_range)
    _overlap_check(p, bs)
    g = np.zeros((len(mus), len(bs)))
    rows = []
    failures = 0
    for i, mu in enumerate(mus):
        for j, b in enumerate(bs):
            try:
                val = conductance_noninteracting(
                    p.replace(b_field=float(b), mu=float(mu)), k_max=o.k_max, n_k=o.n_k, cutoff=o.cutoff
                )
                rows.append([_fmt(b), _fmt(mu), str(val)])
                g[i, j] = val
            except KWindowError as exc:
                if args.fail_hard:
                    raise NumericalFailure(str(exc)) from None
                failures += 1
                log.warning("B=%g mu=%g: %s", b, mu, exc)
                rows.append([_fmt(b), _fmt(mu), "nan"])
                g[i, j] = np.nan
    _write_csv(out, ["b_tesla", "mu_meV", "g_e2_per_h"], rows)
    if args.svg:
        from .plotting import heatmap

        heatmap(bs, mus, g, _svg_path(out), "B (T)", r"$\mu$ (meV)", r"G ($e^2/h$)", discrete=True)
    return EXIT_OK


def scf_record(state) -> dict:
    p = state.params
    n_s, n_t = singlet_triplet_densities(state)
    if state.converged:
        try:
            phase, g = classify_phase(state)
        except KWindowError:
            phase, g = "FAIL", None
    else:
        phase, g = "NC", None
    f = state.fields
    return {
        "b": p.b_field, "mu": p.mu, "u0": state.u0, "alpha_v": p.alpha_v, "alpha_l": p.alpha_l,
        "t": p.temperature, "delta": abs(f.delta), "sigma_alpha": f.sigma_alpha,
        "sigma_beta": f.sigma_beta, "chi_re": f.chi.real, "chi_im": f.chi.imag,
        "phase": phase, "g": g, "n_s": n_s, "n_t": n_t, "iterations": state.iterations,
        "residual": state.residual, "converged": state.converged,
    }


def cmd_scf(cfg: RunConfig, out: Path, args) -> int:
    _overlap_check(cfg.waveguide, [cfg.waveguide.b_field])
    try:
        state = scf_solve(cfg.band_pair, cfg.waveguide, cfg.u0, cfg.scf)
    except ScfError as exc:
        raise NumericalFailure(str(exc)) from None
    for w in state.warnings:
        log.warning("%s", w)
    rec = scf_record(state)
    out.write_text(json.dumps(rec, indent=2) + "\n")
    s, t = pair_amplitudes(state)
    c = state.correlations
    if args.dump:
        rows = (
            [_fmt(k), _fmt(a), _fmt(b), _fmt(pr.real), _fmt(pr.imag), _fmt(abs(ss)), _fmt(abs(tt))]
            for k, a, b, pr, ss, tt in zip(state.k, c.occ_alpha, c.occ_beta, c.pair_ab, s, t)
        )
        _write_csv(Path(args.dump),
                   ["k_nm_inv", "occ_alpha", "occ_beta", "pair_re", "pair_im", "singlet_abs", "triplet_abs"],
                   rows)
    if args.svg:
        from .plotting import line_plot

        line_plot(state.k, np.column_stack([np.abs(s), np.abs(t)]), _svg_path(out, "_pairs"),
                  "k (1/nm)", "amplitude", labels=[r"$|\langle s_k\rangle|$", r"$|\langle t_k\rangle|$"])
        line_plot(state.k, state.quasi_energies, _svg_path(out, "_spectrum"), "k (1/nm)", "E (meV)")
    if not state.converged and args.fail_hard:
        raise NumericalFailure(
            f"SCF not converged after {state.iterations} iterations (residual {state.residual:.3e})"
        )
    return EXIT_OK


def cmd_sweep(cfg: RunConfig, out: Path, args) -> int:
    spec = cfg.sweep
    if spec.mode == "hfb":
        _overlap_check(spec.params, spec.b_values)
    threads = args.threads
    if args.resume and out.exists() and sidecar_path(out).exists():
        try:
            result = resume_sweep(out, spec, threads=threads)
        except SweepSpecMismatch as exc:
            raise UsageError(f"cannot resume {out}: {exc}") from None
    else:
        result = run_sweep(spec, threads=threads, out=out)
    for d in result.disagreements:
        log.warning("warm and cold starts disagree at B=%g mu=%g: %s/%g vs %s/%g", d["b"], d["mu"],
                    d["warm_phase"], d["warm_delta"], d["cold_phase"], d["cold_delta"])
    if args.svg:
        from .plotting import heatmap, phase_map

        bs, mus = spec.b_values, spec.mu_values
        phase_map(bs, mus, result.grid("phase"), _svg_path(out, "_phase"))
        heatmap(bs, mus, result.grid("delta").astype(float), _svg_path(out, "_delta"), "B (T)",
                r"$\mu$ (meV)", r"$|\Delta|$ (meV)")
        heatmap(bs, mus, result.grid("g").astype(float), _svg_path(out, "_g"), "B (T)",
                r"$\mu$ (meV)", r"G ($e^2/h$)", discrete=True)
    bad = sum(1 for r in result.records if not r.converged)
    if bad:
        log.warning("%d of %d cells not converged or failed", bad, len(result.records))
        if args.fail_hard:
            raise NumericalFailure(f"{bad} sweep cells not converged")
    return EXIT_OK


def cmd_overlap(cfg: RunConfig, out: Path, args) -> int:
    o = cfg.overlap
    p = cfg.waveguide
    bs = grid(o.b_range)
    vals = np.array([[overlap_appendix_a(float(b), a, p) for a in o.alpha_l] for b in bs])
    rows = ([_fmt(b), _fmt(a), _fmt(vals[i, j])] for i, b in enumerate(bs) for j, a in enumerate(o.alpha_l))
    _write_csv(out, ["b_tesla", "alpha_l_meV_nm", "overlap"], rows)
    print(f"minimum overlap {_fmt(vals.min())}")
    if vals.min() < OVERLAP_WARN:
        log.warning("overlap drops below %.1f on the requested grid", OVERLAP_WARN)
    if args.svg:
        from .plotting import line_plot

        line_plot(bs, vals, _svg_path(out), "B (T)", "overlap",
                  labels=[rf"$\alpha_l$ = {a:g} meV nm" for a in o.alpha_l])
    return EXIT_OK


COMMANDS = {
    "bands": (cmd_bands, "bands.csv", "six-band interface energies along k_x"),
    "alpha-r": (cmd_alpha_r, "alpha_r.csv", "Rashba coupling over (dE_y, dE_z)"),
    "conductance": (cmd_conductance, "conductance.csv", "noninteracting conductance map"),
    "scf": (cmd_scf, "scf.json", "single-point HFB solution"),
    "sweep": (cmd_sweep, "sweep.csv", "(B, mu) phase diagram sweep"),
    "overlap": (cmd_overlap, "overlap.csv", "spin-displaced lateral state overlap"),
}


def _threads(value) -> int:
    try:
        n = int(value)
    except (TypeError, ValueError):
        raise argparse.ArgumentTypeError(f"invalid thread count {value!r}") from None
    if n < 1:
        raise argparse.ArgumentTypeError("thread count must be >= 1")
    return n


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--out", help="output file (CSV, or JSON for scf)")
    common.add_argument("--svg", action="store_true", help="also render SVG figures next to the output")
    common.add_argument("--threads", type=_threads, default=None,
                        help="worker processes for sweeps (default: $SOC1D_THREADS or 1)")
    common.add_argument("--fail-hard", action="store_true",
                        help="exit with code 3 on any non-converged or failed calculation")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="soc1d", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, (_, _, help_) in COMMANDS.items():
        sp = sub.add_parser(name, parents=[common], help=help_, description=help_)
        if name == "scf":
            sp.add_argument("--dump", help="per-k correlation CSV")
        if name == "sweep":
            sp.add_argument("--resume", action="store_true",
                            help="complete an existing sweep file instead of starting over")
    return parser


def _on_sigterm(signum, frame):
    raise KeyboardInterrupt


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    if args.threads is None:
        env = os.environ.get("SOC1D_THREADS")
        try:
            args.threads = _threads(env) if env else 1
        except argparse.ArgumentTypeError as exc:
            print(f"soc1d: error: SOC1D_THREADS: {exc}", file=sys.stderr)
            return EXIT_USAGE
    func, default_out, _ = COMMANDS[args.command]
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"soc1d: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"soc1d: cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    out = Path(args.out or cfg.out or default_out)
    previous = signal.signal(signal.SIGTERM, _on_sigterm)
    try:
        return func(cfg, out, args)
    except UsageError as exc:
        print(f"soc1d: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalFailure as exc:
        print(f"soc1d: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"soc1d: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except KeyboardInterrupt:
        print(f"soc1d: interrupted; completed results kept in {out}", file=sys.stderr)
        return 130
    finally:
        signal.signal(signal.SIGTERM, previous)


if __name__ == "__main__":
    sys.exit(main())
