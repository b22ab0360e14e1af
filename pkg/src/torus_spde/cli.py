"""Command line interface: ``torus-spde {simulate,ensemble,renorm,analyze}``."""

from __future__ import annotations

import argparse
import math
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .ensemble import PRESETS, export_ensemble, fit_loglog_slope, ic_from_label, overlay_prediction, preset, run_ensemble
from .errors import ArtifactIOError, ConfigError, DomainError, NumericalError
from .grid import GridSpec, forward_dft, radial_energy_density
from .io import read_prediction, read_spectra, write_manifest, write_prediction, write_radial_spectrum, write_snapshot
from .noise import NoiseSpec
from .renorm import PredictionCurve, cn_curve, heat_series_curve, mode_energy_curve, norm_curve, solve_CN
from .solvers import SchemeConfig, integrate_trajectory

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4


def _steps(dt: float, T: float) -> int:
    if not dt > 0 or T < 0:
        raise ConfigError("need dt > 0 and T >= 0")
    M = round(T / dt)
    if not math.isclose(M * dt, T, rel_tol=1e-9, abs_tol=1e-12):
        raise ConfigError(f"T={T} is not a whole number of steps dt={dt}")
    return M


def cmd_simulate(args: argparse.Namespace) -> int:
    M = _steps(args.dt, args.t_final)
    dealias = None if args.dealias is None else args.dealias == "on"
    scheme = SchemeConfig(args.equation, alpha=args.alpha, g=args.g, sigma=args.sigma, T=args.t_final, M=M, dealias=dealias)
    grid = GridSpec(args.dim, args.n)
    ic = ic_from_label(args.ic)
    spec = NoiseSpec(args.sigma, args.seed, 0)
    every = args.snapshot_every
    wanted = range(0, M + 1, every) if every else ()
    start = time.perf_counter()
    final, snaps = integrate_trajectory(scheme, ic, spec, grid, wanted)
    wall = time.perf_counter() - start
    out = Path(args.out)
    artifacts = [write_snapshot(out / "final.tspd", final)]
    artifacts += [write_snapshot(out / f"step_{m:08d}.tspd", f) for m, f in sorted(snaps.items())]
    if grid.d == 2:
        artifacts.append(write_radial_spectrum(out / "spectrum.csv", radial_energy_density(forward_dft(final))))
    manifest = {
        "software": f"torus_spde {__version__}",
        "command": "simulate",
        "scheme": asdict(scheme),
        "grid": {"d": grid.d, "N": grid.N},
        "ic": args.ic,
        "master_seed": args.seed,
        "realization_seeds": {str(grid.N): [spec.seed]},
        "snapshot_steps": sorted(snaps),
        "wall_clock_seconds": wall,
    }
    write_manifest(out / "manifest.json", manifest, artifacts)
    print(f"wrote {len(artifacts)} artifact(s) to {out}")
    return EXIT_OK


def cmd_ensemble(args: argparse.Namespace) -> int:
    config = preset(args.preset, full=args.full, realizations=args.realizations, master_seed=args.seed)
    stats = run_ensemble(config, workers=args.workers)
    path = export_ensemble(stats, args.out)
    for n in stats.Ns:
        line = f"N={n}: <|u|^2> = {stats.norm_sq[n].mean:.6g} +/- {stats.norm_sq[n].stderr:.2g}"
        if n in stats.spectra:
            line += f", largest stderr {stats.largest_stderr(n, n // 2):.3g}"
        print(line)
    print(f"manifest: {path}")
    return EXIT_OK


def _curve(args: argparse.Namespace) -> PredictionCurve:
    ns = [2**p for p in range(4, int(math.log2(args.n)) + 1)] or [args.n]
    if args.curve == "cn":
        return cn_curve(args.sigma, ns)
    if args.curve == "mode-energy":
        return mode_energy_curve(np.arange(1, args.n // 2 + 1), args.n, args.sigma)
    if args.curve == "norm":
        return norm_curve(args.s, args.sigma, ns)
    return heat_series_curve(2, args.sigma, args.t, args.s, ns)


def cmd_renorm(args: argparse.Namespace) -> int:
    res = solve_CN(args.sigma, args.n)
    print(f"C_N = {res.C_N!r} (N={res.N}, sigma={res.sigma}, residual={res.residual:.2e}, iterations={res.iterations})")
    if args.curve:
        curve = _curve(args)
        path = write_prediction(Path(args.out) / f"prediction_{args.curve}.csv", curve.x, curve.values, curve.source)
        print(f"wrote {path}")
    return EXIT_OK


def _parse_range(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(v) for v in text.split(":"))
    except ValueError as exc:
        raise ConfigError(f"--fit expects kmin:kmax, got {text!r}") from exc
    return lo, hi


def cmd_analyze(args: argparse.Namespace) -> int:
    spectra = read_spectra(args.spectra)
    if args.fit:
        kr = _parse_range(args.fit)
        print("N,slope,intercept,r_squared,n_points")
        for n in sorted(spectra):
            f = fit_loglog_slope(spectra, n, kr)
            print(f"{n},{f.slope!r},{f.intercept!r},{f.r_squared!r},{f.n_points}")
    if args.overlay:
        x, v, source = read_prediction(args.overlay)
        curve = PredictionCurve(x, v, source)
        print("N,x,measured,predicted,ratio")
        for n in sorted(spectra):
            for row in overlay_prediction(spectra, curve, N=n):
                ratio = "undefined" if row.ratio is None else repr(row.ratio)
                print(f"{n},{row.x!r},{row.measured!r},{row.predicted!r},{ratio}")
    if not (args.fit or args.overlay):
        for n in sorted(spectra):
            t = spectra[n]
            print(f"N={n}: {t.kappa.size} bins, largest stderr {float(t.stderr.max()) if t.stderr.size else 0.0:.3g}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="torus-spde", description="Stochastic Allen-Cahn regularizations on the torus.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="integrate one realization")
    s.add_argument("--equation", choices=["heat", "dac", "ac"], required=True)
    s.add_argument("--dim", type=int, choices=[1, 2], default=2)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--dt", type=float, required=True)
    s.add_argument("--t-final", type=float, required=True)
    s.add_argument("--sigma", type=float, default=0.0)
    s.add_argument("--alpha", type=float, default=1.0)
    s.add_argument("--g", type=float, default=1.0)
    s.add_argument("--ic", default="zero", help="zero, sin2x or file:<path>")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--dealias", choices=["on", "off"], default=None)
    s.add_argument("--snapshot-every", type=int, default=0, metavar="STEPS")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("ensemble", help="run a figure preset")
    e.add_argument("--preset", choices=PRESETS, required=True)
    e.add_argument("--full", action="store_true", help="use the full resolution list (slow)")
    e.add_argument("--realizations", type=int, default=None)
    e.add_argument("--workers", type=int, default=1)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_ensemble)

    r = sub.add_parser("renorm", help="Wick constant and prediction curves")
    r.add_argument("--sigma", type=float, required=True)
    r.add_argument("--n", type=int, required=True)
    r.add_argument("--curve", choices=["cn", "mode-energy", "norm", "heat-series"], default=None)
    r.add_argument("--s", type=float, default=0.0, help="Sobolev order for norm curves")
    r.add_argument("--t", type=float, default=math.inf, help="time for heat-series curves")
    r.add_argument("--out", default=".")
    r.set_defaults(func=cmd_renorm)

    a = sub.add_parser("analyze", help="fit and overlay exported spectra")
    a.add_argument("--spectra", required=True)
    a.add_argument("--fit", default=None, metavar="KMIN:KMAX")
    a.add_argument("--overlay", default=None, metavar="CSV")
    a.set_defaults(func=cmd_analyze)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ArtifactIOError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
