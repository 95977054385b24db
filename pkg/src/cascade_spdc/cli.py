"""Command-line entry point: one command per experiment, CSV/JSON outputs plus a run manifest."""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .biphoton import (
    NumericalError,
    brightness,
    brightness_convergence,
    cascade_of,
    joint_spectrum,
    scaling_study,
    spectrum_metrics,
)
from .config import (
    ConfigError,
    build_cascade,
    config_hash,
    load_document,
    parse_spectrometer,
    polstate_detuning,
    scaling_n_values,
    theta_grid,
    tomography_settings,
    tomography_states,
)
from .polarization import concurrence_map, concurrence_vs_rotation, density_matrix
from .spectrometer import map_to_histogram, recover_spectrum
from .tomography import simulate_counts, table1_pipeline, write_table1

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

COMMANDS = (
    "spectrum",
    "scaling",
    "polstate",
    "concurrence-map",
    "concurrence-vs-theta",
    "tomography",
    "spectrometer",
)


class RunContext:
    """Tracks files written by a command so a failed run can remove them."""

    def __init__(self, out_dir: Path, args):
        self.out_dir = out_dir
        self.args = args
        self.outputs: list[Path] = []

    def path(self, name: str) -> Path:
        p = self.out_dir / name
        self.outputs.append(p)
        return p

    def cascade(self, doc, path: str = ""):
        return build_cascade(doc, path, self.args.grid_points)

    def check(self, config) -> None:
        if self.args.strict:
            brightness_convergence(config)

    def write_json(self, name: str, payload) -> None:
        with open(self.path(name), "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _fmt(x) -> str:
    return "" if x is None else f"{x:.8e}"


def cmd_spectrum(ctx: RunContext, doc: dict) -> None:
    config = ctx.cascade(doc)
    ctx.check(config)
    table = joint_spectrum(config)
    table.to_csv(ctx.path("spectrum.csv"))
    m = spectrum_metrics(table)
    with open(ctx.path("spectrum_metrics.csv"), "w") as fh:
        fh.write("mode,brightness,fwhm_rad_s,visibility,mode_spacing_rad_s\n")
        fh.write(f"{table.mode},{_fmt(brightness(table))},{_fmt(m.fwhm)},{_fmt(m.visibility)},{_fmt(m.mode_spacing)}\n")


def cmd_scaling(ctx: RunContext, doc: dict) -> None:
    template = ctx.cascade(doc)
    n_values = scaling_n_values(doc)
    if ctx.args.strict:
        for mode in ("coherent", "incoherent"):
            ctx.check(cascade_of(template, max(n_values), mode))
    results = [scaling_study(template, n_values, mode) for mode in ("coherent", "incoherent")]
    with open(ctx.path("scaling.csv"), "w") as fh:
        fh.write("mode,n_segments,brightness,fwhm_rad_s\n")
        for res in results:
            for row in res.rows:
                fh.write(f"{res.mode},{row.n},{_fmt(row.brightness)},{_fmt(row.fwhm)}\n")
    with open(ctx.path("scaling_slopes.csv"), "w") as fh:
        fh.write("mode,brightness_slope,fwhm_slope\n")
        for res in results:
            fh.write(f"{res.mode},{res.brightness_slope:.6f},{res.fwhm_slope:.6f}\n")


def cmd_polstate(ctx: RunContext, doc: dict) -> None:
    config = ctx.cascade(doc)
    ctx.check(config)
    rho = density_matrix(config, polstate_detuning(doc))
    ctx.write_json("density_matrix.json", rho.to_json_dict())


def cmd_concurrence_map(ctx: RunContext, doc: dict) -> None:
    config = ctx.cascade(doc)
    ctx.check(config)
    concurrence_map(config).to_csv(ctx.path("concurrence_map.csv"))


def cmd_concurrence_vs_theta(ctx: RunContext, doc: dict) -> None:
    config = ctx.cascade(doc)
    ctx.check(config)
    start, stop, points = theta_grid(doc)
    curve = concurrence_vs_rotation(config, np.linspace(start, stop, points))
    with open(ctx.path("concurrence_vs_theta.csv"), "w") as fh:
        fh.write("theta_rad,concurrence\n")
        for theta, c in curve:
            fh.write(f"{theta:.8e},{c:.8e}\n")


def cmd_tomography(ctx: RunContext, doc: dict) -> None:
    total_pairs, n_seeds = tomography_settings(doc)
    seeds = [(ctx.args.seed + i) % 2**64 for i in range(n_seeds)]
    states = []
    for label, config, measured in tomography_states(doc, ctx.args.grid_points):
        ctx.check(config)
        states.append((label, density_matrix(config), measured))
    write_table1(table1_pipeline(states, total_pairs, seeds), ctx.path("table1.csv"))
    for i, (label, rho, _) in enumerate(states):
        simulate_counts(rho, total_pairs, ctx.args.seed).to_csv(ctx.path(f"counts_{i}.csv"))


def cmd_spectrometer(ctx: RunContext, doc: dict) -> None:
    config = ctx.cascade(doc)
    model = parse_spectrometer(doc)
    ctx.check(config)
    hist = map_to_histogram(joint_spectrum(config), model)
    hist.to_csv(ctx.path("histogram.csv"))
    recover_spectrum(hist, model).to_csv(ctx.path("recovered_spectrum.csv"))


HANDLERS = {
    "spectrum": cmd_spectrum,
    "scaling": cmd_scaling,
    "polstate": cmd_polstate,
    "concurrence-map": cmd_concurrence_map,
    "concurrence-vs-theta": cmd_concurrence_vs_theta,
    "tomography": cmd_tomography,
    "spectrometer": cmd_spectrometer,
}


def _seed(text: str) -> int:
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid seed {text!r}")
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cascade-spdc", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, type=Path, help="JSON experiment config")
    parser.add_argument("--out", type=Path, default=Path("."), help="output directory (default: .)")
    parser.add_argument("--seed", type=_seed, default=0, help="RNG seed for tomography (default: 0)")
    parser.add_argument("--grid-points", type=int, default=None, help="override grid.points (odd, >= 16)")
    parser.add_argument("--strict", action="store_true", help="fail unless brightness converges under grid doubling")
    return parser


def _write_manifest(out_dir: Path, payload: dict) -> None:
    with open(out_dir / "run_manifest.json", "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    started = time.perf_counter()
    out_dir = args.out
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        probe = out_dir / ".write_probe"
        probe.touch()
        probe.unlink()
    except OSError as exc:
        print(f"error: output directory {out_dir} is not writable: {exc.strerror}", file=sys.stderr)
        return EXIT_CONFIG

    ctx = RunContext(out_dir, args)
    manifest = {
        "command": args.command,
        "config_path": str(args.config),
        "config_sha256": None,
        "seed": args.seed,
        "grid_points_override": args.grid_points,
        "strict": args.strict,
        "tool_version": __version__,
    }
    status, message = EXIT_OK, None
    try:
        doc = load_document(args.config)
        manifest["config_sha256"] = config_hash(doc)
        HANDLERS[args.command](ctx, doc)
    except ConfigError as exc:
        status, message = EXIT_CONFIG, f"config error: {exc}"
    except (NumericalError, ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
        status, message = EXIT_NUMERICAL, f"numerical failure: {exc}"

    if status != EXIT_OK:
        for p in ctx.outputs:
            p.unlink(missing_ok=True)
        ctx.outputs.clear()
        print(f"error: {message}", file=sys.stderr)
    manifest["status"] = "ok" if status == EXIT_OK else "failed"
    manifest["exit_code"] = status
    manifest["error"] = message
    manifest["outputs"] = [p.name for p in ctx.outputs]
    manifest["duration_s"] = round(time.perf_counter() - started, 6)
    _write_manifest(out_dir, manifest)
    return status


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
