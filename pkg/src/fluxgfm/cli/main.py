#!/usr/bin/env python3
"""
fluxgfm - virtual-flux grid-forming control toolkit

Usage:
    fluxgfm gains                          # Design gains, print identity checks
    fluxgfm eig-sweep --n-points 10        # Pole trajectories over L, CSV + gnuplot
    fluxgfm simulate step_L050             # Run a named scenario
    fluxgfm simulate my_case.json          # Run a scenario file
    fluxgfm linearize --L 1.0              # Closed-loop matrix and spectrum

Common options:
    --config FILE    JSON configuration (defaults follow the 20 kVA rating)
    --out DIR        Output directory for CSV / JSON / gnuplot files
    -v / -vv         INFO / DEBUG logging on stderr

Exit codes: 0 ok, 2 infeasible setpoint, 3 placement failure,
4 unstable sweep sample, 5 simulation divergence, 6 no equilibrium.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from ..errors import (
    CheckCollection,
    Color,
    FluxGFMError,
    InvalidScenario,
    UnstableSweep,
    find_similar,
)
from ..numerics import J, eig_small
from ..scenarios import (
    Scenario,
    extract_metrics,
    load_scenario_file,
    scenario_plot_script,
    simulate,
    standard_scenarios,
    sweep_plot_script,
    write_metrics_json,
    write_timeseries_csv,
)
from ..scenarios.output import write_text
from ..smallsignal import (
    REDUCED_LABELS,
    STATE_LABELS,
    closed_loop_matrix,
    dominant_pole,
    pole_sweep,
)
from ..tuning import full_design
from .config import Config

logger = logging.getLogger("fluxgfm")

IDENTITY_TOL = 1e-9


def _configure_logging(verbosity: int) -> None:
    level = logging.WARNING
    if verbosity == 1:
        level = logging.INFO
    elif verbosity >= 2:
        level = logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def _out_dir(args: argparse.Namespace) -> Path:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _vec(v: np.ndarray) -> str:
    return "[" + ", ".join(f"{x: .6g}" for x in np.ravel(v)) + "]"


# =============================================================================
# Commands
# =============================================================================

def cmd_gains(config: Config, args: argparse.Namespace) -> int:
    color = Color(sys.stdout)
    spec = config.tuning_spec()
    design = full_design(spec, config.plant_params())
    g, sp = design.gains, design.setpoints
    w0 = spec.omega0

    print(color.bold("Bases (configured / from ratings)"))
    for label, configured, derived, unit in config.plant.base_checks(config.plant_params()):
        print(f"  {label:<16} {configured:.6g} / {derived:.6g} {unit}")
    print(color.bold("Operating point"))
    print(f"  delta*   = {sp.delta_star:.6f} rad ({math.degrees(sp.delta_star):.4f} deg)")
    print(f"  u_g*     = {_vec(sp.u_g_star)} pu")
    print(f"  psi_g*   = {_vec(sp.psi_g_star)} pu*s")
    print(f"  psi*     = {_vec(sp.psi_star)} pu*s")
    print(color.bold("Gains"))
    print(f"  k_o      = {_vec(g.k_o)}")
    print(f"  K_o      = {_vec(g.K_o)}")
    print(f"  k_p      = {_vec(g.k_p)}")
    print(f"  k_i      = {_vec(g.k_i)}")
    print(f"  k_v      = {_vec(g.k_v)}")
    print(f"  tau_delta = {1e3 * g.tau_delta:.4f} ms (load-angle reference lag)")
    print(color.bold("Placed eigenvalues (units of omega0)"))
    observer = eig_small(-w0 * J - g.K_o)
    voltage = eig_small(-w0 * J - np.outer(g.k_v, [0.0, -w0]))
    print(f"  observer = {[complex(v / w0) for v in observer.values]}")
    print(f"  voltage  = {[complex(v / w0) for v in voltage.values]}")

    checks = CheckCollection()
    for name, residual in design.residuals.items():
        checks.add(name, residual, IDENTITY_TOL)
    print(color.bold("Identity checks"))
    print(checks.format_all(color))

    if args.out:
        path = _out_dir(args) / "gains.json"
        path.write_text(json.dumps(
            {"setpoints": sp.to_dict(), "gains": g.to_dict(), "residuals": design.residuals}, indent=2
        ) + "\n")
        logger.info("wrote %s", path)
    return 0 if checks.all_passed() else 3


def cmd_eig_sweep(config: Config, args: argparse.Namespace) -> int:
    color = Color(sys.stdout)
    sweep = config.sweep
    if args.L_min is not None:
        sweep.L_min_pu = args.L_min
    if args.L_max is not None:
        sweep.L_max_pu = args.L_max
    if args.n_points is not None:
        sweep.n_points = args.n_points
    sweep.validate()

    spec = config.tuning_spec()
    gains, sp = full_design(spec, config.plant_params())
    result = pole_sweep(gains, sp, config.plant_params(), sweep.L_values())

    out = _out_dir(args)
    csv_path = result.write_csv(out / "poles.csv", config.simulation.float_format)
    write_text(out / "poles.gp", sweep_plot_script(csv_path.name, spec.omega0))

    w0 = spec.omega0
    print(f"{'L (pu)':>8}  {'dominant pole / omega0':>26}")
    for sample in result.samples:
        if sample.spectrum is None:
            print(f"{sample.L_pu:8.4f}  {color.red('no equilibrium: ' + str(sample.error))}")
            continue
        pole = dominant_pole(sample.spectrum) / w0
        text = f"{pole.real:+.4f}{pole.imag:+.4f}j"
        print(f"{sample.L_pu:8.4f}  {text:>26}" + ("" if sample.stable else "  " + color.red("UNSTABLE")))
    print(f"wrote {csv_path}")

    if not result.all_stable:
        raise UnstableSweep(
            f"{len(result.unstable_L)} unstable sweep sample(s)",
            unstable_L=result.unstable_L,
            notes=["L = " + ", ".join(f"{L:.4g}" for L in result.unstable_L) + " pu"],
        )
    return 0


def _resolve_scenario(config: Config, name: str) -> Scenario:
    sim = config.simulation
    spec = config.tuning_spec()
    plant = config.plant_params()
    options = dict(
        mode=sim.mode,
        sample_rate_hz=sim.sample_rate_hz,
        step_s=sim.step_s,
        output_rate_hz=sim.output_rate_hz,
    )
    named = standard_scenarios(spec, plant)
    if name in named:
        return replace(named[name], **options)
    path = Path(name)
    if path.suffix == ".json" or path.exists():
        return load_scenario_file(path, spec, plant, **options)
    similar = find_similar(name, list(named))
    notes = [f"did you mean '{similar[0]}'?"] if similar else [f"named scenarios: {', '.join(named)}"]
    raise InvalidScenario(f"unknown scenario '{name}'", notes=notes)


def cmd_simulate(config: Config, args: argparse.Namespace) -> int:
    color = Color(sys.stdout)
    sim = config.simulation
    if args.mode:
        sim.mode = args.mode
    if args.float_format:
        sim.float_format = args.float_format
    sim.validate()

    sc = _resolve_scenario(config, args.scenario or sim.scenario)
    ts = simulate(sc)

    out = _out_dir(args)
    csv_path = write_timeseries_csv(ts, out / f"{sc.name}.csv", sim.float_format)
    write_text(out / f"{sc.name}.gp", scenario_plot_script(csv_path.name, sc.name, sc.plant.omega_base))
    metrics = extract_metrics(ts, sc)
    write_metrics_json(metrics, out / f"{sc.name}_metrics.json")

    print(color.bold(f"Scenario {sc.name} ({sc.mode}, L = {sc.plant.L_pu} pu)"))
    for step in metrics.steps:
        print(
            f"  step at {step.t_event:.3f} s to p* = {step.p_star:.3g}: "
            f"settling {1e3 * step.settling_time_2pct:.2f} ms, overshoot {step.overshoot:.4f} pu, "
            f"V excursion {step.V_excursion:.4f} pu"
        )
    print(f"  max V excursion   {metrics.V_excursion_max:.4f} pu")
    print(f"  steady p offset   {metrics.steady_p_offset:+.4f} pu")
    print(f"  max |w_c - w_g|   {metrics.omega_tracking_max / (2 * math.pi):.4f} Hz")
    if metrics.D_p is not None:
        print(f"  droop D_p         {metrics.D_p:.3f} pu")
    print(f"wrote {csv_path}")
    return 0


def cmd_linearize(config: Config, args: argparse.Namespace) -> int:
    color = Color(sys.stdout)
    spec = config.tuning_spec()
    gains, sp = full_design(spec, config.plant_params())
    L = args.L if args.L is not None else config.plant.L_pu
    omega_g = 2 * math.pi * args.f_grid if args.f_grid is not None else None
    model = closed_loop_matrix(gains, sp, config.plant_params(L), omega_g)
    w0 = spec.omega0

    eq = model.equilibrium
    print(color.bold(f"Equilibrium at L = {L} pu ({eq.method}, residual {eq.residual:.2e})"))
    print(f"  p = {eq.p:.6f} pu, V = {eq.V:.6f} pu, delta = {eq.delta:.6f} rad")
    print(f"  omega_c = {eq.omega_c:.6f} rad/s, |e| = {np.linalg.norm(eq.e):.3e}")

    np.set_printoptions(linewidth=140, precision=5)
    for title, labels, A in (
        ("State matrix", STATE_LABELS, model.A),
        ("Reduced coordinates", REDUCED_LABELS, model.reduced()),
    ):
        print(color.bold(title))
        print("  " + " ".join(f"{lab:>12}" for lab in labels))
        for lab, row in zip(labels, A):
            print(f"{lab:>12} " + " ".join(f"{v:12.5g}" for v in row))

    print(color.bold("Spectrum (units of omega0)"))
    spectrum = model.spectrum()
    for value, structural in zip(spectrum.values, spectrum.structural):
        v = value / w0
        print(f"  {v.real:+.6f}{v.imag:+.6f}j" + ("  (structural gamma mode)" if structural else ""))
    dom = dominant_pole(spectrum) / w0
    print(f"  dominant pole {dom.real:+.4f}{dom.imag:+.4f}j")
    print(f"Jacobian deviation (analytic vs numeric): {model.jacobian_deviation():.3e}")
    return 0


# =============================================================================
# Entry point
# =============================================================================

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration file")
    common.add_argument("--out", default=None, help="Output directory (default: current directory)")
    common.add_argument("-v", "--verbose", action="count", default=0, help="-v INFO, -vv DEBUG")

    parser = argparse.ArgumentParser(
        prog="fluxgfm",
        description="Design, analyze and simulate virtual-flux grid-forming control",
        epilog="Example: fluxgfm simulate step_L050 --out results",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gains", parents=[common], help="Compute the operating point and gains")
    p.set_defaults(handler=cmd_gains)

    p = sub.add_parser("eig-sweep", parents=[common], help="Closed-loop poles over the inductance range")
    p.add_argument("--L-min", dest="L_min", type=float, help="Smallest inductance (pu)")
    p.add_argument("--L-max", dest="L_max", type=float, help="Largest inductance (pu)")
    p.add_argument("--n-points", dest="n_points", type=int, help="Number of samples")
    p.set_defaults(handler=cmd_eig_sweep)

    p = sub.add_parser("simulate", parents=[common], help="Run a named scenario or a scenario file")
    p.add_argument("scenario", nargs="?", help="step_L050, step_L100, step_L010, framp_L050 or a .json file")
    p.add_argument("--mode", choices=["continuous", "sampled"], help="Execution mode")
    p.add_argument("--float-format", dest="float_format", choices=["repr", "hex"], help="CSV float format")
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("linearize", parents=[common], help="Closed-loop matrix at one inductance")
    p.add_argument("--L", type=float, help="Actual inductance (pu)")
    p.add_argument("--f-grid", dest="f_grid", type=float, help="Grid frequency (Hz)")
    p.set_defaults(handler=cmd_linearize)
    return parser


def main(argv: list[str] | None = None) -> int:
    """Main entry point for fluxgfm."""
    parser = build_parser()
    args = parser.parse_args(argv)
    _configure_logging(args.verbose)
    try:
        config = Config.load(args.config) if args.config else Config()
        return args.handler(config, args)
    except FluxGFMError as exc:
        print(exc.format(), file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
