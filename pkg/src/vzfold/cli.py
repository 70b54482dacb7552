"""Command-line interface: ``vzfold {compile,fold,equiv,simulate,sweep,fit}``.

Units: times in ns, T1/Tphi in µs, angles in rad, error amplitudes in rad/ns.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import replace

import numpy as np

from vzfold import __version__
from vzfold.analysis import fit_decay, oscillation_metric
from vzfold.config_io import (
    REFERENCE_SHOTS,
    REFERENCE_TAU_NS,
    ConfigError,
    RunManifest,
    load_config,
    parse_sequence_spec,
    read_results,
    write_results,
)
from vzfold.frame import ScheduleConfig, fold, format_schedule, physically_equivalent
from vzfold.gate_ir import (
    CompilationStrategy,
    XbarVariant,
    build_sequence,
    compile_sqrt_x,
    compile_xbar,
    compile_y,
    format_sequence,
    ideal_unitary,
)
from vzfold.lindblad import INITIAL_STATES, IntegrationError, NoiseModel, SimSettings, run_protocol, sweep
from vzfold.lowering import Echo, NoInterference, PulseShape, TailOverlap, lower
from vzfold.su2 import global_phase

PROVENANCE_NOTE = (
    "Defaults marked [experiment] follow the reference hardware experiments (tau 56.8 ns, 800 shots, "
    "640 two-pulse cycles); defaults marked [model] are modelling choices of this tool."
)


class _Formatter(argparse.ArgumentDefaultsHelpFormatter, argparse.RawDescriptionHelpFormatter):
    pass


def _seq_arg(text: str) -> tuple[str, str | None, float]:
    try:
        name, strat, mult = parse_sequence_spec(text)
    except ConfigError as e:
        raise argparse.ArgumentTypeError(str(e)) from None
    return name, strat, 1.0 if mult is None else mult


def _add_timing(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tau-ns", type=float, default=REFERENCE_TAU_NS, help="base pulse interval tau in ns [experiment]")
    p.add_argument("--gate-ns", type=float, default=None, help="pulse length t_g in ns; defaults to tau [model]")
    p.add_argument("--xbar-variant", choices=[v.value for v in XbarVariant], default="plus_first",
                   help="order of the two frame shifts inside X-bar [model]")


def _add_noise(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("noise model (all defaults [model])")
    g.add_argument("--T1-us", type=float, default=100.0, help="amplitude damping time in us (inf disables)")
    g.add_argument("--Tphi-us", type=float, default=100.0, help="pure dephasing time in us (inf disables)")
    g.add_argument("--delta-theta", type=float, default=0.01, help="rotation error per pulse in rad; eps_err = delta_theta/t_g")
    g.add_argument("--delta-phi", type=float, default=0.01, help="relative detuning error; del_err = delta_phi*pi/t_g rad/ns")
    g.add_argument("--quasistatic-sigma", type=float, default=2 * math.pi * 5e-6,
                   help="std of quasi-static detuning in rad/ns (0 disables)")
    _add_interference(g)


def _add_interference(g) -> None:
    g.add_argument("--interference", choices=["none", "tail_overlap", "echo"], default="tail_overlap",
                   help="pulse interference model [model]")
    g.add_argument("--overlap-strength", type=float, default=1.0, help="tail_overlap coupling strength [model]")
    g.add_argument("--overlap-extension-ns", type=float, default=None,
                   help="tail_overlap support extension in ns; default t_g/2 [model]")


def _interference(args):
    if args.interference == "none":
        return NoInterference()
    if args.interference == "echo":
        return Echo()
    return TailOverlap(args.overlap_extension_ns, args.overlap_strength)


def _timing(args, mult: float = 1.0) -> tuple[float, ScheduleConfig]:
    tau = args.tau_ns * mult
    gate = args.gate_ns if args.gate_ns is not None else args.tau_ns
    if tau < gate:
        raise ValueError(f"tau ({tau:g} ns) is shorter than the pulse length t_g ({gate:g} ns)")
    return tau, ScheduleConfig(gate_ns=gate, interval_ns=tau)


def _build(spec, args, cycles: int = 1):
    name, strat, mult = spec
    tau, timing = _timing(args, mult)
    seq = build_sequence(name, strat, tau, args.xbar_variant)
    return seq.repeat(cycles) if cycles != 1 else seq, timing


# -- subcommands ---------------------------------------------------------------


def cmd_compile(args) -> int:
    if args.gate == "Y":
        seq = compile_y(CompilationStrategy.parse(args.strategy))
    elif args.gate == "Xbar":
        seq = compile_xbar(args.xbar_variant)
    else:
        seq = compile_sqrt_x()
    print(format_sequence(seq))
    return 0


def cmd_fold(args) -> int:
    seq, timing = _build(args.sequence, args, args.cycles)
    s = fold(seq, timing)
    if args.json:
        print(json.dumps(s.to_dict(), indent=2))
    else:
        print(f"{seq.name} x{args.cycles}")
        print(format_schedule(s))
    if args.field_csv:
        shape = PulseShape(timing.gate_ns)
        lower(s, shape, _interference(args), args.dt_ns).write_csv(args.field_csv)
    return 0


def _phase_text(g: complex) -> str:
    for v, txt in ((1, "+1"), (-1, "-1"), (1j, "+i"), (-1j, "-i")):
        if abs(g - v) < 1e-9:
            return txt
    return f"exp(i*{np.angle(g):.6g})"


def cmd_equiv(args) -> int:
    sa, ta = _build(args.a, args)
    sb, tb = _build(args.b, args)
    fa, fb = fold(sa, ta), fold(sb, tb)
    left, right = format_schedule(fa).splitlines(), format_schedule(fb).splitlines()
    width = max(len(x) for x in left)
    print(f"{sa.name:<{width}}  |  {sb.name}")
    for i in range(max(len(left), len(right))):
        lft = left[i] if i < len(left) else ""
        rgt = right[i] if i < len(right) else ""
        print(f"{lft:<{width}}  |  {rgt}")
    if physically_equivalent(fa, fb, tol=args.tol):
        g = global_phase(ideal_unitary(sa), ideal_unitary(sb))
        print(f"EQUIVALENT (global phase {_phase_text(g)})")
        return 0
    print("NOT EQUIVALENT")
    return 1


def _noise(args, gate_ns: float) -> NoiseModel:
    return NoiseModel.from_errors(
        args.delta_theta,
        args.delta_phi,
        gate_ns,
        T1_us=args.T1_us,
        Tphi_us=args.Tphi_us,
        quasistatic_sigma=args.quasistatic_sigma,
        interference=_interference(args),
    )


def cmd_simulate(args) -> int:
    seq, timing = _build(args.sequence, args)
    settings = SimSettings(PulseShape(timing.gate_ns), args.dt_ns, args.physical_prep)
    noise = _noise(args, timing.gate_ns)
    exact, sampled = run_protocol(args.initial, seq, args.cycles, noise, args.shots, args.seed, settings)
    out = {"sequence": seq.name, "initial_state": args.initial, "cycles": args.cycles,
           "fidelity_exact": exact, "fidelity_sampled": None if math.isnan(sampled) else sampled,
           "shots": args.shots, "seed": args.seed}
    if args.json:
        print(json.dumps(out, indent=2))
    else:
        print(f"{seq.name} x{args.cycles} from |{args.initial}>: fidelity {exact:.9g}"
              + ("" if math.isnan(sampled) else f" (sampled {sampled:.6g} over {args.shots} shots)"))
    return 0


def _fit_curves(curves, use_sampled: bool = False):
    fits = []
    for c in curves:
        try:
            fit = fit_decay(c, use_sampled)
        except ValueError:
            continue
        try:
            osc = oscillation_metric(c, fit, use_sampled)
        except ValueError:
            osc = None
        c.fit = fit
        fits.append((c.label, fit, osc))
    return fits


def _print_fits(fits) -> None:
    print(f"{'curve':<28} {'T_D (us)':>10} {'a':>9} {'b':>9} {'osc amp':>10} {'osc period (ns)':>16}  converged")
    for label, fit, osc in fits:
        amp = "-" if osc is None else f"{osc.amplitude:.3g}"
        per = "-" if osc is None else f"{osc.period_ns:.6g}"
        print(f"{label:<28} {fit.T_D_us:>10.4g} {fit.a:>9.4f} {fit.b:>9.4f} {amp:>10} {per:>16}  {fit.converged}")


def cmd_sweep(args) -> int:
    config = load_config(args.config)
    if args.output:
        config = replace(config, output_path=args.output)
    curves = sweep(config, workers=args.workers)
    fits = _fit_curves(curves)
    timestamp = None
    if args.timestamp:
        import datetime as _dt

        timestamp = _dt.datetime.now(_dt.timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
    csv_path, json_path = write_results(curves, fits, RunManifest.for_config(config, timestamp), config.output_path)
    _print_fits(fits)
    print(f"wrote {csv_path} and {json_path}")
    return 0


def cmd_fit(args) -> int:
    curves = read_results(args.csv)
    fits = _fit_curves(curves, args.sampled)
    _print_fits(fits)
    return 0


# -- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="vzfold",
        description="Fold virtual-Z frame changes into pulse schedules and simulate DD fidelity decay.\n\n"
        + "Units: ns for times, us for T1/Tphi, rad for angles, rad/ns for error rates.\n"
        + PROVENANCE_NOTE,
        formatter_class=_Formatter,
    )
    ap.add_argument("--version", action="version", version=f"vzfold {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, metavar="COMMAND")
    seq_help = "sequence spec NAME[:strategy][@multiplier], e.g. XY4:asym@2 (multiplier scales tau)"

    def add(name, helptext):
        return sub.add_parser(name, help=helptext, description=helptext + "\n\n" + PROVENANCE_NOTE,
                              formatter_class=_Formatter)

    p = add("compile", "print the native-gate compilation of Y, Xbar or SX (time order)")
    p.add_argument("gate", choices=["Y", "Xbar", "SX"])
    p.add_argument("--strategy", choices=["sym", "asym"], default="sym", help="Y compilation strategy")
    p.add_argument("--xbar-variant", choices=[v.value for v in XbarVariant], default="plus_first",
                   help="order of the two frame shifts inside X-bar [model]")
    p.set_defaults(func=cmd_compile)

    p = add("fold", "fold a sequence into an absolute-phase pulse schedule (angles rad, times ns)")
    p.add_argument("sequence", type=_seq_arg, help=seq_help)
    p.add_argument("--cycles", type=int, default=1, help="number of sequence repetitions")
    p.add_argument("--json", action="store_true", help="emit the schedule as JSON")
    p.add_argument("--field-csv", metavar="PATH", help="also write the lowered drive field (t_ns, re, im)")
    p.add_argument("--dt-ns", type=float, default=0.1, help="sampling step for --field-csv in ns [model]")
    _add_timing(p)
    _add_interference(p)
    p.set_defaults(func=cmd_fold)

    p = add("equiv", "exit 0 iff two sequences fold to the same physical schedule")
    p.add_argument("a", type=_seq_arg, help=seq_help)
    p.add_argument("b", type=_seq_arg, help=seq_help)
    p.add_argument("--tol", type=float, default=1e-9, help="phase/angle tolerance in rad")
    _add_timing(p)
    p.set_defaults(func=cmd_equiv)

    p = add("simulate", "simulate one protocol run and print the |0> return fidelity")
    p.add_argument("sequence", type=_seq_arg, help=seq_help)
    p.add_argument("--cycles", type=int, default=1, help="number of sequence repetitions")
    p.add_argument("--initial", choices=INITIAL_STATES, default="plus", help="prepared state")
    p.add_argument("--shots", type=int, default=REFERENCE_SHOTS, help="measurement shots [experiment]; 0 disables sampling")
    p.add_argument("--seed", type=int, default=0, help="sampling seed")
    p.add_argument("--dt-ns", type=float, default=0.1, help="integration step in ns [model]")
    p.add_argument("--physical-prep", action="store_true", help="simulate preparation pulses instead of ideal prep")
    p.add_argument("--json", action="store_true", help="emit the result as JSON")
    _add_timing(p)
    _add_noise(p)
    p.set_defaults(func=cmd_simulate)

    p = add("sweep", "run a JSON experiment config; writes CSV + JSON sidecar and prints fits")
    p.add_argument("config", help="experiment config JSON (see README for the schema)")
    p.add_argument("--output", help="override output_path of the config (CSV path)")
    p.add_argument("--workers", type=int, default=1, help="concurrent curves; results do not depend on it")
    p.add_argument("--timestamp", action="store_true",
                   help="record wall-clock time in the manifest (output is then no longer byte-stable)")
    p.set_defaults(func=cmd_sweep)

    p = add("fit", "fit a + b exp(-t/T_D) and the residual oscillation to every curve of a results CSV")
    p.add_argument("csv", help="results CSV written by sweep")
    p.add_argument("--sampled", action="store_true", help="fit sampled fidelities (applies a 3/sqrt(shots) floor)")
    p.set_defaults(func=cmd_fit)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError, IntegrationError, OSError) as e:
        print(f"vzfold {args.command}: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
