"""Experiment configuration (JSON) and result files (CSV + JSON sidecar).

Units live in field names: ``*_ns`` nanoseconds, ``*_us`` microseconds,
angles in radians, error amplitudes in rad/ns. Infinite T1/Tphi are written
as ``null``.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import re
import tempfile
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Sequence

from vzfold import __version__
from vzfold.gate_ir import SEQUENCE_NAMES, CompilationStrategy, XbarVariant
from vzfold.lindblad import INITIAL_STATES, FidelityCurve, NoiseModel, SimSettings
from vzfold.lowering import CosineRamp, Echo, Gaussian, NoInterference, PulseShape, TailOverlap, steps_for

CSV_COLUMNS = (
    "sequence",
    "strategy",
    "spacing_multiplier",
    "cycles",
    "time_ns",
    "fidelity_exact",
    "fidelity_sampled",
    "shots",
    "seed",
    "initial_state",
)

REFERENCE_TAU_NS = 56.8
REFERENCE_SHOTS = 800
REFERENCE_MAX_TWO_PULSE_CYCLES = 640

# where each default value comes from
DEFAULT_PROVENANCE = {
    "tau_ns": "from-experiment",
    "shots": "from-experiment",
    "cycle_counts": "from-experiment",
    "t_g_ns": "model-default",
    "dt_ns": "model-default",
    "noise.T1_us": "model-default",
    "noise.Tphi_us": "model-default",
    "noise.eps_err": "model-default",
    "noise.del_err": "model-default",
    "noise.quasistatic_sigma": "model-default",
    "noise.interference": "model-default",
}


class ConfigError(ValueError):
    """Invalid configuration; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


def default_cycle_counts() -> list[int]:
    return list(range(1, REFERENCE_MAX_TWO_PULSE_CYCLES // 2 + 1))


@dataclass(frozen=True)
class ExperimentConfig:
    sequences: tuple[tuple[str, str | None], ...] = (("XY4", "sym"),)
    spacing_multipliers: tuple[float, ...] = (1.0,)
    tau_ns: float = REFERENCE_TAU_NS
    t_g_ns: float = REFERENCE_TAU_NS
    cycle_counts: tuple[int, ...] = field(default_factory=lambda: tuple(default_cycle_counts()))
    initial_states: tuple[str, ...] = ("plus",)
    noise: NoiseModel = field(default_factory=NoiseModel)
    shots: int = REFERENCE_SHOTS
    seed: int = 0
    dt_ns: float = 0.1
    output_path: str = "results.csv"
    equal_time: bool = True
    xbar_variant: str = XbarVariant.PLUS_FIRST.value
    physical_prep: bool = False
    envelope: str = "gaussian"

    def sim_settings(self) -> SimSettings:
        env = CosineRamp() if self.envelope == "cosine" else Gaussian()
        return SimSettings(PulseShape(self.t_g_ns, env), self.dt_ns, self.physical_prep)

    @property
    def sidecar_path(self) -> str:
        return str(Path(self.output_path).with_suffix(".json"))


# -- parsing -----------------------------------------------------------------

_TOP_KEYS = {
    "sequences",
    "spacing_multipliers",
    "tau_ns",
    "t_g_ns",
    "cycle_counts",
    "initial_states",
    "noise",
    "shots",
    "seed",
    "dt_ns",
    "output_path",
    "equal_time",
    "xbar_variant",
    "physical_prep",
    "envelope",
}
_NOISE_KEYS = {"T1_us", "Tphi_us", "eps_err", "del_err", "quasistatic_sigma", "interference"}
_INTERFERENCE_KEYS = {
    "none": set(),
    "tail_overlap": {"extension_ns", "strength"},
    "echo": {"reflection_amplitude", "delay_ns", "phase_shift_rad"},
}


def parse_sequence_spec(text: str) -> tuple[str, str | None, float | None]:
    """Parse ``NAME[:strategy][@multiplier]``, e.g. ``XY4:asym@2``."""
    if not isinstance(text, str) or not text.strip():
        raise ConfigError("", f"bad sequence spec {text!r}")
    body, _, mult = text.strip().partition("@")
    name, _, strat = body.partition(":")
    if name not in SEQUENCE_NAMES:
        raise ConfigError("", f"unknown sequence {name!r}; expected one of {', '.join(SEQUENCE_NAMES)}")
    strategy = None
    if strat:
        try:
            strategy = CompilationStrategy.parse(strat).value
        except ValueError as e:
            raise ConfigError("", str(e)) from None
    if strategy == "asym" and name in ("UR4", "XXbar"):
        raise ConfigError("", f"{name} has no asymmetric compilation")
    multiplier = None
    if mult:
        try:
            multiplier = float(mult)
        except ValueError:
            raise ConfigError("", f"bad spacing multiplier {mult!r}") from None
        if not multiplier > 0:
            raise ConfigError("", "spacing multiplier must be > 0")
    return name, strategy, multiplier


def format_sequence_spec(name: str, strategy: str | None) -> str:
    return name if strategy is None else f"{name}:{strategy}"


def _num(v: Any, path: str, allow_none: bool = False) -> float | None:
    if v is None and allow_none:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(path, f"expected a finite number, got {v!r}")
    return float(v)


def _int(v: Any, path: str) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(path, f"expected an integer, got {v!r}")
    return v


def _bool(v: Any, path: str) -> bool:
    if not isinstance(v, bool):
        raise ConfigError(path, f"expected true/false, got {v!r}")
    return v


def _list(v: Any, path: str) -> list:
    if not isinstance(v, list):
        raise ConfigError(path, f"expected a list, got {type(v).__name__}")
    return v


def _reject_unknown(d: dict, allowed: set, path: str) -> None:
    for k in d:
        if k not in allowed:
            raise ConfigError(f"{path}.{k}" if path else k, "unknown key")


def _parse_interference(d: Any, path: str):
    if not isinstance(d, dict):
        raise ConfigError(path, "expected an object")
    kind = d.get("type")
    if kind not in _INTERFERENCE_KEYS:
        raise ConfigError(f"{path}.type", f"expected one of {sorted(_INTERFERENCE_KEYS)}, got {kind!r}")
    _reject_unknown(d, _INTERFERENCE_KEYS[kind] | {"type"}, path)
    try:
        if kind == "none":
            return NoInterference()
        if kind == "tail_overlap":
            return TailOverlap(
                _num(d.get("extension_ns"), f"{path}.extension_ns", allow_none=True),
                _num(d.get("strength", 1.0), f"{path}.strength"),
            )
        return Echo(
            _num(d.get("reflection_amplitude", 0.05), f"{path}.reflection_amplitude"),
            _num(d.get("delay_ns", 30.0), f"{path}.delay_ns"),
            _num(d.get("phase_shift_rad", 0.0), f"{path}.phase_shift_rad"),
        )
    except ConfigError:
        raise
    except ValueError as e:
        raise ConfigError(path, str(e)) from None


def _parse_noise(d: Any, t_g: float) -> NoiseModel:
    if not isinstance(d, dict):
        raise ConfigError("noise", "expected an object")
    _reject_unknown(d, _NOISE_KEYS, "noise")
    base = NoiseModel.from_errors(0.01, 0.01, t_g)
    kw: dict[str, Any] = {}
    for key in ("T1_us", "Tphi_us"):
        if key in d:
            v = _num(d[key], f"noise.{key}", allow_none=True)
            if v is not None and not v > 0:
                raise ConfigError(f"noise.{key}", "must be > 0 (null for infinite)")
            kw[key] = math.inf if v is None else v
    for key in ("eps_err", "del_err", "quasistatic_sigma"):
        if key in d:
            kw[key] = _num(d[key], f"noise.{key}")
    if kw.get("quasistatic_sigma", 0.0) < 0:
        raise ConfigError("noise.quasistatic_sigma", "must be >= 0")
    if "interference" in d:
        kw["interference"] = _parse_interference(d["interference"], "noise.interference")
    try:
        return NoiseModel(**{**_noise_kwargs(base), **kw})
    except ValueError as e:
        raise ConfigError("noise", str(e)) from None


def _noise_kwargs(n: NoiseModel) -> dict:
    return {
        "T1_us": n.T1_us,
        "Tphi_us": n.Tphi_us,
        "eps_err": n.eps_err,
        "del_err": n.del_err,
        "quasistatic_sigma": n.quasistatic_sigma,
        "interference": n.interference,
    }


def config_from_dict(d: Any) -> ExperimentConfig:
    """Validate a parsed JSON document; all-or-nothing.

    Raises:
        ConfigError: with the offending field path.
    """
    if not isinstance(d, dict):
        raise ConfigError("", "config must be a JSON object")
    _reject_unknown(d, _TOP_KEYS, "")

    tau = _num(d.get("tau_ns", REFERENCE_TAU_NS), "tau_ns")
    t_g = _num(d.get("t_g_ns", tau), "t_g_ns")
    if not t_g > 0:
        raise ConfigError("t_g_ns", "must be > 0")
    if tau < t_g:
        raise ConfigError("tau_ns", f"tau_ns ({tau:g}) must be >= t_g_ns ({t_g:g})")
    dt = _num(d.get("dt_ns", 0.1), "dt_ns")
    if not dt > 0:
        raise ConfigError("dt_ns", "must be > 0")

    seqs = []
    raw = _list(d.get("sequences", ["XY4:sym"]), "sequences")
    if not raw:
        raise ConfigError("sequences", "must not be empty")
    for i, item in enumerate(raw):
        try:
            name, strat, mult = parse_sequence_spec(item)
        except ConfigError as e:
            raise ConfigError(f"sequences[{i}]", str(e)) from None
        if mult is not None:
            raise ConfigError(f"sequences[{i}]", "put spacing in spacing_multipliers, not @m")
        seqs.append((name, strat))

    mults = []
    for i, m in enumerate(_list(d.get("spacing_multipliers", [1.0]), "spacing_multipliers")):
        m = _num(m, f"spacing_multipliers[{i}]")
        if not m > 0:
            raise ConfigError(f"spacing_multipliers[{i}]", "must be > 0")
        try:
            steps_for(tau * m / 2.0, dt)
        except ValueError:
            raise ConfigError(f"spacing_multipliers[{i}]", f"tau_ns*{m:g}/2 is not a multiple of dt_ns") from None
        mults.append(m)
    if not mults:
        raise ConfigError("spacing_multipliers", "must not be empty")
    try:
        steps_for(t_g / 2.0, dt)
    except ValueError:
        raise ConfigError("dt_ns", "t_g_ns/2 must be a multiple of dt_ns") from None

    counts = [_int(c, f"cycle_counts[{i}]") for i, c in enumerate(_list(d.get("cycle_counts", default_cycle_counts()), "cycle_counts"))]
    if not counts:
        raise ConfigError("cycle_counts", "must not be empty")
    if counts[0] < 0 or any(b <= a for a, b in zip(counts, counts[1:])):
        raise ConfigError("cycle_counts", "must be non-negative and strictly increasing")

    inits = _list(d.get("initial_states", ["plus"]), "initial_states")
    for i, s in enumerate(inits):
        if s not in INITIAL_STATES:
            raise ConfigError(f"initial_states[{i}]", f"expected one of {', '.join(INITIAL_STATES)}, got {s!r}")
    if not inits:
        raise ConfigError("initial_states", "must not be empty")

    shots = _int(d.get("shots", REFERENCE_SHOTS), "shots")
    if shots < 0:
        raise ConfigError("shots", "must be >= 0")
    seed = _int(d.get("seed", 0), "seed")
    out = d.get("output_path", "results.csv")
    if not isinstance(out, str) or not out:
        raise ConfigError("output_path", "expected a non-empty string")
    xbar = d.get("xbar_variant", XbarVariant.PLUS_FIRST.value)
    if xbar not in {v.value for v in XbarVariant}:
        raise ConfigError("xbar_variant", f"expected one of {[v.value for v in XbarVariant]}")
    envelope = d.get("envelope", "gaussian")
    if envelope not in ("gaussian", "cosine"):
        raise ConfigError("envelope", "expected 'gaussian' or 'cosine'")

    return ExperimentConfig(
        sequences=tuple(seqs),
        spacing_multipliers=tuple(mults),
        tau_ns=tau,
        t_g_ns=t_g,
        cycle_counts=tuple(counts),
        initial_states=tuple(inits),
        noise=_parse_noise(d.get("noise", {}), t_g),
        shots=shots,
        seed=seed,
        dt_ns=dt,
        output_path=out,
        equal_time=_bool(d.get("equal_time", True), "equal_time"),
        xbar_variant=xbar,
        physical_prep=_bool(d.get("physical_prep", False), "physical_prep"),
        envelope=envelope,
    )


def load_config(path) -> ExperimentConfig:
    """Read and validate a JSON config file.

    Raises:
        ConfigError: unreadable file, JSON syntax error or invalid field.
    """
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError("", f"cannot read config {path}: {e.strerror or e}") from None
    return loads_config(text)


def loads_config(text: str | bytes) -> ExperimentConfig:
    try:
        d = json.loads(text)
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise ConfigError("", f"invalid JSON: {e}") from None
    return config_from_dict(d)


def _interference_dict(m) -> dict:
    if isinstance(m, TailOverlap):
        return {"type": "tail_overlap", "extension_ns": m.extension, "strength": m.strength}
    if isinstance(m, Echo):
        return {
            "type": "echo",
            "reflection_amplitude": m.reflection_amplitude,
            "delay_ns": m.delay,
            "phase_shift_rad": m.phase_shift,
        }
    return {"type": "none"}


def _finite_or_none(v: float):
    return None if math.isinf(v) else v


def config_to_dict(c: ExperimentConfig) -> dict:
    n = c.noise
    return {
        "sequences": [format_sequence_spec(a, b) for a, b in c.sequences],
        "spacing_multipliers": list(c.spacing_multipliers),
        "tau_ns": c.tau_ns,
        "t_g_ns": c.t_g_ns,
        "cycle_counts": list(c.cycle_counts),
        "initial_states": list(c.initial_states),
        "noise": {
            "T1_us": _finite_or_none(n.T1_us),
            "Tphi_us": _finite_or_none(n.Tphi_us),
            "eps_err": n.eps_err,
            "del_err": n.del_err,
            "quasistatic_sigma": n.quasistatic_sigma,
            "interference": _interference_dict(n.interference),
        },
        "shots": c.shots,
        "seed": c.seed,
        "dt_ns": c.dt_ns,
        "output_path": c.output_path,
        "equal_time": c.equal_time,
        "xbar_variant": c.xbar_variant,
        "physical_prep": c.physical_prep,
        "envelope": c.envelope,
    }


_FLAT_LIST = re.compile(r"\[\s*([^\[\]{}]*?)\s*\]", re.S)


def dumps_config(c: ExperimentConfig) -> str:
    text = json.dumps(config_to_dict(c), indent=2)
    # keep scalar lists on one line
    text = _FLAT_LIST.sub(lambda m: "[" + re.sub(r",\s+", ", ", m.group(1)) + "]", text)
    return text + "\n"


def save_config(c: ExperimentConfig, path) -> None:
    Path(path).write_text(dumps_config(c))


def bundled_config_path(name: str) -> Path:
    """Path of a bundled example config (``fig1_yy_asymmetry`` etc.)."""
    p = resources.files("vzfold") / "configs" / f"{name}.json"
    return Path(str(p))


BUNDLED_CONFIGS = ("fig1_yy_asymmetry", "fig3_sequence_zoo", "fig5_interval_sweep")


# -- results -----------------------------------------------------------------


@dataclass
class RunManifest:
    config: dict
    tool_version: str = __version__
    timestamp: str | None = None
    provenance: dict = field(default_factory=lambda: dict(DEFAULT_PROVENANCE))
    backend: str = ""

    @classmethod
    def for_config(cls, c: ExperimentConfig, timestamp: str | None = None) -> "RunManifest":
        from vzfold._backend import BACKEND

        if timestamp is None and "SOURCE_DATE_EPOCH" in os.environ:
            import datetime as _dt

            ts = int(os.environ["SOURCE_DATE_EPOCH"])
            timestamp = _dt.datetime.fromtimestamp(ts, _dt.timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
        return cls(config_to_dict(c), timestamp=timestamp, backend=BACKEND)

    def to_dict(self) -> dict:
        return {
            "tool_version": self.tool_version,
            "timestamp": self.timestamp,
            "integrator_backend": self.backend,
            "defaults_provenance": self.provenance,
            "config": self.config,
        }


def _fmt(v) -> str:
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.9g}"
    return str(v)


def curves_csv(curves: Sequence[FidelityCurve]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for c in curves:
        for p in c.points:
            w.writerow(
                [
                    c.sequence,
                    c.strategy,
                    _fmt(float(c.spacing_multiplier)),
                    p.cycles,
                    _fmt(float(p.time_ns)),
                    _fmt(float(p.fidelity_exact)),
                    _fmt(float(p.fidelity_sampled)),
                    p.shots,
                    p.seed,
                    c.initial_state,
                ]
            )
    return buf.getvalue()


def _json_float(v: float):
    return None if (v is None or not math.isfinite(v)) else v


def fit_records(fits) -> list[dict]:
    """``fits``: iterable of (label, DecayFit, OscillationMetric | None)."""
    out = []
    for label, fit, osc in fits:
        out.append(
            {
                "label": label,
                "a": _json_float(fit.a),
                "b": _json_float(fit.b),
                "T_D_us": _json_float(fit.T_D_us),
                "rms_residual": _json_float(fit.rms_residual),
                "converged": fit.converged,
                "osc_amplitude": None if osc is None else _json_float(osc.amplitude),
                "osc_period_ns": None if osc is None else _json_float(osc.period_ns),
            }
        )
    return out


def sidecar_json(fits, manifest: RunManifest) -> str:
    return json.dumps({"manifest": manifest.to_dict(), "fits": fit_records(fits)}, indent=2, allow_nan=False) + "\n"


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_results(curves, fits, manifest: RunManifest, path) -> tuple[Path, Path]:
    """Write ``path`` (CSV) and ``path`` with a .json suffix (fits + manifest).

    Both documents are rendered in memory first, so a failure leaves no
    partial files.

    Raises:
        OSError: with the failing path in the message.
    """
    csv_path = Path(path)
    json_path = csv_path.with_suffix(".json")
    csv_text = curves_csv(curves)
    json_text = sidecar_json(fits, manifest)
    for p, text in ((csv_path, csv_text), (json_path, json_text)):
        try:
            _atomic_write(p, text)
        except OSError as e:
            raise OSError(f"cannot write {p}: {e.strerror or e}") from e
    return csv_path, json_path


def read_results(path) -> list[FidelityCurve]:
    """Rebuild curves from a results CSV written by ``write_results``.

    Raises:
        ConfigError: missing columns or malformed rows (with line number).
    """
    from vzfold.lindblad import CurvePoint

    try:
        fh = open(path, newline="")
    except OSError as e:
        raise ConfigError("", f"cannot read {path}: {e.strerror or e}") from None
    curves: dict[tuple, FidelityCurve] = {}
    with fh:
        reader = csv.DictReader(fh)
        missing = set(CSV_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ConfigError("", f"{path}: missing columns {sorted(missing)}")
        for line, row in enumerate(reader, start=2):
            try:
                key = (row["sequence"], row["strategy"], float(row["spacing_multiplier"]), row["initial_state"])
                pt = CurvePoint(
                    int(row["cycles"]),
                    float(row["time_ns"]),
                    float(row["fidelity_exact"]),
                    float(row["fidelity_sampled"]),
                    int(row["shots"]),
                    int(row["seed"]),
                )
            except (TypeError, ValueError) as e:
                raise ConfigError("", f"{path}:{line}: {e}") from None
            if key not in curves:
                curves[key] = FidelityCurve(*key)
            curves[key].points.append(pt)
    return list(curves.values())
