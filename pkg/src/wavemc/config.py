"""JSON run configuration: parsing, validation, canonical emission, hashing.

A configuration is a single JSON document.  The model is either a preset
reference::

    {"model": {"preset": "oscillator-energy-measurement", "params": {"k": 0.1}}, ...}

or a fully custom description whose operators are inline
``{"dim": D, "re": [[...]], "im": [[...]]}`` objects or paths (relative to
the config file) to JSON files of that form::

    {"model": {"dim": 2,
               "hamiltonian": {...} | "path.json",
               "initial_state": {"re": [...], "im": [...]},
               "decoherence":  [{"operator": ..., "rate": 0.5}],
               "ham_noise":    [{"operator": ..., "strength": 0.1}],
               "measurements": [{"operator": ..., "strength": 0.1, "efficiency": 1.0}],
               "observables":  {"name": ...}}, ...}

An inefficient measurement (efficiency eta < 1) is expanded at parse time
into a measurement channel of strength ``eta * k`` plus a decoherence
channel with the same operator and rate ``(1 - eta) * k``.

The canonical form is the fully expanded custom description with sorted
keys; parse -> emit -> parse is the identity on it, and its SHA-256 digest
is the config hash recorded next to every output file.
"""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path

import numpy as np

from wavemc.engine import MODES, SimulationConfig
from wavemc.hilbert import load_operator, operator_to_json
from wavemc.model import ModelSpec
from wavemc.models import PRESETS, build_preset
from wavemc.steppers import DecoherenceChannel, HamiltonianNoiseChannel, MeasurementChannel


class ConfigError(ValueError):
    """Invalid configuration document."""


_TOP_KEYS = {
    "model",
    "dt",
    "n_steps",
    "t_total",
    "n_ens",
    "p_thresh",
    "regen_interval",
    "seed",
    "finest_dt",
    "dv_replicate",
    "mode",
    "output_stride",
    "refine",
    "replicates",
}
_REQUIRED_KEYS = {"model", "dt", "n_ens", "p_thresh", "regen_interval", "seed", "finest_dt"}


def parse_config(path) -> SimulationConfig:
    """Load, validate and expand a JSON config file."""
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON: {exc}") from None
    return config_from_dict(raw, base_dir=path.parent)


def config_from_dict(raw: dict, base_dir: Path | None = None) -> SimulationConfig:
    """Build a validated SimulationConfig from a decoded JSON document."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}; allowed: {sorted(_TOP_KEYS)}")
    missing = _REQUIRED_KEYS - set(raw)
    if missing:
        raise ConfigError(f"missing required config keys {sorted(missing)}")
    if ("n_steps" in raw) == ("t_total" in raw):
        raise ConfigError("exactly one of 'n_steps' or 't_total' is required")

    dt = _number(raw, "dt", positive=True)
    if "n_steps" in raw:
        n_steps = _integer(raw, "n_steps", minimum=1)
    else:
        t_total = _number(raw, "t_total", positive=True)
        n_steps = round(t_total / dt)
        if n_steps < 1 or abs(n_steps * dt - t_total) > 1e-9 * t_total:
            raise ConfigError(f"t_total = {t_total!r} is not a whole number of steps of dt = {dt!r}")

    mode = raw.get("mode", "mc")
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")

    model, initial_state = _parse_model(raw["model"], base_dir)

    try:
        config = SimulationConfig(
            model=model,
            initial_state=initial_state,
            dt=dt,
            n_steps=n_steps,
            n_ens=_integer(raw, "n_ens", minimum=1),
            p_thresh=_number(raw, "p_thresh", positive=True),
            regen_interval=_integer(raw, "regen_interval", minimum=1),
            seed=_integer(raw, "seed", minimum=0),
            finest_dt=_number(raw, "finest_dt", positive=True),
            dv_replicate=_integer(raw, "dv_replicate", minimum=0) if "dv_replicate" in raw else 0,
            mode=mode,
            output_stride=_integer(raw, "output_stride", minimum=1) if "output_stride" in raw else 20,
            refine=bool(raw.get("refine", False)),
            replicates=_integer(raw, "replicates", minimum=2) if "replicates" in raw else 2,
            config_hash="",
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return finalize(config)


def finalize(config: SimulationConfig) -> SimulationConfig:
    """Attach the canonical hash; call after any programmatic construction."""
    config.config_hash = config_hash(config)
    return config


def canonical_dict(config: SimulationConfig) -> dict:
    """Fully expanded, serializable form of a config (presets inlined)."""
    model = config.model
    return {
        "model": {
            "dim": model.dim,
            "hamiltonian": operator_to_json(model.hamiltonian),
            "initial_state": {
                "re": np.real(config.initial_state).tolist(),
                "im": np.imag(config.initial_state).tolist(),
            },
            "decoherence": [
                {"operator": operator_to_json(ch.op), "rate": ch.rate} for ch in model.decoherence
            ],
            "ham_noise": [
                {"operator": operator_to_json(ch.op), "strength": ch.strength} for ch in model.ham_noise
            ],
            "measurements": [
                {"operator": operator_to_json(ch.op), "strength": ch.strength, "efficiency": 1.0}
                for ch in model.measurements
            ],
            "observables": {name: operator_to_json(op) for name, op in sorted(model.observables.items())},
        },
        "dt": config.dt,
        "n_steps": config.n_steps,
        "n_ens": config.n_ens,
        "p_thresh": config.p_thresh,
        "regen_interval": config.regen_interval,
        "seed": config.seed,
        "finest_dt": config.finest_dt,
        "dv_replicate": config.dv_replicate,
        "mode": config.mode,
        "output_stride": config.output_stride,
        "refine": config.refine,
        "replicates": config.replicates,
    }


def emit_config(config: SimulationConfig) -> str:
    """Canonical JSON text for a config; parseable back to an equal config."""
    return json.dumps(canonical_dict(config), sort_keys=True, indent=2)


def config_hash(config: SimulationConfig) -> str:
    """SHA-256 of the canonical form."""
    text = json.dumps(canonical_dict(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


# -- model section ---------------------------------------------------------------


def _parse_model(section, base_dir: Path | None):
    if not isinstance(section, dict):
        raise ConfigError("'model' must be an object")
    if "preset" in section:
        unknown = set(section) - {"preset", "params"}
        if unknown:
            raise ConfigError(f"unknown model keys {sorted(unknown)} alongside 'preset'")
        params = section.get("params", {})
        if not isinstance(params, dict):
            raise ConfigError("'model.params' must be an object")
        try:
            return build_preset(section["preset"], params)
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from None
    return _parse_custom_model(section, base_dir)


def _parse_custom_model(section: dict, base_dir: Path | None):
    allowed = {"dim", "hamiltonian", "initial_state", "decoherence", "ham_noise", "measurements", "observables"}
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown model keys {sorted(unknown)}; allowed: {sorted(allowed)}")
    for key in ("dim", "initial_state"):
        if key not in section:
            raise ConfigError(f"custom model requires '{key}'")
    dim = section["dim"]
    if not isinstance(dim, int) or dim < 1:
        raise ConfigError(f"'model.dim' must be a positive integer, got {dim!r}")

    def op(source, what):
        try:
            if isinstance(source, str):
                source = (base_dir or Path(".")) / source
            return load_operator(source, expected_dim=dim)
        except (OSError, ValueError, json.JSONDecodeError) as exc:
            raise ConfigError(f"{what}: {exc}") from None

    hamiltonian = (
        op(section["hamiltonian"], "model.hamiltonian") if "hamiltonian" in section else np.zeros((dim, dim))
    )

    state_spec = section["initial_state"]
    if not isinstance(state_spec, dict) or "re" not in state_spec or set(state_spec) - {"re", "im"}:
        raise ConfigError("'model.initial_state' must be {\"re\": [...], \"im\": [...]} ('im' optional)")
    initial_state = np.asarray(state_spec["re"], dtype=float) + 1j * np.asarray(
        state_spec.get("im", np.zeros(dim)), dtype=float
    )
    if initial_state.shape != (dim,):
        raise ConfigError(f"'model.initial_state' must have length {dim}")

    decoherence = []
    for i, entry in enumerate(_channel_list(section, "decoherence", {"operator", "rate"})):
        decoherence.append(DecoherenceChannel(op(entry["operator"], f"decoherence[{i}]"), _chan_rate(entry, "rate", i)))

    ham_noise = []
    for i, entry in enumerate(_channel_list(section, "ham_noise", {"operator", "strength"})):
        ham_noise.append(
            HamiltonianNoiseChannel(op(entry["operator"], f"ham_noise[{i}]"), _chan_rate(entry, "strength", i))
        )

    measurements = []
    for i, entry in enumerate(_channel_list(section, "measurements", {"operator", "strength", "efficiency"})):
        strength = _chan_rate(entry, "strength", i)
        efficiency = entry.get("efficiency", 1.0)
        if not isinstance(efficiency, (int, float)) or not 0.0 < efficiency <= 1.0:
            raise ConfigError(f"measurements[{i}].efficiency must lie in (0, 1], got {efficiency!r}")
        m_op = op(entry["operator"], f"measurements[{i}]")
        measurements.append(MeasurementChannel(m_op, efficiency * strength))
        if efficiency < 1.0:
            # the unobserved share of the back-action acts as plain decoherence
            decoherence.append(DecoherenceChannel(m_op, (1.0 - efficiency) * strength))

    observables = {}
    obs_section = section.get("observables", {})
    if not isinstance(obs_section, dict):
        raise ConfigError("'model.observables' must be an object mapping names to operators")
    for name, source in obs_section.items():
        observables[name] = op(source, f"observables[{name}]")

    try:
        model = ModelSpec(
            dim=dim,
            hamiltonian=hamiltonian,
            decoherence=decoherence,
            ham_noise=ham_noise,
            measurements=measurements,
            observables=observables,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return model, initial_state


def _channel_list(section: dict, key: str, allowed: set) -> list[dict]:
    entries = section.get(key, [])
    if not isinstance(entries, list):
        raise ConfigError(f"'model.{key}' must be a list")
    required = allowed - {"efficiency"}
    for i, entry in enumerate(entries):
        if not isinstance(entry, dict):
            raise ConfigError(f"{key}[{i}] must be an object")
        unknown = set(entry) - allowed
        if unknown:
            raise ConfigError(f"{key}[{i}] has unknown keys {sorted(unknown)}")
        missing = required - set(entry)
        if missing:
            raise ConfigError(f"{key}[{i}] is missing {sorted(missing)}")
    return entries


def _chan_rate(entry: dict, key: str, index: int) -> float:
    value = entry[key]
    if not isinstance(value, (int, float)) or value < 0 or not math.isfinite(value):
        raise ConfigError(f"channel {index}: '{key}' must be a nonnegative number, got {value!r}")
    return float(value)


def _number(raw: dict, key: str, positive: bool = False) -> float:
    value = raw[key]
    if not isinstance(value, (int, float)) or isinstance(value, bool) or not math.isfinite(value):
        raise ConfigError(f"'{key}' must be a finite number, got {value!r}")
    if positive and value <= 0:
        raise ConfigError(f"'{key}' must be positive, got {value!r}")
    return float(value)


def _integer(raw: dict, key: str, minimum: int) -> int:
    value = raw[key]
    if not isinstance(value, int) or isinstance(value, bool):
        raise ConfigError(f"'{key}' must be an integer, got {value!r}")
    if value < minimum:
        raise ConfigError(f"'{key}' must be >= {minimum}, got {value}")
    return value
