"""Command-line front end: JSON config in, CSV/JSON artifacts out.

Subcommands: levels | spectrum | fid | echo | nuclear-echo | fft | fit.
Every run writes a run_meta.json with the fully resolved parameters (all
defaults filled in) so outputs are reproducible byte for byte given the same
config and seed.  Exit codes: 0 ok, 2 config error, 3 numerical error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__, constants
from .analysis import TimeTrace, fft_spectrum, find_peaks
from .dynamics import (
    DecoherenceChannel,
    Delay,
    Pulse,
    ReadoutModel,
    Sequence,
    Simulator,
    ensemble_average,
    run_sequence,
)
from .fitting import FitProblem, fit_field
from .hamiltonian import Nucleus, SpinSystem, axial_tensor, field_vector, isotropic_tensor
from .spectra import broaden, level_populations, ms0_populations, transition_spectrum
from . import spinops


class ConfigError(Exception):
    pass


_NUM = {"type": "number"}
_INT = {"type": "integer"}
_BOOL = {"type": "boolean"}
_STR = {"type": "string"}


def _obj(properties, required=()):
    return {
        "type": "object",
        "additionalProperties": False,
        "required": list(required),
        "properties": properties,
    }


_TRANSITION = {"type": "array", "items": _INT, "minItems": 2, "maxItems": 2}
_SWEEP = _obj({"start_us": _NUM, "stop_us": _NUM, "step_us": _NUM}, required=["stop_us", "step_us"])
_POLARIZATION = _obj({
    "p": _NUM,
    "rest": {"type": "object", "additionalProperties": _NUM},
    "weights": {"type": "object", "additionalProperties": _NUM},
})
_HYPERFINE = {
    "oneOf": [
        _obj({"iso_mhz": _NUM}, required=["iso_mhz"]),
        _obj(
            {
                "parallel_mhz": _NUM,
                "perpendicular_mhz": _NUM,
                "axis_polar_deg": _NUM,
                "axis_azimuth_deg": _NUM,
            },
            required=["parallel_mhz", "perpendicular_mhz"],
        ),
        _obj({"matrix_mhz": {"type": "array"}}, required=["matrix_mhz"]),
    ]
}
_NUCLEUS = _obj(
    {
        "species": {"enum": ["13C", "14N", "custom"]},
        "name": _STR,
        "spin": {"enum": ["1/2", "1", "3/2"]},
        "hyperfine": _HYPERFINE,
        "quadrupole_p_mhz": _NUM,
        "gamma_mhz_per_gauss": _NUM,
        "nuclear_zeeman": _BOOL,
    },
    required=["species"],
)
_MW_PULSE = _obj({
    "carrier_mhz": _NUM,
    "carrier_transition": _TRANSITION,
    "rabi_mhz": _NUM,
    "transition": _TRANSITION,
    "ideal": _BOOL,
})
_SEQUENCE = _obj(
    {
        "elements": {
            "type": "array",
            "minItems": 1,
            "items": {
                "oneOf": [
                    _obj(
                        {
                            "pulse": _obj(
                                {
                                    "channel": {"enum": ["mw", "rf"]},
                                    "carrier_mhz": _NUM,
                                    "carrier_transition": _TRANSITION,
                                    "rabi_mhz": _NUM,
                                    "angle": {"oneOf": [{"enum": ["pi", "pi/2"]}, _NUM]},
                                    "duration_us": _NUM,
                                    "phase_rad": _NUM,
                                    "target": _INT,
                                    "ideal": _BOOL,
                                    "transition": _TRANSITION,
                                },
                                required=["channel"],
                            )
                        },
                        required=["pulse"],
                    ),
                    _obj(
                        {
                            "delay": _obj(
                                {"duration_us": _NUM, "name": _STR},
                                required=["duration_us"],
                            )
                        },
                        required=["delay"],
                    ),
                ]
            },
        }
    },
    required=["elements"],
)

SCHEMA = _obj(
    {
        "system": _obj(
            {
                "d_mhz": _NUM,
                "d_ghz": _NUM,
                "g_e": _NUM,
                "field": _obj(
                    {"magnitude_gauss": _NUM, "theta_deg": _NUM, "phi_deg": _NUM},
                    required=["magnitude_gauss"],
                ),
                "nuclei": {"type": "array", "items": _NUCLEUS},
            }
        ),
        "levels": _obj({"min_weight": _NUM}),
        "spectrum": _obj(
            {
                "freq_window_mhz": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2},
                "populations": {
                    "oneOf": [{"enum": ["ms0"]}, {"type": "object", "additionalProperties": _NUM}]
                },
                "strength_threshold_rel": _NUM,
                "lineshape": {"enum": ["gaussian", "lorentzian", "none"]},
                "width_mhz": _NUM,
                "grid": _obj({"start_mhz": _NUM, "stop_mhz": _NUM, "points": _INT}),
            }
        ),
        "fid": _obj(
            {
                "pulse": _MW_PULSE,
                "sweep": _SWEEP,
                "polarization": _POLARIZATION,
            },
            required=["pulse", "sweep"],
        ),
        "echo": _obj(
            {
                "pulse": _MW_PULSE,
                "sweep": _SWEEP,
                "polarization": _POLARIZATION,
                "detuning_ensemble": _obj(
                    {"sigma_mhz": _NUM, "n_samples": _INT}, required=["sigma_mhz", "n_samples"]
                ),
            },
            required=["pulse", "sweep"],
        ),
        "nuclear_echo": _obj(
            {
                "mw_pulse": _MW_PULSE,
                "rf_pulse": _obj(
                    {
                        "carrier_mhz": _NUM,
                        "carrier_transition": _TRANSITION,
                        "rabi_mhz": _NUM,
                        "transition": _TRANSITION,
                        "target": _INT,
                        "ideal": _BOOL,
                    }
                ),
                "sweep": _SWEEP,
                "polarization": _POLARIZATION,
            },
            required=["mw_pulse", "rf_pulse", "sweep"],
        ),
        "fft": _obj(
            {
                "trace_csv": _STR,
                "window": {"enum": ["hann", "none"]},
                "range_us": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2},
                "zero_pad": _INT,
                "min_prominence_rel": _NUM,
            }
        ),
        "fit": _obj(
            {
                "observed_mhz": {"type": "array", "items": _NUM, "minItems": 1},
                "free": {
                    "type": "object",
                    "additionalProperties": {
                        "type": "array",
                        "items": _NUM,
                        "minItems": 2,
                        "maxItems": 2,
                    },
                },
                "fixed": {"type": "object", "additionalProperties": _NUM},
                "freq_window_mhz": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2},
                "n_predicted": _INT,
                "max_residual_mhz": _NUM,
                "grid_steps": {"type": "object", "additionalProperties": _NUM},
            },
            required=["observed_mhz", "free"],
        ),
        "channels": {
            "type": "array",
            "items": _obj(
                {
                    "kind": {"enum": ["dephasing", "depolarizing"]},
                    "target": {"oneOf": [{"enum": ["electron"]}, _INT]},
                    "rate_per_us": _NUM,
                },
                required=["kind", "target", "rate_per_us"],
            ),
        },
        "sequence": _SEQUENCE,
        "readout": _obj({
            "bright": {"oneOf": [{"enum": ["ms0"]}, {"type": "array", "items": _INT}]},
            "contrast": _NUM,
        }),
        "propagation": _obj({"rwa": _BOOL}),
        "seed": _INT,
    },
    required=["system"],
)

_SPIN_TWO_I = {"1/2": 1, "1": 2, "3/2": 3}


def load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            config = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}")
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(config), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise ConfigError(f"config error at {where}: {err.message}")
    return config


def resolve_nucleus(raw: dict) -> tuple:
    """(Nucleus, resolved-dict) from one config entry."""
    species = raw["species"]
    if species == "13C":
        defaults = {
            "name": "13C",
            "spin": "1/2",
            "hyperfine": {
                "parallel_mhz": constants.A_C13_PARALLEL_MHZ,
                "perpendicular_mhz": constants.A_C13_PERPENDICULAR_MHZ,
                "axis_polar_deg": constants.A_C13_AXIS_POLAR_DEG,
                "axis_azimuth_deg": 0.0,
            },
            "quadrupole_p_mhz": 0.0,
            "gamma_mhz_per_gauss": constants.GAMMA_C13_MHZ_PER_GAUSS,
            "nuclear_zeeman": True,
        }
    elif species == "14N":
        defaults = {
            "name": "14N",
            "spin": "1",
            "hyperfine": {"iso_mhz": constants.A_N14_MHZ},
            "quadrupole_p_mhz": constants.P_N14_MHZ,
            "gamma_mhz_per_gauss": constants.GAMMA_N14_MHZ_PER_GAUSS,
            "nuclear_zeeman": True,
        }
    else:
        required = {"spin", "hyperfine", "gamma_mhz_per_gauss"}
        missing = required - set(raw)
        if missing:
            raise ConfigError(f"custom nucleus needs keys {sorted(missing)}")
        defaults = {"name": "custom", "quadrupole_p_mhz": 0.0, "nuclear_zeeman": True}
    resolved = {**defaults, **{k: v for k, v in raw.items() if k != "species"}}
    resolved["species"] = species

    hf = resolved["hyperfine"]
    if "iso_mhz" in hf:
        tensor = isotropic_tensor(hf["iso_mhz"])
    elif "matrix_mhz" in hf:
        tensor = np.asarray(hf["matrix_mhz"], dtype=float)
    else:
        tensor = axial_tensor(
            hf["parallel_mhz"],
            hf["perpendicular_mhz"],
            hf.get("axis_polar_deg", 0.0),
            hf.get("axis_azimuth_deg", 0.0),
        )
        resolved["hyperfine"] = {
            "parallel_mhz": hf["parallel_mhz"],
            "perpendicular_mhz": hf["perpendicular_mhz"],
            "axis_polar_deg": hf.get("axis_polar_deg", 0.0),
            "axis_azimuth_deg": hf.get("axis_azimuth_deg", 0.0),
        }
    nucleus = Nucleus(
        name=resolved["name"],
        two_i=_SPIN_TWO_I[resolved["spin"]],
        hyperfine_mhz=tensor,
        quadrupole_p_mhz=resolved["quadrupole_p_mhz"],
        gamma_mhz_per_gauss=resolved["gamma_mhz_per_gauss"],
        zeeman=resolved["nuclear_zeeman"],
    )
    return nucleus, resolved


def resolve_system(config: dict) -> tuple:
    raw = config["system"]
    if "d_mhz" in raw and "d_ghz" in raw:
        raise ConfigError("system: give d_mhz or d_ghz, not both")
    if "d_ghz" in raw:
        d_mhz = raw["d_ghz"] * 1000.0
    else:
        d_mhz = raw.get("d_mhz", constants.D_GS_MHZ)
    g_e = raw.get("g_e", constants.G_ELECTRON)
    field_raw = raw.get("field", {"magnitude_gauss": 0.0})
    field = {
        "magnitude_gauss": field_raw["magnitude_gauss"],
        "theta_deg": field_raw.get("theta_deg", 0.0),
        "phi_deg": field_raw.get("phi_deg", 0.0),
    }
    nuclei, nuclei_resolved = [], []
    for entry in raw.get("nuclei", []):
        nucleus, resolved = resolve_nucleus(entry)
        nuclei.append(nucleus)
        nuclei_resolved.append(resolved)
    system = SpinSystem(
        d_zfs_mhz=float(d_mhz),
        g_tensor=isotropic_tensor(float(g_e)),
        field_gauss=field_vector(field["magnitude_gauss"], field["theta_deg"], field["phi_deg"]),
        nuclei=nuclei,
    )
    resolved = {"d_mhz": float(d_mhz), "g_e": float(g_e), "field": field, "nuclei": nuclei_resolved}
    return system, resolved


def resolve_channels(config: dict) -> tuple:
    resolved = config.get("channels", [])
    channels = [
        DecoherenceChannel(c["kind"], c["target"], c["rate_per_us"]) for c in resolved
    ]
    return channels, resolved


def resolve_readout(config: dict) -> tuple:
    raw = config.get("readout", {})
    resolved = {"bright": raw.get("bright", "ms0"), "contrast": raw.get("contrast", 1.0)}
    return ReadoutModel(bright=resolved["bright"], contrast=resolved["contrast"]), resolved


def _resolve_carrier(raw: dict, sim: Simulator) -> float:
    if "carrier_mhz" in raw and "carrier_transition" in raw:
        raise ConfigError("pulse: give carrier_mhz or carrier_transition, not both")
    if "carrier_mhz" in raw:
        return float(raw["carrier_mhz"])
    if "carrier_transition" in raw:
        a, b = raw["carrier_transition"]
        return float(sim.energies[b - 1] - sim.energies[a - 1])
    raise ConfigError("pulse: needs carrier_mhz or carrier_transition")


def _resolve_sweep(raw: dict, overrides: dict) -> np.ndarray:
    def pick(key, fallback):
        value = overrides.get(key)
        return fallback if value is None else value

    start = pick("tau_min", raw.get("start_us", 0.0))
    stop = pick("tau_max", raw["stop_us"])
    step = pick("tau_step", raw["step_us"])
    if step <= 0 or stop < start:
        raise ConfigError("sweep: needs step_us > 0 and stop_us >= start_us")
    return np.arange(start, stop + 0.5 * step, step)


def _build_inline_sequence(raw: dict, sim: Simulator, readout: ReadoutModel) -> tuple:
    """Sequence from an inline elements list; returns (Sequence, resolved)."""
    elements, resolved = [], []
    for entry in raw["elements"]:
        if "pulse" in entry:
            p = entry["pulse"]
            kwargs = {
                "channel": p["channel"],
                "rabi_mhz": p.get("rabi_mhz", 0.0),
                "phase_rad": p.get("phase_rad", 0.0),
                "target": p.get("target", 0),
                "ideal": p.get("ideal", False),
                "transition": tuple(p["transition"]) if "transition" in p else None,
            }
            if "angle" in p:
                kwargs["angle"] = p["angle"]
            if "duration_us" in p:
                kwargs["duration_us"] = p["duration_us"]
            if not kwargs["ideal"]:
                kwargs["carrier_mhz"] = _resolve_carrier(p, sim)
            pulse = Pulse(**kwargs)
            elements.append(pulse)
            resolved.append({"pulse": {**kwargs, "duration_us": pulse.length_us,
                                       "transition": list(kwargs["transition"])
                                       if kwargs["transition"] else None}})
        else:
            d = entry["delay"]
            delay = Delay(d["duration_us"], name=d.get("name"))
            elements.append(delay)
            resolved.append({"delay": {"duration_us": delay.duration_us, "name": delay.name}})
    return Sequence(elements, readout=readout), resolved


def _polarization_kwargs(raw: dict) -> dict:
    if not raw:
        return {}
    out = {}
    if "weights" in raw:
        out["weights"] = {int(k): float(v) for k, v in raw["weights"].items()}
    else:
        if "p" in raw:
            out["p"] = float(raw["p"])
        if "rest" in raw:
            out["rest"] = {int(k): float(v) for k, v in raw["rest"].items()}
    return out


# -- output helpers ---------------------------------------------------------


def _fmt(x) -> str:
    return f"{x:.12g}"


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def write_json(path: Path, payload) -> None:
    with open(path, "w") as fh:
        json.dump(_plain(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def write_run_meta(out: Path, command: str, resolved: dict) -> None:
    write_json(out / "run_meta.json", {"command": command, "version": __version__, **resolved})


# -- subcommands -------------------------------------------------------------


def cmd_levels(config, out: Path, args) -> dict:
    system, sys_resolved = resolve_system(config)
    section = config.get("levels", {})
    min_weight = section.get("min_weight", 0.01)
    sim = Simulator(system)
    rows = []
    for label in sim.es.labels:
        comp = sim.es.composition(int(label), min_weight=min_weight)
        text = " + ".join(
            "|" + ",".join(f"{m:+g}" for m in proj) + f">:{w:.6f}" for proj, w in comp
        )
        rows.append([int(label), _fmt(sim.energies[label - 1]), text])
    write_csv(out / "levels.csv", ["label", "energy_mhz", "composition"], rows)
    return {"system": sys_resolved, "levels": {"min_weight": min_weight}}


def cmd_spectrum(config, out: Path, args) -> dict:
    system, sys_resolved = resolve_system(config)
    section = config.get("spectrum", {})
    window = section.get("freq_window_mhz")
    threshold = section.get("strength_threshold_rel", 1e-6)
    pops_raw = section.get("populations", "ms0")
    sim = Simulator(system)
    if pops_raw == "ms0":
        populations = ms0_populations(sim.es)
    else:
        populations = level_populations(sim.es, pops_raw)
    drive = spinops.embed(spinops.spin_matrices(system.two_s)[0], 0, system.dims)
    lines = transition_spectrum(
        sim.es,
        drive,
        freq_window=tuple(window) if window else None,
        populations=populations,
        threshold_rel=threshold,
    )
    write_csv(
        out / "sticks.csv",
        ["freq_mhz", "strength", "from", "to"],
        [[_fmt(l.freq_mhz), _fmt(l.strength), l.from_level, l.to_level] for l in lines],
    )
    resolved = {
        "freq_window_mhz": window,
        "populations": pops_raw,
        "strength_threshold_rel": threshold,
        "lineshape": section.get("lineshape", "none"),
    }
    if resolved["lineshape"] != "none":
        width = section.get("width_mhz", 3.0)
        grid_raw = section.get("grid", {})
        if lines:
            lo = grid_raw.get("start_mhz", min(l.freq_mhz for l in lines) - 10 * width)
            hi = grid_raw.get("stop_mhz", max(l.freq_mhz for l in lines) + 10 * width)
        else:
            lo = grid_raw.get("start_mhz", 0.0)
            hi = grid_raw.get("stop_mhz", 1.0)
        points = grid_raw.get("points", 2001)
        grid = np.linspace(lo, hi, points)
        amp = broaden(lines, resolved["lineshape"], width, grid)
        write_csv(
            out / "spectrum.csv",
            ["freq_mhz", "amplitude"],
            [[_fmt(f), _fmt(a)] for f, a in zip(grid, amp)],
        )
        resolved.update({"width_mhz": width, "grid": {"start_mhz": lo, "stop_mhz": hi, "points": points}})
    return {"system": sys_resolved, "spectrum": resolved}


def _write_trace(out: Path, trace: TimeTrace) -> None:
    write_csv(
        out / "trace.csv",
        ["tau_us", "signal"],
        [[_fmt(t), _fmt(s)] for t, s in zip(trace.t_us, trace.signal)],
    )


def cmd_fid(config, out: Path, args) -> dict:
    system, sys_resolved = resolve_system(config)
    channels, chan_resolved = resolve_channels(config)
    readout, readout_resolved = resolve_readout(config)
    rwa = config.get("propagation", {}).get("rwa", True)
    section = _require(config, "fid")
    sim = Simulator(system, rwa=rwa, channels=channels)
    if "sequence" in config:
        sequence, seq_resolved = _build_inline_sequence(config["sequence"], sim, readout)
        pulse_resolved = None
    else:
        pulse_raw = section["pulse"]
        carrier = _resolve_carrier(pulse_raw, sim)
        rabi = pulse_raw.get("rabi_mhz", 31.25)
        transition = tuple(pulse_raw["transition"]) if "transition" in pulse_raw else None
        pulse = Pulse("mw", carrier_mhz=carrier, rabi_mhz=rabi, angle="pi/2",
                      transition=transition)
        sequence = Sequence([pulse, Delay(0.0, name="tau"), pulse], readout=readout)
        seq_resolved = None
        pulse_resolved = {"carrier_mhz": carrier, "rabi_mhz": rabi, "angle": "pi/2",
                          "transition": list(transition) if transition else None}
    taus = _resolve_sweep(section["sweep"], vars(args))
    pol = _polarization_kwargs(section.get("polarization", {}))
    trace = run_sequence(
        sim, sequence, taus, sweep_names=("tau",), polarization=pol, threads=args.threads
    )
    _write_trace(out, trace)
    return {
        "system": sys_resolved,
        "channels": chan_resolved,
        "readout": readout_resolved,
        "propagation": {"rwa": rwa},
        "sequence": seq_resolved,
        "fid": {
            "pulse": pulse_resolved,
            "sweep": {"start_us": float(taus[0]), "stop_us": float(taus[-1]),
                      "step_us": float(taus[1] - taus[0]) if len(taus) > 1 else 0.0},
            "polarization": section.get("polarization", {"p": 1.0}),
        },
    }


def cmd_echo(config, out: Path, args) -> dict:
    system, sys_resolved = resolve_system(config)
    channels, chan_resolved = resolve_channels(config)
    readout, readout_resolved = resolve_readout(config)
    rwa = config.get("propagation", {}).get("rwa", True)
    section = _require(config, "echo")
    seed = args.seed if args.seed is not None else config.get("seed", 0)
    sim = Simulator(system, rwa=rwa, channels=channels)
    seq_resolved = None
    pulse_resolved = None
    if "sequence" in config:
        sequence, seq_resolved = _build_inline_sequence(config["sequence"], sim, readout)
        carrier = rabi = transition = None
        ideal = None
    else:
        pulse_raw = section["pulse"]
        ideal = pulse_raw.get("ideal", False)
        transition = tuple(pulse_raw["transition"]) if "transition" in pulse_raw else None
        if ideal:
            if transition is None:
                raise ConfigError("echo: ideal pulses need a transition")
            carrier, rabi = None, None
            p90 = Pulse("mw", ideal=True, transition=transition, angle="pi/2")
            p180 = Pulse("mw", ideal=True, transition=transition, angle="pi")
        else:
            carrier = _resolve_carrier(pulse_raw, sim)
            rabi = pulse_raw.get("rabi_mhz", 31.25)
            p90 = Pulse("mw", carrier_mhz=carrier, rabi_mhz=rabi, angle="pi/2",
                        transition=transition)
            p180 = Pulse("mw", carrier_mhz=carrier, rabi_mhz=rabi, angle="pi",
                         transition=transition)
        sequence = Sequence(
            [p90, Delay(0.0, name="tau"), p180, Delay(0.0, name="tau2"), p90], readout=readout
        )
        pulse_resolved = {"carrier_mhz": carrier, "rabi_mhz": rabi, "ideal": ideal,
                          "transition": list(transition) if transition else None}
    taus = _resolve_sweep(section["sweep"], vars(args))
    pol = _polarization_kwargs(section.get("polarization", {}))
    ensemble = section.get("detuning_ensemble")
    if ensemble:
        trace = ensemble_average(
            system,
            sequence,
            ("gaussian", ensemble["sigma_mhz"]),
            ensemble["n_samples"],
            sweep_values=taus,
            sweep_names=("tau", "tau2"),
            channels=channels,
            rwa=rwa,
            polarization=pol,
            seed=seed,
        )
    else:
        trace = run_sequence(
            sim, sequence, taus, sweep_names=("tau", "tau2"), polarization=pol,
            threads=args.threads,
        )
    _write_trace(out, trace)
    return {
        "system": sys_resolved,
        "channels": chan_resolved,
        "readout": readout_resolved,
        "propagation": {"rwa": rwa},
        "seed": seed,
        "sequence": seq_resolved,
        "echo": {
            "pulse": pulse_resolved,
            "sweep": {"start_us": float(taus[0]), "stop_us": float(taus[-1]),
                      "step_us": float(taus[1] - taus[0]) if len(taus) > 1 else 0.0},
            "polarization": section.get("polarization", {"p": 1.0}),
            "detuning_ensemble": ensemble,
        },
    }


def cmd_nuclear_echo(config, out: Path, args) -> dict:
    system, sys_resolved = resolve_system(config)
    channels, chan_resolved = resolve_channels(config)
    readout, readout_resolved = resolve_readout(config)
    rwa = config.get("propagation", {}).get("rwa", True)
    section = _require(config, "nuclear_echo")
    sim = Simulator(system, rwa=rwa, channels=channels)
    if "sequence" in config:
        sequence, seq_resolved = _build_inline_sequence(config["sequence"], sim, readout)
        taus = _resolve_sweep(section["sweep"], vars(args))
        pol = _polarization_kwargs(section.get("polarization", {}))
        trace = run_sequence(
            sim, sequence, taus, sweep_names=("tau1", "tau2"), polarization=pol,
            threads=args.threads,
        )
        _write_trace(out, trace)
        return {
            "system": sys_resolved,
            "channels": chan_resolved,
            "readout": readout_resolved,
            "propagation": {"rwa": rwa},
            "sequence": seq_resolved,
            "nuclear_echo": {
                "sweep": {"start_us": float(taus[0]), "stop_us": float(taus[-1]),
                          "step_us": float(taus[1] - taus[0]) if len(taus) > 1 else 0.0},
                "polarization": section.get("polarization", {"p": 1.0}),
            },
        }

    mw_raw = section["mw_pulse"]
    mw_transition = tuple(mw_raw.get("transition", (1, 3)))
    if mw_raw.get("ideal", True):
        mw_pi = Pulse("mw", ideal=True, transition=mw_transition, angle="pi")
        mw_resolved = {"ideal": True, "transition": list(mw_transition)}
    else:
        carrier = _resolve_carrier(mw_raw, sim)
        rabi = mw_raw.get("rabi_mhz", 31.25)
        mw_pi = Pulse("mw", carrier_mhz=carrier, rabi_mhz=rabi, angle="pi", transition=mw_transition)
        mw_resolved = {"ideal": False, "carrier_mhz": carrier, "rabi_mhz": rabi,
                       "transition": list(mw_transition)}

    rf_raw = section["rf_pulse"]
    rf_transition = tuple(rf_raw.get("transition", (3, 4)))
    rf_target = rf_raw.get("target", 0)
    rf_rabi = rf_raw.get("rabi_mhz", 0.5)
    if rf_raw.get("ideal", False):
        rf90 = Pulse("rf", ideal=True, transition=rf_transition, angle="pi/2", target=rf_target)
        rf180 = Pulse("rf", ideal=True, transition=rf_transition, angle="pi", target=rf_target)
        rf_resolved = {"ideal": True, "transition": list(rf_transition), "target": rf_target}
    else:
        rf_carrier = _resolve_carrier(rf_raw, sim)
        rf90 = Pulse("rf", carrier_mhz=rf_carrier, rabi_mhz=rf_rabi, angle="pi/2",
                     transition=rf_transition, target=rf_target)
        rf180 = Pulse("rf", carrier_mhz=rf_carrier, rabi_mhz=rf_rabi, angle="pi",
                      transition=rf_transition, target=rf_target)
        rf_resolved = {"ideal": False, "carrier_mhz": rf_carrier, "rabi_mhz": rf_rabi,
                       "transition": list(rf_transition), "target": rf_target}

    sequence = Sequence(
        [mw_pi, rf90, Delay(0.0, name="tau1"), rf180, Delay(0.0, name="tau2"), rf90, mw_pi],
        readout=readout,
    )
    taus = _resolve_sweep(section["sweep"], vars(args))
    pol = _polarization_kwargs(section.get("polarization", {}))
    trace = run_sequence(
        sim, sequence, taus, sweep_names=("tau1", "tau2"), polarization=pol,
        threads=args.threads,
    )
    _write_trace(out, trace)
    return {
        "system": sys_resolved,
        "channels": chan_resolved,
        "readout": readout_resolved,
        "propagation": {"rwa": rwa},
        "nuclear_echo": {
            "mw_pulse": mw_resolved,
            "rf_pulse": rf_resolved,
            "sweep": {"start_us": float(taus[0]), "stop_us": float(taus[-1]),
                      "step_us": float(taus[1] - taus[0]) if len(taus) > 1 else 0.0},
            "polarization": section.get("polarization", {"p": 1.0}),
        },
    }


def cmd_fft(config, out: Path, args) -> dict:
    section = config.get("fft", {})
    trace_path = args.trace or section.get("trace_csv") or str(out / "trace.csv")
    window = section.get("window", "hann")
    zero_pad = section.get("zero_pad", 4)
    prominence_rel = section.get("min_prominence_rel", 1e-6)
    t_range = section.get("range_us")
    if args.range:
        try:
            lo, hi = (float(x) for x in args.range.split(":"))
        except ValueError:
            raise ConfigError(f"--range must be 'lo:hi', got {args.range!r}")
        t_range = [lo, hi]
    try:
        data = np.loadtxt(trace_path, delimiter=",", skiprows=1)
    except OSError as exc:
        raise ConfigError(f"cannot read trace {trace_path}: {exc}")
    trace = TimeTrace(data[:, 0], data[:, 1])
    ps = fft_spectrum(trace, window=window, t_range=tuple(t_range) if t_range else None,
                      zero_pad=zero_pad)
    write_csv(
        out / "fft.csv",
        ["freq_mhz", "power"],
        [[_fmt(f), _fmt(p)] for f, p in zip(ps.freq_mhz, ps.power)],
    )
    peaks = find_peaks(ps, min_prominence=prominence_rel * float(ps.power.max()))
    write_json(out / "peaks.json", {
        "resolution_mhz": ps.resolution_mhz,
        "peaks": [{"freq_mhz": f, "power": p} for f, p in peaks],
    })
    return {
        "fft": {
            "trace_csv": str(trace_path),
            "window": window,
            "range_us": t_range,
            "zero_pad": zero_pad,
            "min_prominence_rel": prominence_rel,
        }
    }


def cmd_fit(config, out: Path, args) -> dict:
    system, sys_resolved = resolve_system(config)
    section = _require(config, "fit")
    problem = FitProblem(
        observed_mhz=list(section["observed_mhz"]),
        free={k: tuple(v) for k, v in section["free"].items()},
        system=system,
        fixed_values=section.get("fixed", {}),
        freq_window=tuple(section["freq_window_mhz"]) if section.get("freq_window_mhz") else None,
        n_predicted=section.get("n_predicted"),
        max_residual_mhz=section.get("max_residual_mhz", np.inf),
    )
    result = fit_field(problem, grid_steps=section.get("grid_steps"))
    write_json(out / "fit.json", {
        "params": result.params,
        "rms_mhz": result.rms_mhz,
        "converged": result.converged,
        "unconstrained": result.unconstrained,
        "n_evaluations": result.n_evaluations,
        "assignment": [
            {"observed_mhz": o, "predicted_mhz": p, "from": a, "to": b}
            for o, p, a, b in result.assignment
        ],
    })
    return {
        "system": sys_resolved,
        "fit": {
            "observed_mhz": list(section["observed_mhz"]),
            "free": section["free"],
            "fixed": section.get("fixed", {}),
            "freq_window_mhz": section.get("freq_window_mhz"),
            "n_predicted": section.get("n_predicted"),
            "max_residual_mhz": section.get("max_residual_mhz"),
            "grid_steps": section.get("grid_steps", {}),
        },
    }


def _require(config: dict, section: str) -> dict:
    if section not in config:
        raise ConfigError(f"missing config section: {section}")
    return config[section]


_COMMANDS = {
    "levels": cmd_levels,
    "spectrum": cmd_spectrum,
    "fid": cmd_fid,
    "echo": cmd_echo,
    "nuclear-echo": cmd_nuclear_echo,
    "fft": cmd_fft,
    "fit": cmd_fit,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nvspin",
        description="Defect-center spin simulator: levels, spectra, pulse sequences, fits.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON config path")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--threads", type=int, default=1, help="sweep parallelism")
        if name == "fid":
            p.add_argument("--tau-max", dest="tau_max", type=float, default=None)
            p.add_argument("--tau-step", dest="tau_step", type=float, default=None)
            p.add_argument("--tau-min", dest="tau_min", type=float, default=None)
        else:
            p.set_defaults(tau_max=None, tau_step=None, tau_min=None)
        if name == "fft":
            p.add_argument("--range", default=None, help="time slice lo:hi in us")
            p.add_argument("--trace", default=None, help="input trace CSV")
        else:
            p.set_defaults(range=None, trace=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        seed = args.seed if args.seed is not None else config.get("seed", 0)
        resolved = _COMMANDS[args.command](config, out, args)
        resolved.setdefault("seed", seed)
        resolved["threads"] = args.threads
        write_run_meta(out, args.command, resolved)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # numerical / domain failures
        print(f"error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
