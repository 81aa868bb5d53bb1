"""Density-matrix propagation through microwave/rf pulse sequences.

States are carried as density matrices in the eigenbasis of the static
Hamiltonian (trace 1, positive semidefinite).  Two propagation modes are
available for pulses:

* ``rwa=True`` (default): the drive 2*Omega*cos(2*pi*f*t + phi)*D is replaced
  by its co-rotating part in a frame rotating at the carrier.  Levels are
  grouped into manifolds by rounding their energy to multiples of the
  carrier, so a single carrier addresses every near-resonant pair at once
  (simultaneous excitation of transitions closer than the Rabi frequency
  comes out naturally).  Frame phases are tracked against absolute sequence
  time, so multi-pulse interference (echoes, FID fringes) is exact within
  the approximation.
* ``rwa=False``: brute-force integration of the lab-frame time-dependent
  Hamiltonian with a fixed-step midpoint exponential integrator.  Slow, but
  free of the approximation; used as a cross-check oracle.

Between pulses, evolution is closed-form: eigenbasis phases plus exponential
damping of coherences for dephasing channels.  Depolarizing channels (state
randomization of one spin) do not commute with the free evolution and are
applied in short interleaved steps.

Pulse rotation angles are defined by the nutation frequency `rabi_mhz` of an
ideal isolated transition: a pi/2 pulse lasts 1/(4*rabi).  The drive
amplitude is normalized accordingly via the largest matrix element of the
addressed spin's x operator.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dataclass_field, replace

import numpy as np
from scipy.linalg import eigh

from . import spinops
from .analysis import TimeTrace
from .hamiltonian import SpinSystem, build_hamiltonian
from .spectra import EigenSystem, eigensolve

_ANGLES = {"pi": np.pi, "pi/2": np.pi / 2.0, "pi*3/2": 3.0 * np.pi / 2.0}


@dataclass
class Pulse:
    """One resonant drive pulse.

    channel "mw" drives the electron x operator, "rf" the x operator of
    nucleus `target`.  Either `duration_us` or `angle` ("pi", "pi/2", or a
    value in radians) must be given; an angle is converted to a duration via
    the nutation frequency.

    `transition` (a pair of 1-based level labels) calibrates the drive
    amplitude so that the nutation frequency on that eigenlevel pair equals
    rabi_mhz, the way a pulse is calibrated on a resonance line in the lab.
    Without it the amplitude is normalized to the largest matrix element of
    the bare spin operator, which is exact for unmixed level pairs.  With
    ideal=True the pulse is instead replaced by an instantaneous perfect
    rotation on `transition`.
    """

    channel: str
    carrier_mhz: float = 0.0
    rabi_mhz: float = 0.0
    duration_us: float = None
    angle: object = None
    phase_rad: float = 0.0
    target: int = 0
    ideal: bool = False
    transition: tuple = None

    def __post_init__(self):
        if self.channel not in ("mw", "rf"):
            raise ValueError(f"pulse channel must be 'mw' or 'rf', got {self.channel!r}")
        if self.ideal:
            if self.transition is None:
                raise ValueError("ideal pulses need an explicit transition (pair of labels)")
            if self.rotation_angle is None:
                raise ValueError("ideal pulses need an angle")
            return
        if self.rabi_mhz <= 0:
            raise ValueError(f"rabi_mhz must be > 0, got {self.rabi_mhz}")
        if self.duration_us is None:
            if self.angle is None:
                raise ValueError("pulse needs either duration_us or angle")
            self.duration_us = self.rotation_angle / (2.0 * np.pi * self.rabi_mhz)
        if self.duration_us < 0:
            raise ValueError(f"duration must be >= 0, got {self.duration_us}")

    @property
    def rotation_angle(self):
        if self.angle is None:
            return None
        if isinstance(self.angle, str):
            try:
                return _ANGLES[self.angle]
            except KeyError:
                raise ValueError(f"unknown angle {self.angle!r}; use 'pi', 'pi/2' or radians")
        return float(self.angle)

    @property
    def length_us(self) -> float:
        return 0.0 if self.ideal else self.duration_us


@dataclass
class Delay:
    """Free evolution for duration_us; `name` makes it addressable by sweeps."""

    duration_us: float
    name: str = None

    def __post_init__(self):
        if self.duration_us < 0:
            raise ValueError(f"delay duration must be >= 0, got {self.duration_us}")


@dataclass
class DecoherenceChannel:
    """Phenomenological decay channel.

    kind "dephasing" damps eigenbasis coherences between levels whose
    dominant character differs in the target spin, at `rate_per_us`.
    kind "depolarizing" randomizes the target spin toward its maximally
    mixed state at `rate_per_us`.  target is "electron" or a nucleus index.
    """

    kind: str
    target: object
    rate_per_us: float

    def __post_init__(self):
        if self.kind not in ("dephasing", "depolarizing"):
            raise ValueError(f"unknown channel kind {self.kind!r}")
        if self.rate_per_us < 0:
            raise ValueError(f"channel rate must be >= 0, got {self.rate_per_us}")


@dataclass
class ReadoutModel:
    """Signal = 1 - contrast * (1 - population of the bright manifold).

    bright is "ms0" (levels of electron character m_s = 0) or an explicit
    list of 1-based level labels.
    """

    bright: object = "ms0"
    contrast: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.contrast <= 1.0:
            raise ValueError(f"contrast must be in [0, 1], got {self.contrast}")


@dataclass
class Sequence:
    elements: list
    readout: ReadoutModel = dataclass_field(default_factory=ReadoutModel)

    def delay_names(self):
        return [e.name for e in self.elements if isinstance(e, Delay) and e.name]

    def with_delays(self, assignments: dict) -> "Sequence":
        """Copy with named delays set to new durations."""
        missing = set(assignments) - set(self.delay_names())
        if missing:
            raise ValueError(f"sequence has no delay named {sorted(missing)}")
        elements = [
            replace(e, duration_us=assignments[e.name])
            if isinstance(e, Delay) and e.name in assignments
            else e
            for e in self.elements
        ]
        return Sequence(elements, self.readout)


class Simulator:
    """Cached propagation machinery for one spin system.

    Builds the Hamiltonian and its eigensystem once; density matrices are
    expressed in that eigenbasis throughout.
    """

    def __init__(self, system: SpinSystem, rwa: bool = True, channels=(),
                 h_extra_mhz: np.ndarray = None, lab_steps_per_cycle: int = 50):
        self.system = system
        self.rwa = rwa
        self.channels = list(channels)
        self.lab_steps_per_cycle = lab_steps_per_cycle
        h = build_hamiltonian(system)
        if h_extra_mhz is not None:
            h = h + np.asarray(h_extra_mhz)
        self.h = h
        self.es: EigenSystem = eigensolve(h, system.dims)
        self.energies = self.es.energies
        self.dim = self.es.dim
        self._drive_cache = {}
        self._char_cache = {}

    # -- structure helpers -------------------------------------------------

    def drive_operator(self, channel: str, target: int = 0) -> np.ndarray:
        """Eigenbasis matrix of the drive (electron Sx or nuclear Ix)."""
        key = (channel, target)
        if key not in self._drive_cache:
            dims = self.system.dims
            if channel == "mw":
                slot, two_s = 0, self.system.two_s
            elif channel == "rf":
                if not 0 <= target < len(self.system.nuclei):
                    raise ValueError(f"no nucleus with index {target}")
                slot, two_s = target + 1, self.system.nuclei[target].two_i
            else:
                raise ValueError(f"unknown channel {channel!r}")
            op = spinops.embed(spinops.spin_matrices(two_s)[0], slot, dims)
            d_eig = self.es.states.conj().T @ op @ self.es.states
            # reference element of an ideal isolated transition, for rabi
            # normalization
            d_ref = np.max(np.abs(spinops.spin_matrices(two_s)[0]))
            self._drive_cache[key] = (d_eig, d_ref)
        return self._drive_cache[key]

    def _drive_amplitude(self, pulse: Pulse):
        """(d_eig, amplitude) with the rabi normalization of the pulse."""
        d_eig, d_ref = self.drive_operator(pulse.channel, pulse.target)
        if pulse.transition is not None:
            a, b = (int(x) - 1 for x in pulse.transition)
            d_ref = float(np.abs(d_eig[a, b]))
            if d_ref < 1e-9:
                raise ValueError(
                    f"transition {pulse.transition} is not driven by the "
                    f"{pulse.channel} channel (matrix element {d_ref:.2g})"
                )
        return d_eig, pulse.rabi_mhz / (2.0 * d_ref)

    def character(self, target) -> np.ndarray:
        """Dominant projection index of one spin for every level."""
        if target not in self._char_cache:
            slot = 0 if target == "electron" else int(target) + 1
            self._char_cache[target] = self.es.subsystem_character(slot)
        return self._char_cache[target]

    def bright_levels(self, readout: ReadoutModel) -> np.ndarray:
        if readout.bright == "ms0":
            return np.where(np.abs(self.es.electron_character()) < 0.5)[0]
        labels = np.asarray(readout.bright, dtype=int)
        if np.any(labels < 1) or np.any(labels > self.dim):
            raise ValueError(f"bright levels out of range 1..{self.dim}")
        return labels - 1

    # -- state preparation and readout -------------------------------------

    def polarize(self, p: float = 1.0, rest: dict = None, weights: dict = None) -> np.ndarray:
        """Initial density matrix, diagonal in the eigenbasis.

        Weight p goes to level 1 and 1-p is distributed over the labels in
        `rest` (relative weights, normalized).  Alternatively `weights` gives
        the full {label: weight} map directly.
        """
        if weights is not None:
            diag = np.zeros(self.dim)
            for label, w in weights.items():
                diag[int(label) - 1] = float(w)
        else:
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"polarization p must be in [0, 1], got {p}")
            diag = np.zeros(self.dim)
            diag[0] = p
            if p < 1.0:
                if not rest:
                    raise ValueError("p < 1 needs a `rest` distribution over levels")
                rest_total = sum(rest.values())
                for label, w in rest.items():
                    diag[int(label) - 1] += (1.0 - p) * float(w) / rest_total
        total = diag.sum()
        if total <= 0 or np.any(diag < 0):
            raise ValueError("invalid polarization weights")
        return np.diag(diag / total).astype(complex)

    def signal(self, rho: np.ndarray, readout: ReadoutModel) -> float:
        bright = self.bright_levels(readout)
        p_bright = float(np.sum(np.real(np.diag(rho)[bright])))
        return 1.0 - readout.contrast * (1.0 - p_bright)

    # -- pulses -------------------------------------------------------------

    def pulse_unitary(self, pulse: Pulse, t0_us: float = 0.0) -> np.ndarray:
        if pulse.ideal:
            return self._ideal_unitary(pulse)
        if self.rwa:
            return self._rwa_unitary(pulse, t0_us)
        return self._lab_unitary(pulse, t0_us)

    def _ideal_unitary(self, pulse: Pulse) -> np.ndarray:
        a, b = (int(x) - 1 for x in pulse.transition)
        theta = pulse.rotation_angle
        u = np.eye(self.dim, dtype=complex)
        c, s = np.cos(theta / 2.0), np.sin(theta / 2.0)
        u[a, a] = c
        u[b, b] = c
        u[a, b] = -1j * np.exp(-1j * pulse.phase_rad) * s
        u[b, a] = -1j * np.exp(1j * pulse.phase_rad) * s
        return u

    def _frame_quanta(self, f_c: float) -> np.ndarray:
        return np.round((self.energies - self.energies[0]) / f_c).astype(int)

    def _rwa_unitary(self, pulse: Pulse, t0_us: float) -> np.ndarray:
        d_eig, amp = self._drive_amplitude(pulse)
        f_c = pulse.carrier_mhz
        if f_c <= 0:
            raise ValueError("rwa pulses need a positive carrier frequency")
        n = self._frame_quanta(f_c)
        lower = (n[:, None] - n[None, :]) == -1  # row manifold one quantum below
        coupling = np.where(lower, d_eig, 0.0)
        h_rot = (
            np.diag(self.energies - f_c * n)
            + amp * (coupling * np.exp(1j * pulse.phase_rad))
            + amp * (coupling * np.exp(1j * pulse.phase_rad)).conj().T
        )
        u_rot = _expm_herm(h_rot, pulse.duration_us)
        t1 = t0_us + pulse.duration_us
        r0 = np.exp(1j * 2.0 * np.pi * f_c * n * t0_us)
        r1 = np.exp(-1j * 2.0 * np.pi * f_c * n * t1)
        return (r1[:, None] * u_rot) * r0[None, :]

    def _lab_unitary(self, pulse: Pulse, t0_us: float) -> np.ndarray:
        d_eig, amp = self._drive_amplitude(pulse)
        f_c = pulse.carrier_mhz
        f_scale = max(f_c, float(self.energies.max() - self.energies.min()), pulse.rabi_mhz)
        dt = 1.0 / (self.lab_steps_per_cycle * f_scale)
        n_steps = max(1, int(np.ceil(pulse.duration_us / dt)))
        dt = pulse.duration_us / n_steps
        h_static = np.diag(self.energies).astype(complex)
        u = np.eye(self.dim, dtype=complex)
        for k in range(n_steps):
            t_mid = t0_us + (k + 0.5) * dt
            drive = 2.0 * amp * np.cos(2.0 * np.pi * f_c * t_mid + pulse.phase_rad)
            u = _expm_herm(h_static + drive * d_eig, dt) @ u
        return u

    # -- free evolution -----------------------------------------------------

    def evolve(self, rho: np.ndarray, duration_us: float, channels=None) -> np.ndarray:
        """Free evolution with the configured decoherence channels."""
        if duration_us < 0:
            raise ValueError(f"duration must be >= 0, got {duration_us}")
        if duration_us == 0:
            return rho.copy()
        channels = self.channels if channels is None else channels
        dephasing = [c for c in channels if c.kind == "dephasing" and c.rate_per_us > 0]
        depol = [c for c in channels if c.kind == "depolarizing" and c.rate_per_us > 0]
        if not depol:
            return self._phase_and_damp(rho, duration_us, dephasing)
        # depolarizing does not commute with the phases: interleave in steps
        # short enough to resolve both the jump rate and the energy mismatch
        # between the coherences the randomization couples (splittings of the
        # target spin within each manifold of the others).
        f_span = max(self._exchange_span(c.target) for c in depol)
        rate = sum(c.rate_per_us for c in depol)
        dt = min(0.2 / rate, 1.0 / (8.0 * f_span) if f_span > 0 else np.inf, duration_us)
        n_steps = max(1, int(np.ceil(duration_us / dt)))
        dt = duration_us / n_steps
        for _ in range(n_steps):
            rho = self._phase_and_damp(rho, dt, dephasing)
            for c in depol:
                p = 1.0 - np.exp(-c.rate_per_us * dt)
                rho = (1.0 - p) * rho + p * self._randomized(rho, c.target)
        return rho

    def _phase_and_damp(self, rho, duration_us, dephasing) -> np.ndarray:
        phases = np.exp(-1j * 2.0 * np.pi * self.energies * duration_us)
        out = (phases[:, None] * rho) * phases.conj()[None, :]
        for c in dephasing:
            char = self.character(c.target)
            differs = char[:, None] != char[None, :]
            out = out * np.where(differs, np.exp(-c.rate_per_us * duration_us), 1.0)
        return out

    def _randomized(self, rho: np.ndarray, target) -> np.ndarray:
        """rho with the target spin replaced by its maximally mixed state."""
        dims = self.system.dims
        slot = 0 if target == "electron" else int(target) + 1
        d = dims[slot]
        v = self.es.states
        rho_prod = v @ rho @ v.conj().T
        shaped = rho_prod.reshape(*dims, *dims)
        n_slots = len(dims)
        traced = np.trace(shaped, axis1=slot, axis2=n_slots + slot)
        eye = np.eye(d) / d
        mixed = np.tensordot(traced, eye, axes=0)  # (...dims-slot..., ...dims-slot..., d, d)
        # restore slot ordering: move the two new axes back into place
        order = list(range(2 * (n_slots - 1)))
        row_axes = order[: n_slots - 1]
        col_axes = order[n_slots - 1 :]
        perm = (
            row_axes[:slot] + [2 * (n_slots - 1)] + row_axes[slot:]
            + col_axes[:slot] + [2 * (n_slots - 1) + 1] + col_axes[slot:]
        )
        mixed = np.transpose(mixed, perm).reshape(rho.shape)
        return v.conj().T @ mixed @ v

    def _exchange_span(self, target) -> float:
        """Largest energy spread of target-spin sublevels within one manifold
        of every other spin's character."""
        slot = 0 if target == "electron" else int(target) + 1
        keys = [
            self.character("electron" if s == 0 else s - 1)
            for s in range(len(self.system.dims))
            if s != slot
        ]
        groups = {}
        for i in range(self.dim):
            key = tuple(k[i] for k in keys)
            groups.setdefault(key, []).append(self.energies[i])
        return max(
            (max(e) - min(e)) for e in groups.values()
        ) if groups else 0.0

    # -- sequences ------------------------------------------------------------

    def run(self, sequence: Sequence, rho: np.ndarray = None, t0_us: float = 0.0):
        """Apply all elements in order; returns (rho, final_time)."""
        if rho is None:
            rho = self.polarize()
        t = t0_us
        for element in sequence.elements:
            if isinstance(element, Pulse):
                u = self.pulse_unitary(element, t)
                rho = u @ rho @ u.conj().T
                t += element.length_us
            elif isinstance(element, Delay):
                rho = self.evolve(rho, element.duration_us)
                t += element.duration_us
            else:
                raise TypeError(f"unknown sequence element {element!r}")
        return rho, t


def polarize(system: SpinSystem, p: float = 1.0, rest: dict = None,
             weights: dict = None) -> np.ndarray:
    """Eigenbasis density matrix for an optically polarized system."""
    return Simulator(system).polarize(p=p, rest=rest, weights=weights)


def apply_pulse(rho: np.ndarray, pulse: Pulse, sim: Simulator, t0_us: float = 0.0) -> np.ndarray:
    u = sim.pulse_unitary(pulse, t0_us)
    return u @ rho @ u.conj().T


def evolve(rho: np.ndarray, duration_us: float, sim: Simulator, channels=None) -> np.ndarray:
    return sim.evolve(rho, duration_us, channels=channels)


def run_sequence(
    system,
    sequence: Sequence,
    sweep_values,
    sweep_names=("tau",),
    channels=(),
    rwa: bool = True,
    polarization: dict = None,
    threads: int = 1,
) -> TimeTrace:
    """Signal versus swept delay duration.

    For every sweep value the named Delay elements are set to that value,
    the system is polarized, the sequence applied, and the readout signal
    recorded.  Results are ordered by sweep value.
    """
    sim = system if isinstance(system, Simulator) else Simulator(system, rwa=rwa, channels=channels)
    if isinstance(sweep_names, str):
        sweep_names = (sweep_names,)
    names = set(sequence.delay_names())
    missing = set(sweep_names) - names
    if missing:
        raise ValueError(f"sweep targets {sorted(missing)} not found among named delays {sorted(names)}")
    values = np.asarray(sweep_values, dtype=float)
    rho0 = sim.polarize(**(polarization or {}))

    def one(v: float) -> float:
        seq = sequence.with_delays({name: v for name in sweep_names})
        rho, _ = sim.run(seq, rho0.copy())
        return sim.signal(rho, sequence.readout)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            signals = list(pool.map(one, values))
    else:
        signals = [one(v) for v in values]
    return TimeTrace(values, np.asarray(signals))


def ensemble_average(
    system: SpinSystem,
    sequence: Sequence,
    detuning_dist,
    n_samples: int = 1,
    sweep_values=None,
    sweep_names=("tau",),
    channels=(),
    rwa: bool = True,
    polarization: dict = None,
    seed: int = 0,
) -> TimeTrace:
    """Mean trace over a static distribution of electron detunings.

    detuning_dist is ("gaussian", sigma_mhz) or ("discrete", [values]); each
    sample shifts the electron Zeeman term by detuning * Sz.  Deterministic
    for a given seed.
    """
    kind, param = detuning_dist
    if kind == "gaussian":
        if n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        rng = np.random.default_rng(seed)
        detunings = rng.normal(0.0, param, n_samples) if param > 0 else np.zeros(n_samples)
    elif kind == "discrete":
        detunings = np.asarray(param, dtype=float)
    else:
        raise ValueError(f"unknown detuning distribution {kind!r}")

    sz_full = spinops.embed(
        spinops.spin_matrices(system.two_s)[2], 0, system.dims
    )
    total = None
    for delta in detunings:
        sim = Simulator(system, rwa=rwa, channels=channels, h_extra_mhz=delta * sz_full)
        trace = run_sequence(
            sim, sequence, sweep_values, sweep_names, polarization=polarization
        )
        total = trace.signal if total is None else total + trace.signal
    return TimeTrace(np.asarray(sweep_values, dtype=float), total / len(detunings))


def _expm_herm(h: np.ndarray, t_us: float) -> np.ndarray:
    """exp(-i 2 pi H t) for Hermitian H in MHz, t in microseconds."""
    vals, vecs = eigh(h)
    return (vecs * np.exp(-1j * 2.0 * np.pi * vals * t_us)) @ vecs.conj().T
