"""Estimation of field magnitude/orientation (and hyperfine scalars) from
observed transition frequencies.

The objective is the rms frequency residual after optimally assigning each
observed line to a distinct predicted line.  Eigenvalue-order changes make
the objective only piecewise smooth, so the optimizer is derivative-free: a
coarse grid scan over the bounds followed by a compass (pattern) search from
the best grid points.  Everything is deterministic for a given problem.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dataclass_field, replace

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import spinops
from .hamiltonian import SpinSystem, axial_tensor, field_vector, build_hamiltonian
from .spectra import eigensolve, ms0_populations, transition_spectrum

_PARAM_NAMES = ("b_gauss", "theta_deg", "phi_deg", "a_par_mhz", "a_perp_mhz")
_DEFAULT_GRID_STEP = {"b_gauss": 5.0, "theta_deg": 5.0, "phi_deg": 5.0,
                      "a_par_mhz": 5.0, "a_perp_mhz": 5.0}


@dataclass
class FitProblem:
    """Observed lines plus the free parameters and the fixed system parts.

    free maps parameter names (among b_gauss, theta_deg, phi_deg, a_par_mhz,
    a_perp_mhz) to (lower, upper) bounds; fixed_values supplies the values of
    whichever of those parameters are not free (defaults: field of `system`,
    hyperfine of nucleus 0).  Hyperfine scalars refit nucleus 0 as an axial
    tensor with its configured principal axis.
    """

    observed_mhz: list
    free: dict
    system: SpinSystem
    fixed_values: dict = dataclass_field(default_factory=dict)
    freq_window: tuple = None
    n_predicted: int = None
    max_residual_mhz: float = np.inf
    strength_threshold_rel: float = 1e-3

    def __post_init__(self):
        if len(self.observed_mhz) < len(self.free):
            raise ValueError(
                f"{len(self.free)} free parameters need at least as many "
                f"observed lines, got {len(self.observed_mhz)}"
            )
        for name in self.free:
            if name not in _PARAM_NAMES:
                raise ValueError(f"unknown fit parameter {name!r}; choose from {_PARAM_NAMES}")
            lo, hi = self.free[name]
            if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
                raise ValueError(f"bounds for {name!r} must be finite with lo < hi")


@dataclass
class FitResult:
    params: dict
    rms_mhz: float
    assignment: list
    converged: bool
    unconstrained: list
    n_evaluations: int


def _apply_params(problem: FitProblem, values: dict) -> SpinSystem:
    base = problem.system
    merged = dict(problem.fixed_values)
    merged.update(values)

    b = merged.get("b_gauss")
    th = merged.get("theta_deg")
    ph = merged.get("phi_deg", 0.0)
    if b is None or th is None:
        bx, by, bz = base.field_gauss
        mag = float(np.linalg.norm(base.field_gauss))
        b = mag if b is None else b
        if th is None:
            th = float(np.rad2deg(np.arccos(bz / mag))) if mag > 0 else 0.0
    system = base.with_field(b, th, ph)

    if "a_par_mhz" in merged or "a_perp_mhz" in merged:
        if not system.nuclei:
            raise ValueError("hyperfine fit parameters need at least one nucleus")
        nuc = system.nuclei[0]
        evals, evecs = np.linalg.eigh(nuc.hyperfine_mhz)
        # unique axis = eigenvector of the non-degenerate principal value
        gaps = [abs(evals[0] - evals[1]), abs(evals[1] - evals[2]), abs(evals[0] - evals[2])]
        unique_idx = 2 if gaps[0] <= min(gaps[1], gaps[2]) else 0
        axis = evecs[:, unique_idx]
        a_par = merged.get("a_par_mhz", evals[unique_idx])
        others = [evals[i] for i in range(3) if i != unique_idx]
        a_perp = merged.get("a_perp_mhz", float(np.mean(others)))
        tensor = a_perp * np.eye(3) + (a_par - a_perp) * np.outer(axis, axis)
        nuclei = [replace(nuc, hyperfine_mhz=tensor)] + list(system.nuclei[1:])
        system = replace(system, nuclei=nuclei)
    return system


def predicted_lines(problem: FitProblem, values: dict):
    system = _apply_params(problem, values)
    es = eigensolve(build_hamiltonian(system), system.dims)
    drive = spinops.embed(spinops.spin_matrices(system.two_s)[0], 0, system.dims)
    lines = transition_spectrum(
        es,
        drive,
        freq_window=problem.freq_window,
        populations=ms0_populations(es),
        threshold_rel=problem.strength_threshold_rel,
    )
    lines.sort(key=lambda l: -l.strength)
    if problem.n_predicted:
        lines = lines[: problem.n_predicted]
    return lines


def _match(observed, lines):
    """Optimal injective assignment of observed to predicted lines.

    Returns (rms, pairs) where pairs is a list of
    (observed_freq, predicted_freq, from_level, to_level).
    """
    if len(lines) < len(observed):
        return np.inf, []
    obs = np.asarray(observed, dtype=float)
    pred = np.array([l.freq_mhz for l in lines])
    cost = np.abs(obs[:, None] - pred[None, :])
    rows, cols = linear_sum_assignment(cost)
    residuals = cost[rows, cols]
    pairs = [
        (float(obs[r]), lines[c].freq_mhz, lines[c].from_level, lines[c].to_level)
        for r, c in zip(rows, cols)
    ]
    return float(np.sqrt(np.mean(residuals**2))), pairs


def objective(values: dict, problem: FitProblem) -> float:
    """rms (MHz) of the optimally matched observed vs predicted lines."""
    rms, _ = _match(problem.observed_mhz, predicted_lines(problem, values))
    return rms


def unconstrained_parameters(problem: FitProblem):
    """Free parameters the spectrum cannot determine (axial symmetry)."""
    if "phi_deg" not in problem.free:
        return []
    g = problem.system.g_tensor
    axial = abs(g[0, 0] - g[1, 1]) < 1e-12 and np.max(np.abs(g - np.diag(np.diag(g)))) < 1e-12
    for nuc in problem.system.nuclei:
        a = nuc.hyperfine_mhz
        off = max(abs(a[0, 1]), abs(a[0, 2]), abs(a[1, 2]))
        axial = axial and off < 1e-12 and abs(a[0, 0] - a[1, 1]) < 1e-12
    return ["phi_deg"] if axial else []


def fit_field(
    problem: FitProblem,
    grid_steps: dict = None,
    n_starts: int = 4,
    refine_rel_tol: float = 2e-5,
) -> FitResult:
    """Grid scan plus compass search over the free parameters.

    The coarse grid (default 5 G / 5 deg spacing) seeds `n_starts` local
    pattern searches; each halves its step until it falls below
    refine_rel_tol times the initial step.  Azimuth-degenerate problems are
    reported rather than silently pinned.
    """
    unconstrained = unconstrained_parameters(problem)
    free_names = [n for n in problem.free if n not in unconstrained]
    bounds = {n: problem.free[n] for n in free_names}
    pinned = {n: 0.5 * (problem.free[n][0] + problem.free[n][1]) for n in unconstrained}
    steps = dict(_DEFAULT_GRID_STEP)
    steps.update(grid_steps or {})

    n_evals = 0

    def evaluate(point: dict) -> float:
        nonlocal n_evals
        n_evals += 1
        return objective({**point, **pinned}, problem)

    axes = {
        n: np.arange(bounds[n][0], bounds[n][1] + 0.5 * steps[n], steps[n])
        for n in free_names
    }
    mesh = np.meshgrid(*[axes[n] for n in free_names], indexing="ij")
    grid_points = np.stack([m.ravel() for m in mesh], axis=-1)
    grid_rms = np.array([
        evaluate(dict(zip(free_names, pt))) for pt in grid_points
    ])
    order = np.argsort(grid_rms, kind="stable")

    best_point, best_rms = None, np.inf
    for start_idx in order[: max(1, n_starts)]:
        point = dict(zip(free_names, grid_points[start_idx]))
        rms = grid_rms[start_idx]
        step = {n: steps[n] for n in free_names}
        while max(step[n] / steps[n] for n in free_names) > refine_rel_tol:
            improved = False
            for n in free_names:
                for direction in (+1.0, -1.0):
                    trial = dict(point)
                    trial[n] = float(np.clip(point[n] + direction * step[n], *bounds[n]))
                    if trial[n] == point[n]:
                        continue
                    trial_rms = evaluate(trial)
                    if trial_rms < rms - 1e-15:
                        point, rms, improved = trial, trial_rms, True
            if not improved:
                for n in free_names:
                    step[n] *= 0.5
        if best_point is None or rms < best_rms:
            best_point, best_rms = point, rms

    final_values = {**best_point, **pinned}
    rms, pairs = _match(problem.observed_mhz, predicted_lines(problem, final_values))
    converged = rms <= problem.max_residual_mhz
    params = dict(final_values)
    for name in unconstrained:
        params[name] = None
    return FitResult(
        params=params,
        rms_mhz=rms,
        assignment=pairs,
        converged=converged,
        unconstrained=unconstrained,
        n_evaluations=n_evals,
    )
