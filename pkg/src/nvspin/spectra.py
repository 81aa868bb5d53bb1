"""Eigensystem, transition lines and broadened cw spectra.

Levels are labeled 1..N in order of increasing energy; label 1 is the ground
state.  All downstream code (pulse targeting, readout manifolds, fitted line
assignments) refers to these labels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh

from . import spinops

_DEGENERACY_TOL_MHZ = 1e-6


@dataclass
class EigenSystem:
    """Sorted energies (MHz) and matching orthonormal eigenvectors (columns)."""

    energies: np.ndarray
    states: np.ndarray
    dims: tuple

    @property
    def dim(self) -> int:
        return len(self.energies)

    @property
    def labels(self) -> np.ndarray:
        return np.arange(1, self.dim + 1)

    def state(self, label: int) -> np.ndarray:
        """Eigenvector for a 1-based level label."""
        return self.states[:, label - 1]

    def splitting(self, label_a: int, label_b: int) -> float:
        """|E_a - E_b| in MHz."""
        return abs(self.energies[label_a - 1] - self.energies[label_b - 1])

    def basis_weights(self, label: int) -> np.ndarray:
        """Product-basis populations |<basis_i|level>|^2."""
        return np.abs(self.state(label)) ** 2

    def composition(self, label: int, min_weight: float = 0.01):
        """Dominant product-basis projections of a level.

        Returns a list of ((m_electron, m_nuc1, ...), weight) sorted by
        descending weight, truncated at `min_weight`.
        """
        two_s_list = [d - 1 for d in self.dims]
        basis = spinops.product_basis(two_s_list)
        w = self.basis_weights(label)
        order = np.argsort(w)[::-1]
        return [(basis[i], float(w[i])) for i in order if w[i] >= min_weight]

    def subsystem_character(self, slot: int) -> np.ndarray:
        """Dominant projection index of subsystem `slot` for every level.

        Index 0 is the highest projection (m = +S).  Used to classify levels
        into manifolds (e.g. electron m_s character) for readout and
        decoherence targeting.
        """
        dims = self.dims
        n_levels = self.dim
        pop = np.abs(self.states) ** 2  # (basis, level)
        shaped = pop.reshape(*dims, n_levels)
        axes = tuple(a for a in range(len(dims)) if a != slot)
        per_proj = shaped.sum(axis=axes)  # (dims[slot], level)
        return np.argmax(per_proj, axis=0)

    def electron_character(self) -> np.ndarray:
        """m_s value (not index) dominating each level, +S ... -S order."""
        proj = spinops.projections(self.dims[0] - 1)
        return proj[self.subsystem_character(0)]


@dataclass
class SpectrumLine:
    """One transition: frequency (MHz), dimensionless strength, level labels."""

    freq_mhz: float
    strength: float
    from_level: int
    to_level: int


def eigensolve(h: np.ndarray, dims: tuple = None, herm_tol_mhz: float = 1e-6) -> EigenSystem:
    """Diagonalize a Hermitian Hamiltonian (MHz) into an EigenSystem.

    Raises if the input deviates from Hermiticity by more than herm_tol_mhz.
    Degenerate subspaces are ordered deterministically: within a degenerate
    cluster, states are sorted by descending overlap with the lowest-index
    product-basis state that the cluster touches.  Eigenvector phases are
    fixed so the largest-magnitude component is real positive.
    """
    h = np.asarray(h)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValueError(f"Hamiltonian must be square, got shape {h.shape}")
    dev = np.max(np.abs(h - h.conj().T))
    if dev > herm_tol_mhz:
        raise ValueError(f"matrix is not Hermitian: max |H - H^†| = {dev:.3g} MHz")
    if dims is None:
        dims = (h.shape[0],)
    energies, states = eigh((h + h.conj().T) / 2.0)

    # Canonical ordering inside degenerate clusters.
    i = 0
    n = len(energies)
    while i < n:
        j = i + 1
        while j < n and energies[j] - energies[i] < _DEGENERACY_TOL_MHZ:
            j += 1
        if j - i > 1:
            block = states[:, i:j]
            weights = np.abs(block) ** 2
            anchor = int(np.argmax(weights.sum(axis=1) > 1e-12))
            order = np.argsort(-weights[anchor, :], kind="stable")
            states[:, i:j] = block[:, order]
        i = j

    # Gauge: largest component real positive.
    for k in range(n):
        idx = int(np.argmax(np.abs(states[:, k])))
        phase = states[idx, k] / abs(states[idx, k])
        states[:, k] = states[:, k] / phase

    return EigenSystem(energies=energies, states=states, dims=tuple(dims))


def ms0_populations(es: EigenSystem) -> np.ndarray:
    """Equal weight on every level whose electron character is m_s = 0."""
    char = es.electron_character()
    pops = (np.abs(char) < 0.5).astype(float)
    total = pops.sum()
    if total == 0:
        raise ValueError("no m_s = 0 levels found")
    return pops / total


def level_populations(es: EigenSystem, weights: dict) -> np.ndarray:
    """Population vector from a {label: weight} mapping, normalized to 1."""
    pops = np.zeros(es.dim)
    for label, w in weights.items():
        label = int(label)
        if not 1 <= label <= es.dim:
            raise ValueError(f"level label {label} out of range 1..{es.dim}")
        if w < 0:
            raise ValueError(f"negative population weight for level {label}")
        pops[label - 1] = w
    total = pops.sum()
    if total <= 0:
        raise ValueError("population weights sum to zero")
    return pops / total


def transition_spectrum(
    es: EigenSystem,
    drive_op: np.ndarray,
    freq_window: tuple = None,
    populations: np.ndarray = None,
    threshold_rel: float = 1e-6,
):
    """Stick spectrum of a Hermitian drive operator.

    One line per level pair (i < j) with strength
    |<i|drive|j>|^2 * (pop_i - pop_j), filtered to the frequency window and
    to strengths above threshold_rel times the strongest emitted line.
    Population-inverted pairs (negative weight) are dropped.
    """
    drive_op = np.asarray(drive_op)
    if np.max(np.abs(drive_op - drive_op.conj().T)) > 1e-9:
        raise ValueError("drive operator must be Hermitian")
    if populations is None:
        populations = ms0_populations(es)
    populations = np.asarray(populations, dtype=float)

    d_eig = es.states.conj().T @ drive_op @ es.states
    lines = []
    for i in range(es.dim):
        for j in range(i + 1, es.dim):
            strength = float(np.abs(d_eig[i, j]) ** 2 * (populations[i] - populations[j]))
            if strength <= 0.0:
                continue
            freq = float(es.energies[j] - es.energies[i])
            if freq_window is not None and not (freq_window[0] <= freq <= freq_window[1]):
                continue
            lines.append(SpectrumLine(freq, strength, i + 1, j + 1))
    if not lines:
        return []
    cutoff = threshold_rel * max(l.strength for l in lines)
    lines = [l for l in lines if l.strength > cutoff]
    lines.sort(key=lambda l: l.freq_mhz)
    return lines


def broaden(lines, lineshape: str, width_mhz: float, grid: np.ndarray) -> np.ndarray:
    """Render sticks as a continuous spectrum on `grid` (MHz).

    Each line contributes a unit-area kernel of FWHM `width_mhz` scaled by
    its strength, so the integral over a wide grid equals the summed
    strengths.  Returns the amplitude samples matching `grid`.
    """
    if width_mhz <= 0:
        raise ValueError(f"lineshape width must be > 0, got {width_mhz}")
    grid = np.asarray(grid, dtype=float)
    amp = np.zeros_like(grid)
    if lineshape == "gaussian":
        sigma = width_mhz / (2.0 * np.sqrt(2.0 * np.log(2.0)))
        for line in lines:
            amp += line.strength * np.exp(
                -0.5 * ((grid - line.freq_mhz) / sigma) ** 2
            ) / (sigma * np.sqrt(2.0 * np.pi))
    elif lineshape == "lorentzian":
        hwhm = width_mhz / 2.0
        for line in lines:
            amp += line.strength * (hwhm / np.pi) / ((grid - line.freq_mhz) ** 2 + hwhm**2)
    else:
        raise ValueError(f"unknown lineshape {lineshape!r}")
    return amp
