import numpy as np
import pytest
from numpy.testing import assert_allclose

from nvspin import hamiltonian as ham
from nvspin import spectra, spinops


def electron_sx(system):
    return spinops.embed(spinops.spin_matrices(system.two_s)[0], 0, system.dims)


def test_eigensolve_sorts():
    es = spectra.eigensolve(np.diag([3.0, 1.0, 2.0]))
    assert_allclose(es.energies, [1.0, 2.0, 3.0])
    assert list(es.labels) == [1, 2, 3]


def test_eigensolve_rejects_non_hermitian():
    with pytest.raises(ValueError, match="Hermitian"):
        spectra.eigensolve(np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_eigensolve_d_only_closed_form():
    sys = ham.SpinSystem(d_zfs_mhz=2880.0)
    es = spectra.eigensolve(ham.build_hamiltonian(sys), sys.dims)
    assert_allclose(es.energies, [-1920.0, 960.0, 960.0], atol=1e-9)


def test_eigensolve_residuals_and_orthonormality():
    sys = ham.nv_system(140.0, 26.0, with_carbon13=True)
    h = ham.build_hamiltonian(sys)
    es = spectra.eigensolve(h, sys.dims)
    for k in range(es.dim):
        v = es.states[:, k]
        assert np.linalg.norm(h @ v - es.energies[k] * v) < 1e-6
    assert_allclose(es.states.conj().T @ es.states, np.eye(es.dim), atol=1e-9)


def test_eigensolve_deterministic():
    sys = ham.nv_system(140.0, 26.0, with_carbon13=True, with_nitrogen14=True)
    h = ham.build_hamiltonian(sys)
    a = spectra.eigensolve(h, sys.dims)
    b = spectra.eigensolve(h.copy(), sys.dims)
    assert_allclose(a.states, b.states, atol=0)
    assert_allclose(a.energies, b.energies, atol=0)


def test_energy_sum_equals_trace():
    sys = ham.nv_system(140.0, 26.0, with_carbon13=True)
    h = ham.build_hamiltonian(sys)
    es = spectra.eigensolve(h, sys.dims)
    assert abs(es.energies.sum() - np.trace(h).real) < 1e-6 * max(1.0, abs(np.trace(h).real))


def test_zero_field_single_line_at_2880():
    sys = ham.SpinSystem(d_zfs_mhz=2880.0)
    es = spectra.eigensolve(ham.build_hamiltonian(sys), sys.dims)
    lines = spectra.transition_spectrum(es, electron_sx(sys))
    assert lines
    for line in lines:
        assert abs(line.freq_mhz - 2880.0) < 1e-6


def test_reference_four_line_pattern():
    sys = ham.nv_system(140.0, 26.0, with_carbon13=True)
    es = spectra.eigensolve(ham.build_hamiltonian(sys), sys.dims)
    pops = np.zeros(es.dim)
    pops[0] = pops[1] = 0.5
    lines = spectra.transition_spectrum(
        es, electron_sx(sys), freq_window=(2300.0, 2800.0), populations=pops
    )
    dominant = sorted(lines, key=lambda l: -l.strength)[:4]
    assert {(l.from_level, l.to_level) for l in dominant} == {(1, 3), (2, 3), (1, 4), (2, 4)}
    low_pair = sorted(lines, key=lambda l: l.freq_mhz)[:2]
    assert abs(low_pair[1].freq_mhz - low_pair[0].freq_mhz - es.splitting(1, 2)) < 1e-9
    s23, s13 = low_pair[0].strength, low_pair[1].strength
    assert abs(s13 - s23) / max(s13, s23) < 1e-6


def test_pseudo_zeeman_much_larger_than_bare():
    sys = ham.nv_system(140.0, 26.0, with_carbon13=True)
    es = spectra.eigensolve(ham.build_hamiltonian(sys), sys.dims)
    bare_sys = sys.without_hyperfine()
    bare = spectra.eigensolve(ham.build_hamiltonian(bare_sys), bare_sys.dims)
    assert es.splitting(1, 2) > 10.0 * bare.splitting(1, 2)


def test_levels_3_4_pure_nuclear_projections():
    sys = ham.nv_system(140.0, 26.0, with_carbon13=True)
    es = spectra.eigensolve(ham.build_hamiltonian(sys), sys.dims)
    for label in (3, 4):
        comp = es.composition(label)
        assert comp[0][1] > 0.99


def test_spectrum_shift_invariance():
    sys = ham.nv_system(140.0, 26.0, with_carbon13=True)
    h = ham.build_hamiltonian(sys)
    drive = electron_sx(sys)
    lines_a = spectra.transition_spectrum(spectra.eigensolve(h, sys.dims), drive)
    shifted = spectra.eigensolve(h + 123.456 * np.eye(h.shape[0]), sys.dims)
    lines_b = spectra.transition_spectrum(shifted, drive)
    assert len(lines_a) == len(lines_b)
    for a, b in zip(lines_a, lines_b):
        assert abs(a.freq_mhz - b.freq_mhz) < 1e-8
        assert abs(a.strength - b.strength) < 1e-10


def test_strength_symmetric_under_transpose():
    sys = ham.nv_system(140.0, 26.0, with_carbon13=True)
    es = spectra.eigensolve(ham.build_hamiltonian(sys), sys.dims)
    d_eig = es.states.conj().T @ electron_sx(sys) @ es.states
    assert_allclose(np.abs(d_eig), np.abs(d_eig).T, atol=1e-12)


def test_empty_window_empty_list():
    sys = ham.SpinSystem(d_zfs_mhz=2880.0)
    es = spectra.eigensolve(ham.build_hamiltonian(sys), sys.dims)
    assert spectra.transition_spectrum(es, electron_sx(sys), freq_window=(10.0, 20.0)) == []


def test_population_inverted_pairs_dropped():
    sys = ham.SpinSystem(d_zfs_mhz=2880.0)
    es = spectra.eigensolve(ham.build_hamiltonian(sys), sys.dims)
    pops = np.array([0.0, 0.5, 0.5])
    lines = spectra.transition_spectrum(es, electron_sx(sys), populations=pops)
    assert all(line.from_level != 1 for line in lines)


def test_broaden_gaussian_fwhm():
    line = spectra.SpectrumLine(100.0, 2.0, 1, 2)
    grid = np.linspace(80.0, 120.0, 40001)
    amp = spectra.broaden([line], "gaussian", 3.0, grid)
    peak = amp.max()
    above = grid[amp >= peak / 2.0]
    assert abs((above[-1] - above[0]) - 3.0) < 0.01
    assert abs(grid[np.argmax(amp)] - 100.0) < 1e-3


def test_broaden_two_equal_lines():
    lines = [spectra.SpectrumLine(50.0, 1.0, 1, 2), spectra.SpectrumLine(150.0, 1.0, 1, 3)]
    grid = np.linspace(0.0, 200.0, 20001)
    amp = spectra.broaden(lines, "gaussian", 2.0, grid)
    assert abs(amp[np.argmin(np.abs(grid - 50.0))] - amp[np.argmin(np.abs(grid - 150.0))]) < 1e-9


def test_broaden_integral_matches_total_strength():
    lines = [spectra.SpectrumLine(40.0, 0.7, 1, 2), spectra.SpectrumLine(60.0, 1.3, 1, 3)]
    grid = np.linspace(-2000.0, 2100.0, 400001)
    trapz = getattr(np, "trapezoid", np.trapz)
    for shape in ("gaussian", "lorentzian"):
        amp = spectra.broaden(lines, shape, 1.5, grid)
        integral = trapz(amp, grid)
        assert abs(integral - 2.0) / 2.0 < 1e-3


def test_broaden_rejects_bad_width():
    with pytest.raises(ValueError):
        spectra.broaden([], "gaussian", 0.0, np.linspace(0, 1, 10))
    with pytest.raises(ValueError):
        spectra.broaden([], "boxcar", 1.0, np.linspace(0, 1, 10))
