import numpy as np
import pytest
from numpy.testing import assert_allclose

from nvspin import hamiltonian as ham
from nvspin import analysis, dynamics as dyn


def two_level_system(b_gauss=100.0):
    """Spin-1/2 'electron': an exactly isolated resonant pair."""
    return ham.SpinSystem(d_zfs_mhz=0.0, field_gauss=[0.0, 0.0, b_gauss], two_s=1)


def nv_no_nuclei(b_gauss=140.0):
    return ham.nv_system(b_gauss, 0.0, with_carbon13=False)


def resonant_pulse(sim, angle, a=1, b=2, rabi=31.25, phase=0.0):
    f_c = sim.energies[b - 1] - sim.energies[a - 1]
    return dyn.Pulse("mw", carrier_mhz=f_c, rabi_mhz=rabi, angle=angle,
                     transition=(a, b), phase_rad=phase)


def test_pi_pulse_swaps_isolated_pair():
    sim = dyn.Simulator(two_level_system())
    rho = sim.polarize()
    rho = dyn.apply_pulse(rho, resonant_pulse(sim, "pi"), sim)
    pops = np.real(np.diag(rho))
    assert abs(pops[1] - 1.0) < 1e-6
    assert abs(pops[0]) < 1e-6


def test_two_half_pulses_equal_one_pi():
    sim = dyn.Simulator(two_level_system())
    half = resonant_pulse(sim, "pi/2")
    rho = sim.polarize()
    rho = dyn.apply_pulse(rho, half, sim, 0.0)
    rho = dyn.apply_pulse(rho, half, sim, half.duration_us)
    full = dyn.apply_pulse(sim.polarize(), resonant_pulse(sim, "pi"), sim)
    assert_allclose(np.diag(rho).real, np.diag(full).real, atol=1e-6)


def test_pi_pulse_involution():
    sim = dyn.Simulator(two_level_system())
    pi = resonant_pulse(sim, "pi")
    rho = sim.polarize()
    rho = dyn.apply_pulse(rho, pi, sim, 0.0)
    rho = dyn.apply_pulse(rho, pi, sim, pi.duration_us)
    assert abs(np.real(rho[0, 0]) - 1.0) < 1e-6


def test_8ns_half_pulse_is_rabi_31_25():
    pulse = dyn.Pulse("mw", carrier_mhz=2880.0, rabi_mhz=31.25, angle="pi/2")
    assert abs(pulse.duration_us - 0.008) < 1e-12


def test_pulse_validation():
    with pytest.raises(ValueError):
        dyn.Pulse("laser", carrier_mhz=1.0, rabi_mhz=1.0, angle="pi")
    with pytest.raises(ValueError):
        dyn.Pulse("mw", carrier_mhz=1.0, rabi_mhz=0.0, angle="pi")
    with pytest.raises(ValueError):
        dyn.Pulse("mw", carrier_mhz=1.0, rabi_mhz=1.0)
    with pytest.raises(ValueError):
        dyn.Pulse("mw", ideal=True, angle="pi")  # no transition


def test_polarize_default_pure_ground():
    sim = dyn.Simulator(nv_no_nuclei())
    rho = sim.polarize()
    assert abs(np.real(rho[0, 0]) - 1.0) < 1e-12
    assert abs(np.trace(rho @ rho).real - 1.0) < 1e-12


def test_polarize_partial_distribution():
    sim = dyn.Simulator(nv_no_nuclei())
    rho = sim.polarize(p=0.8, rest={2: 1.0})
    assert_allclose(np.diag(rho).real, [0.8, 0.2, 0.0], atol=1e-12)
    with pytest.raises(ValueError):
        sim.polarize(p=0.5)  # no rest given


def test_evolve_zero_duration_identity():
    sim = dyn.Simulator(nv_no_nuclei())
    rho = sim.polarize(p=0.5, rest={2: 1.0})
    assert_allclose(sim.evolve(rho, 0.0), rho, atol=0)
    with pytest.raises(ValueError):
        sim.evolve(rho, -1.0)


def test_evolve_diagonal_state_stationary():
    sim = dyn.Simulator(nv_no_nuclei())
    rho = sim.polarize(p=0.6, rest={2: 0.5, 3: 0.5})
    assert_allclose(sim.evolve(rho, 3.21), rho, atol=1e-12)


def test_dephasing_closed_form():
    """Coherence decays as exp(-rate*t) while the channel is on."""
    gamma = 0.37
    chan = [dyn.DecoherenceChannel("dephasing", "electron", gamma)]
    sim = dyn.Simulator(nv_no_nuclei(), channels=chan)
    rho = sim.polarize()
    rho = dyn.apply_pulse(rho, resonant_pulse(sim, "pi/2"), sim)
    c0 = abs(rho[0, 1])
    t = 1.7
    rho_t = sim.evolve(rho, t)
    assert abs(abs(rho_t[0, 1]) - c0 * np.exp(-gamma * t)) < 1e-9


def test_trace_hermiticity_positivity_preserved():
    chans = [
        dyn.DecoherenceChannel("dephasing", "electron", 0.3),
        dyn.DecoherenceChannel("depolarizing", 0, 0.5),
    ]
    sys = ham.nv_system(140.0, 26.0, with_carbon13=True)
    sim = dyn.Simulator(sys, channels=chans)
    rho = sim.polarize(p=0.7, rest={2: 1.0, 3: 1.0})
    purity_prev = np.trace(rho @ rho).real
    for step, pulse_angle in ((0.4, "pi/2"), (1.3, "pi"), (0.8, "pi/2")):
        rho = dyn.apply_pulse(rho, resonant_pulse(sim, pulse_angle, a=1, b=3), sim)
        rho = sim.evolve(rho, step)
        assert abs(np.trace(rho).real - 1.0) < 1e-9
        assert np.max(np.abs(rho - rho.conj().T)) < 1e-9
        assert np.linalg.eigvalsh(rho).min() > -1e-9
        purity = np.trace(rho @ rho).real
        assert purity <= purity_prev + 1e-9
        purity_prev = purity


def test_purity_constant_under_unitary():
    sim = dyn.Simulator(nv_no_nuclei())
    rho = sim.polarize()
    rho = dyn.apply_pulse(rho, resonant_pulse(sim, "pi/2"), sim)
    p0 = np.trace(rho @ rho).real
    rho = sim.evolve(rho, 2.5)
    assert abs(np.trace(rho @ rho).real - p0) < 1e-9


def test_depolarizing_randomizes_target():
    sys = ham.nv_system(140.0, 26.0, with_carbon13=True, with_nitrogen14=True)
    chan = [dyn.DecoherenceChannel("depolarizing", 1, 5.0)]
    sim = dyn.Simulator(sys, channels=chan)
    rho = sim.polarize()  # level 1: a definite 14N projection
    rho = sim.evolve(rho, 3.0)
    rho_prod = sim.es.states @ rho @ sim.es.states.conj().T
    shaped = rho_prod.reshape(3, 2, 3, 3, 2, 3)
    # partial trace over electron and 13C leaves the 14N marginal
    n_marginal = np.einsum("abnabm->nm", shaped)
    assert_allclose(np.diag(n_marginal).real, [1 / 3] * 3, atol=0.02)


def test_hahn_refocusing_discrete_detunings():
    """Echo amplitude at tau1 = tau2 is detuning-independent (ideal pulses)."""
    sys = nv_no_nuclei()
    seq = dyn.Sequence([
        dyn.Pulse("mw", ideal=True, transition=(1, 2), angle="pi/2"),
        dyn.Delay(0.0, name="tau"),
        dyn.Pulse("mw", ideal=True, transition=(1, 2), angle="pi"),
        dyn.Delay(0.0, name="tau2"),
        dyn.Pulse("mw", ideal=True, transition=(1, 2), angle="pi/2"),
    ])
    taus = np.array([0.3, 1.1])
    clean = dyn.run_sequence(sys, seq, taus, sweep_names=("tau", "tau2"))
    detuned = dyn.ensemble_average(
        sys, seq, ("discrete", [-4.0, -1.0, 0.5, 3.0]), sweep_values=taus,
        sweep_names=("tau", "tau2"),
    )
    assert_allclose(detuned.signal, clean.signal, atol=1e-6)


def test_fid_modulation_at_level_splitting():
    """Cross-check with analysis: FID beat = eigensolver's level-1/2 gap."""
    sys = ham.nv_system(80.0, 19.21785089892956, with_carbon13=True)
    sim = dyn.Simulator(sys)
    splitting = sim.es.splitting(1, 2)
    pulse = resonant_pulse(sim, "pi/2", a=1, b=3)
    seq = dyn.Sequence([pulse, dyn.Delay(0.0, name="tau"), pulse])
    taus = np.arange(0.0, 4.0, 0.01)
    trace = dyn.run_sequence(sim, seq, taus, polarization={"p": 0.5, "rest": {2: 1.0}})
    ps = analysis.fft_spectrum(trace, window="hann")
    peaks = analysis.find_peaks(ps, min_prominence=0.05 * ps.power.max())
    assert any(abs(f - splitting) < ps.resolution_mhz for f, _ in peaks)


def test_ensemble_sigma_zero_matches_single_run():
    sys = nv_no_nuclei()
    sim = dyn.Simulator(sys)
    pulse = resonant_pulse(sim, "pi/2")
    seq = dyn.Sequence([pulse, dyn.Delay(0.0, name="tau"), pulse])
    taus = np.linspace(0.0, 1.0, 11)
    single = dyn.run_sequence(sys, seq, taus)
    ens = dyn.ensemble_average(sys, seq, ("gaussian", 0.0), 3, sweep_values=taus, seed=1)
    assert_allclose(ens.signal, single.signal, atol=1e-12)


def test_ensemble_seed_reproducible():
    sys = nv_no_nuclei()
    sim = dyn.Simulator(sys)
    pulse = resonant_pulse(sim, "pi/2")
    seq = dyn.Sequence([pulse, dyn.Delay(0.0, name="tau"), pulse])
    taus = np.linspace(0.0, 0.5, 6)
    a = dyn.ensemble_average(sys, seq, ("gaussian", 3.0), 16, sweep_values=taus, seed=42)
    b = dyn.ensemble_average(sys, seq, ("gaussian", 3.0), 16, sweep_values=taus, seed=42)
    assert_allclose(a.signal, b.signal, atol=0)


def test_rwa_matches_lab_frame():
    sys = ham.nv_system(140.0, 26.0, with_carbon13=True)
    pulse_kwargs = dict(rabi_mhz=31.25, angle="pi/2", transition=(1, 3))
    rwa = dyn.Simulator(sys, rwa=True)
    lab = dyn.Simulator(sys, rwa=False)
    f_c = rwa.energies[2] - rwa.energies[0]
    pulse = dyn.Pulse("mw", carrier_mhz=f_c, **pulse_kwargs)
    rho_rwa = dyn.apply_pulse(rwa.polarize(), pulse, rwa)
    rho_lab = dyn.apply_pulse(lab.polarize(), pulse, lab)
    assert np.max(np.abs(np.diag(rho_rwa).real - np.diag(rho_lab).real)) < 0.01


def test_run_sequence_rejects_unknown_sweep_target():
    sys = nv_no_nuclei()
    sim = dyn.Simulator(sys)
    seq = dyn.Sequence([dyn.Delay(0.0, name="tau")])
    with pytest.raises(ValueError, match="wait"):
        dyn.run_sequence(sys, seq, [0.1], sweep_names=("wait",))


def test_run_sequence_threads_match_serial():
    sys = nv_no_nuclei()
    sim = dyn.Simulator(sys)
    pulse = resonant_pulse(sim, "pi/2")
    seq = dyn.Sequence([pulse, dyn.Delay(0.0, name="tau"), pulse])
    taus = np.linspace(0.0, 1.0, 17)
    serial = dyn.run_sequence(sim, seq, taus)
    parallel = dyn.run_sequence(sim, seq, taus, threads=3)
    assert_allclose(parallel.signal, serial.signal, atol=0)


def test_readout_contrast_scaling():
    sim = dyn.Simulator(nv_no_nuclei())
    rho = sim.polarize()
    full = sim.signal(rho, dyn.ReadoutModel(contrast=1.0))
    half = sim.signal(rho, dyn.ReadoutModel(contrast=0.5))
    assert abs(full - 1.0) < 1e-12 and abs(half - 1.0) < 1e-12
    rho_dark = np.zeros_like(rho)
    rho_dark[1, 1] = 1.0
    assert abs(sim.signal(rho_dark, dyn.ReadoutModel(contrast=0.3)) - 0.7) < 1e-12


def test_depolarizing_step_converged():
    """Halving the interleave step does not change the trace materially."""
    sys = ham.nv_system(80.0, 19.21785089892956, with_carbon13=True, with_nitrogen14=True)
    chan = [dyn.DecoherenceChannel("depolarizing", 1, 2.0)]
    sim = dyn.Simulator(sys, channels=chan)
    rho0 = sim.polarize(weights={1: 1 / 3, 2: 1 / 3, 3: 1 / 3})
    pulse = resonant_pulse(sim, "pi/2", a=1, b=7)
    rho = dyn.apply_pulse(rho0, pulse, sim)
    coarse = sim.evolve(rho, 2.0)
    fine = rho
    for _ in range(4):
        fine = sim.evolve(fine, 0.5)
    assert np.max(np.abs(np.diag(coarse).real - np.diag(fine).real)) < 5e-4
