import dataclasses

import numpy as np
import pytest

from photospin.hamiltonians import dd_full_h, double_dot_basis, exciton_basis, exciton_rotation, single_electron_h
from photospin.lossmodels import (
    RABI,
    DephasingBreakdown,
    Trajectory,
    chi_dd_detuning,
    chi_detuning,
    default_spin_rms,
    dephasing_breakdown,
    dephasing_profiles,
    dephasing_quasistatic,
    dephasing_spin,
    dephasing_white,
    recombination_probability,
    spin_sensitivity,
    survival_profile,
)
from photospin.params import HBAR, DeviceParams, detuning_noise
from photospin.rabi import SINGLET, T_PLUS, T_ZERO

P = DeviceParams()


def const_traj(v1, v2, basis, t):
    n = t.size
    psi1 = np.repeat(np.asarray(v1, complex)[None], n, 0)
    psi2 = np.repeat(np.asarray(v2, complex)[None], n, 0)
    return Trajectory(t=t, eps=np.zeros(n), psi1=psi1, psi2=psi2, pop1=np.abs(psi1) ** 2,
                      pop2=np.abs(psi2) ** 2, energy1=np.zeros(n), energy2=np.zeros(n),
                      segment=np.full(n, "sweep"), basis=basis, params=P)


def subsample(traj, step):
    idx = np.r_[np.arange(0, traj.t.size - 1, step), traj.t.size - 1]
    kw = {f.name: getattr(traj, f.name) for f in dataclasses.fields(traj)}
    for k, v in kw.items():
        if isinstance(v, np.ndarray) and v.shape[:1] == traj.t.shape:
            kw[k] = v[idx]
    return Trajectory(**kw)


def eigen_near(H, ref):
    w, v = np.linalg.eigh(H)
    return w[int(np.argmax(np.abs(ref.conj() @ v)))]


def test_recombination_of_fully_bright_state():
    bright = exciton_rotation()[0]  # |↓⇑⟩z on x amplitudes
    traj = const_traj(bright, bright, exciton_basis("x"), np.linspace(0, 1.0, 101))
    assert recombination_probability(traj, 1, tau=1.0) == pytest.approx(1 - np.exp(-1), rel=1e-12)
    assert recombination_probability(traj, 1, tau=np.inf) == 0.0
    surv = survival_profile(traj, 2, 1.0)
    assert surv[-1] == pytest.approx(np.exp(-1))


def truncate(traj, stop):
    kw = {f.name: getattr(traj, f.name) for f in dataclasses.fields(traj)}
    for k, v in kw.items():
        if isinstance(v, np.ndarray) and v.shape[:1] == traj.t.shape:
            kw[k] = v[:stop]
    return Trajectory(**kw)


def test_recombination_monotone_in_length(weak_run):
    traj = weak_run.trajectory
    values = [recombination_probability(truncate(traj, stop), 1, P.tau)
              for stop in np.linspace(2, traj.t.size, 8).astype(int)]
    assert np.all(np.diff(values) >= 0)


@pytest.mark.parametrize("run", ["strong_run", "weak_run", "st_run"])
def test_recombination_grid_refinement(run, request):
    traj = request.getfixturevalue(run).trajectory
    for which in (1, 2):
        fine = recombination_probability(traj, which, P.tau)
        coarse = recombination_probability(subsample(traj, 2), which, P.tau)
        assert abs(fine - coarse) < 1e-4


def test_chi_limits():
    b = double_dot_basis()
    ss = np.zeros(20, complex)
    ss[b.index("|↑↓⟩|◦⇑⟩")] = 1
    ss2 = np.zeros(20, complex)
    ss2[b.index("|↑↑⟩|◦⇓⟩")] = 1
    t = np.linspace(0, 1, 11)
    assert np.all(chi_detuning(const_traj(ss, ss2, b, t)) == 0)
    es1, es2 = np.eye(20)[0], np.eye(20)[5]
    assert np.all(chi_detuning(const_traj(es1, es2, b, t)) == 0)
    assert np.all(chi_dd_detuning(const_traj(ss, ss2, b, t)) == 0)
    sym = np.zeros(20, complex)
    sym[b.index("|S(2,0)⟩|◦⇑⟩")] = sym[b.index("|S(0,2)⟩|◦⇑⟩")] = 2**-0.5
    sym2 = np.zeros(20, complex)
    sym2[b.index("|S(2,0)⟩|◦⇓⟩")] = sym2[b.index("|S(0,2)⟩|◦⇓⟩")] = 2**-0.5
    assert np.allclose(chi_dd_detuning(const_traj(sym, sym2, b, t)), 0)


def test_chi_matches_finite_difference_at_excitation(weak_run):
    run = weak_run
    tr, p = run.trace, run.params
    eps = run.eps_ep
    v1, v2 = tr.state("psi1", eps), tr.state("psi2", eps)
    h = 1e-3

    def gap(e):
        H = single_electron_h(p, e).matrix
        return eigen_near(H, v2) - eigen_near(H, v1)

    fd = (gap(eps + h) - gap(eps - h)) / (2 * h)
    assert chi_detuning(run.trajectory, run.trajectory.t[0]) == pytest.approx(fd, abs=1e-6)


def test_chi_dd_matches_finite_difference_during_pulse(st_run):
    run = st_run
    traj, pulse, p = run.trajectory, run.pulse, run.params
    rabi = np.flatnonzero(traj.segment == RABI)
    k = rabi[rabi.size // 3]
    elapsed = traj.t[k] - traj.t[rabi[0] - 1]
    states = {n: run.trace.state(n, pulse.eps_star) for n in (T_PLUS, SINGLET, T_ZERO)}
    h = 1e-2

    def energies(dd):
        H = dd_full_h(p, pulse.eps_star, p.eps_dd + dd).matrix
        return {n: eigen_near(H, v) for n, v in states.items()}

    up, dn = energies(h), energies(-h)
    d = {n: (up[n] - dn[n]) / (2 * h) for n in states}
    half = pulse.omega_s * elapsed / 2
    expected = np.cos(half) ** 2 * d[T_PLUS] + np.sin(half) ** 2 * d[SINGLET] - d[T_ZERO]
    assert chi_dd_detuning(traj)[k] == pytest.approx(expected, abs=1e-6)


def test_chi_dd_is_zero_after_release(st_run):
    traj = st_run.trajectory
    assert np.all(chi_dd_detuning(traj)[traj.dd_released] == 0)
    assert np.any(chi_dd_detuning(traj)[~traj.dd_released] != 0)


def test_quasistatic_closed_forms():
    b = exciton_basis("x")
    v = np.eye(4)[0]
    t = np.linspace(0, 2.0, 41)
    traj = const_traj(v, v, b, t)
    assert dephasing_quasistatic(traj, 1.0) == 0
    assert dephasing_quasistatic(traj, 0.8, chi=np.ones_like(t)) == pytest.approx((0.8 * 2.0 / HBAR) ** 2)
    assert dephasing_white(traj, 0.5, chi=np.ones_like(t)) == pytest.approx(0.5 * 2.0 / (2 * HBAR**2))


def test_spin_dephasing_limits(weak_run):
    traj = weak_run.trajectory
    zero = {k: 0.0 for k in default_spin_rms(P, traj.basis)}
    assert all(v == 0 for v in dephasing_spin(traj, P, zero).values())
    same = dataclasses.replace(traj, psi2=traj.psi1, pop2=traj.pop1)
    assert all(v == 0 for v in dephasing_spin(same, P).values())


def test_breakdown_failure_is_a_third_of_the_variance(strong_run):
    d = strong_run.dephasing
    assert d.p_fail == pytest.approx(d.total / 3)
    assert DephasingBreakdown().total == 0


def test_profiles_decay_to_the_final_coherence(weak_run):
    prof = dephasing_profiles(weak_run.trajectory, P)
    coh = weak_run.dephasing.coherence()
    # white noise only accumulates; quasi-static phases can partly cancel when χ changes sign
    assert np.all(np.diff(prof["charge_white"]) <= 0)
    for k, v in prof.items():
        assert v[0] == 1.0
        assert v[-1] == pytest.approx(coh[k], rel=1e-12)


def _sampled_variances(traj, p, rng, n):
    """Monte-Carlo phase variance of every source by direct noise sampling."""
    eps_rms, S = detuning_noise(p)
    hb = p.hbar
    t = traj.t
    w = np.zeros_like(t)
    w[1:] += np.diff(t) / 2
    w[:-1] += np.diff(t) / 2
    out = {}
    chi = chi_detuning(traj)
    out["charge_quasistatic"] = rng.normal(0, eps_rms, n) * np.sum(w * chi) / hb
    # white noise: independent node values with variance S/(2 w)
    keep = w > 0
    sig = np.sqrt(S / (2 * w[keep]))
    phi = np.zeros(n)
    for lo in range(0, n, 2000):
        xi = rng.normal(size=(min(2000, n - lo), keep.sum())) * sig
        phi[lo:lo + xi.shape[0]] = xi @ (chi[keep] * w[keep]) / hb
    out["charge_white"] = phi
    for source, rms in default_spin_rms(p, traj.basis).items():
        sens = spin_sensitivity(traj, p, source)
        out[f"overhauser_{source}"] = rng.normal(0, rms, n) * np.sum(w * sens) / hb
    return out


@pytest.mark.parametrize("run", ["strong_run", "weak_run"])
def test_monte_carlo_matches_analytic_variances(run, request, rng):
    r = request.getfixturevalue(run)
    n = 100_000
    traj = subsample(r.trajectory, max(1, r.trajectory.t.size // 300))
    analytic = dict(dephasing_breakdown(traj, r.params).items())
    samples = _sampled_variances(traj, r.params, rng, n)
    for k, phi in samples.items():
        var = np.mean(phi**2)
        se = np.std(phi**2) / np.sqrt(n)
        assert abs(var - analytic[k]) <= 3 * se + 1e-15, k


def test_monte_carlo_matches_st_variances(st_run, rng):
    traj, p = st_run.trajectory, st_run.params
    n = 100_000
    analytic = dict(st_run.dephasing.items())
    hb = p.hbar
    t = traj.t
    w = np.zeros_like(t)
    w[1:] += np.diff(t) / 2
    w[:-1] += np.diff(t) / 2
    eps_rms, _ = detuning_noise(p)
    checks = {
        "charge_quasistatic": (eps_rms, chi_detuning(traj)),
        "dd_quasistatic": (eps_rms, chi_dd_detuning(traj)),
    }
    for source, rms in default_spin_rms(p, traj.basis).items():
        checks[f"overhauser_{source}"] = (rms, spin_sensitivity(traj, p, source))
    for k, (rms, sens) in checks.items():
        phi = rng.normal(0, rms, n) * np.sum(w * sens) / hb
        se = np.std(phi**2) / np.sqrt(n)
        assert abs(np.mean(phi**2) - analytic[k]) <= 3 * se + 1e-15, k


@pytest.mark.parametrize("run", ["strong_run", "weak_run", "st_run"])
def test_phase_channel_infidelity_is_a_sixth_of_the_variance(run, request, rng):
    d = request.getfixturevalue(run).dephasing
    var = d.total
    assert var <= 0.1
    phi = rng.normal(0, np.sqrt(var), 100_000)
    infidelity = np.mean((1 - np.cos(phi)) / 3)  # average gate infidelity of a phase kick
    assert infidelity == pytest.approx(var / 6, rel=0.1)


def test_trajectory_rejects_unsorted_time():
    b = exciton_basis("x")
    with pytest.raises(ValueError):
        const_traj(np.eye(4)[0], np.eye(4)[0], b, np.array([0.0, 2.0, 1.0]))
