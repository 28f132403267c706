import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from photospin.params import ProtocolConfig, load_preset
from photospin.protocol import (
    FailureBudget,
    assemble_budget,
    budget_report,
    run_protocol,
    run_single_spin,
    run_singlet_triplet,
    solve_excitation_point,
    spectrum_trace,
    with_overrides,
)
from photospin.rabi import SINGLET, T_PLUS, T_ZERO

QUIET = dict(tau=np.inf, eps_rms_gate=0.0, S_eps_gate=0.0, B_of_rms=0.0, B_of_rms_tilde=0.0)

prob = st.floats(0, 0.2)


@settings(max_examples=60, deadline=None)
@given(lz=prob, r1=prob, r2=prob, d=prob, leak=prob, fail=prob)
def test_budget_is_additive(lz, r1, r2, d, leak, fail):
    b = assemble_budget(lz, (r1, r2), d, leak, fail)
    assert b.p_success + sum(b.terms().values()) == pytest.approx(1.0, abs=1e-15)
    assert b.terms()["p_rec"] == max(r1, r2)
    assert b.p_rec_range == (min(r1, r2), max(r1, r2))


def test_budget_edge_cases():
    assert assemble_budget(0, 0, 0).p_success == 1.0
    assert assemble_budget(0.01, 0.02, 0).p_rec == (0.02, 0.02)
    with pytest.raises(ValueError):
        FailureBudget(0.01, (0.0, 1.5), 0.0)
    with pytest.raises(ValueError):
        FailureBudget(-0.01, (0.0, 0.0), 0.0)


def test_all_runs_have_probabilities_in_range(strong_run, weak_run, st_run):
    for run in (strong_run, weak_run, st_run):
        for value in run.budget.terms().values():
            assert 0 <= value <= 1
        assert run.budget.p_lz == run.config.p_lz


def test_single_spin_loss_free_limit():
    p, cfg = with_overrides(*load_preset("weak"), **QUIET)
    b = run_protocol(p, cfg).budget
    assert b.p_rec == (0.0, 0.0) and b.p_deph == 0.0
    assert b.p_success == pytest.approx(1 - cfg.p_lz, abs=1e-15)


def test_singlet_triplet_loss_free_limit():
    p, cfg = with_overrides(*load_preset("st"), **QUIET)
    run = run_protocol(p, cfg)
    b = run.budget
    assert b.p_rec == (0.0, 0.0) and b.p_deph == 0.0 and b.p_rabi_fail == 0.0
    assert b.p_success == pytest.approx(1 - cfg.p_lz - b.p_rabi_leak, abs=1e-15)
    assert b.p_rabi_leak == run.extras["rabi"].p_leak


def test_longer_lifetime_increases_success():
    base = load_preset("weak")
    values = [run_protocol(*with_overrides(*base, tau=tau)).budget.p_success for tau in (0.3, 1.0, 3.0, 10.0)]
    assert np.all(np.diff(values) > 0)


@pytest.mark.parametrize("key", ["eps_rms_gate", "S_eps_gate", "B_of_rms", "B_of_rms_tilde"])
def test_more_noise_never_helps(key):
    p, cfg = load_preset("weak")
    values = [run_protocol(*with_overrides(p, cfg, **{key: f * getattr(p, key)})).budget.p_success
              for f in (0.0, 1.0, 2.0)]
    assert np.all(np.diff(values) <= 0)


def test_runs_are_bit_identical(strong_run):
    again = run_protocol(*load_preset("strong"))
    assert again.budget == strong_run.budget
    assert np.array_equal(again.trajectory.psi2, strong_run.trajectory.psi2)


def test_singlet_triplet_is_bit_identical(st_run):
    again = run_protocol(*load_preset("st"))
    assert again.budget == st_run.budget
    assert again.pulse == st_run.pulse


def test_single_spin_needs_an_excitation_point():
    p, cfg = load_preset("weak")
    with pytest.raises(ValueError, match="eps_ep"):
        run_single_spin(p, dataclasses.replace(cfg, eps_ep=None))


def test_wrong_protocol_kind():
    p, cfg = load_preset("weak")
    with pytest.raises(ValueError):
        run_singlet_triplet(p, cfg)
    p, cfg = load_preset("st")
    with pytest.raises(ValueError):
        run_single_spin(p, cfg)


def test_zero_tunnel_coupling_has_no_pi_pulse():
    p, cfg = load_preset("st")
    p0 = dataclasses.replace(p, t_c=0.0)  # bypasses validation on purpose
    cfg0 = dataclasses.replace(cfg, eps_ep=85.0, grid_step=5.0, eps_final=600.0)
    with pytest.raises(ValueError, match="no finite"):
        run_singlet_triplet(p0, cfg0)


def test_with_overrides_routes_keys():
    p, cfg = load_preset("weak")
    p2, cfg2 = with_overrides(p, cfg, t_c=80.0, p_lz=0.05)
    assert p2.t_c == 80.0 and cfg2.p_lz == 0.05
    assert p2.tau == p.tau and cfg2.eps_ep == cfg.eps_ep
    with pytest.raises(KeyError):
        with_overrides(p, cfg, bogus=1.0)


def test_excitation_point_meets_polarization_target(st_run):
    assert st_run.eps_ep == pytest.approx(90.0, rel=0.15)
    with pytest.raises(ValueError):
        solve_excitation_point(st_run.params, st_run.exploration, 0.999, (0.0, 500.0))


def test_st_branch_roles(st_run):
    tr = st_run.trace
    assert tr.branch("psi1") == tr.branch(T_ZERO)
    assert tr.branch("psi2") == tr.branch(SINGLET)
    assert len({tr.branch(n) for n in (T_PLUS, SINGLET, T_ZERO)}) == 3
    assert st_run.pulse.eps_star in tr.grid


def test_st_schedule_stops_at_drive_point(st_run):
    segs = st_run.schedule.segments
    assert len(segs) == 2
    assert segs[0].eps_start == pytest.approx(st_run.eps_ep)
    assert segs[0].eps_end == st_run.pulse.eps_star
    assert segs[1].eps_end == st_run.config.eps_final


def test_trajectory_is_normalized(weak_run, st_run):
    for run in (weak_run, st_run):
        traj = run.trajectory
        assert np.all(np.diff(traj.t) >= 0)
        for pop in (traj.pop1, traj.pop2):
            assert np.allclose(pop.sum(axis=1), 1.0, atol=1e-12)


def test_spectrum_trace_names_protocol_branches():
    p, cfg = load_preset("strong")
    tr = spectrum_trace(p, dataclasses.replace(cfg, grid_step=10.0))
    assert tr.grid[0] == cfg.grid_start and tr.grid[-1] == cfg.grid_stop
    assert tr.branch("psi1") != tr.branch("psi2")


def test_budget_report(weak_run, st_run):
    text = budget_report(weak_run)
    kv = dict(line.split(" = ") for line in text.split("# machine-readable")[1].strip().splitlines())
    assert float(kv["p_success"]) == weak_run.budget.p_success
    assert "Rabi" not in text
    st_text = budget_report(st_run)
    assert "Rabi leakage" in st_text and "Rabi failure" in st_text
    assert "t_rabi_ns" in st_text


def test_default_config_is_single_spin():
    assert ProtocolConfig().kind == "single-spin"
