"""End-to-end pipelines for the two photon-to-spin transfer protocols.

Single spin: a photon creates a superposition of the ``|◦↑⇑⟩``-like and
``|◦↓⇑⟩``-like branches at the excitation point; a constant-speed detuning
sweep then moves the electron into the gate-defined dot, ending near
``|↑◦⇑⟩`` and ``|↓◦⇑⟩``.

Singlet-triplet: with one electron already in the left dot, the photon
populates the T₀-like and S-like branches. The S-like part is not written
directly; it is prepared on the T₊-like branch and rotated into the S-like
branch by a resonant π-pulse at ε* during the sweep.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .hamiltonians import (
    HermitianMatrix,
    dd_full_h,
    single_electron_h,
)
from .lossmodels import (
    RABI,
    SWEEP,
    DephasingBreakdown,
    Trajectory,
    dephasing_breakdown,
    recombination_probability,
)
from .params import SINGLE_SPIN, SINGLET_TRIPLET, DeviceParams, ProtocolConfig
from .rabi import (
    PRINTED,
    SINGLET,
    T_PLUS,
    T_ZERO,
    RabiFailure,
    RabiPulse,
    optimize_drive_point,
    rabi_failure_noise,
    rabi_propagate,
)
from .spectra import BranchTrace, track_branches, vertical_polarization
from .sweep import Event, SweepSchedule, plan_sweep

PSI1, PSI2 = "psi1", "psi2"

# target states identifying the protocol branches at the end of the sweep
SS_TARGETS = {PSI1: "|↑◦⇑⟩", PSI2: "|↓◦⇑⟩"}


@dataclass(frozen=True)
class FailureBudget:
    """Failure probabilities of one protocol and the resulting success probability."""

    p_lz: float
    p_rec: tuple  # (psi1, psi2)
    p_deph: float
    p_rabi_leak: float = 0.0
    p_rabi_fail: float = 0.0

    def __post_init__(self):
        for name, value in self.terms().items():
            if not 0 <= value <= 1:
                raise ValueError(f"{name} = {value!r} is not a probability")

    def terms(self) -> dict:
        """Worst-case failure terms entering the sum."""
        return {
            "p_lz": self.p_lz,
            "p_rec": max(self.p_rec),
            "p_deph": self.p_deph,
            "p_rabi_leak": self.p_rabi_leak,
            "p_rabi_fail": self.p_rabi_fail,
        }

    @property
    def p_rec_range(self) -> tuple:
        return (min(self.p_rec), max(self.p_rec))

    @property
    def p_fail(self) -> float:
        return float(sum(self.terms().values()))

    @property
    def p_success(self) -> float:
        return 1.0 - self.p_fail


def assemble_budget(p_lz, p_rec, p_deph, p_rabi_leak=0.0, p_rabi_fail=0.0) -> FailureBudget:
    """Linear worst-case budget; the larger recombination probability is used."""
    p_rec = tuple(float(x) for x in np.atleast_1d(p_rec))
    if len(p_rec) == 1:
        p_rec = p_rec * 2
    return FailureBudget(float(p_lz), p_rec, float(p_deph), float(p_rabi_leak), float(p_rabi_fail))


@dataclass
class ProtocolRun:
    """Everything produced by one protocol evaluation."""

    params: DeviceParams
    config: ProtocolConfig
    trace: BranchTrace
    schedule: SweepSchedule
    trajectory: Trajectory
    dephasing: DephasingBreakdown
    budget: FailureBudget
    eps_ep: float
    pulse: RabiPulse | None = None
    rabi_failure: RabiFailure | None = None
    exploration: BranchTrace | None = None
    extras: dict = field(default_factory=dict)

    def hamiltonian(self, eps: float) -> HermitianMatrix:
        if self.config.kind == SINGLE_SPIN:
            return single_electron_h(self.params, eps)
        return dd_full_h(self.params, eps, self.params.eps_dd)

    def as_tuple(self):
        out = (self.trace, self.schedule, self.trajectory, self.dephasing, self.budget)
        return out + (self.pulse,) if self.pulse is not None else out


def _grid(start: float, stop: float, step: float, extra=()) -> np.ndarray:
    n = int(np.floor((stop - start) / step + 1e-9))
    g = start + step * np.arange(n + 1)
    g = np.concatenate([g, [stop], np.asarray(extra, float)])
    g = np.unique(np.round(g, 9))
    g = g[(g >= start - 1e-9) & (g <= stop + 1e-9)]
    # rounding must not move the window ends
    g[0], g[-1] = start, stop
    return g


def _sweep_times(eps: np.ndarray, start: float, speed: float, t0: float = 0.0) -> np.ndarray:
    return t0 + (eps - start) * 1e-3 / speed


def _branch_for_label(trace: BranchTrace, label: str) -> int:
    return int(np.argmax(trace.weight_on(label)[-1]))


# ---------------------------------------------------------------------------
# single spin


def run_single_spin(p: DeviceParams, cfg: ProtocolConfig) -> ProtocolRun:
    if cfg.kind != SINGLE_SPIN:
        raise ValueError(f"config is for protocol {cfg.kind!r}, not {SINGLE_SPIN!r}")
    if cfg.eps_ep is None:
        raise ValueError("the single-spin protocol needs an explicit excitation point eps_ep")
    eps_ep, eps_end = cfg.eps_ep, cfg.eps_final
    trace = track_branches(lambda e: single_electron_h(p, e), _grid(eps_ep, eps_end, cfg.grid_step))
    trace.names = {PSI1: _branch_for_label(trace, SS_TARGETS[PSI1]),
                   PSI2: _branch_for_label(trace, SS_TARGETS[PSI2])}
    schedule = plan_sweep(trace, (PSI1, PSI2), (eps_ep, eps_end), cfg.p_lz,
                          events=(Event("excitation", eps_ep),))
    traj = _sweep_trajectory(p, trace, schedule.speed, eps_ep)
    p_rec = tuple(recombination_probability(traj, w, p.tau) for w in (PSI1, PSI2))
    deph = dephasing_breakdown(traj, p)
    budget = assemble_budget(cfg.p_lz, p_rec, deph.p_fail)
    return ProtocolRun(p, cfg, trace, schedule, traj, deph, budget, eps_ep)


def _sweep_trajectory(p: DeviceParams, trace: BranchTrace, speed: float, eps_ep: float) -> Trajectory:
    b1, b2 = trace.branch(PSI1), trace.branch(PSI2)
    psi1 = trace.states[:, :, b1]
    psi2 = trace.states[:, :, b2]
    return Trajectory(
        t=_sweep_times(trace.grid, eps_ep, speed),
        eps=trace.grid.copy(),
        psi1=psi1,
        psi2=psi2,
        pop1=np.abs(psi1) ** 2,
        pop2=np.abs(psi2) ** 2,
        energy1=trace.energies[:, b1],
        energy2=trace.energies[:, b2],
        segment=np.full(trace.grid.size, SWEEP),
        basis=trace.basis,
        params=p,
    )


# ---------------------------------------------------------------------------
# singlet-triplet


T0_VECTOR_LABELS = ("|↑↓⟩|◦⇑⟩", "|↓↑⟩|◦⇑⟩")
SINGLET_LABELS = ("|S(2,0)⟩|◦⇑⟩", "|S(0,2)⟩|◦⇑⟩")
T_PLUS_LABEL = "|↑↑⟩|◦⇓⟩"


def identify_st_branches(trace: BranchTrace, node: int = -1) -> dict:
    """Name the T₊-, S- and T₀-like branches from their character at one node.

    T₊-like: largest weight on |↑↑⟩|◦⇓⟩. T₀-like: largest overlap with the
    (1,1) triplet ⊗ |◦⇑⟩. S-like: the lowest branch living in the singlet
    sector ⊗ |◦⇑⟩ (the (1,1) singlet and both doubly occupied singlets);
    when the double-dot detuning is released this lower hybrid turns into
    the (1,1) singlet while the upper one becomes S(2,0).
    """
    b = trace.basis
    V = trace.states[node]
    i_ud, i_du = (b.index(lab) for lab in T0_VECTOR_LABELS)
    t0 = np.abs(V[i_ud] + V[i_du]) ** 2 / 2
    s11 = np.abs(V[i_ud] - V[i_du]) ** 2 / 2
    sing = s11 + sum(np.abs(V[b.index(lab)]) ** 2 for lab in SINGLET_LABELS)
    b_t0 = int(np.argmax(t0))
    b_tp = int(np.argmax(np.abs(V[b.index(T_PLUS_LABEL)]) ** 2))
    candidates = [k for k in np.flatnonzero(sing > 0.5) if k not in (b_t0, b_tp)]
    if not candidates:
        raise RuntimeError("no singlet-like branch found at the end of the detuning range")
    E = trace.energies[node]
    b_s = int(min(candidates, key=lambda k: E[k]))
    return {T_PLUS: b_tp, SINGLET: b_s, T_ZERO: b_t0}


def _st_trace(p: DeviceParams, grid) -> BranchTrace:
    trace = track_branches(lambda e: dd_full_h(p, e, p.eps_dd), grid)
    trace.names = identify_st_branches(trace)
    return trace


def solve_excitation_point(p: DeviceParams, trace: BranchTrace, target: float, window,
                           tol: float = 1e-4) -> float:
    """Detuning where the S-like branch reaches the requested relative vertical polarization.

    The relative polarization is the antiparallel-exciton weight divided by
    the total excitonic weight of the state. The first grid crossing inside
    ``window`` is refined by bisection to ``tol`` µeV.
    """
    nodes = trace.window(*window)
    bs = trace.branch(SINGLET)
    vp = vertical_polarization(trace.states[nodes, :, bs].T, trace.basis, relative=True) - target
    cross = np.flatnonzero(np.sign(vp[:-1]) != np.sign(vp[1:]))
    if vp.size and vp[0] == 0:
        return float(trace.grid[nodes[0]])
    if cross.size == 0:
        raise ValueError(f"the S-like branch never reaches relative VP = {target} in {tuple(window)}")
    i = int(nodes[cross[0]])
    lo, hi = trace.grid[i], trace.grid[i + 1]
    ref = trace.states[i, :, bs]
    f_lo = vp[cross[0]]

    def f(e):
        w, v = np.linalg.eigh(dd_full_h(p, e, p.eps_dd).matrix)
        k = int(np.argmax(np.abs(ref.conj() @ v)))
        return float(vertical_polarization(v[:, k], trace.basis, relative=True)) - target

    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if np.sign(fm) == np.sign(f_lo):
            lo, f_lo = mid, fm
        else:
            hi = mid
    return float(0.5 * (lo + hi))


def run_singlet_triplet(p: DeviceParams, cfg: ProtocolConfig, rabi_frame: str = PRINTED,
                        rabi_nodes: int = 2000) -> ProtocolRun:
    """Excitation, sweep to ε*, π-pulse, sweep to the final detuning."""
    if cfg.kind != SINGLET_TRIPLET:
        raise ValueError(f"config is for protocol {cfg.kind!r}, not {SINGLET_TRIPLET!r}")
    explore = _st_trace(p, _grid(cfg.grid_start, cfg.eps_final, cfg.grid_step))
    if cfg.eps_ep is None:
        eps_ep = solve_excitation_point(p, explore, cfg.vp_target,
                                        (cfg.ep_search_start, cfg.ep_search_stop))
    else:
        eps_ep = float(cfg.eps_ep)
    search = (eps_ep if cfg.drive_search_start is None else cfg.drive_search_start,
              cfg.drive_search_stop)
    pulse = optimize_drive_point(explore, search, cfg.lambda_tolerance, p.eps_dd, p.hbar)
    eps_star = pulse.eps_star
    if not eps_ep <= eps_star <= cfg.eps_final:
        raise ValueError(f"drive point {eps_star} outside the sweep window")

    trace = _st_trace(p, _grid(eps_ep, cfg.eps_final, cfg.grid_step, extra=[eps_star]))
    schedule = plan_sweep(
        trace, (T_PLUS, SINGLET, T_ZERO), (eps_ep, cfg.eps_final), cfg.p_lz, stops=(eps_star,),
        events=(Event("excitation", eps_ep), Event("drive", eps_star, pulse.t_rabi)),
    )
    traj = _st_trajectory(p, trace, schedule, pulse, eps_ep, rabi_nodes)
    p_rec = tuple(recombination_probability(traj, w, p.tau) for w in (PSI1, PSI2))
    deph = dephasing_breakdown(traj, p)
    outcome = rabi_propagate(pulse, rabi_frame)
    failure = rabi_failure_noise(p, pulse)
    budget = assemble_budget(cfg.p_lz, p_rec, deph.p_fail, outcome.p_leak, failure.total)
    trace.names = {**trace.names, PSI1: trace.names[T_ZERO], PSI2: trace.names[SINGLET]}
    return ProtocolRun(p, cfg, trace, schedule, traj, deph, budget, eps_ep, pulse, failure,
                       explore, extras={"rabi": outcome})


def _st_trajectory(p, trace, schedule, pulse, eps_ep, rabi_nodes) -> Trajectory:
    speed = schedule.speed
    eps_star = pulse.eps_star
    bt, bs, b0 = (trace.branch(n) for n in (T_PLUS, SINGLET, T_ZERO))
    grid = trace.grid
    i_star = trace.node(eps_star)
    seg1 = np.arange(0, i_star + 1)
    seg2 = np.arange(i_star, grid.size)

    t1 = _sweep_times(grid[seg1], eps_ep, speed)
    t_star = t1[-1]
    tr = np.linspace(0.0, pulse.t_rabi, rabi_nodes + 1)[1:]
    t2 = _sweep_times(grid[seg2[1:]], eps_star, speed, t_star + pulse.t_rabi)

    V, E = trace.states, trace.energies
    vt, vs, v0 = V[i_star, :, bt], V[i_star, :, bs], V[i_star, :, b0]
    half = pulse.omega_s * tr / 2
    c, s = np.cos(half), np.sin(half)
    phase = np.exp(1j * pulse.omega_d * tr)
    psi2_rabi = (phase * c)[:, None] * vt[None, :] + s[:, None] * vs[None, :]
    pop2_rabi = (c**2)[:, None] * np.abs(vt) ** 2 + (s**2)[:, None] * np.abs(vs) ** 2
    e2_rabi = c**2 * E[i_star, bt] + s**2 * E[i_star, bs]
    n_r = tr.size

    psi1 = np.concatenate([V[seg1, :, b0], np.repeat(v0[None, :], n_r, 0), V[seg2[1:], :, b0]])
    psi2 = np.concatenate([V[seg1, :, bt], psi2_rabi, V[seg2[1:], :, bs]])
    pop1 = np.abs(psi1) ** 2
    pop2 = np.concatenate([np.abs(V[seg1, :, bt]) ** 2, pop2_rabi, np.abs(V[seg2[1:], :, bs]) ** 2])
    e1 = np.concatenate([E[seg1, b0], np.full(n_r, E[i_star, b0]), E[seg2[1:], b0]])
    e2 = np.concatenate([E[seg1, bt], e2_rabi, E[seg2[1:], bs]])
    segment = np.array([SWEEP] * seg1.size + [RABI] * n_r + [SWEEP] * (seg2.size - 1))
    released = np.concatenate([np.zeros(seg1.size + n_r, bool), np.ones(seg2.size - 1, bool)])
    return Trajectory(
        t=np.concatenate([t1, t_star + tr, t2]),
        eps=np.concatenate([grid[seg1], np.full(n_r, eps_star), grid[seg2[1:]]]),
        psi1=psi1,
        psi2=psi2,
        pop1=pop1,
        pop2=pop2,
        energy1=e1,
        energy2=e2,
        segment=segment,
        basis=trace.basis,
        dd_released=released,
        params=p,
    )


def spectrum_trace(p: DeviceParams, cfg: ProtocolConfig) -> BranchTrace:
    """Tracked branches over ``[grid_start, grid_stop]`` with protocol roles named."""
    grid = _grid(cfg.grid_start, cfg.grid_stop, cfg.grid_step)
    if cfg.kind == SINGLE_SPIN:
        trace = track_branches(lambda e: single_electron_h(p, e), grid)
        trace.names = {PSI1: _branch_for_label(trace, SS_TARGETS[PSI1]),
                       PSI2: _branch_for_label(trace, SS_TARGETS[PSI2])}
        return trace
    return _st_trace(p, grid)


def run_protocol(p: DeviceParams, cfg: ProtocolConfig, **kw) -> ProtocolRun:
    if cfg.kind == SINGLE_SPIN:
        return run_single_spin(p, cfg)
    return run_singlet_triplet(p, cfg, **kw)


def with_overrides(p: DeviceParams, cfg: ProtocolConfig, **changes):
    """Apply keyword overrides to whichever record owns each key."""
    dev = {k: v for k, v in changes.items() if k in DeviceParams.__dataclass_fields__}
    proto = {k: v for k, v in changes.items() if k in ProtocolConfig.__dataclass_fields__}
    unknown = set(changes) - set(dev) - set(proto)
    if unknown:
        raise KeyError(f"unknown parameter(s): {sorted(unknown)}")
    return dataclasses.replace(p, **dev).validate(), dataclasses.replace(cfg, **proto).validate()


def budget_report(run: ProtocolRun) -> str:
    """Human-readable summary followed by a ``key = value`` block."""
    b = run.budget
    lo, hi = b.p_rec_range
    lines = [
        f"protocol: {run.config.kind}",
        f"excitation point: {run.eps_ep:.4f} µeV",
        f"sweep speed: {run.schedule.speed:.4f} meV/ns "
        f"(inverse {1 / run.schedule.speed:.4f} ns/meV)",
        "sweep segments: " + ", ".join(
            f"[{s.eps_start:.2f}, {s.eps_end:.2f}] µeV in {s.duration:.4f} ns" for s in run.schedule.segments
        ),
    ]
    if run.pulse is not None:
        pl = run.pulse
        lines += [
            f"drive point: {pl.eps_star:.2f} µeV, amplitude {pl.delta_eps:.2f} µeV",
            f"drive frequency: {pl.omega_d:.4f} rad/ns ({pl.omega_d / (2 * np.pi):.4f} GHz)",
            f"pi-pulse duration: {pl.t_rabi:.4f} ns",
        ]
    lines += [
        "",
        f"{'mechanism':<28}{'probability':>14}",
        f"{'Landau-Zener':<28}{100 * b.p_lz:>13.3f}%",
        f"{'recombination':<28}{100 * lo:>6.3f}-{100 * hi:.3f}%",
        f"{'dephasing':<28}{100 * b.p_deph:>13.3f}%",
    ]
    if run.pulse is not None:
        lines += [
            f"{'Rabi leakage':<28}{100 * b.p_rabi_leak:>13.3f}%",
            f"{'Rabi failure (noise)':<28}{100 * b.p_rabi_fail:>13.3f}%",
        ]
    lines += [f"{'success':<28}{100 * b.p_success:>13.3f}%", "", "# machine-readable"]
    kv = {
        "protocol": run.config.kind,
        "eps_ep_ueV": run.eps_ep,
        "speed_meV_per_ns": run.schedule.speed,
        "transfer_time_ns": run.schedule.transfer_time,
        "p_lz": b.p_lz,
        "p_rec_psi1": b.p_rec[0],
        "p_rec_psi2": b.p_rec[1],
        "p_deph": b.p_deph,
        "p_rabi_leak": b.p_rabi_leak,
        "p_rabi_fail": b.p_rabi_fail,
        "p_success": b.p_success,
    }
    for i, d in enumerate(run.schedule.durations, 1):
        kv[f"segment{i}_time_ns"] = d
    if run.pulse is not None:
        kv.update(eps_star_ueV=run.pulse.eps_star, delta_eps_ueV=run.pulse.delta_eps,
                  omega_d_rad_per_ns=run.pulse.omega_d, t_rabi_ns=run.pulse.t_rabi)
    for k, v in run.dephasing.items():
        kv[f"variance_{k}"] = v
    lines += [f"{k} = {v if isinstance(v, str) else repr(float(v))}" for k, v in kv.items()]
    return "\n".join(lines) + "\n"


__all__ = [
    "PSI1",
    "PSI2",
    "FailureBudget",
    "assemble_budget",
    "ProtocolRun",
    "spectrum_trace",
    "run_single_spin",
    "identify_st_branches",
    "solve_excitation_point",
    "run_singlet_triplet",
    "run_protocol",
    "with_overrides",
    "budget_report",
]
