"""Brute-force Schrödinger propagation used to cross-check the analytic models.

The integrator is the exponential midpoint rule: the Hamiltonian is frozen
at the centre of every step and the step propagator ``exp(−i H Δt/ħ)`` is
applied exactly through an eigendecomposition. This keeps the evolution
unitary to rounding error for the small dense operators of this package.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .hamiltonians import HermitianMatrix
from .params import HBAR, SINGLE_SPIN
from .rabi import SINGLET, T_PLUS, T_ZERO


class NormDriftError(RuntimeError):
    """The propagated state lost normalization beyond tolerance."""


@dataclass(frozen=True)
class PropagationResult:
    psi: np.ndarray
    norm_drift: np.ndarray  # |‖ψ‖² − 1| after every step
    t: np.ndarray

    def fidelity(self, target: np.ndarray) -> float:
        return float(abs(np.vdot(target, self.psi)) ** 2)


def _as_array(H) -> np.ndarray:
    return H.matrix if isinstance(H, HermitianMatrix) else np.asarray(H, dtype=complex)


def propagate(H_of_t: Callable[[float], object], psi0, t_grid, hbar: float = HBAR,
              drift_tol: float = 1e-8) -> PropagationResult:
    """Evolve ``psi0`` through ``t_grid`` with the exponential midpoint rule."""
    t = np.asarray(t_grid, dtype=float)
    psi = np.asarray(psi0, dtype=complex).copy()
    if abs(np.vdot(psi, psi) - 1) > 1e-10:
        raise ValueError("initial state must be normalized")
    mids = 0.5 * (t[1:] + t[:-1])
    dts = np.diff(t)
    Hs = np.array([_as_array(H_of_t(tm)) for tm in mids])
    return _propagate_stack(Hs, dts, psi, t, hbar, drift_tol)


def _propagate_stack(Hs, dts, psi, t, hbar, drift_tol):
    w, V = np.linalg.eigh(Hs)
    phases = np.exp(-1j * w * (dts / hbar)[:, None])
    Vh = np.conj(np.swapaxes(V, 1, 2))
    drift = np.empty(len(dts))
    for k in range(len(dts)):
        psi = V[k] @ (phases[k] * (Vh[k] @ psi))
        drift[k] = abs(np.vdot(psi, psi).real - 1)
    if drift.size and drift.max() > drift_tol:
        raise NormDriftError(f"norm drift {drift.max():.3g} exceeds {drift_tol}")
    return PropagationResult(psi, drift, t)


def propagate_sweep(H0: np.ndarray, D: np.ndarray, psi0, eps_start: float, eps_end: float,
                    speed_ueV_per_ns: float, dt: float, hbar: float = HBAR,
                    chunk: int = 4096) -> PropagationResult:
    """Propagate through ``H(ε) = H0 + ε·D`` with ε swept linearly in time."""
    T = abs(eps_end - eps_start) / speed_ueV_per_ns
    n = max(int(np.ceil(T / dt)), 1)
    t = np.linspace(0.0, T, n + 1)
    psi = np.asarray(psi0, complex)
    drifts = []
    for a in range(0, n, chunk):
        tc = t[a:min(a + chunk, n) + 1]
        mids = 0.5 * (tc[1:] + tc[:-1])
        eps = eps_start + (eps_end - eps_start) * mids / T
        Hs = H0[None, :, :] + eps[:, None, None] * D[None, :, :]
        res = _propagate_stack(Hs, np.diff(tc), psi, tc, hbar, 1e-8)
        psi = res.psi
        drifts.append(res.norm_drift)
    return PropagationResult(psi, np.concatenate(drifts), t)


def _affine(run):
    H0 = run.hamiltonian(0.0).matrix
    D = run.hamiltonian(1.0).matrix - H0
    return H0, D


def _leg(run, H0, D, branch_start, branch_end, eps_a, eps_b, speed, dt):
    """Fidelity of one adiabatic leg between tracked branch states."""
    tr = run.trace
    psi0 = tr.state(branch_start, eps_a)
    res = propagate_sweep(H0, D, psi0, eps_a, eps_b, speed, dt, run.params.hbar)
    return res.fidelity(tr.state(branch_end, eps_b))


def transfer_fidelity(run, which, speed_factor: float = 1.0, dt: float = 2e-4) -> float:
    """Probability of ending on the intended branch when following the schedule.

    The initial state is the tracked branch state at the excitation point.
    ``speed_factor`` rescales the planned speed. For the singlet-triplet
    protocol the T₀-like state is swept through the whole window. The
    driven state is checked leg by leg: T₊-like from the excitation point to
    ε*, then S-like from ε* to the end. The result is the product of the two
    leg fidelities (the pulse itself is validated separately).
    """
    H0, D = _affine(run)
    speed = run.schedule.speed * 1e3 * speed_factor  # µeV/ns
    segs = run.schedule.segments
    start, end = segs[0].eps_start, segs[-1].eps_end
    if run.config.kind == SINGLE_SPIN:
        branch = "psi1" if which in (1, "psi1") else "psi2"
        return _leg(run, H0, D, branch, branch, start, end, speed, dt)
    if which in (1, "psi1"):
        return _leg(run, H0, D, T_ZERO, T_ZERO, start, end, speed, dt)
    eps_star = run.pulse.eps_star
    f1 = _leg(run, H0, D, T_PLUS, T_PLUS, start, eps_star, speed, dt)
    f2 = _leg(run, H0, D, SINGLET, SINGLET, eps_star, end, speed, dt)
    return f1 * f2


def landau_zener_oracle(gap: float, speed: float, span: float = 30.0, steps_per_radian: float = 1.0,
                        hbar: float = HBAR) -> float:
    """Diabatic probability of a two-level linear sweep by direct propagation.

    ``H = [[ε/2, gap/2], [gap/2, −ε/2]]`` is swept from ``−span·gap`` to
    ``+span·gap`` at ``speed`` (µeV/ns), starting in the lower adiabatic
    state. The result is the final population of the upper adiabatic state.
    """
    L = span * gap
    T = 2 * L / speed
    n = int(max(4000, steps_per_radian * T * L / (2 * hbar)))
    H0 = np.array([[0, gap / 2], [gap / 2, 0]], dtype=complex)
    D = np.diag([0.5, -0.5]).astype(complex)
    _, v0 = np.linalg.eigh(H0 - L * D)
    res = propagate_sweep(H0, D, v0[:, 0], -L, L, speed, T / n, hbar)
    _, v1 = np.linalg.eigh(H0 + L * D)
    return res.fidelity(v1[:, 1])


__all__ = [
    "NormDriftError",
    "PropagationResult",
    "propagate",
    "propagate_sweep",
    "transfer_fidelity",
    "landau_zener_oracle",
]
