"""Radiative recombination and dephasing along a protocol trajectory.

Both basis states of the qubit being written (``psi1`` and ``psi2``) are
followed on a common time grid. Sensitivities of their energy difference to
slow parameters are obtained by the Hellmann-Feynman theorem from basis
populations: ``∂E/∂s = Σ_i p_i ∂H_ii/∂s`` for the diagonal derivative
operators used here. For a superposition created by a Rabi pulse the
populations are the occupation-weighted mixture of the two branches.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .hamiltonians import Basis, eps_dd_derivative, overhauser_derivative, overhauser_sources
from .params import HBAR, DeviceParams, detuning_noise, overhauser_rms_tesla
from .spectra import bright_projector

SWEEP, HOLD, RABI = "sweep", "hold", "rabi"


@dataclass
class Trajectory:
    """Instantaneous states of the two protocol branches on a time grid.

    ``psi*`` hold the state vectors (rows are nodes), ``pop*`` the basis
    populations used for energy derivatives, ``energy*`` the branch energies
    (µeV). ``segment`` labels each node; ``dd_released`` marks nodes after
    the double-dot detuning has been released, where it no longer
    contributes noise.
    """

    t: np.ndarray
    eps: np.ndarray
    psi1: np.ndarray
    psi2: np.ndarray
    pop1: np.ndarray
    pop2: np.ndarray
    energy1: np.ndarray
    energy2: np.ndarray
    segment: np.ndarray
    basis: Basis
    dd_released: np.ndarray = None
    params: DeviceParams = field(default=None, repr=False)

    def __post_init__(self):
        if self.t.ndim != 1 or (self.t.size > 1 and not np.all(np.diff(self.t) > 0)):
            raise ValueError("trajectory time grid must be strictly increasing")
        if self.dd_released is None:
            self.dd_released = np.zeros(self.t.size, bool)

    def state(self, which) -> np.ndarray:
        return self.psi1 if _which(which) == 1 else self.psi2

    def check_normalized(self, tol: float = 1e-10):
        for name, psi in (("psi1", self.psi1), ("psi2", self.psi2)):
            dev = np.abs(np.sum(np.abs(psi) ** 2, axis=1) - 1).max()
            if dev > tol:
                raise ValueError(f"{name} is not normalized on the grid (deviation {dev:.3g})")

    @property
    def duration(self) -> float:
        return float(self.t[-1] - self.t[0])


def _which(which) -> int:
    if which in (1, "1", "psi1", "Ψ1", "Ψ₁"):
        return 1
    if which in (2, "2", "psi2", "Ψ2", "Ψ₂"):
        return 2
    raise ValueError(f"which must name psi1 or psi2, got {which!r}")


def _integral(y: np.ndarray, t: np.ndarray) -> float:
    return float(np.trapezoid(y, t)) if t.size > 1 else 0.0


def _cumulative(y: np.ndarray, t: np.ndarray) -> np.ndarray:
    out = np.zeros_like(t, dtype=float)
    if t.size > 1:
        out[1:] = np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(t))
    return out


# ---------------------------------------------------------------------------
# recombination


def bright_content_along(traj: Trajectory, which) -> np.ndarray:
    P = bright_projector(traj.basis)
    psi = traj.state(which)
    return np.real(np.einsum("ni,ij,nj->n", psi.conj(), P, psi))


def recombination_probability(traj: Trajectory, which, tau: float) -> float:
    """Probability that the exciton recombines radiatively along the trajectory."""
    traj.check_normalized()
    if np.isinf(tau):
        return 0.0
    rate = bright_content_along(traj, which) / tau
    return float(-np.expm1(-_integral(rate, traj.t)))


def survival_profile(traj: Trajectory, which, tau: float) -> np.ndarray:
    """Probability of no recombination up to each node."""
    if np.isinf(tau):
        return np.ones_like(traj.t)
    return np.exp(-_cumulative(bright_content_along(traj, which) / tau, traj.t))


# ---------------------------------------------------------------------------
# sensitivities


def _sensitivity(traj: Trajectory, diag: np.ndarray) -> np.ndarray:
    return (traj.pop2 - traj.pop1) @ diag


def _at(traj: Trajectory, values: np.ndarray, t):
    return values if t is None else np.interp(t, traj.t, values)


def chi_detuning(traj: Trajectory, t=None):
    """∂(E2 − E1)/∂ε along the trajectory (dimensionless)."""
    return _at(traj, _sensitivity(traj, traj.basis.eps_slope), t)


def chi_dd_detuning(traj: Trajectory, t=None):
    """∂(E2 − E1)/∂ε_DD; zero once the double-dot detuning is released."""
    d = np.real(np.diag(eps_dd_derivative(traj.basis, traj.params)))
    chi = _sensitivity(traj, d)
    chi = np.where(traj.dd_released, 0.0, chi)
    return _at(traj, chi, t)


def spin_sensitivity(traj: Trajectory, params: DeviceParams, source: str) -> np.ndarray:
    """∂(E2 − E1)/∂B for one Overhauser source, in µeV/T."""
    return _sensitivity(traj, overhauser_derivative(params, traj.basis, source))


# ---------------------------------------------------------------------------
# dephasing variances


def dephasing_quasistatic(traj: Trajectory, eps_rms: float, chi=None, hbar: float = None) -> float:
    """Phase variance from a static Gaussian detuning offset of rms ``eps_rms``."""
    hbar = _hbar(traj, hbar)
    chi = chi_detuning(traj) if chi is None else chi
    return (eps_rms / hbar) ** 2 * _integral(chi, traj.t) ** 2


def dephasing_white(traj: Trajectory, S_eps: float, chi=None, hbar: float = None) -> float:
    """Phase variance from white detuning noise of one-sided density ``S_eps``."""
    hbar = _hbar(traj, hbar)
    chi = chi_detuning(traj) if chi is None else chi
    return S_eps / (2 * hbar**2) * _integral(chi**2, traj.t)


def dephasing_spin(traj: Trajectory, params: DeviceParams, rms: dict | None = None) -> dict:
    """Phase variance per quasi-static Overhauser source.

    ``rms`` maps source names to rms fields in tesla; by default the device
    values are used (the gate-dot value applies to each dot separately).
    """
    if rms is None:
        rms = default_spin_rms(params, traj.basis)
    out = {}
    for source in overhauser_sources(traj.basis):
        b = rms.get(source, 0.0)
        sens = spin_sensitivity(traj, params, source)
        out[source] = (b / params.hbar) ** 2 * _integral(sens, traj.t) ** 2
    return out


def default_spin_rms(params: DeviceParams, basis: Basis) -> dict:
    b_of, b_gd = overhauser_rms_tesla(params)
    rms = {"B_OF": b_of}
    for source in overhauser_sources(basis)[1:]:
        rms[source] = b_gd
    return rms


def _hbar(traj, hbar):
    if hbar is not None:
        return hbar
    return traj.params.hbar if traj.params is not None else HBAR


@dataclass(frozen=True)
class DephasingBreakdown:
    """Phase variances ⟨δφ²⟩ of every noise source."""

    charge_quasistatic: float = 0.0
    charge_white: float = 0.0
    dd_quasistatic: float = 0.0
    dd_white: float = 0.0
    spin: dict = field(default_factory=dict)

    def items(self):
        yield "charge_quasistatic", self.charge_quasistatic
        yield "charge_white", self.charge_white
        yield "dd_quasistatic", self.dd_quasistatic
        yield "dd_white", self.dd_white
        for k, v in self.spin.items():
            yield f"overhauser_{k}", v

    @property
    def total(self) -> float:
        return float(sum(v for _, v in self.items()))

    @property
    def p_fail(self) -> float:
        return dephasing_failure(self)

    def coherence(self) -> dict:
        """exp(−⟨δφ²⟩/2) per source: probability-like measure of no dephasing."""
        return {k: float(np.exp(-v / 2)) for k, v in self.items()}


def dephasing_failure(breakdown: DephasingBreakdown) -> float:
    """Depolarizing-equivalent failure probability ⟨δφ²⟩/3."""
    return breakdown.total / 3.0


def dephasing_breakdown(traj: Trajectory, params: DeviceParams, include_dd: bool | None = None) -> DephasingBreakdown:
    """All dephasing contributions for a trajectory with the device noise levels.

    The double-dot detuning sees the same gate noise as the main detuning.
    """
    eps_rms, S_eps = detuning_noise(params)
    hbar = params.hbar
    chi = chi_detuning(traj)
    dd = traj.basis.kind == "double-dot" if include_dd is None else include_dd
    kw = {}
    if dd:
        chi_dd = chi_dd_detuning(traj)
        kw["dd_quasistatic"] = dephasing_quasistatic(traj, eps_rms, chi_dd, hbar)
        kw["dd_white"] = dephasing_white(traj, S_eps, chi_dd, hbar)
    return DephasingBreakdown(
        charge_quasistatic=dephasing_quasistatic(traj, eps_rms, chi, hbar),
        charge_white=dephasing_white(traj, S_eps, chi, hbar),
        spin=dephasing_spin(traj, params),
        **kw,
    )


def dephasing_profiles(traj: Trajectory, params: DeviceParams) -> dict:
    """Accumulated exp(−⟨δφ²⟩(t)/2) per source at every node."""
    eps_rms, S_eps = detuning_noise(params)
    h = params.hbar
    chi = chi_detuning(traj)
    out = {
        "charge_quasistatic": (eps_rms / h) ** 2 * _cumulative(chi, traj.t) ** 2,
        "charge_white": S_eps / (2 * h**2) * _cumulative(chi**2, traj.t),
    }
    if traj.basis.kind == "double-dot":
        chi_dd = chi_dd_detuning(traj)
        out["dd_quasistatic"] = (eps_rms / h) ** 2 * _cumulative(chi_dd, traj.t) ** 2
        out["dd_white"] = S_eps / (2 * h**2) * _cumulative(chi_dd**2, traj.t)
    for source, b in default_spin_rms(params, traj.basis).items():
        sens = spin_sensitivity(traj, params, source)
        out[f"overhauser_{source}"] = (b / h) ** 2 * _cumulative(sens, traj.t) ** 2
    return {k: np.exp(-v / 2) for k, v in out.items()}


__all__ = [
    "SWEEP",
    "HOLD",
    "RABI",
    "Trajectory",
    "bright_content_along",
    "recombination_probability",
    "survival_profile",
    "chi_detuning",
    "chi_dd_detuning",
    "spin_sensitivity",
    "dephasing_quasistatic",
    "dephasing_white",
    "dephasing_spin",
    "default_spin_rms",
    "DephasingBreakdown",
    "dephasing_failure",
    "dephasing_breakdown",
    "dephasing_profiles",
]
