"""Resonant detuning drive between the T₊-like and S-like branches.

A small oscillating detuning ``Δε·cos(ω_d t)`` at the operating point ε*
couples the branches through the matrix element ``λ = |⟨S|∂H/∂ε|T₊⟩|``,
giving the Rabi frequency ``Ω = Δε·λ/ħ``. The amplitude is limited by the
requirement that λ stays within a relative tolerance over
``[ε* − Δε, ε* + Δε]``; the operating point minimizes the π-pulse time.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from scipy.linalg import expm

from .hamiltonians import HermitianMatrix, dd_full_h, overhauser_h, plain_basis
from .params import HBAR, DeviceParams, detuning_noise, overhauser_rms_tesla
from .spectra import BranchTrace

T_PLUS, SINGLET, T_ZERO = "T+", "S", "T0"
PRINTED, COROTATING = "printed", "corotating"


class QuadratureError(ArithmeticError):
    """Gauss-Hermite average not converged."""


@dataclass(frozen=True)
class RabiPulse:
    """Rectangular π-pulse at ε* (µeV, rad/ns, ns)."""

    eps_star: float
    delta_eps: float
    omega_d: float
    t_rabi: float
    branches: dict
    omega_t0t: float  # (E_T0 − E_T+)/ħ at ε*
    lam_st: float
    lam_t0t: float
    eps_dd: float = 0.0
    hbar: float = HBAR
    states: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def omega_st(self) -> float:
        return self.omega_d

    @property
    def omega_s(self) -> float:
        """Rabi frequency of the T₊ ↔ S transition (rad/ns)."""
        return self.delta_eps * self.lam_st / self.hbar

    @property
    def omega_t0(self) -> float:
        """Rabi frequency of the T₊ ↔ T₀ transition (rad/ns)."""
        return self.delta_eps * self.lam_t0t / self.hbar


def transition_element(trace: BranchTrace, a, b, eps: float) -> float:
    """|⟨a|∂H/∂ε|b⟩| between two tracked branches at a grid detuning."""
    i = trace.node(eps)
    va = trace.states[i, :, trace.branch(a)]
    vb = trace.states[i, :, trace.branch(b)]
    return float(abs(va.conj() @ trace.deriv @ vb))


def transition_profile(trace: BranchTrace, a, b) -> np.ndarray:
    d = np.real(np.diag(trace.deriv))
    va = trace.states[:, :, trace.branch(a)]
    vb = trace.states[:, :, trace.branch(b)]
    return np.abs(np.einsum("ni,i,ni->n", va.conj(), d, vb))


def drive_amplitude_from_curve(grid, lam, index: int, tolerance: float = 0.5) -> float:
    """Largest symmetric half-width around ``grid[index]`` keeping λ within tolerance.

    The half-width is a node distance. It is capped by the distance to the
    nearer grid end, since λ is unknown beyond the grid.
    """
    grid = np.asarray(grid, float)
    lam = np.asarray(lam, float)
    lam0 = lam[index]
    if lam0 == 0:
        raise ValueError(f"transition element vanishes at eps={grid[index]!r}")
    dist = np.abs(grid - grid[index])
    cap = min(grid[index] - grid[0], grid[-1] - grid[index])
    bad = np.abs(lam - lam0) / lam0 > tolerance
    limit = dist[bad].min() if bad.any() else np.inf
    ok = dist[(dist < limit) & (dist <= cap * (1 + 1e-12))]
    return float(ok.max())


def choose_drive_amplitude(trace: BranchTrace, eps: float, tolerance: float = 0.5,
                           pair=(T_PLUS, SINGLET)) -> float:
    lam = transition_profile(trace, *pair)
    return drive_amplitude_from_curve(trace.grid, lam, trace.node(eps), tolerance)


def rabi_probability(delta: float, omega: float, T: float) -> float:
    """Two-level transfer probability for detuning ``delta`` and Rabi frequency ``omega``."""
    delta = np.asarray(delta, float)
    omega = np.asarray(omega, float)
    gen = np.hypot(omega, delta)
    with np.errstate(invalid="ignore", divide="ignore"):
        amp = np.where(gen > 0, omega**2 / np.where(gen > 0, gen, 1) ** 2, 0.0)
    out = amp * np.sin(gen * T / 2) ** 2
    return float(out) if out.ndim == 0 else out


def pulse_time_profile(trace: BranchTrace, tolerance: float = 0.5, pair=(T_PLUS, SINGLET), nodes=None,
                       hbar: float = HBAR):
    """Candidate (Δε, T_Rabi) at each node; T_Rabi is inf where no window fits."""
    lam = transition_profile(trace, *pair)
    nodes = np.arange(trace.grid.size) if nodes is None else np.asarray(nodes)
    amp = np.array([drive_amplitude_from_curve(trace.grid, lam, i, tolerance) if lam[i] > 0 else 0.0
                    for i in nodes])
    with np.errstate(divide="ignore"):
        t = np.where(amp * lam[nodes] > 0, np.pi * hbar / (amp * lam[nodes]), np.inf)
    return lam[nodes], amp, t


def optimize_drive_point(trace: BranchTrace, window, tolerance: float = 0.5, eps_dd: float = 0.0,
                         hbar: float = HBAR) -> RabiPulse:
    """Operating point with the shortest π-pulse inside ``window`` (grid nodes only)."""
    nodes = trace.window(*window)
    if nodes.size == 0:
        raise ValueError(f"drive search window {tuple(window)} holds no grid nodes")
    lam, amp, t = pulse_time_profile(trace, tolerance, nodes=nodes, hbar=hbar)
    if not np.isfinite(t).any():
        raise ValueError("no finite π-pulse: the drive amplitude is zero everywhere in the window")
    k = int(np.argmin(t))
    i = int(nodes[k])
    bt, bs, b0 = (trace.branch(n) for n in (T_PLUS, SINGLET, T_ZERO))
    E = trace.energies[i]
    vec = {n: trace.states[i, :, b] for n, b in ((T_PLUS, bt), (SINGLET, bs), (T_ZERO, b0))}
    lam_t0 = float(abs(vec[T_ZERO].conj() @ trace.deriv @ vec[T_PLUS]))
    return RabiPulse(
        eps_star=float(trace.grid[i]),
        delta_eps=float(amp[k]),
        omega_d=float((E[bs] - E[bt]) / hbar),
        t_rabi=float(t[k]),
        branches={T_PLUS: bt, SINGLET: bs, T_ZERO: b0},
        omega_t0t=float((E[b0] - E[bt]) / hbar),
        lam_st=float(lam[k]),
        lam_t0t=lam_t0,
        eps_dd=eps_dd,
        hbar=hbar,
        states=vec,
    )


def rwa_hamiltonian(pulse: RabiPulse, frame: str = PRINTED, omega_d: float | None = None) -> HermitianMatrix:
    """Three-level rotating-frame Hamiltonian on (S, T₊, T₀), in µeV.

    ``frame="printed"`` uses ``2(ω_T0T₊ + ω_d)`` on the T₀ diagonal;
    ``frame="corotating"`` uses ``2(ω_T0T₊ − ω_d)``, the value obtained when
    the T₊ → T₀ transition absorbs one drive quantum like T₊ → S does.
    """
    wd = pulse.omega_d if omega_d is None else omega_d
    if frame == PRINTED:
        t0 = 2 * (pulse.omega_t0t + wd)
    elif frame == COROTATING:
        t0 = 2 * (pulse.omega_t0t - wd)
    else:
        raise ValueError(f"unknown frame {frame!r}")
    h = pulse.hbar / 2
    m = h * np.array(
        [
            [2 * (pulse.omega_st - wd), pulse.omega_s, 0.0],
            [pulse.omega_s, 0.0, pulse.omega_t0],
            [0.0, pulse.omega_t0, t0],
        ]
    )
    return HermitianMatrix(m.astype(complex), plain_basis(("S", "T+", "T0"), "rotating-frame"))


@dataclass(frozen=True)
class RabiOutcome:
    unitary: np.ndarray
    p_transfer: float  # T₊ → S
    p_leak: float  # T₊ → T₀

    @property
    def p_gap(self) -> float:
        return 1.0 - self.p_transfer


def propagate_constant(H: HermitianMatrix | np.ndarray, T: float, hbar: float) -> np.ndarray:
    m = H.matrix if isinstance(H, HermitianMatrix) else np.asarray(H)
    return expm(-1j * m * T / hbar)


def rabi_propagate(pulse: RabiPulse, frame: str = PRINTED, H: HermitianMatrix | None = None) -> RabiOutcome:
    """Propagate the rectangular pulse with the rotating-frame Hamiltonian."""
    H = rwa_hamiltonian(pulse, frame) if H is None else H
    U = propagate_constant(H, pulse.t_rabi, pulse.hbar)
    return RabiOutcome(U, float(abs(U[0, 1]) ** 2), float(abs(U[2, 1]) ** 2))


def leakage_probability(pulse: RabiPulse, frame: str = PRINTED) -> float:
    return rabi_propagate(pulse, frame).p_leak


# ---------------------------------------------------------------------------
# noise-averaged failure


def gauss_hermite_average(f, rms: float, n: int = 21) -> float:
    """⟨f(x)⟩ for x ~ N(0, rms²) using ``n`` probabilists' Gauss-Hermite nodes."""
    z, w = hermegauss(n)
    w = w / w.sum()
    return float(sum(wk * f(rms * zk) for zk, wk in zip(z, w)))


def averaged_transfer_failure(dw_ds: float, omega_of, t: float, rms: float, n: int = 21,
                              check: int | None = 41, tol: float = 1e-4) -> float:
    """1 − ⟨P_{T₊→S}⟩ for a Gaussian deviation of one slow parameter.

    ``dw_ds`` is the linear shift of the transition frequency per unit of
    deviation and ``omega_of(x)`` the Rabi frequency at deviation ``x``.
    """
    if rms == 0:
        return 0.0

    def fail(x):
        return 1.0 - rabi_probability(dw_ds * x, omega_of(x), t)

    value = gauss_hermite_average(fail, rms, n)
    if check:
        ref = gauss_hermite_average(fail, rms, check)
        if abs(ref - value) > tol:
            raise QuadratureError(
                f"Gauss-Hermite average not converged: {n} nodes {value:.6g}, {check} nodes {ref:.6g}"
            )
    return value


def noise_sources(p: DeviceParams) -> dict:
    """rms of every slow parameter entering the pulse (µeV or T)."""
    eps_rms, _ = detuning_noise(p)
    b_of, b_gd = overhauser_rms_tesla(p)
    return {"eps": eps_rms, "eps_dd": eps_rms, "B_OF": b_of, "B_L": b_gd, "B_R": b_gd}


def _displaced(p: DeviceParams, pulse: RabiPulse, source: str, x: float) -> HermitianMatrix:
    eps = pulse.eps_star + (x if source == "eps" else 0.0)
    eps_dd = pulse.eps_dd + (x if source == "eps_dd" else 0.0)
    H = dd_full_h(p, eps, eps_dd)
    if source in ("B_OF", "B_L", "B_R") and x != 0:
        H = H + overhauser_h(p, H.basis, **{source: x})
    return H


def _levels(p: DeviceParams, pulse: RabiPulse, source: str, x: float):
    """(ω_ST₊, Ω) of the branches closest to the nominal T₊ and S states."""
    H = _displaced(p, pulse, source, x)
    w, v = np.linalg.eigh(H.matrix)
    it = int(np.argmax(np.abs(pulse.states[T_PLUS].conj() @ v)))
    ov = np.abs(pulse.states[SINGLET].conj() @ v)
    ov[it] = -1
    is_ = int(np.argmax(ov))
    d = np.diag(H.basis.eps_slope)
    lam = abs(v[:, is_].conj() @ d @ v[:, it])
    return (w[is_] - w[it]) / p.hbar, pulse.delta_eps * lam / p.hbar


@dataclass(frozen=True)
class RabiFailure:
    per_source: dict
    derivatives: dict

    @property
    def total(self) -> float:
        return float(sum(self.per_source.values()))


def rabi_failure_noise(p: DeviceParams, pulse: RabiPulse, rms: dict | None = None,
                       nodes: int = 21) -> RabiFailure:
    """Noise-averaged π-pulse failure, summed over independent slow sources.

    For each source the transition frequency shift is linearized with a
    centred finite difference (step 1% of the rms) while the Rabi frequency
    is re-evaluated at every displaced operating point. The pulse duration
    stays at its nominal value.
    """
    rms = noise_sources(p) if rms is None else rms
    per, der = {}, {}
    if not pulse.states:
        raise ValueError("pulse carries no reference states; build it with optimize_drive_point")
    for source, s in rms.items():
        if s == 0:
            per[source], der[source] = 0.0, 0.0
            continue
        h = 0.01 * s
        dw = (_levels(p, pulse, source, h)[0] - _levels(p, pulse, source, -h)[0]) / (2 * h)
        der[source] = dw
        per[source] = averaged_transfer_failure(
            dw, lambda x, src=source: _levels(p, pulse, src, x)[1], pulse.t_rabi, s, nodes
        )
    return RabiFailure(per, der)


__all__ = [
    "T_PLUS",
    "SINGLET",
    "T_ZERO",
    "PRINTED",
    "COROTATING",
    "QuadratureError",
    "RabiPulse",
    "transition_element",
    "transition_profile",
    "drive_amplitude_from_curve",
    "choose_drive_amplitude",
    "rabi_probability",
    "pulse_time_profile",
    "optimize_drive_point",
    "rwa_hamiltonian",
    "RabiOutcome",
    "propagate_constant",
    "rabi_propagate",
    "leakage_probability",
    "gauss_hermite_average",
    "averaged_transfer_failure",
    "noise_sources",
    "RabiFailure",
    "rabi_failure_noise",
]
