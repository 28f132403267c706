"""Adiabaticity bounds and constant-speed sweep schedules.

Sweep speeds are quoted in meV/ns and inverse speeds in ns/meV, the natural
scale of the transfer; everything else stays in µeV and ns. The
adiabaticity sum is taken with respect to the detuning,

    S_n(ε) = Σ_{m≠n} ħ |⟨m|∂H/∂ε|n⟩| / (E_m − E_n)²      [ns/µeV],

and the speed bound for a tolerated Landau-Zener probability ``P`` reads
``1/v = −(4 ln P / π) · S_n``. For a single two-level anticrossing this
reproduces the Landau-Zener speed exactly at the crossing centre.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .params import HBAR
from .spectra import BranchTrace


class SingularityError(ArithmeticError):
    """Degenerate pair with a nonzero detuning coupling."""


def _couplings(trace: BranchTrace, nodes: np.ndarray) -> np.ndarray:
    """|⟨m|∂H/∂ε|n⟩| for all branch pairs at the given nodes."""
    d = np.real(np.diag(trace.deriv))
    V = trace.states[nodes]
    return np.abs(np.einsum("kim,i,kin->kmn", V.conj(), d, V))


def adiabaticity_profile(trace: BranchTrace, branch, nodes=None, coupling_tol: float = 1e-12) -> np.ndarray:
    """Adiabaticity sum of one branch at every requested node (ns/µeV).

    Only partners in the same conserved sector contribute; decoupled
    sectors may cross exactly without affecting the bound.
    """
    n = trace.branch(branch)
    nodes = np.arange(trace.grid.size) if nodes is None else np.asarray(nodes)
    c = _couplings(trace, nodes)[:, :, n]  # (k, m)
    E = trace.energies[nodes]
    dE = E - E[:, [n]]
    sectors = np.stack([trace.sector_of(k) for k in nodes])
    same = sectors == sectors[:, [n]]
    same[:, n] = False
    relevant = same & (c > coupling_tol)
    bad = relevant & (np.abs(dE) < 1e-9)
    if bad.any():
        k, m = np.argwhere(bad)[0]
        raise SingularityError(
            f"branches {n} and {m} are degenerate at eps={trace.grid[nodes[k]]:.6g} µeV "
            f"with coupling {c[k, m]:.3g}"
        )
    terms = np.zeros_like(c)
    np.divide(HBAR * c, dE**2, out=terms, where=relevant)
    return terms.sum(axis=1)


def adiabaticity_sum(trace: BranchTrace, branch, eps: float) -> float:
    """Adiabaticity sum of one branch at one grid detuning (ns/µeV)."""
    return float(adiabaticity_profile(trace, branch, [trace.node(eps)])[0])


def inverse_speed_profile(trace: BranchTrace, branch, p_lz: float, nodes=None) -> np.ndarray:
    """Inverse of the maximal sweep speed along a branch, in ns/meV."""
    _check_plz(p_lz)
    return -4.0 * np.log(p_lz) / np.pi * adiabaticity_profile(trace, branch, nodes) * 1e3


def max_sweep_speed(trace: BranchTrace, branch, eps: float, p_lz: float) -> float:
    """Largest sweep speed (meV/ns) at one detuning compatible with ``p_lz``."""
    inv = float(inverse_speed_profile(trace, branch, p_lz, [trace.node(eps)])[0])
    return np.inf if inv == 0 else 1.0 / inv


def landau_zener(gap: float, v: float, hbar: float = HBAR) -> float:
    """Diabatic transition probability for an anticrossing of size ``gap``.

    ``gap`` in µeV and the sweep speed ``v`` in µeV/ns.
    """
    if gap == 0:
        return 1.0
    if v <= 0:
        return 0.0
    return float(np.exp(-2 * np.pi * (gap / 2) ** 2 / (hbar * v)))


def _check_plz(p_lz: float):
    if not 0 < p_lz < 1:
        raise ValueError(f"P_LZ must lie in (0, 1), got {p_lz!r}")


@dataclass(frozen=True)
class Segment:
    eps_start: float  # µeV
    eps_end: float  # µeV
    speed: float  # meV/ns

    @property
    def duration(self) -> float:
        if self.eps_start == self.eps_end:
            return 0.0
        return abs(self.eps_end - self.eps_start) * 1e-3 / self.speed


@dataclass(frozen=True)
class Event:
    kind: str  # "excitation" or "drive"
    eps: float
    duration: float = 0.0


@dataclass(frozen=True)
class SweepSchedule:
    """Piecewise-linear detuning program."""

    segments: tuple
    events: tuple = field(default=())

    def __post_init__(self):
        for a, b in zip(self.segments, self.segments[1:]):
            if a.eps_end != b.eps_start:
                raise ValueError("sweep segments must be contiguous")
        for s in self.segments:
            if not s.speed > 0:
                raise ValueError("sweep speeds must be positive")

    @property
    def transfer_time(self) -> float:
        """Total sweep time in ns, excluding holds and drive windows."""
        return float(sum(s.duration for s in self.segments))

    @property
    def durations(self) -> tuple:
        return tuple(s.duration for s in self.segments)

    @property
    def speed(self) -> float:
        return self.segments[0].speed


def plan_sweep(trace: BranchTrace, branches, window, p_lz: float, stops=(), events=()) -> SweepSchedule:
    """Constant-speed schedule across ``window = (eps_start, eps_end)``.

    The speed is the minimum of the bound over every grid node inside the
    window and every listed branch. ``stops`` split the window into
    segments that share the speed (e.g. at a drive point).
    """
    _check_plz(p_lz)
    start, end = map(float, window)
    if end < start:
        raise ValueError("sweep window must satisfy start <= end")
    nodes = trace.window(start, end)
    if nodes.size == 0:
        raise ValueError(f"no grid nodes inside the window [{start}, {end}]")
    if start == end:
        return SweepSchedule((Segment(start, end, np.inf),), tuple(events))
    inv = max(inverse_speed_profile(trace, b, p_lz, nodes).max() for b in branches)
    speed = np.inf if inv == 0 else 1.0 / inv
    cuts = [start] + sorted(float(s) for s in stops if start < s < end) + [end]
    segs = tuple(Segment(a, b, speed) for a, b in zip(cuts, cuts[1:]))
    return SweepSchedule(segs, tuple(events))


__all__ = [
    "SingularityError",
    "adiabaticity_profile",
    "adiabaticity_sum",
    "inverse_speed_profile",
    "max_sweep_speed",
    "landau_zener",
    "Segment",
    "Event",
    "SweepSchedule",
    "plan_sweep",
]
