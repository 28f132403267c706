"""Diagonalization, continuous branch tracking and per-state observables."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import linear_sum_assignment

from .hamiltonians import (
    BRIGHT_Z,
    VERTICAL_X,
    Basis,
    HermitianMatrix,
    detuning_derivative,
    exciton_rotation,
    two_electron_h,
)
from .params import DeviceParams

DEGENERACY_TOL = 1e-9  # µeV
AMBIGUITY_TOL = 1e-6


class TrackingError(RuntimeError):
    """Branch continuation failed; usually the grid is too coarse."""


@dataclass(frozen=True)
class EigenSystem:
    values: np.ndarray
    vectors: np.ndarray  # columns are eigenvectors
    basis: Basis


def eigendecompose(H: HermitianMatrix, check: bool = True) -> EigenSystem:
    """Sorted eigenpairs of a Hermitian operator with residual checks."""
    m = H.matrix
    try:
        w, v = np.linalg.eigh(m)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(
            f"eigensolver did not converge for a {H.dim}x{H.dim} operator "
            f"(norm {np.linalg.norm(m):.3g}, finite={np.isfinite(m).all()})"
        ) from exc
    if check:
        scale = max(np.linalg.norm(m), 1.0)
        resid = np.linalg.norm(m @ v - v * w, axis=0)
        if resid.max() > 1e-10 * scale:
            raise np.linalg.LinAlgError(f"eigen residual {resid.max():.3g} exceeds bound")
        ortho = np.abs(v.conj().T @ v - np.eye(len(w))).max()
        if ortho > 1e-10:
            raise np.linalg.LinAlgError(f"eigenvectors not orthonormal ({ortho:.3g})")
    return EigenSystem(w, v, H.basis)


def fix_gauge(vectors: np.ndarray) -> np.ndarray:
    """Rotate each column so its largest-magnitude component is real and positive."""
    v = np.array(vectors, dtype=complex, copy=True)
    idx = np.argmax(np.abs(v), axis=0)
    lead = v[idx, np.arange(v.shape[1])]
    return v * (np.abs(lead) / lead)[None, :]


# ---------------------------------------------------------------------------
# observables


def _exciton_components(basis: Basis):
    """Yield (indices ordered by exciton index) for each spectator group."""
    for g in np.unique(basis.group[basis.excitonic]):
        sel = np.flatnonzero(basis.excitonic & (basis.group == g))
        order = np.argsort(basis.exciton[sel])
        yield sel[order]


def bright_projector(basis: Basis) -> np.ndarray:
    """Projector onto the z-quantized bright excitons, for every spectator state."""
    R = exciton_rotation()
    P = np.zeros((basis.dim, basis.dim))
    for idx in _exciton_components(basis):
        for j in BRIGHT_Z:
            b = np.zeros(basis.dim)
            b[idx] = R[j, :]
            P += np.outer(b, b)
    return P


def bright_content(v: np.ndarray, basis: Basis) -> np.ndarray:
    """Weight on the bright z excitons; ``v`` may hold states in columns.

    Amplitudes are on the x-quantized basis used by every Hamiltonian
    builder; the projector carries the rotation to the z basis.
    """
    P = bright_projector(basis)
    v = np.asarray(v)
    return np.real(np.sum(v.conj() * (P @ v), axis=0))


def charge_weight(v: np.ndarray, basis: Basis) -> np.ndarray:
    """Total weight on excitonic (exciton still in the OAQD) basis states."""
    return np.sum(np.abs(np.asarray(v)[basis.excitonic]) ** 2, axis=0)


def vertical_polarization(v: np.ndarray, basis: Basis, relative: bool = False) -> np.ndarray:
    """Weight on antiparallel x excitons.

    With ``relative=True`` the weight is divided by the total excitonic
    weight, i.e. it is the fraction of the exciton factor that a vertically
    polarized photon addresses (0 for states without excitonic weight).
    """
    v = np.asarray(v)
    mask = basis.excitonic & np.isin(basis.exciton, VERTICAL_X)
    vp = np.sum(np.abs(v[mask]) ** 2, axis=0)
    if not relative:
        return vp
    es = charge_weight(v, basis)
    return np.divide(vp, es, out=np.zeros_like(vp), where=es > 0)


def exchange_splitting(p: DeviceParams, eps_dd: float | None = None) -> float:
    """J = E_S − E_T0 of the two-electron double dot.

    E_S belongs to the singlet-sector eigenstate with the largest (1,1)
    singlet weight (↑↓−↓↑)/√2, so J follows the separated-electron singlet
    even where a doubly occupied singlet lies lower. E_T0 is the eigenvalue
    of the (1,1) triplet (↑↓+↓↑)/√2.
    """
    eps_dd = p.eps_dd if eps_dd is None else eps_dd
    block = two_electron_h(p, eps_dd)[:4, :4]
    w, v = np.linalg.eigh(block)
    t0 = np.array([0, 0, 1, 1]) / np.sqrt(2)
    s11 = np.array([0, 0, 1, -1]) / np.sqrt(2)
    it0 = int(np.argmax(np.abs(t0 @ v)))
    ov = np.abs(s11 @ v)
    ov[it0] = -1.0
    return float(w[int(np.argmax(ov))] - w[it0])


# ---------------------------------------------------------------------------
# branch tracking


@dataclass
class BranchTrace:
    """Eigen-branches followed continuously across a detuning grid.

    ``energies[i, b]`` and ``states[i, :, b]`` belong to branch ``b`` at
    ``grid[i]``. Branches are numbered by their energy order at the first
    grid point. ``names`` maps protocol roles (e.g. ``"psi1"``) to branch
    numbers once a protocol has identified them.
    """

    grid: np.ndarray
    energies: np.ndarray
    states: np.ndarray
    basis: Basis
    deriv: np.ndarray
    names: dict = field(default_factory=dict)

    @property
    def n_branches(self) -> int:
        return self.energies.shape[1]

    def branch(self, key) -> int:
        if isinstance(key, str):
            return self.names[key]
        return int(key)

    def node(self, eps: float, tol: float = 1e-9) -> int:
        """Index of the grid node at ``eps`` (must be on the grid)."""
        i = int(np.argmin(np.abs(self.grid - eps)))
        if abs(self.grid[i] - eps) > tol * max(1.0, abs(eps)):
            raise ValueError(f"detuning {eps!r} is not a node of the trace grid")
        return i

    def window(self, start: float, stop: float) -> np.ndarray:
        """Node indices with ``start <= eps <= stop`` (small tolerance)."""
        tol = 1e-9 * max(1.0, abs(start), abs(stop))
        return np.flatnonzero((self.grid >= start - tol) & (self.grid <= stop + tol))

    def state(self, key, eps: float) -> np.ndarray:
        return self.states[self.node(eps), :, self.branch(key)]

    def energy(self, key, eps: float) -> float:
        return float(self.energies[self.node(eps), self.branch(key)])

    @property
    def bc(self) -> np.ndarray:
        P = bright_projector(self.basis)
        s = self.states
        return np.real(np.einsum("nib,ij,njb->nb", s.conj(), P, s))

    @property
    def vp(self) -> np.ndarray:
        mask = self.basis.excitonic & np.isin(self.basis.exciton, VERTICAL_X)
        return np.sum(np.abs(self.states[:, mask, :]) ** 2, axis=1)

    @property
    def charge(self) -> np.ndarray:
        return np.sum(np.abs(self.states[:, self.basis.excitonic, :]) ** 2, axis=1)

    def weight_on(self, label: str) -> np.ndarray:
        """Weight of every branch on one basis state, shape (n_grid, n_branches)."""
        return np.abs(self.states[:, self.basis.index(label), :]) ** 2

    def dominant_labels(self, node: int = -1) -> list[str]:
        w = np.abs(self.states[node]) ** 2
        return [self.basis.labels[i] for i in np.argmax(w, axis=0)]

    def find_branch(self, vector: np.ndarray, node: int = -1) -> int:
        """Branch with the largest overlap with ``vector`` at one node."""
        ov = np.abs(np.asarray(vector).conj() @ self.states[node]) ** 2
        return int(np.argmax(ov))

    def sector_of(self, node: int) -> np.ndarray:
        """Dominant conserved sector of every branch at a node."""
        w = np.abs(self.states[node]) ** 2
        sectors = np.unique(self.basis.sector)
        weights = np.stack([w[self.basis.sector == s].sum(axis=0) for s in sectors])
        return sectors[np.argmax(weights, axis=0)]


def _align_degenerate(values, vectors, prev_vectors):
    """Rotate exactly degenerate clusters to best match the previous step."""
    n = len(values)
    vectors = vectors.copy()
    start = 0
    while start < n:
        stop = start + 1
        while stop < n and values[stop] - values[stop - 1] < DEGENERACY_TOL:
            stop += 1
        if stop - start > 1:
            W = vectors[:, start:stop]
            proj = W.conj().T @ prev_vectors  # cluster x previous branches
            weight = np.sum(np.abs(proj) ** 2, axis=0)
            chosen = np.argsort(weight)[::-1][: stop - start]
            M = proj[:, chosen]
            u, _, vh = np.linalg.svd(M)
            vectors[:, start:stop] = W @ (u @ vh)
        start = stop
    return vectors


def _match(prev_vecs, prev_E, new_vals, new_vecs):
    vecs = _align_degenerate(new_vals, new_vecs, prev_vecs)
    overlap = np.abs(prev_vecs.conj().T @ vecs) ** 2
    # energy proximity as a tiny tie-breaker
    cost = -overlap + 1e-12 * np.abs(prev_E[:, None] - new_vals[None, :])
    rows, cols = linear_sum_assignment(cost)
    perm = cols[np.argsort(rows)]
    assigned = overlap[np.arange(len(perm)), perm]
    srt = np.sort(overlap, axis=1)
    ambiguous = (srt[:, -2] > 0.25) & (srt[:, -1] - srt[:, -2] < AMBIGUITY_TOL)
    return perm, vecs, assigned, bool(ambiguous.any())


def track_branches(
    builder: Callable[[float], HermitianMatrix],
    grid,
    refine_below: float = 0.9,
    min_overlap: float = 0.5,
    max_depth: int = 2,
) -> BranchTrace:
    """Follow every eigen-branch of ``builder(eps)`` across ``grid``.

    Consecutive nodes are connected by maximum-overlap assignment of the
    eigenvectors. Where the worst assigned overlap drops below
    ``refine_below``, the interval is subdivided tenfold (up to
    ``max_depth`` times); the extra nodes are kept in the returned trace.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("grid must be a non-empty 1-D array")
    if grid.size > 1 and not np.all(np.diff(grid) > 0):
        raise ValueError("grid must be strictly increasing")

    H0 = builder(grid[0])
    basis = H0.basis
    es = eigendecompose(H0)
    out_eps = [grid[0]]
    out_E = [es.values]
    out_V = [fix_gauge(es.vectors)]

    def advance(e0, E0, V0, e1, depth):
        sys = eigendecompose(builder(e1))
        perm, vecs, assigned, ambiguous = _match(V0, E0, sys.values, sys.vectors)
        worst = assigned.min()
        if (worst < refine_below or ambiguous) and depth < max_depth:
            sub = np.linspace(e0, e1, 11)[1:]
            E, V, e = E0, V0, e0
            for s in sub:
                E, V = advance(e, E, V, s, depth + 1)
                e = s
            return E, V
        if ambiguous:
            raise TrackingError(
                f"ambiguous branch matching near eps={e1:.6g} µeV; use a finer grid"
            )
        if worst < min_overlap:
            raise TrackingError(
                f"adjacent overlap {worst:.3g} < {min_overlap} near eps={e1:.6g} µeV; "
                "use a finer grid"
            )
        E = sys.values[perm]
        V = fix_gauge(vecs[:, perm])
        out_eps.append(e1)
        out_E.append(E)
        out_V.append(V)
        return E, V

    E, V = out_E[0], out_V[0]
    for k in range(1, grid.size):
        E, V = advance(grid[k - 1], E, V, grid[k], 0)

    return BranchTrace(
        grid=np.asarray(out_eps),
        energies=np.asarray(out_E),
        states=np.asarray(out_V),
        basis=basis,
        deriv=detuning_derivative(basis),
    )


def trace_rows(trace: BranchTrace, branches=None):
    """Rows ``(eps, branch, label, energy, bc, vp, charge)`` for CSV export."""
    branches = range(trace.n_branches) if branches is None else [trace.branch(b) for b in branches]
    bc, vp, cw = trace.bc, trace.vp, trace.charge
    inverse = {v: k for k, v in trace.names.items()}
    labels = trace.dominant_labels(-1)
    for b in branches:
        name = inverse.get(b, labels[b])
        for i, eps in enumerate(trace.grid):
            yield (eps, b, name, trace.energies[i, b], bc[i, b], vp[i, b], cw[i, b])


TRACE_COLUMNS = ("eps_ueV", "branch", "label", "energy_ueV", "bc", "vp", "charge_weight")

__all__ = [
    "TrackingError",
    "EigenSystem",
    "BranchTrace",
    "eigendecompose",
    "fix_gauge",
    "bright_projector",
    "bright_content",
    "charge_weight",
    "vertical_polarization",
    "exchange_splitting",
    "track_branches",
    "trace_rows",
    "TRACE_COLUMNS",
]
