"""Matrix builders on explicitly enumerated, labeled bases.

Two systems are covered.

Single spin (8 states): an exciton in the optically active dot (OAQD)
tunnel-coupled to an empty gate-defined dot (GDQD). The basis is::

    |◦↓⇑⟩ |◦↑⇓⟩ |◦↑⇑⟩ |◦↓⇓⟩    exciton in the OAQD (x quantization)
    |↓◦⇑⟩ |↑◦⇓⟩ |↑◦⇑⟩ |↓◦⇓⟩    electron moved to the GDQD, hole stays

Double dot (20 states): one resident electron in the left GDQD dot plus a
photo-excited exciton. Excitonic states are ``{|↑◦⟩, |↓◦⟩} ⊗ exciton`` (8)
and charge-separated states are two-electron double-dot states
``{S(0,2), S(2,0), ↑↓, ↓↑, ↑↑, ↓↓} ⊗ {|◦⇑⟩, |◦⇓⟩}`` (12), left electron
written first.

Spins are quantized along the in-plane field (x) unless noted. The x states
relate to z states by ``|↑⟩x = (|↑⟩z + |↓⟩z)/√2`` and
``|↓⟩x = (|↑⟩z − |↓⟩z)/√2``, for the electron and for the heavy-hole
pseudo-spin alike.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .params import DeviceParams

UP, DOWN = "↑", "↓"
HUP, HDOWN = "⇑", "⇓"
EMPTY = "◦"

# exciton ordering shared by the z and x bases: (electron, hole)
EXCITON_SPINS = ((DOWN, HUP), (UP, HDOWN), (UP, HUP), (DOWN, HDOWN))
BRIGHT_Z = (0, 1)  # |↓⇑⟩z and |↑⇓⟩z are optically bright
VERTICAL_X = (0, 1)  # antiparallel x excitons couple to vertical polarization
DD_SPINS = ("S02", "S20", UP + DOWN, DOWN + UP, UP + UP, DOWN + DOWN)

_SPIN_VALUE = {UP: 0.5, DOWN: -0.5, HUP: 0.5, HDOWN: -0.5}


@dataclass(frozen=True)
class Basis:
    """Ordered basis with the per-state quantum numbers the observables need.

    All array fields have one entry per basis state. Spin projections are
    along x with values ±1/2 (0 where the particle is absent or the two
    electrons form a singlet).
    """

    kind: str  # "single-spin" or "double-dot"
    labels: tuple
    excitonic: np.ndarray  # bool, exciton present in the OAQD
    exciton: np.ndarray  # exciton index into EXCITON_SPINS, -1 if none
    group: np.ndarray  # index of the spectator factor (resident electron)
    eps_slope: np.ndarray  # diagonal of dH/d(eps)
    s_oaqd: np.ndarray  # electron S_x inside the exciton
    j_hole: np.ndarray  # hole J_x
    s_gdqd: np.ndarray  # electron S_x in the single gate dot
    s_left: np.ndarray  # left double-dot electron S_x
    s_right: np.ndarray  # right double-dot electron S_x
    s20: np.ndarray  # bool, S(2,0) component
    s02: np.ndarray  # bool, S(0,2) component
    sector: np.ndarray  # conserved parity of spin-down count (subspace id)

    @property
    def dim(self) -> int:
        return len(self.labels)

    def index(self, label: str) -> int:
        return self.labels.index(label)

    def subset(self, idx) -> "Basis":
        idx = np.asarray(idx)
        kw = {}
        for name in self.__dataclass_fields__:
            value = getattr(self, name)
            if isinstance(value, np.ndarray):
                kw[name] = value[idx]
        return Basis(kind=self.kind, labels=tuple(self.labels[i] for i in idx), **kw)


@dataclass(frozen=True)
class HermitianMatrix:
    """Complex Hermitian operator together with its basis."""

    matrix: np.ndarray
    basis: Basis

    def __post_init__(self):
        m = self.matrix
        if m.shape != (self.basis.dim, self.basis.dim):
            raise ValueError(f"matrix shape {m.shape} does not match basis size {self.basis.dim}")

    @property
    def dim(self) -> int:
        return self.basis.dim

    @property
    def labels(self) -> tuple:
        return self.basis.labels

    def is_hermitian(self) -> bool:
        """Exact entry-level conjugate symmetry."""
        return bool(np.array_equal(self.matrix, self.matrix.conj().T))

    def block(self, idx) -> "HermitianMatrix":
        idx = np.asarray(idx)
        return HermitianMatrix(self.matrix[np.ix_(idx, idx)], self.basis.subset(idx))

    def __add__(self, other: "HermitianMatrix") -> "HermitianMatrix":
        if other.basis.labels != self.basis.labels:
            raise ValueError("cannot add operators on different bases")
        return HermitianMatrix(self.matrix + other.matrix, self.basis)

    def to_text(self) -> str:
        """Row-major plain-text dump, ``re+im i`` pairs, labels as header comments."""
        lines = [f"# dim = {self.dim}"]
        lines += [f"# {i}: {lab}" for i, lab in enumerate(self.labels)]
        for row in self.matrix:
            lines.append(" ".join(f"{z.real:.17g}{z.imag:+.17g}i" for z in np.asarray(row, complex)))
        return "\n".join(lines) + "\n"


def _herm(m: np.ndarray) -> np.ndarray:
    """Return ``(m + m†)/2`` as a complex array.

    Floating-point addition is commutative, so entry (i, j) is the exact
    conjugate of entry (j, i) and the diagonal is exactly real.
    """
    m = np.asarray(m, dtype=complex)
    return (m + m.conj().T) / 2


# ---------------------------------------------------------------------------
# bases


def _parity(*spins) -> int:
    return sum(s in (DOWN, HDOWN) for s in spins) % 2


def _make_basis(kind, rows):
    cols = list(zip(*rows))
    (labels, excitonic, exciton, group, slope, s_oaqd, j_hole,
     s_gdqd, s_left, s_right, s20, s02, sector) = cols
    arr = np.asarray
    return Basis(
        kind=kind,
        labels=tuple(labels),
        excitonic=arr(excitonic, bool),
        exciton=arr(exciton, int),
        group=arr(group, int),
        eps_slope=arr(slope, float),
        s_oaqd=arr(s_oaqd, float),
        j_hole=arr(j_hole, float),
        s_gdqd=arr(s_gdqd, float),
        s_left=arr(s_left, float),
        s_right=arr(s_right, float),
        s20=arr(s20, bool),
        s02=arr(s02, bool),
        sector=arr(sector, int),
    )


@lru_cache(maxsize=None)
def single_spin_basis() -> Basis:
    rows = []
    for k, (e, h) in enumerate(EXCITON_SPINS):
        rows.append((f"|{EMPTY}{e}{h}⟩", True, k, 0, 0.5, _SPIN_VALUE[e], _SPIN_VALUE[h],
                     0.0, 0.0, 0.0, False, False, _parity(e, h)))
    for e, h in EXCITON_SPINS:
        rows.append((f"|{e}{EMPTY}{h}⟩", False, -1, 0, -0.5, 0.0, _SPIN_VALUE[h],
                     _SPIN_VALUE[e], 0.0, 0.0, False, False, _parity(e, h)))
    return _make_basis("single-spin", rows)


def _dd_label(d: str) -> str:
    return {"S02": "|S(0,2)⟩", "S20": "|S(2,0)⟩"}.get(d, f"|{d}⟩")


@lru_cache(maxsize=None)
def double_dot_basis() -> Basis:
    rows = []
    for gi, l in enumerate((UP, DOWN)):
        for k, (e, h) in enumerate(EXCITON_SPINS):
            rows.append((f"|{l}{EMPTY}⟩|{e}{h}⟩", True, k, gi, 1.0, _SPIN_VALUE[e],
                         _SPIN_VALUE[h], 0.0, _SPIN_VALUE[l], 0.0, False, False,
                         _parity(l, e, h)))
    for d in DD_SPINS:
        singlet = d in ("S02", "S20")
        for h in (HUP, HDOWN):
            sl = 0.0 if singlet else _SPIN_VALUE[d[0]]
            sr = 0.0 if singlet else _SPIN_VALUE[d[1]]
            par = _parity(h, DOWN) if singlet else _parity(d[0], d[1], h)
            rows.append((f"{_dd_label(d)}|{EMPTY}{h}⟩", False, -1, 0, 0.0, 0.0,
                         _SPIN_VALUE[h], 0.0, sl, sr, d == "S20", d == "S02", par))
    return _make_basis("double-dot", rows)


@lru_cache(maxsize=None)
def exciton_basis(quantization: str = "x") -> Basis:
    rows = []
    for k, (e, h) in enumerate(EXCITON_SPINS):
        rows.append((f"|{e}{h}⟩{quantization}", True, k, 0, 0.0, _SPIN_VALUE[e],
                     _SPIN_VALUE[h], 0.0, 0.0, 0.0, False, False, _parity(e, h)))
    return _make_basis("exciton", rows)


def plain_basis(labels, kind: str = "generic") -> Basis:
    """Basis without exciton or spin structure (e.g. for effective few-level models)."""
    rows = [(lab, False, -1, 0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, False, False, 0) for lab in labels]
    return _make_basis(kind, rows)


# Subspace listings of the double-dot system (odd / even
# spin-down parity). Order follows the coupling ladder: ES partners sit next
# to the SS states they tunnel into.
SUBSPACE_LABELS = {
    1: (
        "|↓◦⟩|↓⇓⟩", "|↓↓⟩|◦⇓⟩", "|↓◦⟩|↑⇑⟩", "|↓↑⟩|◦⇑⟩", "|↑◦⟩|↓⇑⟩",
        "|↑↓⟩|◦⇑⟩", "|↑◦⟩|↑⇓⟩", "|↑↑⟩|◦⇓⟩", "|S(2,0)⟩|◦⇑⟩", "|S(0,2)⟩|◦⇑⟩",
    ),
    2: (
        "|↓◦⟩|↓⇑⟩", "|↓↓⟩|◦⇑⟩", "|↓◦⟩|↑⇓⟩", "|↓↑⟩|◦⇓⟩", "|↑◦⟩|↓⇓⟩",
        "|↑↓⟩|◦⇓⟩", "|↑◦⟩|↑⇑⟩", "|↑↑⟩|◦⇑⟩", "|S(2,0)⟩|◦⇓⟩", "|S(0,2)⟩|◦⇓⟩",
    ),
}


def subspace_indices(which: int) -> np.ndarray:
    basis = double_dot_basis()
    try:
        labels = SUBSPACE_LABELS[which]
    except KeyError:
        raise ValueError(f"subspace must be 1 or 2, got {which!r}") from None
    return np.array([basis.index(lab) for lab in labels])


def single_spin_sectors() -> list[np.ndarray]:
    """Index sets of the two decoupled spin sectors (antiparallel, parallel)."""
    sec = single_spin_basis().sector
    return [np.flatnonzero(sec == 1), np.flatnonzero(sec == 0)]


def double_dot_sectors() -> list[np.ndarray]:
    return [subspace_indices(1), subspace_indices(2)]


# ---------------------------------------------------------------------------
# exciton blocks


@lru_cache(maxsize=None)
def _exciton_rotation_cached() -> np.ndarray:
    up_x = np.array([1.0, 1.0]) / np.sqrt(2.0)  # components on (|↑⟩z, |↓⟩z)
    dn_x = np.array([1.0, -1.0]) / np.sqrt(2.0)
    spin = {UP: up_x, DOWN: dn_x, HUP: up_x, HDOWN: dn_x}
    unit = {UP: np.array([1.0, 0.0]), DOWN: np.array([0.0, 1.0])}
    unit[HUP], unit[HDOWN] = unit[UP], unit[DOWN]
    rot = np.empty((4, 4))
    for j, (ez, hz) in enumerate(EXCITON_SPINS):
        zvec = np.kron(unit[ez], unit[hz])
        for k, (ex, hx) in enumerate(EXCITON_SPINS):
            rot[j, k] = zvec @ np.kron(spin[ex], spin[hx])
    rot.setflags(write=False)
    return rot


def exciton_rotation() -> np.ndarray:
    """Orthogonal matrix ``R`` with ``R[j, k] = ⟨j_z | k_x⟩`` on the exciton basis."""
    return _exciton_rotation_cached()


def exciton_h0_z(p: DeviceParams) -> HermitianMatrix:
    """Electron-hole exchange on the z basis {↓⇑, ↑⇓, ↑⇑, ↓⇓}."""
    d0, d1, d2 = p.delta0, p.delta1, p.delta2
    m = 0.5 * np.array(
        [[d0, d1, 0, 0], [d1, d0, 0, 0], [0, 0, -d0, d2], [0, 0, d2, -d0]], dtype=float
    )
    return HermitianMatrix(_herm(m), exciton_basis("z"))


def exciton_h0_x(p: DeviceParams) -> HermitianMatrix:
    """Electron-hole exchange on the x basis {↓⇑, ↑⇓, ↑⇑, ↓⇓}."""
    d0, d1, d2 = p.delta0, p.delta1, p.delta2
    a = -d1 - d2
    b = -2 * d0 + d1 - d2
    c = d1 + d2
    d = -2 * d0 - d1 + d2
    m = 0.25 * np.array([[a, b, 0, 0], [b, a, 0, 0], [0, 0, c, d], [0, 0, d, c]], dtype=float)
    return HermitianMatrix(_herm(m), exciton_basis("x"))


def exciton_zeeman_x(p: DeviceParams, g_e: float | None = None, B_extra: float = 0.0) -> HermitianMatrix:
    """Zeeman term of an electron-hole pair on the x basis.

    ``g_e`` selects the electron g-factor (OAQD by default, pass
    ``p.g_e_tilde`` for an electron in the gate-defined dot); the hole always
    keeps ``g_h``.
    """
    ge = p.g_e if g_e is None else g_e
    gh = p.g_h
    scale = p.mu_B * (p.B + B_extra) / 2
    diag = scale * np.array([-ge - gh, ge + gh, ge - gh, -ge + gh])
    return HermitianMatrix(_herm(np.diag(diag)), exciton_basis("x"))


# ---------------------------------------------------------------------------
# single-spin system


def single_electron_h(p: DeviceParams, eps: float) -> HermitianMatrix:
    """8×8 Hamiltonian of the exciton coupled to an empty gate-defined dot."""
    one = np.eye(4)
    es = exciton_h0_x(p).matrix + exciton_zeeman_x(p).matrix + 0.5 * eps * one
    ss = exciton_zeeman_x(p, g_e=p.g_e_tilde).matrix - 0.5 * eps * one
    m = np.block([[es, p.t_c * one], [p.t_c * one, ss]])
    return HermitianMatrix(_herm(m), single_spin_basis())


# ---------------------------------------------------------------------------
# double-dot system


def dd_h_es(p: DeviceParams) -> HermitianMatrix:
    """Excitonic block: resident left electron ⊗ exciton (detuning excluded)."""
    h1e = p.mu_B * p.B / 2 * np.diag([p.g_e_tilde, -p.g_e_tilde])
    hex_ = exciton_h0_x(p).matrix + exciton_zeeman_x(p).matrix
    m = np.kron(h1e, np.eye(4)) + np.kron(np.eye(2), hex_)
    basis = double_dot_basis().subset(np.arange(8))
    return HermitianMatrix(_herm(m), basis)


def two_electron_h(p: DeviceParams, eps_dd: float) -> np.ndarray:
    """Hund-Mulliken two-electron block on {S(0,2), S(2,0), ↑↓, ↓↑, ↑↑, ↓↓}."""
    t = p.t_dd / 2
    vm, vp = p.V_minus, p.V_plus
    z = p.g_e_tilde * p.mu_B * p.B
    s02, s20 = -eps_dd + p.U, eps_dd + p.U
    if p.swap_dd_singlets:
        s02, s20 = s20, s02
    return np.array(
        [
            [s02, 0, -t, t, 0, 0],
            [0, s20, -t, t, 0, 0],
            [-t, -t, (vm + vp) / 2, (vm - vp) / 2, 0, 0],
            [t, t, (vm - vp) / 2, (vm + vp) / 2, 0, 0],
            [0, 0, 0, 0, vm + z, 0],
            [0, 0, 0, 0, 0, vm - z],
        ],
        dtype=float,
    )


def dd_h_ss(p: DeviceParams, eps_dd: float) -> HermitianMatrix:
    """Charge-separated block: two-electron states ⊗ remaining hole."""
    h1h = p.mu_B * p.B / 2 * np.diag([-p.g_h, p.g_h])
    m = np.kron(two_electron_h(p, eps_dd), np.eye(2)) + np.kron(np.eye(6), h1h)
    basis = double_dot_basis().subset(np.arange(8, 20))
    return HermitianMatrix(_herm(m), basis)


def _tunnel_target(left: str, electron: str, hole: str) -> list[tuple[str, str, float]]:
    """SS components reached when the exciton electron hops into the right dot.

    The hop is spin conserving and lands the electron next to the resident
    left electron, giving ``|left electron⟩`` ⊗ ``|◦ hole⟩``. Doubly occupied
    singlets are not reached by a single hop. Alternatives (for instance an
    S(0,2) admixture) only need this function to return extra entries.
    """
    return [(left + electron, hole, 1.0)]


def tunnel_block(p: DeviceParams) -> np.ndarray:
    """Real 8×12 coupling from excitonic to charge-separated states."""
    basis = double_dot_basis()
    T = np.zeros((8, 12))
    ss_index = {}
    for j, d in enumerate(DD_SPINS):
        for jh, h in enumerate((HUP, HDOWN)):
            ss_index[(d, h)] = 2 * j + jh
    for i in range(8):
        left = (UP, DOWN)[basis.group[i]]
        e, h = EXCITON_SPINS[basis.exciton[i]]
        for d, hh, amp in _tunnel_target(left, e, h):
            T[i, ss_index[(d, hh)]] += amp * p.t_c
    return T


def dd_full_h(p: DeviceParams, eps: float, eps_dd: float | None = None) -> HermitianMatrix:
    """20×20 Hamiltonian; ``eps_dd`` defaults to ``p.eps_dd``."""
    eps_dd = p.eps_dd if eps_dd is None else eps_dd
    es = dd_h_es(p).matrix + eps * np.eye(8)
    ss = dd_h_ss(p, eps_dd).matrix
    T = tunnel_block(p)
    m = np.block([[es, T], [T.T, ss]])
    return HermitianMatrix(_herm(m), double_dot_basis())


def subspace_h(p: DeviceParams, eps: float, eps_dd: float | None = None, which: int = 1) -> HermitianMatrix:
    """Restriction of :func:`dd_full_h` to one of the two decoupled subspaces."""
    return dd_full_h(p, eps, eps_dd).block(subspace_indices(which))


# ---------------------------------------------------------------------------
# detuning derivatives and hyperfine terms


def detuning_derivative(basis: Basis) -> np.ndarray:
    """dH/dε as a dense matrix (diagonal: ±1/2 single spin, ES projector double dot)."""
    return np.diag(basis.eps_slope).astype(complex)


def eps_dd_derivative(basis: Basis, p: DeviceParams | None = None) -> np.ndarray:
    """dH/dε_DD: +1 on S(2,0) components, −1 on S(0,2) components."""
    sign = -1.0 if (p is not None and p.swap_dd_singlets) else 1.0
    d = sign * (basis.s20.astype(float) - basis.s02.astype(float))
    return np.diag(d).astype(complex)


def overhauser_sources(basis: Basis) -> tuple[str, ...]:
    if basis.kind == "double-dot":
        return ("B_OF", "B_L", "B_R")
    return ("B_OF", "B_OF_tilde")


def overhauser_derivative(p: DeviceParams, basis: Basis, source: str) -> np.ndarray:
    """Diagonal of dH/dB_s in µeV/T for one Overhauser source."""
    mu = p.mu_B
    if source == "B_OF":
        return mu * (p.g_e * basis.s_oaqd + p.eta * p.g_h * basis.j_hole)
    if source == "B_OF_tilde" and basis.kind != "double-dot":
        return mu * p.g_e_tilde * basis.s_gdqd
    if source == "B_L" and basis.kind == "double-dot":
        return mu * p.g_e_tilde * basis.s_left
    if source == "B_R" and basis.kind == "double-dot":
        return mu * p.g_e_tilde * basis.s_right
    raise ValueError(f"unknown Overhauser source {source!r} for a {basis.kind} basis")


def overhauser_h(p: DeviceParams, basis: Basis, **deviations: float) -> HermitianMatrix:
    """Hyperfine Hamiltonian for field deviations given in tesla.

    Keywords are the source names of :func:`overhauser_sources`, e.g.
    ``overhauser_h(p, single_spin_basis(), B_OF=1e-3)`` or
    ``overhauser_h(p, double_dot_basis(), B_L=2e-3, B_R=-1e-3)``. Omitted
    sources are zero. The result is diagonal in the x basis.
    """
    diag = np.zeros(basis.dim)
    for source, value in deviations.items():
        if source not in overhauser_sources(basis):
            raise ValueError(f"unknown Overhauser source {source!r} for a {basis.kind} basis")
        if value:
            diag = diag + value * overhauser_derivative(p, basis, source)
    return HermitianMatrix(_herm(np.diag(diag)), basis)


__all__ = [
    "Basis",
    "HermitianMatrix",
    "EXCITON_SPINS",
    "SUBSPACE_LABELS",
    "single_spin_basis",
    "double_dot_basis",
    "exciton_basis",
    "plain_basis",
    "subspace_indices",
    "single_spin_sectors",
    "double_dot_sectors",
    "exciton_rotation",
    "exciton_h0_z",
    "exciton_h0_x",
    "exciton_zeeman_x",
    "single_electron_h",
    "dd_h_es",
    "two_electron_h",
    "dd_h_ss",
    "tunnel_block",
    "dd_full_h",
    "subspace_h",
    "detuning_derivative",
    "eps_dd_derivative",
    "overhauser_sources",
    "overhauser_derivative",
    "overhauser_h",
]
