"""Model builders: spin matrices, Weyl-basis decomposition, Hamiltonians.

Three families are provided, all with nearest-neighbor couplings:

* spin-S Ising, ``J * Sx.Sx`` bonds with transverse/longitudinal fields,
  assembled by decomposing the spin matrices into clock/shift strings;
* the d-state Potts chain, whose bond and field terms are single strings;
* the alternating-bond chain with ``X(dag) X`` and ``Z(dag) Z`` bonds
  ("xz chain" below), which exhibits dynamically closed operator subspaces.

Builders return :class:`~quditops.opvec.TermList` values; the Hermiticity of
each list is checked at construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .lattice import LatticeSpec
from .opvec import OperatorVector, TermList
from .weyl import PhasedString, WeylString, adjoint, clock_shift


@dataclass(frozen=True)
class SpinValue:
    """A spin quantum number S = twoS/2, with d = 2S+1 local states."""

    twoS: int

    def __post_init__(self):
        if self.twoS < 1:
            raise ValueError(f"spin must be positive, got twoS={self.twoS}")

    @classmethod
    def parse(cls, text) -> "SpinValue":
        """Accepts '1/2', '1', '1.5', a float, or an existing SpinValue."""
        if isinstance(text, SpinValue):
            return text
        frac = Fraction(str(text))
        two = frac * 2
        if two.denominator != 1:
            raise ValueError(f"spin must be a multiple of 1/2, got {text!r}")
        return cls(int(two))

    @property
    def S(self) -> float:
        return self.twoS / 2.0

    @property
    def d(self) -> int:
        return self.twoS + 1

    def __str__(self):
        return str(self.twoS // 2) if self.twoS % 2 == 0 else f"{self.twoS}/2"


def spin_matrices(spin: SpinValue) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(Sx, Sy, Sz) in the basis |m=S>, |m=S-1>, ..., |m=-S>."""
    spin = SpinValue.parse(spin)
    S = spin.S
    m = S - np.arange(spin.d)
    Sz = np.diag(m).astype(complex)
    # <m+1|S+|m> = sqrt(S(S+1) - m(m+1)); index i holds m = S - i
    raise_elems = np.sqrt(S * (S + 1) - m[1:] * (m[1:] + 1))
    Sp = np.zeros((spin.d, spin.d), dtype=complex)
    Sp[np.arange(spin.d - 1), np.arange(1, spin.d)] = raise_elems
    Sm = Sp.conj().T
    Sx = (Sp + Sm) / 2
    Sy = (Sp - Sm) / 2j
    return Sx, Sy, Sz


def decompose_local(M: np.ndarray) -> dict[tuple[int, int], complex]:
    """Weyl coefficients of a d x d matrix: c_ab = tr((X^a Z^b)^dag M)/d.

    Strings are orthonormal under the normalized trace, so the map is an
    isometry: sum |c_ab|^2 = tr(M^dag M)/d.  Coefficients below
    1e-12 * max|M| are dropped.
    """
    M = np.asarray(M, dtype=complex)
    d = M.shape[0]
    if M.shape != (d, d):
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    X, Z = clock_shift(d)
    cutoff = 1e-12 * max(np.abs(M).max(), 1e-300)
    out: dict[tuple[int, int], complex] = {}
    Xa = np.eye(d, dtype=complex)
    for a in range(d):
        Pab = Xa.copy()
        for b in range(d):
            c = np.trace(Pab.conj().T @ M) / d
            if abs(c) > cutoff:
                out[(a, b)] = complex(c)
            Pab = Pab @ Z
        Xa = X @ Xa
    return out


@dataclass(frozen=True)
class ModelSpec:
    """Declarative model description.

    kind 'ising': needs spin, J, hx, hz; d is derived (2S+1).
    kind 'potts': needs d, J, h; 1D lattices only.
    kind 'xz_chain': needs d, jx, jy (per-bond coupling cycles) and a 1D
    lattice; ``first_bond`` selects which sublattice carries the X-type
    bonds; ``hermitian_closure`` adds the adjoint of every term.
    """

    kind: str
    lattice: LatticeSpec
    spin: SpinValue | None = None
    d: int | None = None
    J: float = 1.0
    hx: float = 0.0
    hz: float = 0.0
    h: float = 0.0
    jx: tuple = (1.0,)
    jy: tuple = (1.0,)
    first_bond: str = "x"
    hermitian_closure: bool = True

    def __post_init__(self):
        if self.kind not in ("ising", "potts", "xz_chain"):
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.kind == "ising":
            if self.spin is None:
                raise ValueError("ising model needs a spin value")
            object.__setattr__(self, "spin", SpinValue.parse(self.spin))
            object.__setattr__(self, "d", self.spin.d)
        else:
            if self.d is None or self.d < 2:
                raise ValueError(f"{self.kind} needs qudit dimension d >= 2")
            if self.lattice.dimension != 1:
                raise ValueError(f"{self.kind} is one-dimensional")
        if self.kind == "xz_chain":
            if self.first_bond not in ("x", "z"):
                raise ValueError("first_bond must be 'x' or 'z'")
            if not self.jx or not self.jy:
                raise ValueError("coupling cycles must be nonempty")
            if self.lattice.kind == "ring" and self.lattice.size % 2:
                raise ValueError("alternating bonds need an even ring")
            if self.lattice.translation_invariant and self.lattice.cell != 2:
                raise ValueError("thermodynamic xz_chain needs cell=2")


def _bonds(lattice: LatticeSpec) -> list[tuple[tuple, tuple]]:
    """Nearest-neighbor bonds, one per unordered pair (no double counting)."""
    if lattice.translation_invariant:
        if lattice.dimension == 1:
            if lattice.cell == 1:
                return [((0,), (1,))]
            return [((i,), (i + 1,)) for i in range(lattice.cell)]
        return [((0, 0), (1, 0)), ((0, 0), (0, 1))]
    seen = set()
    out = []
    for site in lattice.sites():
        if lattice.dimension == 1:
            if lattice.kind == "chain" and site[0] == lattice.size - 1:
                neighbors = []
            else:
                neighbors = [lattice.wrap((site[0] + 1,))]
        else:
            neighbors = [
                lattice.wrap((site[0] + 1, site[1])),
                lattice.wrap((site[0], site[1] + 1)),
            ]
        for nb in neighbors:
            pair = frozenset((site, nb))
            if len(pair) == 2 and pair not in seen:
                seen.add(pair)
                out.append((site, nb))
    return out


def _field_sites(lattice: LatticeSpec) -> list[tuple]:
    if lattice.translation_invariant:
        if lattice.dimension == 1:
            return [(i,) for i in range(lattice.cell)]
        return [(0, 0)]
    return list(lattice.sites())


def _ising_terms(spec: ModelSpec) -> list[PhasedString]:
    d = spec.d
    Sx, _, Sz = spin_matrices(spec.spin)
    cx = decompose_local(Sx)
    cz = decompose_local(Sz)
    terms = []
    for s1, s2 in _bonds(spec.lattice):
        for (a1, b1), c1 in cx.items():
            for (a2, b2), c2 in cx.items():
                terms.append(
                    PhasedString(
                        spec.J * c1 * c2,
                        WeylString(d, [(s1, (a1, b1)), (s2, (a2, b2))]),
                    )
                )
    for site in _field_sites(spec.lattice):
        for coupling, comps in ((spec.hx, cx), (spec.hz, cz)):
            if coupling == 0.0:
                continue
            for (a, b), c in comps.items():
                terms.append(PhasedString(coupling * c, WeylString(d, [(site, (a, b))])))
    return terms


def _potts_terms(spec: ModelSpec) -> list[PhasedString]:
    d = spec.d
    terms = []
    for s1, s2 in _bonds(spec.lattice):
        for k in range(1, d):
            terms.append(
                PhasedString(spec.J, WeylString(d, [(s1, (0, k)), (s2, (0, d - k))]))
            )
    for site in _field_sites(spec.lattice):
        terms.append(PhasedString(spec.h, WeylString(d, [(site, (1, 0))])))
        terms.append(PhasedString(spec.h, WeylString(d, [(site, (d - 1, 0))])))
    return terms


def _xz_chain_terms(spec: ModelSpec) -> list[PhasedString]:
    d = spec.d
    lat = spec.lattice
    if lat.translation_invariant:
        bonds = [((0,), (1,)), ((1,), (2,))]
    elif lat.kind == "ring":
        # no pair dedupe: on a two-site ring the X and Z bonds share their
        # endpoints but are distinct terms
        bonds = [((i,), ((i + 1) % lat.size,)) for i in range(lat.size)]
    else:
        bonds = _bonds(lat)
    terms = []
    nx = nz = 0
    for s1, s2 in bonds:
        # bond parity by left endpoint; first_bond picks the even sublattice
        x_type = (s1[0] % 2 == 0) == (spec.first_bond == "x")
        if x_type:
            coupling = complex(spec.jx[nx % len(spec.jx)])
            nx += 1
            string = WeylString(d, [(s1, (d - 1, 0)), (s2, (1, 0))])
        else:
            coupling = complex(spec.jy[nz % len(spec.jy)])
            nz += 1
            string = WeylString(d, [(s1, (0, d - 1)), (s2, (0, 1))])
        terms.append(PhasedString(coupling, string))
    if spec.hermitian_closure:
        for coeff, string in list(terms):
            ph, sadj = adjoint(string)
            terms.append(PhasedString(np.conj(coeff) * ph, sadj))
    return terms


def build_hamiltonian(spec: ModelSpec) -> TermList:
    """Assemble the model as a TermList (one unit cell in thermodynamic
    mode).  Raises if a model that should be Hermitian fails the check."""
    if spec.kind == "ising":
        terms = _ising_terms(spec)
    elif spec.kind == "potts":
        terms = _potts_terms(spec)
    else:
        terms = _xz_chain_terms(spec)
    tl = TermList(spec.d, spec.lattice, terms)
    expect_hermitian = spec.kind != "xz_chain" or spec.hermitian_closure
    if expect_hermitian and not tl.hermitian:
        raise AssertionError(f"{spec.kind} term list failed the Hermiticity check")
    return tl


def build_total_magnetization(spin: SpinValue, lattice: LatticeSpec) -> OperatorVector:
    """Sum of Sz over all sites; one anchored cell in thermodynamic mode.

    Not normalized: Lanczos normalizes its own start vector.
    """
    spin = SpinValue.parse(spin)
    _, _, Sz = spin_matrices(spin)
    comps = decompose_local(Sz)
    items = []
    for site in _field_sites(lattice):
        for (a, b), c in comps.items():
            items.append((WeylString(spin.d, [(site, (a, b))]), c))
    return OperatorVector.from_items(spin.d, lattice, items)


def coupling_convention(spin: SpinValue) -> float:
    """The spin-scan bond normalization J = 1/sqrt(S(S+1))."""
    spin = SpinValue.parse(spin)
    return 1.0 / np.sqrt(spin.S * (spin.S + 1))
