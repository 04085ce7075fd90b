"""Matrix-based reference calculations on small finite systems.

Everything here works with explicit (sparse) matrices assembled by Kronecker
placement, never with the string algebra, so it provides an independent
route for cross-checking the string engine:

* ``dense_build`` assembles H and the magnetization observable;
* ``matrix_lanczos`` runs the commutator recurrence with trace inner
  products on sparse matrices (fine up to dimension ~2*10^4);
* ``ring_window_lanczos`` handles larger rings (up to 3^12) for
  translation-summed observables by evolving one window-local seed part and
  computing ring inner products via partial traces over window overlaps;
* ``dense_autocorr`` computes C(t) by full eigendecomposition;
* ``free_fermion_energies`` gives the exact open-chain spectrum of the
  two-state Potts chain from its quadratic-fermion form.

Deliberately naive: clarity and independence over speed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .lattice import LatticeSpec
from .models import ModelSpec, SpinValue, spin_matrices

EIG_CAP = 3**8  # dense eigendecomposition bound
MATRIX_CAP = 3**12  # sparse-matrix assembly bound
MATRIX_LANCZOS_CAP = 20_000  # plain sparse commutator Lanczos bound


def _clock_shift(d: int) -> tuple[np.ndarray, np.ndarray]:
    # deliberately re-derived here, not imported from the string algebra
    om = np.exp(2j * np.pi * np.arange(d) / d)
    X = np.zeros((d, d), dtype=complex)
    for j in range(d):
        X[(j + 1) % d, j] = 1.0
    return X, np.diag(om)


def _magnetization_matrix(d: int) -> np.ndarray:
    S = (d - 1) / 2.0
    return np.diag(S - np.arange(d)).astype(complex)


def _place(factors: dict[int, np.ndarray], L: int, d: int) -> sp.csr_matrix:
    """Kronecker placement of per-site matrices (identity elsewhere),
    site 0 as the most significant tensor factor."""
    out = None
    for pos in range(L):
        blk = sp.csr_matrix(factors[pos]) if pos in factors else sp.identity(d, format="csr", dtype=complex)
        out = blk if out is None else sp.kron(out, blk, format="csr")
    return out


def _finite_bonds(lattice: LatticeSpec) -> list[tuple[int, int]]:
    """Nearest-neighbor bonds by flat column index, no double counting."""
    if lattice.dimension == 1:
        L = lattice.size
        if lattice.kind == "chain":
            return [(i, i + 1) for i in range(L - 1)]
        if L == 2:
            return [(0, 1)]
        return [(i, (i + 1) % L) for i in range(L)]
    seen = set()
    out = []
    for x in range(lattice.size):
        for y in range(lattice.size_y):
            a = lattice.site_to_col((x, y))
            for nb in (((x + 1) % lattice.size, y), (x, (y + 1) % lattice.size_y)):
                b = lattice.site_to_col(nb)
                pair = frozenset((a, b))
                if len(pair) == 2 and pair not in seen:
                    seen.add(pair)
                    out.append((a, b))
    return out


@dataclass
class DenseSystem:
    d: int
    lattice: LatticeSpec
    H: sp.csr_matrix
    A: sp.csr_matrix

    @property
    def dim(self) -> int:
        return self.H.shape[0]


def _local_content(spec: ModelSpec):
    """(bond matrix d^2 x d^2 or per-bond list, field matrix, seed matrix)."""
    d = spec.d
    if spec.kind == "ising":
        Sx, _, Sz = spin_matrices(spec.spin)
        bond = spec.J * np.kron(Sx, Sx)
        fld = spec.hx * Sx + spec.hz * Sz
        return bond, fld, Sz
    if spec.kind == "potts":
        X, Z = _clock_shift(d)
        bond = np.zeros((d * d, d * d), dtype=complex)
        for k in range(1, d):
            bond += spec.J * np.kron(
                np.linalg.matrix_power(Z, k), np.linalg.matrix_power(Z, d - k)
            )
        fld = spec.h * (X + np.linalg.matrix_power(X, d - 1))
        return bond, fld, _magnetization_matrix(d)
    raise ValueError(f"no uniform local content for model kind {spec.kind!r}")


def dense_build(spec: ModelSpec) -> DenseSystem:
    """Assemble H and the total magnetization A as sparse matrices."""
    lat = spec.lattice
    if lat.translation_invariant:
        raise ValueError("matrix assembly needs a finite lattice")
    d = spec.d
    L = lat.n_sites
    if d**L > MATRIX_CAP:
        raise ValueError(f"d^L = {d**L} exceeds the matrix assembly cap {MATRIX_CAP}")
    H = sp.csr_matrix((d**L, d**L), dtype=complex)
    if spec.kind == "xz_chain":
        X, Z = _clock_shift(d)
        bx = np.kron(X.conj().T, X)
        bz = np.kron(Z.conj().T, Z)
        if lat.kind == "ring":
            bonds = [(i, (i + 1) % lat.size) for i in range(lat.size)]
        else:
            bonds = [(i, i + 1) for i in range(lat.size - 1)]
        nx = nz = 0
        for i, j in bonds:
            if (i % 2 == 0) == (spec.first_bond == "x"):
                coupling = complex(spec.jx[nx % len(spec.jx)])
                nx += 1
                term = coupling * bx
            else:
                coupling = complex(spec.jy[nz % len(spec.jy)])
                nz += 1
                term = coupling * bz
            H = H + _place_two(term, i, j, L, d)
        if spec.hermitian_closure:
            H = H + H.conj().T
        A = _place({0: _magnetization_matrix(d)}, L, d)
        return DenseSystem(d, lat, H.tocsr(), A.tocsr())
    bond, fld, seed = _local_content(spec)
    for i, j in _finite_bonds(lat):
        H = H + _place_two(bond, i, j, L, d)
    if np.abs(fld).max() > 0:
        for i in range(L):
            H = H + _place({i: fld}, L, d)
    A = sp.csr_matrix((d**L, d**L), dtype=complex)
    for i in range(L):
        A = A + _place({i: seed}, L, d)
    return DenseSystem(d, lat, H.tocsr(), A.tocsr())


def _place_two(op2: np.ndarray, i: int, j: int, L: int, d: int) -> sp.csr_matrix:
    """Place a two-site operator on sites (i, j), i acting as the first
    tensor slot of op2.  Works for non-adjacent and wrapped pairs."""
    if i == j:
        raise ValueError("bond endpoints coincide")
    local = np.asarray(op2, dtype=complex).reshape(d, d, d, d)
    out = sp.csr_matrix((d**L, d**L), dtype=complex)
    for a in range(d):
        for c in range(d):
            blk = local[a, :, c, :]
            if np.abs(blk).max() == 0.0:
                continue
            Ei = np.zeros((d, d), dtype=complex)
            Ei[a, c] = 1.0
            out = out + _place({i: Ei, j: blk}, L, d)
    return out


def _frob_inner(A: sp.spmatrix, B: sp.spmatrix, dim: int) -> complex:
    """tr(A^dag B)/dim for sparse matrices (elementwise Frobenius dot)."""
    return complex(A.conj().multiply(B).sum()) / dim


def _prune_sparse(M: sp.csr_matrix) -> sp.csr_matrix:
    M = M.tocsr()
    M.sum_duplicates()
    if M.nnz:
        cut = 1e-14 * np.abs(M.data).max()
        M.data[np.abs(M.data) < cut] = 0.0
        M.eliminate_zeros()
    return M


def matrix_lanczos(sys: DenseSystem, n_max: int, A0: sp.spmatrix | None = None):
    """Commutator Lanczos with trace inner products on sparse matrices.

    Returns (b list, terminated) with the same termination semantics as the
    string engine: b_n < 1e-10 stops with 'subspace_exhausted'.
    """
    if sys.dim > MATRIX_LANCZOS_CAP:
        raise ValueError(
            f"dimension {sys.dim} too large for the plain matrix route; "
            "use ring_window_lanczos"
        )
    H = sys.H
    A = (A0 if A0 is not None else sys.A).tocsr().astype(complex)
    nrm = np.sqrt(_frob_inner(A, A, sys.dim).real)
    if nrm == 0:
        raise ValueError("zero start operator")
    prev = A / nrm
    prev2 = None
    bs: list[float] = []
    terminated = "max_iterations"
    for n in range(1, n_max + 1):
        tilde = H @ prev - prev @ H
        if prev2 is not None:
            tilde = tilde - bs[-1] * prev2
        tilde = _prune_sparse(tilde)
        b = np.sqrt(_frob_inner(tilde, tilde, sys.dim).real)
        if b < 1e-10:
            terminated = f"subspace_exhausted({n})"
            break
        bs.append(float(b))
        prev2, prev = prev, tilde / b
    return bs, terminated


# ---------------------------------------------------------------------------
# ring-window route: translation-summed observables on rings too large for
# explicit d^L x d^L operators
# ---------------------------------------------------------------------------


def _digit_table(M: sp.spmatrix, w: int, d: int):
    """Row/column base-d digit arrays (nnz x w, site 0 most significant)."""
    coo = M.tocoo()
    rows, cols = coo.row.astype(np.int64), coo.col.astype(np.int64)
    rd = np.empty((rows.size, w), dtype=np.int64)
    cd = np.empty((rows.size, w), dtype=np.int64)
    for p in range(w):
        wk = d ** (w - 1 - p)
        rd[:, p] = (rows // wk) % d
        cd[:, p] = (cols // wk) % d
    return rd, cd, coo.data


def _ptraced_entries(rd, cd, vals, keep, w, d):
    """Entries of the partial trace keeping the listed positions (in the
    listed order): coalesced sorted (key, value) with key the packed
    row-then-column digits.  keep=[] yields the scalar trace."""
    mask = np.ones(vals.shape[0], dtype=bool)
    kept = set(keep)
    for p in range(w):
        if p not in kept:
            mask &= rd[:, p] == cd[:, p]
    key = np.zeros(int(mask.sum()), dtype=np.int64)
    for p in keep:
        key = key * d + rd[mask, p]
    for p in keep:
        key = key * d + cd[mask, p]
    v = vals[mask]
    order = np.argsort(key, kind="stable")
    key, v = key[order], v[order]
    uniq, starts = np.unique(key, return_index=True)
    return uniq, np.add.reduceat(v, starts) if v.size else v


def _ring_pair_inner(a, start_a, wa, b, start_b, wb, L, d) -> complex:
    """sum_k tr((T^k a)^dag b) * d^(L-|union|) / d^L over all ring shifts.

    Uses tr(A^dag B) = Frobenius(ptrace_outside(A), ptrace_outside(B)) on
    the overlap sites, valid for any overlap shape including the double
    arcs that appear once the two windows together cover the ring.
    """
    ta = _digit_table(a, wa, d)
    tb = _digit_table(b, wb, d)
    total = 0.0 + 0.0j
    sites_b = [(start_b + t) % L for t in range(wb)]
    for k in range(L):
        sites_a = [(start_a + k + t) % L for t in range(wa)]
        overlap = sorted(set(sites_a) & set(sites_b))
        union = len(set(sites_a) | set(sites_b))
        ka, va = _ptraced_entries(*ta, [sites_a.index(s) for s in overlap], wa, d)
        kb, vb = _ptraced_entries(*tb, [sites_b.index(s) for s in overlap], wb, d)
        _, ia, ib = np.intersect1d(ka, kb, assume_unique=True, return_indices=True)
        total += np.sum(np.conj(va[ia]) * vb[ib]) * d ** (L - union)
    return complex(total) / d**L


def ring_window_lanczos(spec: ModelSpec, n_max: int) -> list[float]:
    """Lanczos coefficients of the translation-summed magnetization on a
    ring, evolving only one seed part on a growing window.

    Exact for the ring: the ring Hamiltonian commutes with translations, so
    A_n = sum_i T^i c_n with c_n obeying the window-local recurrence; all
    cross terms between translates enter through the shift-trace inner
    products.  Needs window 2n+1 <= L.
    """
    lat = spec.lattice
    if lat.kind != "ring":
        raise ValueError("the window route is defined on rings")
    L = lat.size
    if 2 * n_max + 1 > L:
        raise ValueError(f"window 2*{n_max}+1 exceeds the ring size {L}")
    d = spec.d
    bond, fld, seed = _local_content(spec)

    def window_ham(w: int) -> sp.csr_matrix:
        Hw = sp.csr_matrix((d**w, d**w), dtype=complex)
        for j in range(w - 1):
            Hw = Hw + _place_two(bond, j, j + 1, w, d)
        if np.abs(fld).max() > 0:
            for j in range(w):
                Hw = Hw + _place({j: fld}, w, d)
        return Hw.tocsr()

    def embed(M: sp.spmatrix, sides: int) -> sp.csr_matrix:
        pad = sp.identity(d**sides, format="csr", dtype=complex)
        return sp.kron(pad, sp.kron(M, pad, format="csr"), format="csr")

    c = sp.csr_matrix(seed)
    w = 1
    start = 0  # leftmost window site of c, in ring coordinates
    nrm = np.sqrt((L * _ring_pair_inner(c, start, w, c, start, w, L, d)).real)
    c = c / nrm
    prev2 = None
    bs: list[float] = []
    for n in range(1, n_max + 1):
        w_new = w + 2
        start_new = start - 1
        cE = embed(c, 1)
        Hw = window_ham(w_new)
        tilde = Hw @ cE - cE @ Hw
        if prev2 is not None:
            tilde = tilde - bs[-1] * embed(prev2, 2)
        tilde = _prune_sparse(tilde)
        b2 = (L * _ring_pair_inner(tilde, start_new, w_new, tilde, start_new, w_new, L, d)).real
        b = float(np.sqrt(b2))
        if b < 1e-10:
            break
        bs.append(b)
        prev2, c = c, tilde / b
        w, start = w_new, start_new
    return bs


def dense_lanczos(spec: ModelSpec, n_max: int):
    """b_1..b_n for the total magnetization: plain sparse-matrix route when
    the Hilbert space is small, ring-window route otherwise."""
    lat = spec.lattice
    if not lat.translation_invariant and spec.d**lat.n_sites <= MATRIX_LANCZOS_CAP:
        bs, _ = matrix_lanczos(dense_build(spec), n_max)
        return bs
    return ring_window_lanczos(spec, n_max)


def dense_autocorr(sys: DenseSystem, t_grid: np.ndarray) -> np.ndarray:
    """C(t) = tr(A(t) A) / tr(A^2) via full eigendecomposition."""
    if sys.dim > EIG_CAP:
        raise ValueError(f"dimension {sys.dim} exceeds the eigendecomposition cap")
    H = sys.H.toarray()
    A = sys.A.toarray()
    E, V = np.linalg.eigh(H)
    At = V.conj().T @ A @ V
    W = np.abs(At) ** 2
    dE = E[:, None] - E[None, :]
    wsum = W.sum()
    out = np.empty(len(t_grid), dtype=float)
    for i, t in enumerate(np.asarray(t_grid, dtype=float)):
        out[i] = float(np.sum(W * np.cos(dE * t)) / wsum)
    return out


def free_fermion_energies(L: int, J: float, h: float) -> np.ndarray:
    """Exact sorted many-body spectrum of the open-chain two-state Potts
    model H = J sum Z_i Z_{i+1} + 2h sum X_i via its quadratic-fermion form.

    The string transformation gives H = sum c^dag A c + (1/2)(c^dag B c^dag
    + h.c.) + 2hL with A_ii = -4h, A_(i,i+1) = J symmetric, B_(i,i+1) = J
    antisymmetric.  Open boundary: no fermion-parity boundary term, so all
    2^L quasiparticle occupations are realized.
    """
    A = np.zeros((L, L))
    B = np.zeros((L, L))
    for i in range(L):
        A[i, i] = -4.0 * h
    for i in range(L - 1):
        A[i, i + 1] = A[i + 1, i] = J
        B[i, i + 1] = J
        B[i + 1, i] = -J
    bdg = np.block([[A, B], [-B, -A]])
    eps = np.linalg.eigvals(bdg).real
    eps = np.sort(eps)[L:]  # positive branch
    base = -0.5 * eps.sum()  # constants cancel: 2hL + tr(A)/2 = 0
    energies = []
    for mask in range(2**L):
        e = base
        for m in range(L):
            if mask >> m & 1:
                e += eps[m]
        energies.append(e)
    return np.sort(np.array(energies))


def liouvillian_superoperator(H: sp.spmatrix) -> sp.csr_matrix:
    """[H, .] as a matrix acting on row-major vectorized operators."""
    n = H.shape[0]
    eye = sp.identity(n, format="csr", dtype=complex)
    return (sp.kron(H, eye, format="csr") - sp.kron(eye, H.T, format="csr")).tocsr()
