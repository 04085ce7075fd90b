"""Sparse operator vectors over the string basis, and the commutator engine.

An operator is stored as a structure-of-arrays map from basis strings to
complex amplitudes: an ``(N, S, 2)`` uint8 exponent table over a window of
``S`` site columns, parallel ``(N,)`` amplitudes, and packed integer sort
keys.  Strings are orthonormal under the normalized trace pairing, so inner
products and norms are plain sparse dot products.

Two storage modes follow the lattice:

* finite (``ring``/``chain``/``torus``): columns enumerate the actual sites;
* ``thermodynamic``: each row is the canonically anchored representative of
  a translation orbit, and inner products are per-cell densities.

All reductions run over key-sorted arrays in a fixed order, so results are
bit-identical across runs.
"""

from __future__ import annotations

from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .lattice import LatticeSpec
from .weyl import PhasedString, WeylString, omega_powers

PRUNE_REL = 1e-14  # relative amplitude cutoff used by arithmetic ops
DEFAULT_ENTRY_BUDGET = int(2e8)


class BudgetExceededError(RuntimeError):
    """Raised when an operation would exceed its stored-entry budget."""

    def __init__(self, message: str, n_entries: int):
        super().__init__(message)
        self.n_entries = n_entries


def canonical_anchor(string: WeylString, lattice: LatticeSpec) -> tuple[WeylString, tuple]:
    """Translate a string to its canonical representative.

    1D: the smallest support coordinate lands in ``[0, cell)``.
    2D: the lexicographically smallest support site lands at ``(0, 0)``.
    Returns ``(anchored, shift)`` with ``anchored == string.translate(shift)``.
    Idempotent: anchoring an anchored string shifts by zero.
    """
    if not lattice.translation_invariant:
        raise ValueError("anchoring applies to thermodynamic mode only")
    if string.is_identity:
        raise ValueError("the identity string has no anchor")
    supp = string.support
    if len(supp[0]) != lattice.dimension:
        raise ValueError(
            f"string sites are {len(supp[0])}-dimensional, lattice is {lattice.dimension}-dimensional"
        )
    if lattice.dimension == 1:
        lo = min(s[0] for s in supp)
        shift = (-(lo - lo % lattice.cell),)
    else:
        x0, y0 = min(supp)  # lex order on (x, y)
        shift = (-x0, -y0)
    if all(c == 0 for c in shift):
        return string, shift
    return string.translate(shift), shift


class TermList:
    """A Hamiltonian as a flat list of phased strings.

    Finite lattices carry absolute (wrapped) sites.  Thermodynamic lattices
    carry one unit cell of terms with sites relative to the cell origin; the
    full Hamiltonian is the sum of all cell translates (by multiples of
    ``lattice.cell``).

    Construction merges duplicate strings, drops vanishing coefficients, and
    records whether the resulting operator is Hermitian (cell-local adjoint
    closure in thermodynamic mode).
    """

    def __init__(self, d: int, lattice: LatticeSpec, terms: Iterable[PhasedString]):
        merged: dict[WeylString, complex] = {}
        for coeff, string in terms:
            if string.d != d:
                raise ValueError(f"term dimension {string.d} != {d}")
            if string.is_identity:
                raise ValueError("identity terms do not contribute to commutators")
            merged[string] = merged.get(string, 0.0) + complex(coeff)
        scale = max((abs(c) for c in merged.values()), default=0.0)
        kept = {s: c for s, c in merged.items() if abs(c) > PRUNE_REL * scale}
        if not kept:
            raise ValueError("term list is empty after merging")
        if not lattice.translation_invariant:
            for s in kept:
                for site in s.support:
                    lattice.site_to_col(site)  # raises if out of lattice
        self.d = d
        self.lattice = lattice
        self.terms: tuple[PhasedString, ...] = tuple(
            PhasedString(kept[s], s) for s in sorted(kept)
        )
        self.hermitian = self._check_hermitian(kept)

    def _check_hermitian(self, amp: dict) -> bool:
        from .weyl import adjoint

        scale = max(abs(c) for c in amp.values())
        for s, c in amp.items():
            ph, sadj = adjoint(s)
            if abs(np.conj(c) * ph - amp.get(sadj, 0.0)) > 1e-12 * scale:
                return False
        return True

    def __iter__(self):
        return iter(self.terms)

    def __len__(self):
        return len(self.terms)


# ---------------------------------------------------------------------------
# key packing: exponent digits -> int64 blocks, exact in float64 matmul
# ---------------------------------------------------------------------------


@lru_cache(maxsize=64)
def _digits_per_word(d: int) -> int:
    k = 1
    while d ** (k + 1) - 1 < 2**53:
        k += 1
    return k


@lru_cache(maxsize=64)
def _pack_mats(d: int, ndigits: int):
    """(powmat for packing, per-word divisor tables for unpacking)."""
    K = _digits_per_word(d)
    G = -(-ndigits // K)
    powmat = np.zeros((ndigits, G), dtype=np.float64)
    unpack = []
    for j in range(G):
        lo, hi = j * K, min((j + 1) * K, ndigits)
        powmat[lo:hi, j] = [float(d) ** t for t in range(hi - lo)]
        unpack.append(np.array([d**t for t in range(hi - lo)], dtype=np.int64))
    return powmat, unpack


def _pack_keys(digits: np.ndarray, d: int) -> np.ndarray:
    """(N, S, 2) uint8 exponents -> (N, G) int64 keys.  Exact: every block
    value is below 2^53, so the float64 matmul rounds nothing."""
    n, s, _ = digits.shape
    powmat, _ = _pack_mats(d, 2 * s)
    flat = digits.reshape(n, 2 * s)
    out = np.empty((n, powmat.shape[1]), dtype=np.int64)
    step = max(1, int(6e7 // max(1, 2 * s)))
    for lo in range(0, n, step):
        hi = min(n, lo + step)
        out[lo:hi] = np.rint(flat[lo:hi].astype(np.float64) @ powmat).astype(np.int64)
    return out

def _unpack_keys(keys: np.ndarray, d: int, s: int) -> np.ndarray:
    """Inverse of _pack_keys: (N, G) int64 -> (N, S, 2) uint8."""
    n = keys.shape[0]
    K = _digits_per_word(d)
    _, unpack = _pack_mats(d, 2 * s)
    flat = np.empty((n, 2 * s), dtype=np.uint8)
    for j, pows in enumerate(unpack):
        lo = j * K
        flat[:, lo : lo + len(pows)] = (keys[:, j : j + 1] // pows) % d
    return flat.reshape(n, s, 2)


def _sort_order(keys: np.ndarray) -> np.ndarray:
    # lexsort: last key is primary, so feed words low-to-high
    if keys.shape[1] == 1:
        return np.argsort(keys[:, 0], kind="stable")
    return np.lexsort(tuple(keys[:, j] for j in range(keys.shape[1])))


def _sort_reduce(keys: np.ndarray, amps: np.ndarray):
    """Sort by key and sum amplitudes of equal keys (fixed order)."""
    if keys.shape[0] == 0:
        return keys, amps
    order = _sort_order(keys)
    keys = keys[order]
    amps = amps[order]
    starts = np.empty(keys.shape[0], dtype=bool)
    starts[0] = True
    np.any(keys[1:] != keys[:-1], axis=1, out=starts[1:])
    idx = np.flatnonzero(starts)
    summed = np.add.reduceat(amps, idx)
    return keys[idx], summed


def _drop_zeros(keys, amps, rel=PRUNE_REL):
    if amps.shape[0] == 0:
        return keys, amps
    scale = np.abs(amps).max()
    keep = np.abs(amps) > rel * scale
    if keep.all():
        return keys, amps
    return keys[keep], amps[keep]


# ---------------------------------------------------------------------------
# window geometry
# ---------------------------------------------------------------------------


class _Window:
    """Column layout for exponent storage.

    finite: column = lattice storage index of the site.
    1D thermodynamic: column c is site (c,), c in [0, width).
    2D thermodynamic: column x*(2*half_y+1) + (y+half_y), x in [0, width),
    y in [-half_y, half_y]; column order equals lex order on (x, y), so the
    anchored site (0, 0) sits at the minimal occupied column, half_y.
    """

    def __init__(self, lattice: LatticeSpec, width: int = 0, half_y: int = 0):
        self.lattice = lattice
        if lattice.translation_invariant:
            self.width = max(width, lattice.cell)
            self.half_y = half_y if lattice.dimension == 2 else 0
        else:
            self.width = lattice.n_sites
            self.half_y = 0

    @property
    def ncols(self) -> int:
        if self.lattice.dimension == 2 and self.lattice.translation_invariant:
            return self.width * (2 * self.half_y + 1)
        return self.width if self.lattice.translation_invariant else self.lattice.n_sites

    @property
    def anchor_col(self) -> int:
        return self.half_y if self.lattice.dimension == 2 else 0

    def col_of_site(self, site: tuple) -> int:
        lat = self.lattice
        if not lat.translation_invariant:
            return lat.site_to_col(site)
        if lat.dimension == 1:
            (i,) = site
            if not 0 <= i < self.width:
                raise ValueError(f"site {site} outside window of width {self.width}")
            return i
        x, y = site
        if not (0 <= x < self.width and -self.half_y <= y <= self.half_y):
            raise ValueError(f"site {site} outside window {self.width}x±{self.half_y}")
        return x * (2 * self.half_y + 1) + (y + self.half_y)

    def site_of_col(self, col: int) -> tuple:
        lat = self.lattice
        if not lat.translation_invariant:
            return lat.sites()[col]
        if lat.dimension == 1:
            return (col,)
        span = 2 * self.half_y + 1
        return (col // span, col % span - self.half_y)

    def col_delta(self, dsite: tuple) -> int:
        """Column shift of a rigid site translation (thermodynamic mode)."""
        if self.lattice.dimension == 1:
            return dsite[0]
        return dsite[0] * (2 * self.half_y + 1) + dsite[1]

    def same(self, other: "_Window") -> bool:
        return (
            self.width == other.width
            and self.half_y == other.half_y
            and self.lattice == other.lattice
        )

    def union(self, other: "_Window") -> "_Window":
        return _Window(
            self.lattice, max(self.width, other.width), max(self.half_y, other.half_y)
        )


# ---------------------------------------------------------------------------
# operator vectors
# ---------------------------------------------------------------------------


class OperatorVector:
    """Key-sorted sparse map from basis strings to complex amplitudes."""

    def __init__(self, d: int, lattice: LatticeSpec, _win=None, _keys=None, _amps=None, _digits=None):
        if d < 2:
            raise ValueError(f"qudit dimension must be >= 2, got {d}")
        self.d = d
        self.lattice = lattice
        self._win = _win if _win is not None else _Window(lattice)
        G = _pack_mats(d, 2 * max(1, self._win.ncols))[0].shape[1]
        self._keys = _keys if _keys is not None else np.empty((0, G), dtype=np.int64)
        self._amps = _amps if _amps is not None else np.empty(0, dtype=np.complex128)
        self._digits_cache = _digits

    # -- construction -------------------------------------------------------

    @classmethod
    def from_items(
        cls, d: int, lattice: LatticeSpec, items: Iterable[tuple[WeylString, complex]]
    ) -> "OperatorVector":
        items = list(items)
        anchored = []
        for string, amp in items:
            if string.d != d:
                raise ValueError(f"string dimension {string.d} != {d}")
            if lattice.translation_invariant:
                if string.is_identity:
                    raise ValueError("identity string has no translation orbit")
                string, _ = canonical_anchor(string, lattice)
            else:
                for site in string.support:
                    lattice.site_to_col(site)
            anchored.append((string, complex(amp)))
        win = _Window(lattice)
        if lattice.translation_invariant:
            width = lattice.cell
            half_y = 0
            for string, _ in anchored:
                for site in string.support:
                    width = max(width, site[0] + 1)
                    if lattice.dimension == 2:
                        half_y = max(half_y, abs(site[1]))
            win = _Window(lattice, width, half_y)
        ncols = max(1, win.ncols)
        digits = np.zeros((len(anchored), ncols, 2), dtype=np.uint8)
        amps = np.empty(len(anchored), dtype=np.complex128)
        for i, (string, amp) in enumerate(anchored):
            amps[i] = amp
            for site, (v, w) in string.items():
                c = win.col_of_site(site)
                digits[i, c, 0] = v
                digits[i, c, 1] = w
        keys, amps = _sort_reduce(_pack_keys(digits, d), amps)
        keys, amps = _drop_zeros(keys, amps, rel=0.0)
        return cls(d, lattice, _win=win, _keys=keys, _amps=amps)

    @classmethod
    def zero(cls, d: int, lattice: LatticeSpec) -> "OperatorVector":
        return cls(d, lattice)

    # -- storage access -----------------------------------------------------

    @property
    def num_terms(self) -> int:
        return self._keys.shape[0]

    def digits(self) -> np.ndarray:
        """(N, S, 2) uint8 exponent table (cached; do not mutate)."""
        if self._digits_cache is None or self._digits_cache.shape[0] != self._keys.shape[0]:
            self._digits_cache = _unpack_keys(self._keys, self.d, max(1, self._win.ncols))
        return self._digits_cache

    def amplitudes(self) -> np.ndarray:
        return self._amps

    def items(self) -> list[tuple[WeylString, complex]]:
        digits = self.digits()
        out = []
        for i in range(digits.shape[0]):
            cols = np.flatnonzero(digits[i].any(axis=1))
            factors = [
                (self._win.site_of_col(int(c)), (int(digits[i, c, 0]), int(digits[i, c, 1])))
                for c in cols
            ]
            out.append((WeylString(self.d, factors), complex(self._amps[i])))
        return out

    def _to_window(self, win: _Window) -> "OperatorVector":
        if self._win.same(win):
            return self
        if self.num_terms == 0:
            return OperatorVector(self.d, self.lattice, _win=win)
        old = self.digits()
        digits = np.zeros((old.shape[0], max(1, win.ncols), 2), dtype=np.uint8)
        if self.lattice.dimension == 1 or not self.lattice.translation_invariant:
            digits[:, : old.shape[1]] = old
        else:
            # 2D thermodynamic: re-map columns through site coordinates
            for c in range(old.shape[1]):
                if not old[:, c].any():
                    continue
                digits[:, win.col_of_site(self._win.site_of_col(c))] = old[:, c]
        keys = _pack_keys(digits, self.d)
        order = _sort_order(keys)
        return OperatorVector(
            self.d, self.lattice, _win=win, _keys=keys[order], _amps=self._amps[order]
        )

    def _aligned(self, other: "OperatorVector"):
        if self.d != other.d or self.lattice != other.lattice:
            raise ValueError("operands live on different lattices")
        win = self._win.union(other._win)
        return self._to_window(win), other._to_window(win), win

    # -- linear algebra -----------------------------------------------------

    def inner(self, other: "OperatorVector") -> complex:
        """Normalized trace pairing (A|B); per-cell density in thermodynamic
        mode.  Strings are orthonormal, so this is a sparse key-matched dot."""
        a, b, _ = self._aligned(other)
        ka, kb = a._keys, b._keys
        if ka.shape[0] == 0 or kb.shape[0] == 0:
            return 0.0 + 0.0j
        keys = np.concatenate([ka, kb], axis=0)
        side = np.concatenate(
            [np.zeros(ka.shape[0], dtype=np.int64), np.ones(kb.shape[0], dtype=np.int64)]
        )
        vals = np.concatenate([a._amps, b._amps])
        order = _sort_order(keys)
        keys, side, vals = keys[order], side[order], vals[order]
        adj = (keys[1:] == keys[:-1]).all(axis=1) & (side[:-1] == 0) & (side[1:] == 1)
        idx = np.flatnonzero(adj)
        return complex(np.sum(np.conj(vals[idx]) * vals[idx + 1]))

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self._amps) ** 2)))

    def scaled(self, alpha: complex) -> "OperatorVector":
        return OperatorVector(
            self.d, self.lattice, _win=self._win, _keys=self._keys,
            _amps=self._amps * alpha, _digits=self._digits_cache,
        )

    def axpy(self, alpha: complex, other: "OperatorVector") -> "OperatorVector":
        """``alpha * self + other`` with the relative amplitude prune."""
        a, b, win = self._aligned(other)
        keys = np.concatenate([a._keys, b._keys], axis=0)
        amps = np.concatenate([a._amps * alpha, b._amps])
        keys, amps = _sort_reduce(keys, amps)
        keys, amps = _drop_zeros(keys, amps)
        return OperatorVector(self.d, self.lattice, _win=win, _keys=keys, _amps=amps)

    def adjoint(self) -> "OperatorVector":
        """Entrywise dagger: string adjoints with their exact phases, conjugated
        amplitudes.  Support is unchanged, so anchoring is preserved."""
        if self.num_terms == 0:
            return self
        d = self.d
        digits = self.digits()
        phase = np.einsum(
            "nsc,nsc->n", digits[:, :, :1].astype(np.int64), digits[:, :, 1:].astype(np.int64)
        ) % d
        om = omega_powers(d)
        amps = np.conj(self._amps) * om[phase]
        neg = np.where(digits > 0, d - digits.astype(np.int64), 0).astype(np.uint8)
        keys = _pack_keys(neg, d)
        order = _sort_order(keys)
        return OperatorVector(
            self.d, self.lattice, _win=self._win, _keys=keys[order], _amps=amps[order]
        )

    def __eq__(self, other):
        if not isinstance(other, OperatorVector):
            return NotImplemented
        a, b, _ = self._aligned(other)
        return a._keys.shape == b._keys.shape and bool(
            (a._keys == b._keys).all() and (a._amps == b._amps).all()
        )

    def allclose(self, other: "OperatorVector", atol: float = 1e-12) -> bool:
        diff = self.axpy(-1.0, other)
        return diff.num_terms == 0 or float(np.abs(diff._amps).max()) <= atol

    def __repr__(self):
        mode = "thermodynamic" if self.lattice.translation_invariant else self.lattice.kind
        return f"<OperatorVector d={self.d} {mode} terms={self.num_terms}>"


# ---------------------------------------------------------------------------
# the Liouvillian engine
# ---------------------------------------------------------------------------


class _TermGroups:
    """Hamiltonian terms regrouped for array evaluation.

    Thermodynamic: one group per relative support pattern, holding the site
    deltas (first delta zero) and stacked exponent rows.
    Finite: one group per absolute column tuple.
    """

    def __init__(self, tl: TermList):
        self.d = tl.d
        self.lattice = tl.lattice
        groups: dict[tuple, list] = {}
        for coeff, string in tl.terms:
            supp = sorted(string.support)
            if tl.lattice.translation_invariant:
                base = supp[0]
                deltas = tuple(
                    tuple(c - b for c, b in zip(s, base)) for s in supp
                )
                # cell-relative base offset modulo the cell period
                base_mod = base[0] % tl.lattice.cell
                key = (deltas, base_mod)
            else:
                key = tuple(tl.lattice.site_to_col(s) for s in supp)
            row_v = [string.exponents(s)[0] for s in supp]
            row_w = [string.exponents(s)[1] for s in supp]
            groups.setdefault(key, []).append((row_v, row_w, coeff))
        self.groups = []
        for key in sorted(groups):
            rows = groups[key]
            hv = np.array([r[0] for r in rows], dtype=np.int16)
            hw = np.array([r[1] for r in rows], dtype=np.int16)
            coeffs = np.array([r[2] for r in rows], dtype=np.complex128)
            self.groups.append((key, hv, hw, coeffs))


def _occupancy(digits: np.ndarray):
    occ = digits.any(axis=2)
    rows, cols = np.nonzero(occ)
    return occ, rows.astype(np.int64), cols.astype(np.int64)


class _EmitBuffer:
    """Pending emission records, flushed into sorted key runs.  Chunks from
    different term groups have different support sizes, so each chunk is
    flushed on its own; chunking keeps every chunk within the flush size."""

    def __init__(self, engine: "_ApplyState"):
        self.e = engine
        self.chunks: list[tuple] = []
        self.pending = 0

    def add(self, rows, cols, dv, dw, amps):
        self.chunks.append((rows, cols, dv, dw, amps))
        self.pending += rows.shape[0]
        if self.pending >= self.e.flush_rows:
            self.flush()

    def flush(self):
        if self.pending == 0:
            return
        e = self.e
        chunks, self.chunks, self.pending = self.chunks, [], 0
        for rows, cols, dv, dw, amps in chunks:
            for lo in range(0, rows.shape[0], e.flush_rows):
                hi = min(rows.shape[0], lo + e.flush_rows)
                e.push_run(rows[lo:hi], cols[lo:hi], dv[lo:hi], dw[lo:hi], amps[lo:hi])


class _ApplyState:
    """One apply_liouvillian invocation: buffers, runs, and budget tracking."""

    def __init__(self, vec: OperatorVector, win: _Window, pad: int, budget: int | None):
        self.vec = vec
        self.d = vec.d
        self.win = win
        self.pad = pad
        self.budget = budget
        self.src_digits = vec._to_window(win).digits()
        self.src_amps = vec._to_window(win)._amps
        self.ncols = max(1, win.ncols)
        # flush size keeps the materialized uint8 buffer near 300 MB
        row_bytes = 2 * (self.ncols + 2 * pad) * 2 + 40
        self.flush_rows = max(100_000, int(3.0e8 // row_bytes))
        self.runs: list[tuple[np.ndarray, np.ndarray]] = []
        self.run_entries = 0
        self.collapsed_entries = 0

    def push_run(self, rows, cols, dv, dw, amps):
        d, pad, S = self.d, self.pad, self.ncols
        n, m = cols.shape if cols.ndim == 2 else (cols.shape[0], 1)
        cols = cols.reshape(n, m)
        dv = dv.reshape(n, m)
        dw = dw.reshape(n, m)
        buf = np.zeros((n, S + 2 * pad, 2), dtype=np.uint8)
        buf[:, pad : pad + S] = self.src_digits[rows]
        ar = np.arange(n)
        for j in range(m):
            buf[ar, pad + cols[:, j], 0] = dv[:, j].astype(np.uint8)
            buf[ar, pad + cols[:, j], 1] = dw[:, j].astype(np.uint8)
        lat = self.vec.lattice
        if lat.translation_invariant:
            occ = buf.any(axis=2)
            has = occ.any(axis=1)
            minc = np.where(has, occ.argmax(axis=1), 0).astype(np.int64)
            # shift so the minimal occupied column returns to the anchor column
            target = self.win.anchor_col + pad
            if lat.dimension == 1 and lat.cell > 1:
                rel = minc - pad
                shift = (rel - rel % lat.cell) + pad - target
            else:
                shift = minc - target
            if lat.dimension == 2:
                # anchoring recenters y on the lexicographically first site;
                # the recentered content must still fit the y range, or the
                # flat shift would wrap between rows
                span = 2 * self.win.half_y + 1
                yid = (np.arange(buf.shape[1], dtype=np.int64) - pad) % span
                ymin = np.where(occ, yid[None, :], span).min(axis=1)
                ymax = np.where(occ, yid[None, :], -1).max(axis=1)
                y0 = (minc - pad) % span
                bad = has & ((ymax - y0 > self.win.half_y) | (y0 - ymin > self.win.half_y))
                if bool(bad.any()):
                    raise AssertionError(
                        "anchored content exceeds the y window; increase reserve_half_y"
                    )
            idx = np.arange(pad, pad + S)[None, :] + shift[:, None]
            valid = (idx >= 0) & (idx < S + 2 * pad)
            np.clip(idx, 0, S + 2 * pad - 1, out=idx)
            out = np.take_along_axis(buf, idx[:, :, None], axis=1)
            out[~valid] = 0
            # the anchored content must fit the window: content beyond it
            # would mean the caller under-sized the reserve
            if bool((occ.sum(axis=1) != out.any(axis=2).sum(axis=1))[has].any()):
                raise AssertionError("anchored string exceeded the reserved window")
            buf = out
            keep = has
        else:
            buf = buf[:, pad : pad + S] if pad else buf
            keep = buf.any(axis=(1, 2))
        if not keep.all():
            buf = buf[keep]
            amps = amps[keep]
        keys = _pack_keys(buf, d)
        keys, summed = _sort_reduce(keys, amps)
        self.runs.append((keys, summed))
        self.run_entries += keys.shape[0]
        if self.budget is not None and self.run_entries > self.budget:
            raise BudgetExceededError(
                f"stored-entry budget {self.budget} exceeded during apply",
                self.run_entries,
            )
        # collapse when the raw tail outgrows the last collapsed size, so the
        # total sorted volume stays O(final * log) instead of quadratic
        if len(self.runs) > 8 and self.run_entries > max(
            2 * self.flush_rows, 2 * self.collapsed_entries
        ):
            self.collapse()

    def collapse(self):
        if len(self.runs) <= 1:
            return
        keys = np.concatenate([k for k, _ in self.runs], axis=0)
        amps = np.concatenate([a for _, a in self.runs])
        self.runs.clear()
        keys, amps = _sort_reduce(keys, amps)
        self.runs = [(keys, amps)]
        self.run_entries = keys.shape[0]
        self.collapsed_entries = keys.shape[0]


def _content_extent(vec: OperatorVector) -> tuple[int, int]:
    """(occupied x extent, max |y|) of a thermodynamic vector's content."""
    if vec.num_terms == 0:
        return 0, 0
    occ = vec.digits().any(axis=2)
    cols = np.flatnonzero(occ.any(axis=0))
    if cols.shape[0] == 0:
        return 0, 0
    win = vec._win
    if vec.lattice.dimension == 1:
        return int(cols.max()) + 1, 0
    span = 2 * win.half_y + 1
    xs = cols // span
    ys = cols % span - win.half_y
    return int(xs.max()) + 1, int(np.abs(ys).max())


def apply_liouvillian(
    hamiltonian: TermList,
    vec: OperatorVector,
    *,
    extras: Sequence[tuple[complex, OperatorVector]] = (),
    entry_budget: int | None = None,
    reserve_width: int = 0,
    reserve_half_y: int = 0,
) -> OperatorVector:
    """``[H, A] + sum(alpha_i * extra_i)`` in one sorted merge.

    Every Hamiltonian term instance that overlaps a stored string contributes
    one phased string per nonvanishing commutator; vanishing is decided by
    exact integer phase comparison.  In thermodynamic mode term instances run
    over all cell translates intersecting each representative's support, and
    outputs are re-anchored.  The final merge includes the ``extras`` vectors
    (e.g. the Lanczos three-term subtraction) and applies the relative prune.

    ``reserve_width``/``reserve_half_y`` pre-size the thermodynamic window.
    A reserve covering the whole run keeps one packing layout throughout;
    otherwise the window grows to fit each result.
    """
    if hamiltonian.d != vec.d or hamiltonian.lattice != vec.lattice:
        raise ValueError("Hamiltonian and vector live on different lattices")
    lat = vec.lattice
    d = vec.d
    groups = _TermGroups(hamiltonian)
    max_delta_x = 0
    max_span = 0
    for key, hv, hw, _ in groups.groups:
        if lat.translation_invariant:
            deltas, _ = key
            max_delta_x = max(max_delta_x, max(s[0] for s in deltas))
            if lat.dimension == 2:
                max_span = max(max_span, max(abs(s[1]) for s in deltas))
        if hv.shape[1] * (d - 1) ** 2 >= 32767:
            raise ValueError("term support too large for int16 phase accumulation")
    # working window: sized to hold the anchored result.  With a sufficient
    # reserve the size is iteration-independent, so keys keep one layout.
    if lat.translation_invariant:
        ext_x, ext_y = _content_extent(vec)
        # one application widens a string's bounding box by at most one term
        # span (the instance must overlap the string, so its own span covers
        # both stickouts).  x re-anchors the minimum to column 0, so extent +
        # span suffices.  y re-anchors on the lexicographic minimum, which can
        # sit anywhere inside the content, so the half range must hold the
        # whole spread: 2*ext_y + span.
        win = _Window(
            lat,
            max(reserve_width, ext_x + max_delta_x, lat.cell),
            max(reserve_half_y, 2 * ext_y + max_span) if lat.dimension == 2 else 0,
        )
    else:
        win = vec._win
    src = vec._to_window(win)
    if src.num_terms == 0:
        out = OperatorVector(d, lat, _win=win)
        for alpha, extra in extras:
            out = extra.scaled(alpha).axpy(1.0, out) if out.num_terms else extra.scaled(alpha)
        return out

    span = 2 * win.half_y + 1
    pad = max(1, max_delta_x * (span if lat.dimension == 2 else 1) + (max_span if lat.dimension == 2 else 0))
    state = _ApplyState(src, win, pad, entry_budget)
    buf = _EmitBuffer(state)
    om = omega_powers(d)
    digits = state.src_digits
    amps = state.src_amps
    occ, occ_rows, occ_cols = _occupancy(digits)
    S = state.ncols
    width = win.width

    # chunk size for the (C, K) phase tables
    def chunking(K):
        return max(20_000, int(1.6e7 // max(1, K)))

    for key, hv, hw, coeffs in groups.groups:
        K, m = hv.shape
        if lat.translation_invariant:
            deltas, base_mod = key
            dxs = np.array([ds[0] for ds in deltas], dtype=np.int64)
            dys = (
                np.array([ds[1] for ds in deltas], dtype=np.int64)
                if lat.dimension == 2
                else np.zeros(m, dtype=np.int64)
            )
            dcols = dxs * span + dys
            cell = lat.cell
            if lat.dimension == 2:
                occ_x = occ_cols // span
                occ_yi = occ_cols % span
            else:
                occ_x = occ_cols
                occ_yi = np.zeros_like(occ_cols)
            # candidate origins: occupied site minus each pattern delta, on
            # the cell sublattice, deduplicated by requiring that no earlier
            # pattern site is occupied.  Components are tracked separately so
            # flat-column arithmetic never wraps across rows of a 2D window.
            cand_rows = []
            cand_x = []
            cand_yi = []
            for j in range(m):
                ox = occ_x - dxs[j]
                oyi = occ_yi - dys[j]
                ok = (oyi >= 0) & (oyi < span) if lat.dimension == 2 else np.ones(ox.shape[0], dtype=bool)
                if cell > 1:
                    ok &= (ox % cell) == base_mod
                for jp in range(j):
                    px = ox + dxs[jp]
                    pyi = oyi + dys[jp]
                    inw = (px >= 0) & (px < width) & (pyi >= 0) & (pyi < span)
                    cp = np.clip(px * span + pyi, 0, S - 1)
                    hit = np.zeros(ox.shape[0], dtype=bool)
                    hit[inw] = occ[occ_rows[inw], cp[inw]]
                    ok &= ~hit
                cand_rows.append(occ_rows[ok])
                cand_x.append(ox[ok])
                cand_yi.append(oyi[ok])
            rows = np.concatenate(cand_rows)
            org_x = np.concatenate(cand_x)
            org_yi = np.concatenate(cand_yi)
        else:
            # finite: fixed column tuple; every stored row is a candidate
            cols_fixed = np.array(key, dtype=np.int64)
            rows = np.arange(digits.shape[0], dtype=np.int64)
            org_x = None
        step = chunking(K)
        total = rows.shape[0]
        for lo in range(0, total, step):
            hi = min(total, lo + step)
            r = rows[lo:hi]
            if org_x is not None:
                px = org_x[lo:hi, None] + dxs[None, :]
                pyi = org_yi[lo:hi, None] + dys[None, :]
                geom_ok = (pyi >= 0) & (pyi < span)
                cols = px * span + pyi
                inw = geom_ok & (px >= 0) & (px < width)
                cc = np.clip(cols, 0, S - 1)
                vP = np.where(inw, digits[r[:, None], cc, 0], 0).astype(np.int16)
                wP = np.where(inw, digits[r[:, None], cc, 1], 0).astype(np.int16)
            else:
                geom_ok = None
                cols = np.broadcast_to(cols_fixed, (r.shape[0], m))
                vP = digits[r[:, None], cols, 0].astype(np.int16)
                wP = digits[r[:, None], cols, 1].astype(np.int16)
            # phase exponents: xi1 for P*h, xi2 for h*P, so [h, P] carries
            # om[xi2] - om[xi1] on the summed exponent string.  Exact small
            # integers; vanishing commutators are an integer comparison.
            xi1 = (wP @ hv.T) % d
            xi2 = (vP @ hw.T) % d
            mask = xi1 != xi2
            if not mask.any():
                continue
            ci, ki = np.nonzero(mask)
            if geom_ok is not None and lat.dimension == 2:
                if not geom_ok[ci].all(axis=1).all():
                    raise AssertionError(
                        "emission crosses the window edge; increase reserve_half_y"
                    )
            coeff = (om[xi2[ci, ki]] - om[xi1[ci, ki]]) * coeffs[ki] * amps[r[ci]]
            dv = (vP[ci] + hv[ki]) % d
            dw = (wP[ci] + hw[ki]) % d
            buf.add(
                r[ci].astype(np.int64),
                np.ascontiguousarray(cols[ci]),
                dv.astype(np.uint8),
                dw.astype(np.uint8),
                coeff,
            )
    buf.flush()
    # the source scratch (unpacked digits, occupancy) is dead weight for the
    # final merge, which is the allocation peak of the whole apply
    del digits, amps, occ, occ_rows, occ_cols, src
    state.src_digits = state.src_amps = None
    all_keys = [k for k, _ in state.runs]
    all_amps = [a for _, a in state.runs]
    state.runs.clear()
    for alpha, extra in extras:
        ext = extra._to_window(win)
        all_keys.append(ext._keys)
        all_amps.append(ext._amps * alpha)
    if not all_keys:
        return OperatorVector(d, lat, _win=win)
    keys = np.concatenate(all_keys, axis=0)
    av = np.concatenate(all_amps)
    del all_keys, all_amps
    keys, av = _sort_reduce(keys, av)
    keys, av = _drop_zeros(keys, av)
    return OperatorVector(d, lat, _win=win, _keys=keys, _amps=av)
