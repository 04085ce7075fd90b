"""Exact arithmetic of generalized Pauli (clock/shift) strings.

A single-site operator is ``X^v Z^w`` with ``X`` the cyclic shift,
``Z = diag(1, w, w^2, ...)`` the clock, and ``w = exp(2*pi*i/d)``.  A string
is a finite tensor product of such factors, one per lattice site.  Strings
close under multiplication up to an integer power of ``w``, so every product
and commutator is tracked exactly: phases are integers mod d, and a
commutator is zero if and only if two integer phase exponents coincide.

Sites are coordinate tuples: ``(i,)`` in one dimension, ``(x, y)`` in two.
Bare integers are accepted anywhere a site is expected and normalized to
``(i,)``.
"""

from __future__ import annotations

import re
from functools import lru_cache
from typing import Iterable, Iterator, Mapping, NamedTuple

import numpy as np

Site = tuple  # (i,) or (x, y)


def _as_site(site) -> Site:
    if isinstance(site, tuple):
        if not site or not all(isinstance(c, (int, np.integer)) for c in site):
            raise ValueError(f"site must be a tuple of integers, got {site!r}")
        return tuple(int(c) for c in site)
    if isinstance(site, (int, np.integer)):
        return (int(site),)
    raise ValueError(f"site must be an int or tuple of ints, got {site!r}")


@lru_cache(maxsize=32)
def omega_powers(d: int) -> np.ndarray:
    """All d-th roots of unity, ``omega_powers(d)[k] == exp(2j*pi*k/d)``.

    A fixed table keeps phase values bit-identical across calls, which in
    turn keeps every downstream coefficient deterministic.
    """
    if d < 2:
        raise ValueError(f"qudit dimension must be >= 2, got {d}")
    k = np.arange(d)
    return np.exp(2j * np.pi * k / d)


@lru_cache(maxsize=32)
def clock_shift(d: int) -> tuple[np.ndarray, np.ndarray]:
    """The d-dimensional shift matrix X and clock matrix Z."""
    if d < 2:
        raise ValueError(f"qudit dimension must be >= 2, got {d}")
    X = np.zeros((d, d), dtype=complex)
    X[(np.arange(d) + 1) % d, np.arange(d)] = 1.0
    Z = np.diag(omega_powers(d))
    return X, Z


@lru_cache(maxsize=256)
def _local_matrix(d: int, v: int, w: int) -> np.ndarray:
    X, Z = clock_shift(d)
    M = np.linalg.matrix_power(X, v) @ np.linalg.matrix_power(Z, w)
    M.setflags(write=False)
    return M


class WeylString:
    """An exponent-labelled product ``prod_i X_i^{v_i} Z_i^{w_i}``.

    Immutable and hashable; equality is structural (same d, same factors).
    The identity string has no factors.  Factors with ``(v, w) == (0, 0)``
    are never stored.
    """

    __slots__ = ("d", "_factors", "_hash")

    def __init__(self, d: int, factors: Mapping[Site, tuple[int, int]] | Iterable = ()):
        if d < 2:
            raise ValueError(f"qudit dimension must be >= 2, got {d}")
        items = factors.items() if isinstance(factors, Mapping) else factors
        norm = []
        for site, vw in items:
            v, w = int(vw[0]) % d, int(vw[1]) % d
            if v == 0 and w == 0:
                continue
            norm.append((_as_site(site), (v, w)))
        norm.sort()
        sites = [s for s, _ in norm]
        if len(set(sites)) != len(sites):
            raise ValueError("duplicate site in factor list")
        if sites:
            dims = {len(s) for s in sites}
            if len(dims) != 1:
                raise ValueError("mixed site dimensionalities in one string")
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "_factors", tuple(norm))
        object.__setattr__(self, "_hash", hash((d, tuple(norm))))

    def __setattr__(self, *a):
        raise AttributeError("WeylString is immutable")

    @staticmethod
    def identity(d: int) -> "WeylString":
        return WeylString(d)

    @staticmethod
    def single(d: int, site, v: int, w: int) -> "WeylString":
        """One-site string X^v Z^w at `site`."""
        return WeylString(d, [(site, (v, w))])

    @property
    def factors(self) -> dict:
        """Site -> (v, w) map of the nontrivial factors."""
        return dict(self._factors)

    def items(self) -> Iterator[tuple[Site, tuple[int, int]]]:
        return iter(self._factors)

    @property
    def support(self) -> tuple[Site, ...]:
        return tuple(s for s, _ in self._factors)

    @property
    def is_identity(self) -> bool:
        return not self._factors

    def exponents(self, site) -> tuple[int, int]:
        site = _as_site(site)
        for s, vw in self._factors:
            if s == site:
                return vw
        return (0, 0)

    def translate(self, shift) -> "WeylString":
        """Rigidly shift every site by the vector `shift`."""
        shift = _as_site(shift)
        return WeylString(
            self.d,
            [(tuple(c + dc for c, dc in zip(s, shift)), vw) for s, vw in self._factors],
        )

    def __eq__(self, other):
        return (
            isinstance(other, WeylString)
            and self.d == other.d
            and self._factors == other._factors
        )

    def __hash__(self):
        return self._hash

    def __lt__(self, other):
        if not isinstance(other, WeylString) or self.d != other.d:
            return NotImplemented
        return self._factors < other._factors

    def __repr__(self):
        return f"WeylString.from_text({self.to_text()!r})"

    def to_text(self) -> str:
        """Canonical text form, e.g. ``d=3; (0):X1Z2 (1):X0Z1``."""
        body = " ".join(
            f"({','.join(str(c) for c in s)}):X{v}Z{w}" for s, (v, w) in self._factors
        )
        return f"d={self.d}; {body}" if body else f"d={self.d}; I"

    _SITE_RE = re.compile(r"\((-?\d+(?:,-?\d+)*)\):X(\d+)Z(\d+)$")

    @staticmethod
    def from_text(text: str) -> "WeylString":
        head, _, body = text.partition(";")
        head = head.strip()
        if not head.startswith("d="):
            raise ValueError(f"missing 'd=' header in {text!r}")
        d = int(head[2:])
        body = body.strip()
        factors = []
        if body and body != "I":
            for tok in body.split():
                m = WeylString._SITE_RE.match(tok)
                if not m:
                    raise ValueError(f"bad factor token {tok!r} in {text!r}")
                site = tuple(int(c) for c in m.group(1).split(","))
                factors.append((site, (int(m.group(2)), int(m.group(3)))))
        return WeylString(d, factors)


class PhasedString(NamedTuple):
    """A string with a nonzero complex prefactor."""

    coeff: complex
    string: WeylString


def phase_exponent(a: WeylString, b: WeylString) -> int:
    """Integer k such that ``a * b = omega^k * (exponent-wise sum)``.

    Reordering the Z factors of `a` past the X factors of `b` on each shared
    site contributes ``w_a * v_b`` each; nothing else does.
    """
    if a.d != b.d:
        raise ValueError(f"mixed qudit dimensions {a.d} and {b.d}")
    bf = dict(b._factors)
    k = 0
    for site, (_, w) in a._factors:
        vb = bf.get(site)
        if vb is not None:
            k += w * vb[0]
    return k % a.d


def multiply(a: WeylString, b: WeylString) -> PhasedString:
    """Exact product ``a @ b`` as a single phased string."""
    k = phase_exponent(a, b)
    d = a.d
    merged = dict(a._factors)
    for site, (v, w) in b._factors:
        va, wa = merged.get(site, (0, 0))
        merged[site] = ((va + v) % d, (wa + w) % d)
    return PhasedString(complex(omega_powers(d)[k]), WeylString(d, merged))


def commutator(a: WeylString, b: WeylString) -> PhasedString | None:
    """``[a, b]`` as one phased string, or None when it vanishes.

    Both orderings produce the same exponent pattern, so the commutator is
    ``(omega^k1 - omega^k2) * string(a@b)``; vanishing is decided by the
    exact integer test ``k1 == k2``, never by a float threshold.
    """
    k1 = phase_exponent(a, b)
    k2 = phase_exponent(b, a)
    if k1 == k2:
        return None
    d = a.d
    om = omega_powers(d)
    merged = dict(a._factors)
    for site, (v, w) in b._factors:
        va, wa = merged.get(site, (0, 0))
        merged[site] = ((va + v) % d, (wa + w) % d)
    return PhasedString(complex(om[k1] - om[k2]), WeylString(d, merged))


def adjoint(a: WeylString) -> PhasedString:
    """``a^dagger`` as a phased string.

    Per site, ``(X^v Z^w)^dagger = omega^{v w} X^{d-v} Z^{d-w}``; the phases
    accumulate additively over sites.
    """
    d = a.d
    k = 0
    factors = []
    for site, (v, w) in a._factors:
        k += v * w
        factors.append((site, ((-v) % d, (-w) % d)))
    return PhasedString(complex(omega_powers(d)[k % d]), WeylString(d, factors))


def dense_matrix(a: WeylString, window: Iterable) -> np.ndarray:
    """Kronecker-product matrix of `a` over an explicit ordered site window.

    The window must cover the string's support; identity factors fill the
    remaining slots.  Index order follows the window order, leftmost site
    slowest.
    """
    window = [_as_site(s) for s in window]
    if len(set(window)) != len(window):
        raise ValueError("window contains repeated sites")
    fmap = dict(a._factors)
    missing = [s for s in fmap if s not in window]
    if missing:
        raise ValueError(f"window does not cover string support: {missing}")
    d = a.d
    M = np.eye(1, dtype=complex)
    for site in window:
        v, w = fmap.get(site, (0, 0))
        M = np.kron(M, _local_matrix(d, v, w))
    return M


def dense_phased(p: PhasedString, window: Iterable) -> np.ndarray:
    """Dense matrix of coeff * string over `window`."""
    return p.coeff * dense_matrix(p.string, window)
