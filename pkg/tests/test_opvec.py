"""Engine application vs a scalar reference built on the string primitives."""

import numpy as np
import pytest

from quditops.lattice import LatticeSpec
from quditops.opvec import OperatorVector, TermList, apply_liouvillian, canonical_anchor
from quditops.weyl import PhasedString, WeylString, adjoint as weyl_adjoint, commutator

rng = np.random.default_rng(7)


def scalar_apply_finite(tl, items):
    out = {}
    for coeff, t in tl.terms:
        for s, a in items.items():
            c = commutator(t, s)
            if c is None:
                continue
            ph, ns = c
            if ns.is_identity:
                continue
            out[ns] = out.get(ns, 0.0) + coeff * ph * a
    return {k: v for k, v in out.items() if abs(v) > 1e-14}


def scalar_apply_ti(tl, lat, items):
    # Brute-force scan over every translate of every term that can touch the
    # string's support; slow but independent of the engine's bookkeeping.
    out = {}
    dim = lat.dimension
    cell = lat.cell
    for coeff, t in tl.terms:
        tsupp = sorted(t.support)
        for s, a in items.items():
            ssupp = sorted(s.support)
            if dim == 1:
                lo = min(x[0] for x in ssupp) - max(x[0] for x in tsupp) - 1
                hi = max(x[0] for x in ssupp) + 1
                shifts = [(o,) for o in range(lo, hi + 1) if o % cell == 0]
            else:
                xs = [x for x, y in ssupp]
                ys = [y for x, y in ssupp]
                txs = [x for x, y in tsupp]
                tys = [y for x, y in tsupp]
                shifts = [
                    (ox, oy)
                    for ox in range(min(xs) - max(txs) - 1, max(xs) + 2)
                    for oy in range(min(ys) - max(tys) - 1, max(ys) + 2)
                ]
            for sh in shifts:
                tt = t.translate(sh)
                if not (set(tt.support) & set(s.support)):
                    continue
                c = commutator(tt, s)
                if c is None:
                    continue
                ph, ns = c
                if ns.is_identity:
                    continue
                anc, _ = canonical_anchor(ns, lat)
                out[anc] = out.get(anc, 0.0) + coeff * ph * a
    return {k: v for k, v in out.items() if abs(v) > 1e-14}


def assert_same(ref, vec, tol=1e-12):
    got = dict(vec.items())
    keys = set(ref) | set(got)
    worst = max((abs(ref.get(k, 0.0) - got.get(k, 0.0)) for k in keys), default=0.0)
    assert worst < tol, f"worst amplitude mismatch {worst:.2e}"


def rand_string(d, sites, maxsupp=3):
    n = int(rng.integers(1, maxsupp + 1))
    picks = rng.choice(len(sites), size=min(n, len(sites)), replace=False)
    fac = []
    for i in picks:
        v, w = int(rng.integers(0, d)), int(rng.integers(0, d))
        if v == 0 and w == 0:
            v = 1
        fac.append((sites[i], (v, w)))
    return WeylString(d, fac)


@pytest.mark.parametrize("d", [2, 3])
def test_apply_on_finite_ring(d):
    L = 6
    lat = LatticeSpec(kind="ring", size=L)
    terms = []
    for i in range(L):
        j = (i + 1) % L
        terms.append(
            PhasedString(
                0.37 + (0.1j if d == 3 else 0),
                WeylString(d, [((i,), (1, 0)), ((j,), (1, 0))]),
            )
        )
        if d == 3:
            terms.append(
                PhasedString(
                    0.37 - 0.1j, WeylString(d, [((i,), (d - 1, 0)), ((j,), (d - 1, 0))])
                )
            )
        terms.append(PhasedString(0.21, WeylString(d, [((i,), (0, 1))])))
        if d == 3:
            terms.append(PhasedString(0.21, WeylString(d, [((i,), (0, d - 1))])))
    tl = TermList(d, lat, terms)
    assert tl.hermitian
    items = {}
    for _ in range(8):
        s = rand_string(d, [(i,) for i in range(L)])
        items[s] = items.get(s, 0.0) + complex(rng.normal(), rng.normal())
    vec = OperatorVector.from_items(d, lat, list(items.items()))
    assert_same(scalar_apply_finite(tl, items), apply_liouvillian(tl, vec))


@pytest.mark.parametrize("d,cell", [(2, 1), (3, 1), (3, 2)])
def test_apply_translation_invariant_1d(d, cell):
    lat = LatticeSpec(kind="thermodynamic", cell=cell)
    terms = [PhasedString(0.5, WeylString(d, [((0,), (1, 0)), ((1,), (1, 0))]))]
    if d == 3:
        terms.append(PhasedString(0.5, WeylString(d, [((0,), (2, 0)), ((1,), (2, 0))])))
    terms.append(PhasedString(0.3, WeylString(d, [((0,), (0, 1))])))
    if d == 3:
        terms.append(PhasedString(0.3, WeylString(d, [((0,), (0, 2))])))
    if cell == 2:
        terms.append(PhasedString(0.7, WeylString(d, [((1,), (0, 1)), ((2,), (0, 2))])))
        terms.append(PhasedString(0.7, WeylString(d, [((1,), (0, 2)), ((2,), (0, 1))])))
    tl = TermList(d, lat, terms)
    items = {}
    for _ in range(6):
        s = rand_string(d, [(i,) for i in range(4)])
        anc, _ = canonical_anchor(s, lat)
        items[anc] = items.get(anc, 0.0) + complex(rng.normal(), rng.normal())
    vec = OperatorVector.from_items(d, lat, list(items.items()))
    for _ in range(3):
        ref = scalar_apply_ti(tl, lat, items)
        out = apply_liouvillian(tl, vec, reserve_width=16)
        assert_same(ref, out)
        items, vec = ref, out


@pytest.mark.parametrize("d", [2, 3])
def test_apply_translation_invariant_2d(d):
    lat = LatticeSpec(kind="thermodynamic", dimension=2)
    terms = []
    for bond in (((0, 0), (1, 0)), ((0, 0), (0, 1))):
        terms.append(PhasedString(0.4, WeylString(d, [(bond[0], (1, 0)), (bond[1], (1, 0))])))
        if d == 3:
            terms.append(
                PhasedString(0.4, WeylString(d, [(bond[0], (2, 0)), (bond[1], (2, 0))]))
            )
    terms.append(PhasedString(0.25, WeylString(d, [((0, 0), (0, 1))])))
    if d == 3:
        terms.append(PhasedString(0.25, WeylString(d, [((0, 0), (0, 2))])))
    tl = TermList(d, lat, terms)
    items = {}
    for _ in range(4):
        s = rand_string(d, [(x, y) for x in range(2) for y in range(-1, 2)], maxsupp=2)
        anc, _ = canonical_anchor(s, lat)
        items[anc] = items.get(anc, 0.0) + complex(rng.normal(), rng.normal())
    vec = OperatorVector.from_items(d, lat, list(items.items()))
    for _ in range(3):
        ref = scalar_apply_ti(tl, lat, items)
        out = apply_liouvillian(tl, vec, reserve_width=10, reserve_half_y=8)
        assert_same(ref, out)
        items, vec = ref, out


def test_inner_norm_axpy_adjoint():
    d = 3
    lat = LatticeSpec(kind="thermodynamic")
    sa = {
        rand_string(d, [(i,) for i in range(3)]): complex(rng.normal(), rng.normal())
        for _ in range(5)
    }
    sb = {
        rand_string(d, [(i,) for i in range(4)]): complex(rng.normal(), rng.normal())
        for _ in range(5)
    }
    sa = {canonical_anchor(k, lat)[0]: v for k, v in sa.items()}
    sb = {canonical_anchor(k, lat)[0]: v for k, v in sb.items()}
    va = OperatorVector.from_items(d, lat, list(sa.items()))
    vb = OperatorVector.from_items(d, lat, list(sb.items()))

    ref_inner = sum(np.conj(a) * sb.get(s, 0.0) for s, a in sa.items())
    assert abs(va.inner(vb) - ref_inner) < 1e-13
    assert abs(va.norm() ** 2 - sum(abs(a) ** 2 for a in sa.values())) < 1e-13

    vax = va.axpy(2.0 - 1.0j, vb)
    ref_ax = dict(sb)
    for s, a in sa.items():
        ref_ax[s] = ref_ax.get(s, 0.0) + (2.0 - 1.0j) * a
    got_ax = dict(vax.items())
    assert all(abs(got_ax.get(s, 0.0) - v) < 1e-13 for s, v in ref_ax.items())

    got_adj = dict(va.adjoint().items())
    ref_adj = {}
    for s, a in sa.items():
        coeff, sd = weyl_adjoint(s)
        ref_adj[sd] = np.conj(a) * coeff
    assert set(got_adj) == set(ref_adj)
    assert all(abs(got_adj[s] - ref_adj[s]) < 1e-13 for s in ref_adj)
    assert va.adjoint().adjoint().allclose(va)


def test_anchor_idempotent_and_translate_covariant():
    for lat in (
        LatticeSpec(kind="thermodynamic"),
        LatticeSpec(kind="thermodynamic", cell=2),
        LatticeSpec(kind="thermodynamic", dimension=2),
    ):
        for _ in range(30):
            if lat.dimension == 1:
                sites = [(i,) for i in range(-3, 4)]
            else:
                sites = [(x, y) for x in range(-2, 3) for y in range(-2, 3)]
            s = rand_string(3, sites, maxsupp=2)
            anc, shift = canonical_anchor(s, lat)
            assert anc == s.translate(shift)
            anc2, shift2 = canonical_anchor(anc, lat)
            assert anc2 == anc
            assert all(c == 0 for c in shift2)
