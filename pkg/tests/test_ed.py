"""Internal consistency of the dense reference routes.

The two Lanczos recipes (full matrix, ring window) are algorithmically
unrelated, so agreement between them is evidence, not circularity.
"""

import numpy as np
import pytest

from quditops import ed
from quditops.lattice import LatticeSpec
from quditops.models import ModelSpec, SpinValue

rng = np.random.default_rng(3)


def rel(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return np.max(np.abs(a - b) / np.abs(b))


def test_window_route_matches_matrix_route():
    spec = ModelSpec(kind="potts", lattice=LatticeSpec(1, "ring", 7), d=3, J=1.0, h=0.8)
    bm, _ = ed.matrix_lanczos(ed.dense_build(spec), 3)
    bw = ed.ring_window_lanczos(spec, 3)
    assert rel(bw, bm) < 1e-11

    spec = ModelSpec(
        kind="ising",
        lattice=LatticeSpec(1, "ring", 7),
        spin=SpinValue(2),
        J=1 / np.sqrt(2),
        hx=1,
        hz=1,
    )
    bm, _ = ed.matrix_lanczos(ed.dense_build(spec), 3)
    bw = ed.ring_window_lanczos(spec, 3)
    assert rel(bw, bm) < 1e-11


def test_rabi_pair_closed_form():
    lat2 = LatticeSpec(1, "ring", 2)
    spec = ModelSpec(kind="ising", lattice=lat2, spin=SpinValue(1), J=0.8)
    system = ed.dense_build(spec)
    bm, terminated = ed.matrix_lanczos(system, 5)
    assert len(bm) == 1
    assert bm[0] == pytest.approx(0.4, abs=1e-12)
    assert "exhaust" in terminated
    ts = np.linspace(0, 5, 40)
    C = ed.dense_autocorr(system, ts)
    assert np.max(np.abs(C - np.cos(0.4 * ts))) < 1e-12


def test_free_fermion_energies():
    spec = ModelSpec(kind="potts", lattice=LatticeSpec(1, "chain", 4), d=2, J=1.3, h=0.7)
    system = ed.dense_build(spec)
    dense = np.sort(np.linalg.eigvalsh(system.H.toarray()))
    ff = ed.free_fermion_energies(4, 1.3, 0.7)
    assert np.max(np.abs(dense - ff)) < 1e-10


def test_superoperator_vec_identity():
    spec = ModelSpec(kind="ising", lattice=LatticeSpec(1, "ring", 2), spin=SpinValue(1), J=0.8)
    H = ed.dense_build(spec).H
    A = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    lhs = ed.liouvillian_superoperator(H) @ A.reshape(-1)
    rhs = (H.toarray() @ A - A @ H.toarray()).reshape(-1)
    assert np.max(np.abs(lhs - rhs)) < 1e-12


def test_dense_autocorr_initial_value_and_parity():
    spec = ModelSpec(kind="ising", lattice=LatticeSpec(1, "ring", 4), spin=SpinValue(1), J=1, hx=0.6, hz=0.4)
    system = ed.dense_build(spec)
    ts = np.linspace(0, 2, 21)
    C = ed.dense_autocorr(system, ts)
    assert C[0] == pytest.approx(1.0, abs=1e-12)
    Cm = ed.dense_autocorr(system, -ts)
    assert np.max(np.abs(C - Cm)) < 1e-12


def test_dense_lanczos_dispatch():
    # small d=2 ring goes through the full matrix; the d=3 ring at the same
    # size exceeds the matrix cap and must take the window route.  Both are
    # exercised at modest n to keep this quick.
    spec = ModelSpec(kind="ising", lattice=LatticeSpec(1, "ring", 8), spin=SpinValue(1), J=1, hx=1, hz=1)
    b = np.asarray(ed.dense_lanczos(spec, 3))
    assert len(b) == 3
    assert np.all(b > 0)
