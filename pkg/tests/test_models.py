"""Model builders: local algebra, term inventories, engine-vs-matrix checks."""

import numpy as np
import pytest

from quditops import ed
from quditops.lanczos import run_lanczos
from quditops.lattice import LatticeSpec
from quditops.models import (
    ModelSpec,
    SpinValue,
    build_hamiltonian,
    build_total_magnetization,
    coupling_convention,
    decompose_local,
    spin_matrices,
)
from quditops.opvec import OperatorVector
from quditops.weyl import WeylString, clock_shift

rng = np.random.default_rng(7)
TI1 = LatticeSpec(dimension=1, kind="thermodynamic")


def rel(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return np.max(np.abs(a - b) / np.abs(b))


def find(tl, fac):
    for c, s in tl:
        if s.factors == fac:
            return c
    return None


@pytest.mark.parametrize("twoS", range(1, 7))
def test_spin_matrices_su2(twoS):
    s = SpinValue(twoS)
    Sx, Sy, Sz = spin_matrices(s)
    assert np.allclose(Sx @ Sy - Sy @ Sx, 1j * Sz, atol=1e-12)
    casimir = Sx @ Sx + Sy @ Sy + Sz @ Sz
    assert np.allclose(casimir, s.S * (s.S + 1) * np.eye(s.d), atol=1e-12)


def test_spin_matrices_known_entries():
    assert np.allclose(spin_matrices(SpinValue(1))[0], [[0, 0.5], [0.5, 0]])
    assert np.allclose(spin_matrices(SpinValue(2))[2], np.diag([1, 0, -1]))


def test_spin_value_labels():
    assert SpinValue(1).d == 2
    assert SpinValue(2).d == 3
    assert SpinValue(1).S == pytest.approx(0.5)


def test_coupling_convention_matches_casimir():
    for twoS in (1, 2, 3, 4):
        s = SpinValue(twoS)
        assert coupling_convention(s) == pytest.approx(1.0 / np.sqrt(s.S * (s.S + 1)))


@pytest.mark.parametrize("d", [2, 3, 4, 5])
def test_decompose_local_reconstructs(d):
    M = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    comps = decompose_local(M)
    X, Z = clock_shift(d)
    R = np.zeros((d, d), dtype=complex)
    for (a, b), c in comps.items():
        R += c * np.linalg.matrix_power(X, a) @ np.linalg.matrix_power(Z, b)
    assert np.allclose(R, M, atol=1e-12)
    parseval = sum(abs(c) ** 2 for c in comps.values())
    assert abs(parseval - np.trace(M.conj().T @ M).real / d) < 1e-10


def test_decompose_local_known_components():
    c2 = decompose_local(spin_matrices(SpinValue(1))[0])
    assert set(c2) == {(1, 0)}
    assert c2[(1, 0)] == pytest.approx(0.5)
    om = np.exp(2j * np.pi / 3)
    c3 = decompose_local(spin_matrices(SpinValue(2))[2])
    assert set(c3) == {(0, 1), (0, 2)}
    assert abs(c3[(0, 1)] - (1 - om) / 3) < 1e-13
    assert abs(c3[(0, 2)] - (1 - om**2) / 3) < 1e-13


def test_tfim_term_inventory():
    tl = build_hamiltonian(
        ModelSpec(kind="ising", lattice=TI1, spin=SpinValue(1), J=1, hx=1, hz=1)
    )
    assert len(tl) == 3
    assert find(tl, {(0,): (1, 0), (1,): (1, 0)}) == pytest.approx(0.25)
    assert find(tl, {(0,): (1, 0)}) == pytest.approx(0.5)
    assert find(tl, {(0,): (0, 1)}) == pytest.approx(0.5)


def test_potts_term_inventory():
    p2 = build_hamiltonian(ModelSpec(kind="potts", lattice=TI1, d=2, J=1, h=1))
    assert len(p2) == 2
    assert find(p2, {(0,): (0, 1), (1,): (0, 1)}) == pytest.approx(1.0)
    assert find(p2, {(0,): (1, 0)}) == pytest.approx(2.0)
    p3 = build_hamiltonian(ModelSpec(kind="potts", lattice=TI1, d=3, J=1, h=1))
    assert len(p3) == 4
    assert find(p3, {(0,): (0, 1), (1,): (0, 2)}) == pytest.approx(1.0)
    assert find(p3, {(0,): (0, 2), (1,): (0, 1)}) == pytest.approx(1.0)
    assert find(p3, {(0,): (1, 0)}) == pytest.approx(1.0)
    assert find(p3, {(0,): (2, 0)}) == pytest.approx(1.0)


@pytest.mark.parametrize(
    "spec",
    [
        ModelSpec(kind="ising", lattice=LatticeSpec(1, "ring", 6), spin=SpinValue(2), J=0.7, hx=1, hz=0.3),
        ModelSpec(kind="potts", lattice=LatticeSpec(1, "chain", 5), d=3, J=1.1, h=0.4),
        ModelSpec(kind="xz_chain", lattice=LatticeSpec(1, "ring", 6), d=3, jx=(1.0,), jy=(0.7,)),
        ModelSpec(kind="xz_chain", lattice=LatticeSpec(1, "ring", 6), d=3, first_bond="z"),
        ModelSpec(kind="xz_chain", lattice=LatticeSpec(1, "chain", 5), d=2),
        ModelSpec(kind="xz_chain", lattice=LatticeSpec(1, "thermodynamic", cell=2), d=3),
        ModelSpec(kind="ising", lattice=LatticeSpec(2, "torus", 3, size_y=3), spin=SpinValue(2), J=1, hx=1, hz=1),
    ],
    ids=["ising-ring6", "potts-chain5", "xz-x-first", "xz-z-first", "xz-d2", "xz-cell2", "ising-torus"],
)
def test_hamiltonians_hermitian(spec):
    assert build_hamiltonian(spec).hermitian


def test_xz_ring2_term_count():
    tl = build_hamiltonian(ModelSpec(kind="xz_chain", lattice=LatticeSpec(1, "ring", 2), d=3))
    assert len(tl) == 4


def test_tfim_frozen_coefficients():
    spec = ModelSpec(kind="ising", lattice=TI1, spin=SpinValue(1), J=1, hx=1, hz=1)
    res = run_lanczos(
        build_hamiltonian(spec), build_total_magnetization(SpinValue(1), TI1), 3
    )
    frozen = [np.sqrt(1.5), 1.8708286933869707, 1.9023794624823073]
    assert rel(res.b, frozen) < 1e-9


def test_engine_matches_matrix_ising_ring8():
    lat8 = LatticeSpec(1, "ring", 8)
    spec = ModelSpec(kind="ising", lattice=lat8, spin=SpinValue(1), J=1.0, hx=0.9, hz=0.7)
    bm, _ = ed.matrix_lanczos(ed.dense_build(spec), 6)
    res = run_lanczos(
        build_hamiltonian(spec), build_total_magnetization(SpinValue(1), lat8), 6
    )
    assert rel(res.b, bm) < 1e-10


def test_engine_matches_matrix_potts_ring6():
    lat6 = LatticeSpec(1, "ring", 6)
    spec = ModelSpec(kind="potts", lattice=lat6, d=3, J=1.0, h=0.8)
    bm, _ = ed.matrix_lanczos(ed.dense_build(spec), 4)
    res = run_lanczos(
        build_hamiltonian(spec), build_total_magnetization(SpinValue(2), lat6), 4
    )
    assert rel(res.b, bm) < 1e-10


def test_engine_matches_matrix_xz_ring6():
    lat6 = LatticeSpec(1, "ring", 6)
    spec = ModelSpec(kind="xz_chain", lattice=lat6, d=3, jx=(1.0,), jy=(0.7,))
    X3, Z3 = clock_shift(3)
    bm, _ = ed.matrix_lanczos(ed.dense_build(spec), 4, A0=ed._place({0: Z3}, 6, 3))
    seed = OperatorVector.from_items(3, lat6, [(WeylString(3, [((0,), (0, 1))]), 1.0)])
    res = run_lanczos(build_hamiltonian(spec), seed, 4)
    assert rel(res.b, bm) < 1e-10


def test_magnetization_seed_normalizable():
    m = build_total_magnetization(SpinValue(2), TI1)
    assert m.norm() > 0
    for s, _ in m.items():
        assert not s.is_identity
