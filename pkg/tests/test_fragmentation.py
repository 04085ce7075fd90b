"""Reachability classes, the restricted generator, and in-class evolution."""

import numpy as np
import scipy.linalg as sla
import pytest

from quditops import ed
from quditops import fragmentation as fr
from quditops.lattice import LatticeSpec
from quditops.models import ModelSpec, SpinValue, build_hamiltonian
from quditops.opvec import TermList
from quditops.weyl import PhasedString, WeylString, dense_matrix, commutator

rng = np.random.default_rng(3)


def zseed(d, site):
    return WeylString(d, [((site,), (0, 1))])


@pytest.fixture(scope="module")
def xz4():
    lat4 = LatticeSpec(1, "chain", 4)
    spec = ModelSpec(kind="xz_chain", lattice=lat4, d=3, first_bond="z")
    H = build_hamiltonian(spec)
    rep = fr.equivalence_classes(zseed(3, 1), H, cap=10**6)
    rl = fr.restricted_liouvillian(rep, H)
    return lat4, spec, H, rep, rl


@pytest.mark.parametrize("N", range(4, 9))
def test_z_class_closed_form(N):
    lat = LatticeSpec(1, "chain", N)
    spec = ModelSpec(kind="xz_chain", lattice=lat, d=3, first_bond="z")
    rep = fr.equivalence_classes(zseed(3, 1), build_hamiltonian(spec), cap=10**7)
    assert rep.unital_dimension == fr.xz_zclass_dimension(N)
    assert not rep.cap_hit
    assert rep.class_count == 1


def test_closed_form_values():
    # 3^(N-1) minus 2 on even N, minus 0 on odd N
    assert [fr.xz_zclass_dimension(n) for n in range(4, 9)] == [25, 81, 241, 729, 2185]


def test_adjacency_symmetric():
    lat5 = LatticeSpec(1, "chain", 5)
    H = build_hamiltonian(ModelSpec(kind="xz_chain", lattice=lat5, d=3))
    for _ in range(40):
        fac = []
        for s in range(5):
            v, w = rng.integers(0, 3, 2)
            if v or w:
                fac.append(((s,), (int(v), int(w))))
        if not fac:
            continue
        P = WeylString(3, fac)
        for Q in fr.adjacency(P, H):
            assert P in fr.adjacency(Q, H)


def test_adjacency_matches_dense_commutators():
    lat3 = LatticeSpec(1, "chain", 3)
    H = build_hamiltonian(
        ModelSpec(kind="ising", lattice=lat3, spin=SpinValue(1), J=1, hx=1, hz=1)
    )
    P = zseed(2, 0)
    window = [(0,), (1,), (2,)]
    Pm = dense_matrix(P, window)
    neigh = fr.adjacency(P, H)
    for coeff, h in H:
        hm = coeff * dense_matrix(h, window)
        comm = hm @ Pm - Pm @ hm
        if np.abs(comm).max() > 1e-13:
            res = commutator(h, P)
            assert res is not None
            assert res.string in neigh
            assert np.allclose(
                comm, coeff * res.coeff * dense_matrix(res.string, window), atol=1e-12
            )
        else:
            assert fr.adjacency(P, TermList(2, lat3, [PhasedString(coeff, h)])) == set()


def test_restricted_generator_hermitian_and_sparse(xz4):
    _, _, H, rep, rl = xz4
    assert rep.oed == 24
    Md = rl.matrix.toarray()
    assert np.abs(Md - Md.conj().T).max() < 1e-12
    assert max((rl.matrix[:, k].nnz for k in range(Md.shape[0])), default=0) <= len(H)


def test_restricted_generator_equals_projected_superoperator(xz4):
    _, spec, _, _, rl = xz4
    system = ed.dense_build(spec)
    Lsup = ed.liouvillian_superoperator(system.H)
    win4 = [(0,), (1,), (2,), (3,)]
    V = np.column_stack(
        [dense_matrix(s, win4).reshape(-1) for s in rl.strings]
    ) / np.sqrt(81)
    Mdense = V.conj().T @ (Lsup @ V)
    assert np.abs(rl.matrix.toarray() - Mdense).max() < 1e-10
    ev_sparse = np.linalg.eigvalsh(rl.matrix.toarray())
    ev_dense = np.linalg.eigvalsh(Mdense)
    assert np.abs(ev_sparse - ev_dense).max() < 1e-10


def test_class_evolution_matches_dense(xz4):
    _, spec, _, _, rl = xz4
    ts = np.linspace(0.0, 4.0, 41)
    idx0 = rl.strings.index(zseed(3, 1))
    f0 = np.zeros(len(rl.strings), dtype=complex)
    f0[idx0] = 1.0
    traj = fr.evolve_in_class(rl, f0, ts)
    assert np.abs(np.linalg.norm(traj, axis=1) - 1.0).max() < 1e-10

    win4 = [(0,), (1,), (2,), (3,)]
    Am = dense_matrix(zseed(3, 1), win4)
    Hd = ed.dense_build(spec).H.toarray()
    Cd = []
    for t in ts:
        U = sla.expm(1j * Hd * t)
        At = U @ Am @ U.conj().T
        Cd.append(np.trace(Am.conj().T @ At) / np.trace(Am.conj().T @ Am))
    assert np.abs(traj[:, idx0] - np.array(Cd)).max() < 1e-8


def test_commuting_seed_is_frozen():
    lat4 = LatticeSpec(1, "chain", 4)
    Hp = TermList(
        3,
        lat4,
        [
            PhasedString(1.0, WeylString(3, [((0,), (1, 0))])),
            PhasedString(1.0, WeylString(3, [((0,), (2, 0))])),
        ],
    )
    rep = fr.equivalence_classes(WeylString(3, [((0,), (1, 0))]), Hp)
    assert rep.oed == 1
    assert rep.class_sizes == (1,)
    rl = fr.restricted_liouvillian(rep, Hp)
    assert rl.matrix.nnz == 0
    traj = fr.evolve_in_class(rl, np.array([1.0 + 0j]), np.linspace(0, 4, 11))
    assert np.abs(traj - 1.0).max() < 1e-12


def test_piecewise_couplings(xz4):
    lat4, _, _, rep, rl = xz4
    spec_b = ModelSpec(
        kind="xz_chain", lattice=lat4, d=3, first_bond="z", jx=(0.5,), jy=(1.3,)
    )
    rlb = fr.restricted_liouvillian(rep, build_hamiltonian(spec_b))
    ts = np.linspace(0.0, 2.0, 21)
    idx0 = rl.strings.index(zseed(3, 1))
    f0 = np.zeros(len(rl.strings), dtype=complex)
    f0[idx0] = 1.0
    piece = fr.evolve_in_class([(1.0, rl), (2.0, rlb)], f0, ts)
    U1 = sla.expm(1j * rl.matrix.toarray() * 1.0)
    ref = []
    for t in ts:
        if t <= 1.0:
            ref.append(sla.expm(1j * rl.matrix.toarray() * t) @ f0)
        else:
            ref.append(sla.expm(1j * rlb.matrix.toarray() * (t - 1.0)) @ (U1 @ f0))
    assert np.abs(piece - np.array(ref)).max() < 1e-9


def test_classes_independent_of_coupling_values(xz4):
    lat4, _, _, rep, _ = xz4
    for seed_j in ((2.0,), (0.31,)):
        spec_j = ModelSpec(
            kind="xz_chain", lattice=lat4, d=3, first_bond="z", jx=seed_j, jy=(0.77,)
        )
        rep_j = fr.equivalence_classes(zseed(3, 1), build_hamiltonian(spec_j))
        assert set(rep_j.strings) == set(rep.strings)


def test_cap_reported():
    lat = LatticeSpec(1, "chain", 8)
    spec = ModelSpec(kind="xz_chain", lattice=lat, d=3, first_bond="z")
    rep = fr.equivalence_classes(zseed(3, 1), build_hamiltonian(spec), cap=50)
    assert rep.cap_hit
