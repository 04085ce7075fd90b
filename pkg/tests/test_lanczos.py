"""Lanczos driver: frozen coefficients, termination, budget, checkpointing."""

import numpy as np
import pytest

from quditops.lanczos import model_fingerprint, run_lanczos, resume_lanczos
from quditops.lattice import LatticeSpec
from quditops.models import ModelSpec, SpinValue, build_hamiltonian, build_total_magnetization
from quditops.opvec import OperatorVector, TermList
from quditops.weyl import PhasedString, WeylString

TI1 = LatticeSpec(1, "thermodynamic")


def tfim():
    spec = ModelSpec(kind="ising", lattice=TI1, spin=SpinValue(1), J=1, hx=1, hz=1)
    return build_hamiltonian(spec), build_total_magnetization(SpinValue(1), TI1)


def spin1():
    spec = ModelSpec(
        kind="ising", lattice=TI1, spin=SpinValue(2), J=1 / np.sqrt(2), hx=1, hz=1
    )
    return build_hamiltonian(spec), build_total_magnetization(SpinValue(2), TI1)


def test_tfim_frozen_b():
    H, A = tfim()
    res = run_lanczos(H, A, 3)
    frozen = [np.sqrt(1.5), 1.8708286933869707, 1.9023794624823073]
    assert np.max(np.abs(np.array(res.b) - frozen)) < 1e-9
    assert res.terminated == "max_iterations"


def test_spin1_frozen_b_and_supports():
    H, A = spin1()
    res = run_lanczos(H, A, 6)
    frozen = [
        1.290994448736,
        2.033060090930,
        2.051356750087,
        2.757786959557,
        2.641468652099,
        3.822552318077,
    ]
    assert np.max(np.abs(np.array(res.b) - frozen)) < 1e-9
    assert res.support_sizes == (24, 122, 452, 702, 2632, 4808)


def test_fingerprint_stability_and_sensitivity():
    H, A = tfim()
    assert run_lanczos(H, A, 3).fingerprint == run_lanczos(H, A, 3).fingerprint
    assert model_fingerprint(H, A, 3, None) != model_fingerprint(H, A, 4, None)
    assert model_fingerprint(H, A, 3, None) != model_fingerprint(H, A, 3, 1000)


def test_keep_vectors_orthogonality():
    H, A = tfim()
    res = run_lanczos(H, A, 6, keep_vectors=True)
    assert res.orthogonality < 1e-8
    assert len(res.vectors) == 7


def test_keep_vectors_capped():
    H, A = tfim()
    with pytest.raises(ValueError):
        run_lanczos(H, A, 9, keep_vectors=True)


def test_conserved_seed_exhausts_immediately():
    Hdiag = TermList(
        2, TI1, [PhasedString(1.0, WeylString(2, [((0,), (0, 1)), ((1,), (0, 1))]))]
    )
    Adiag = OperatorVector.from_items(2, TI1, [(WeylString(2, [((0,), (0, 1))]), 1.0)])
    res = run_lanczos(Hdiag, Adiag, 5)
    assert res.b == ()
    assert res.terminated == "subspace_exhausted(1)"


def test_entry_budget_partial_result():
    H, A = spin1()
    res = run_lanczos(H, A, 8, entry_budget=3000)
    assert res.terminated == "budget_exceeded"
    assert 0 < len(res.b) < 8


def test_checkpoint_resume_matches_full_run(tmp_path):
    H, A = spin1()
    ckpt = str(tmp_path / "ck.npz")
    full = run_lanczos(H, A, 5)
    run_lanczos(H, A, 3, checkpoint_path=ckpt, checkpoint_every=3)
    cont = resume_lanczos(ckpt, H, 5)
    assert cont.b == full.b
    assert cont.support_sizes == full.support_sizes


def test_zero_seed_rejected():
    H, _ = tfim()
    zero = OperatorVector.from_items(2, TI1, [])
    with pytest.raises(ValueError):
        run_lanczos(H, zero, 2)
