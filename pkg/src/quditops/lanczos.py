"""Operator-space Lanczos iteration on string vectors.

Implements the three-term recurrence

    A_0 = A / ||A||,    b_n A_n = [H, A_{n-1}] - b_{n-1} A_{n-2}

with the trace inner product, keeping only two vectors.  The commutator and
the b_{n-1} subtraction happen in one engine call so each step does a single
sorted merge.  A verification mode retains all vectors (small n only) to
measure the orthogonality actually achieved.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from ._version import __version__
from .lattice import LatticeSpec
from .opvec import (
    BudgetExceededError,
    OperatorVector,
    TermList,
    _pack_keys,
    _Window,
    apply_liouvillian,
)

EXHAUSTION_THRESHOLD = 1e-10
KEEP_VECTORS_MAX = 8


@dataclass(frozen=True)
class LanczosResult:
    """b_n values with bookkeeping.

    ``terminated`` is one of ``max_iterations``, ``subspace_exhausted(n)``
    or ``budget_exceeded``; in the last case ``b`` holds the completed
    prefix.  ``support_sizes[i]`` counts the strings of A_{i+1}.
    """

    b: tuple[float, ...]
    support_sizes: tuple[int, ...]
    terminated: str
    fingerprint: str
    vectors: tuple[OperatorVector, ...] | None = None
    orthogonality: float | None = None

    @property
    def n_computed(self) -> int:
        return len(self.b)


def model_fingerprint(
    hamiltonian: TermList, seed: OperatorVector, n_max: int, entry_budget
) -> str:
    """Stable hash of everything that determines a run's output."""
    h = hashlib.sha256()
    h.update(f"quditops {__version__}\n".encode())
    lat = hamiltonian.lattice
    h.update(
        f"d={hamiltonian.d} lattice=({lat.dimension},{lat.kind},{lat.size},"
        f"{lat.size_y},{lat.cell}) n_max={n_max} budget={entry_budget}\n".encode()
    )
    for coeff, string in hamiltonian:
        h.update(f"H {sorted(string.factors.items())!r} {coeff:.17e}\n".encode())
    for string, coeff in seed.items():
        h.update(f"A {sorted(string.factors.items())!r} {coeff:.17e}\n".encode())
    return h.hexdigest()[:16]


def run_lanczos(
    hamiltonian: TermList,
    seed: OperatorVector,
    n_max: int,
    *,
    entry_budget: int | None = None,
    keep_vectors: bool = False,
    checkpoint_path: str | None = None,
    checkpoint_every: int = 0,
) -> LanczosResult:
    """Compute b_1..b_n_max for the seed observable under the Hamiltonian.

    ``keep_vectors`` retains every normalized A_n and reports the worst
    deviation of inner(A_i, A_j) from delta_ij (capped at n_max <= 8: the
    point of the two-vector recurrence is that keeping all is unaffordable).
    ``checkpoint_path``/``checkpoint_every`` snapshot (A_{n-1}, A_n, b) so
    long runs can resume via :func:`resume_lanczos`.
    """
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    if keep_vectors and n_max > KEEP_VECTORS_MAX:
        raise ValueError(f"keep_vectors mode is limited to n_max <= {KEEP_VECTORS_MAX}")
    nrm = seed.norm()
    if nrm == 0.0:
        raise ValueError("zero seed operator")
    fingerprint = model_fingerprint(hamiltonian, seed, n_max, entry_budget)
    state = _RunState(
        hamiltonian=hamiltonian,
        n_max=n_max,
        entry_budget=entry_budget,
        fingerprint=fingerprint,
        checkpoint_path=checkpoint_path,
        checkpoint_every=checkpoint_every,
        keep_vectors=keep_vectors,
    )
    state.cur = seed.scaled(1.0 / nrm)
    return state.drive()


class _RunState:
    """Iteration state shared by fresh runs and resumed runs."""

    def __init__(
        self,
        hamiltonian,
        n_max,
        entry_budget,
        fingerprint,
        checkpoint_path=None,
        checkpoint_every=0,
        keep_vectors=False,
    ):
        self.hamiltonian = hamiltonian
        self.n_max = n_max
        self.entry_budget = entry_budget
        self.fingerprint = fingerprint
        self.checkpoint_path = checkpoint_path
        self.checkpoint_every = checkpoint_every
        self.keep_vectors = keep_vectors
        self.bs: list[float] = []
        self.supports: list[int] = []
        self.prev: OperatorVector | None = None
        self.cur: OperatorVector | None = None

    def drive(self) -> LanczosResult:
        kept = [self.cur] if self.keep_vectors else None
        terminated = "max_iterations"
        for n in range(len(self.bs) + 1, self.n_max + 1):
            extras = [(-self.bs[-1], self.prev)] if self.prev is not None else []
            try:
                tilde = apply_liouvillian(
                    self.hamiltonian,
                    self.cur,
                    extras=extras,
                    entry_budget=self.entry_budget,
                )
            except BudgetExceededError:
                terminated = "budget_exceeded"
                break
            b = tilde.norm()
            if b < EXHAUSTION_THRESHOLD:
                terminated = f"subspace_exhausted({n})"
                break
            self.bs.append(float(b))
            self.prev, self.cur = self.cur, tilde.scaled(1.0 / b)
            self.supports.append(self.cur.num_terms)
            if kept is not None:
                kept.append(self.cur)
            if (
                self.checkpoint_path
                and self.checkpoint_every
                and n % self.checkpoint_every == 0
            ):
                save_checkpoint(self.checkpoint_path, self)
        ortho = None
        if kept is not None:
            ortho = 0.0
            for i, u in enumerate(kept):
                for j, v in enumerate(kept):
                    if j < i:
                        continue
                    delta = 1.0 if i == j else 0.0
                    ortho = max(ortho, abs(u.inner(v) - delta))
        return LanczosResult(
            b=tuple(self.bs),
            support_sizes=tuple(self.supports),
            terminated=terminated,
            fingerprint=self.fingerprint,
            vectors=tuple(kept) if kept is not None else None,
            orthogonality=ortho,
        )


def _vector_payload(tag: str, vec: OperatorVector) -> dict:
    win = vec._win
    return {
        f"{tag}_digits": vec.digits(),
        f"{tag}_amps": vec.amplitudes(),
        f"{tag}_width": np.array([win.width, win.half_y]),
    }


def _vector_from_payload(data, tag: str, d: int, lattice: LatticeSpec) -> OperatorVector:
    width, half_y = (int(x) for x in data[f"{tag}_width"])
    win = _Window(lattice, width=width, half_y=half_y)
    digits = np.ascontiguousarray(data[f"{tag}_digits"], dtype=np.uint8)
    amps = np.ascontiguousarray(data[f"{tag}_amps"], dtype=np.complex128)
    keys = _pack_keys(digits, d)
    return OperatorVector(d, lattice, _win=win, _keys=keys, _amps=amps, _digits=digits)


def save_checkpoint(path: str, state: _RunState) -> None:
    payload = {
        "b": np.array(state.bs, dtype=float),
        "support_sizes": np.array(state.supports, dtype=np.int64),
        "fingerprint": np.array(state.fingerprint),
        "d": np.array(state.hamiltonian.d),
    }
    payload.update(_vector_payload("cur", state.cur))
    if state.prev is not None:
        payload.update(_vector_payload("prev", state.prev))
    np.savez_compressed(path, **payload)


def resume_lanczos(
    path: str,
    hamiltonian: TermList,
    n_max: int,
    *,
    entry_budget: int | None = None,
    checkpoint_path: str | None = None,
    checkpoint_every: int = 0,
) -> LanczosResult:
    """Continue a checkpointed run up to n_max.

    The checkpoint must come from the same model: the stored fingerprint's
    model part is re-derived from the Hamiltonian and compared.
    """
    data = np.load(path, allow_pickle=False)
    d = int(data["d"])
    if d != hamiltonian.d:
        raise ValueError("checkpoint qudit dimension does not match the Hamiltonian")
    lattice = hamiltonian.lattice
    cur = _vector_from_payload(data, "cur", d, lattice)
    prev = _vector_from_payload(data, "prev", d, lattice) if "prev_digits" in data else None
    state = _RunState(
        hamiltonian=hamiltonian,
        n_max=n_max,
        entry_budget=entry_budget,
        fingerprint=str(data["fingerprint"]),
        checkpoint_path=checkpoint_path,
        checkpoint_every=checkpoint_every,
    )
    state.bs = [float(x) for x in data["b"]]
    state.supports = [int(x) for x in data["support_sizes"]]
    state.prev, state.cur = prev, cur
    return state.drive()
