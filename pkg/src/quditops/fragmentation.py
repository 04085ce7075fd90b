"""Dynamically closed operator subspaces.

Repeated commutation with a Hamiltonian of phased-string terms can only
reach strings connected to the seed through single-term commutators, so the
operator space fragments into equivalence classes: the connected components
of the adjacency relation

    Q ~ P  iff  some term h of H has [h, P] proportional to Q.

The relation is symmetric because the string part of [h, P] determines P
from Q by the inverse exponent shift.  This module enumerates classes by
breadth-first search, builds the restricted generator M with M[m, k] the
coefficient of P_m in [H, P_k], and integrates the exact Heisenberg dynamics
df/dt = i M f inside a class.

Class membership depends only on which commutators vanish, an exact integer
condition, so coupling magnitudes never matter (they must merely be
nonzero); see class_is_coupling_independent in the tests.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.integrate import solve_ivp

from .opvec import OperatorVector, TermList
from .weyl import WeylString, commutator

DEFAULT_CLASS_CAP = 10**8


@dataclass(frozen=True)
class EquivalenceReport:
    """Classes reached from a seed's string expansion.

    ``oed`` counts the reachable strings (the dimension of the evolution
    space of the seed itself); ``unital_dimension`` adds one for the
    identity string, which commutators never produce but which spans its
    own invariant direction — closed-form dimension counts quoted for the
    alternating-bond chain include it.  ``cap_hit`` marks a truncated
    search, making ``oed`` a lower bound.
    """

    seed: str
    class_count: int
    class_sizes: tuple[int, ...]
    oed: int
    unital_dimension: int
    strings: tuple[WeylString, ...]
    cap_hit: bool


@dataclass(frozen=True)
class RestrictedLiouvillian:
    """[H, .] restricted to one closed class: M[m, k] = coeff of P_m in [H, P_k]."""

    strings: tuple[WeylString, ...]
    matrix: sp.csr_matrix


def adjacency(P: WeylString, H: TermList) -> set[WeylString]:
    """String parts of the nonvanishing commutators [h, P], h a term of H."""
    out = set()
    for _, h in H:
        res = commutator(h, P)
        if res is not None and not res.string.is_identity:
            out.add(res.string)
    return out


def _seed_strings(seed) -> tuple[list[WeylString], str]:
    if isinstance(seed, OperatorVector):
        strings = [s for s, _ in seed.items()]
        return strings, f"operator with {len(strings)} strings"
    if isinstance(seed, WeylString):
        return [seed], seed.to_text()
    strings = list(seed)
    return strings, f"{len(strings)} strings"


def equivalence_classes(seed, H: TermList, cap: int = DEFAULT_CLASS_CAP) -> EquivalenceReport:
    """Breadth-first closure of the seed's strings under adjacency.

    One BFS per seed string not already reached; each yields one class
    (connected component).  Deterministic order: neighbors are expanded in
    sorted string order.  Exceeding ``cap`` aborts with partial results.
    """
    if H.lattice.translation_invariant:
        raise ValueError("class enumeration needs a finite lattice")
    seeds, description = _seed_strings(seed)
    visited: dict[WeylString, int] = {}
    order: list[WeylString] = []
    sizes: list[int] = []
    cap_hit = False
    for s0 in seeds:
        if s0.is_identity or s0 in visited:
            continue
        label = len(sizes)
        size = 0
        queue = deque([s0])
        visited[s0] = label
        while queue:
            if len(visited) > cap:
                cap_hit = True
                queue.clear()
                break
            P = queue.popleft()
            order.append(P)
            size += 1
            for Q in sorted(adjacency(P, H)):
                if Q not in visited:
                    visited[Q] = label
                    queue.append(Q)
        sizes.append(size)
        if cap_hit:
            break
    oed = len(order)
    return EquivalenceReport(
        seed=description,
        class_count=len(sizes),
        class_sizes=tuple(sizes),
        oed=oed,
        unital_dimension=oed + 1,
        strings=tuple(order),
        cap_hit=cap_hit,
    )


def xz_zclass_dimension(n_sites: int) -> int:
    """Closed form for the unital dimension of the class of an interior
    Z-string seed on the open alternating-bond chain at d = 3."""
    return 3 ** (n_sites - 1) - (1 + (-1) ** n_sites)


def restricted_liouvillian(report: EquivalenceReport, H: TermList) -> RestrictedLiouvillian:
    """Structure constants of [H, .] on the class inventory.

    Every commutator of a term with an inventory string must land back in
    the inventory (classes are adjacency-closed); a miss is an internal
    invariant violation, not a user error.
    """
    if report.cap_hit:
        raise ValueError("cannot build the restricted generator from a truncated search")
    strings = report.strings
    index = {s: i for i, s in enumerate(strings)}
    rows, cols, vals = [], [], []
    for k, P in enumerate(strings):
        for coeff, h in H:
            res = commutator(h, P)
            if res is None:
                continue
            m = index.get(res.string)
            if m is None:
                raise AssertionError(
                    f"commutator left the class: {res.string.to_text()} "
                    f"from term {h.to_text()}"
                )
            rows.append(m)
            cols.append(k)
            vals.append(coeff * res.coeff)
    D = len(strings)
    M = sp.coo_matrix(
        (np.array(vals, dtype=complex), (rows, cols)), shape=(D, D)
    ).tocsr()
    M.sum_duplicates()
    M.data[np.abs(M.data) < 1e-15] = 0.0
    M.eliminate_zeros()
    return RestrictedLiouvillian(strings=strings, matrix=M)


def evolve_in_class(
    pieces: RestrictedLiouvillian | Sequence[tuple[float, RestrictedLiouvillian]],
    f0,
    t_grid,
    *,
    rtol: float = 1e-11,
    atol: float = 1e-13,
) -> np.ndarray:
    """Integrate df/dt = i M f; returns the (len(t_grid), D) trajectory.

    Piecewise-constant couplings: pass [(t_end_1, RL_1), (t_end_2, RL_2),
    ...] with increasing end times covering the grid; the generator is
    swapped at each boundary (same class inventory, rebuilt couplings).
    """
    ts = np.asarray(t_grid, dtype=float)
    if ts.size == 0 or np.any(np.diff(ts) <= 0.0) or ts[0] < 0.0:
        raise ValueError("t_grid must be increasing and nonnegative")
    if isinstance(pieces, RestrictedLiouvillian):
        pieces = [(float(ts[-1]), pieces)]
    f0 = np.asarray(f0, dtype=complex)
    if np.linalg.norm(f0) == 0.0:
        raise ValueError("zero initial coefficient vector")
    D = f0.size
    out = np.empty((ts.size, D), dtype=complex)
    t_cur = 0.0
    f_cur = f0.copy()
    done = 0
    if ts[0] == 0.0:
        out[0] = f0
        done = 1
    for t_end, rl in pieces:
        if t_end <= t_cur:
            raise ValueError("piece end times must increase")
        if rl.matrix.shape != (D, D):
            raise ValueError("generator size does not match the coefficient vector")
        M = rl.matrix
        take = ts[(ts > t_cur) & (ts <= t_end)]
        span_end = max(t_end, take[-1] if take.size else t_cur)
        sol = solve_ivp(
            lambda _, f: 1j * (M @ f),
            (t_cur, span_end),
            f_cur,
            method="DOP853",
            t_eval=list(take) + ([span_end] if (take.size == 0 or take[-1] < span_end) else []),
            rtol=rtol,
            atol=atol,
        )
        if not sol.success:
            raise RuntimeError(f"class evolution failed: {sol.message}")
        n_take = take.size
        out[done : done + n_take] = sol.y[:, :n_take].T
        done += n_take
        f_cur = sol.y[:, -1]
        t_cur = t_end
        if done == ts.size:
            break
    if done != ts.size:
        raise ValueError("pieces do not cover the time grid")
    return out
