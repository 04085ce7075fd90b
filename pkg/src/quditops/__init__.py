"""Matrix-free operator dynamics for qudit lattice models.

Strings of clock/shift operators form an orthonormal operator basis; this
package propagates observables through repeated commutation with a local
Hamiltonian in that basis, extracts Lanczos coefficients, reconstructs
infinite-temperature autocorrelation functions, and enumerates dynamically
closed operator subspaces.
"""

from ._version import __version__
from .lattice import LatticeSpec
from .weyl import PhasedString, WeylString, adjoint, commutator, multiply
from .opvec import (
    BudgetExceededError,
    OperatorVector,
    TermList,
    apply_liouvillian,
    canonical_anchor,
)
from .models import (
    ModelSpec,
    SpinValue,
    build_hamiltonian,
    build_total_magnetization,
    coupling_convention,
    decompose_local,
    spin_matrices,
)
from .lanczos import LanczosResult, model_fingerprint, resume_lanczos, run_lanczos
from .recursion import (
    AutocorrSeries,
    ChainEndReachedError,
    FitParams,
    UnphysicalExtrapolationError,
    autocorrelation,
    extrapolate_bn,
    fit_bn,
    moments_from_b,
)
from .fragmentation import (
    EquivalenceReport,
    equivalence_classes,
    evolve_in_class,
    restricted_liouvillian,
    xz_zclass_dimension,
)

__all__ = [
    "__version__",
    "LatticeSpec",
    "PhasedString",
    "WeylString",
    "adjoint",
    "commutator",
    "multiply",
    "BudgetExceededError",
    "OperatorVector",
    "TermList",
    "apply_liouvillian",
    "canonical_anchor",
    "ModelSpec",
    "SpinValue",
    "build_hamiltonian",
    "build_total_magnetization",
    "coupling_convention",
    "decompose_local",
    "spin_matrices",
    "LanczosResult",
    "model_fingerprint",
    "resume_lanczos",
    "run_lanczos",
    "AutocorrSeries",
    "ChainEndReachedError",
    "FitParams",
    "UnphysicalExtrapolationError",
    "autocorrelation",
    "extrapolate_bn",
    "fit_bn",
    "moments_from_b",
    "EquivalenceReport",
    "equivalence_classes",
    "evolve_in_class",
    "restricted_liouvillian",
    "xz_zclass_dimension",
]
