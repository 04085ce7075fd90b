"""Growth-law fits, extrapolation, and recursion-method autocorrelation.

Two growth forms summarize a b_n sequence:

* ``linear_log``:  b_n ~ alpha*n + gamma + (-1)^n * alpha / (log n + c),
  linear growth with an alternating logarithmic correction (chaotic case);
* ``sqrt``:        b_n ~ alpha + gamma*sqrt(n) (integrable-growth case).

The infinite-temperature autocorrelation C(t) is phi_0(t) of the tridiagonal
chain

    dphi_n/dt = b_n phi_{n-1} - b_{n+1} phi_{n+1},   phi_n(0) = delta_n0,

integrated on the first ``len(b)`` + 1 components; the chain either ends
physically (measured b of an exhausted Krylov space, ``closed=True``) or is
long enough that nothing reaches the last site before t_max.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import minimize

from ._version import __version__

FIT_FORMS = ("linear_log", "sqrt")
LINEAR_LOG_STARTS = (0.5, 1.0, 2.0, 4.0)
REFLECTION_THRESHOLD = 1e-8
DEFAULT_N_TOTAL = 400


class ChainEndReachedError(ValueError):
    """Amplitude hit the last chain site: the truncation is being felt."""


class UnphysicalExtrapolationError(ValueError):
    """The fitted growth law predicts a nonpositive coefficient."""


@dataclass(frozen=True)
class FitParams:
    form: str
    alpha: float
    gamma: float
    c: float | None
    n_range: tuple[int, int]
    residual: float

    def predict(self, n) -> np.ndarray:
        n = np.asarray(n, dtype=float)
        if self.form == "sqrt":
            return self.alpha + self.gamma * np.sqrt(n)
        sign = np.where(np.asarray(n, dtype=int) % 2 == 0, 1.0, -1.0)
        return self.alpha * n + self.gamma + sign * self.alpha / (np.log(n) + self.c)


@dataclass(frozen=True)
class AutocorrSeries:
    times: tuple[float, ...]
    values: tuple[float, ...]
    chain_length: int
    fingerprint: str
    norm_error: float


def _fit_points(b, n_min: int, n_max: int | None):
    n_hi = len(b) if n_max is None else min(n_max, len(b))
    ns = np.arange(n_min, n_hi + 1)
    if ns.size < 4:
        raise ValueError(f"need at least 4 points to fit, have {ns.size} in [{n_min}, {n_hi}]")
    ys = np.asarray([b[n - 1] for n in ns], dtype=float)
    return ns, ys


def _linear_log_solve(ns, ys, c: float):
    # alpha multiplies both the linear term and the correction
    sign = np.where(ns % 2 == 0, 1.0, -1.0)
    design = np.column_stack([ns + sign / (np.log(ns) + c), np.ones_like(ns, dtype=float)])
    coef, _, _, _ = np.linalg.lstsq(design, ys, rcond=None)
    resid = design @ coef - ys
    return coef, float(np.sqrt(np.mean(resid**2)))


def fit_bn(b, form: str = "linear_log", n_min: int = 2, n_max: int | None = None) -> FitParams:
    """Least-squares fit of a growth law to b_{n_min}..b_{n_max}.

    n_min defaults to 2: b_1 carries non-universal short-distance detail.
    The sqrt form is linear in (alpha, gamma); the linear_log form is
    linear once c is fixed, so c is profiled out by 1D minimization from
    several starts.
    """
    if form not in FIT_FORMS:
        raise ValueError(f"unknown fit form {form!r}")
    ns, ys = _fit_points(b, n_min, n_max)
    n_range = (int(ns[0]), int(ns[-1]))
    if form == "sqrt":
        design = np.column_stack([np.ones_like(ns, dtype=float), np.sqrt(ns)])
        coef, _, _, _ = np.linalg.lstsq(design, ys, rcond=None)
        resid = design @ coef - ys
        return FitParams(
            form="sqrt",
            alpha=float(coef[0]),
            gamma=float(coef[1]),
            c=None,
            n_range=n_range,
            residual=float(np.sqrt(np.mean(resid**2))),
        )
    c_floor = -np.log(ns[0]) + 1e-9  # keep log n + c positive over the range

    def profiled(cvec):
        c = float(cvec[0])
        if c <= c_floor:
            return 1e300
        return _linear_log_solve(ns, ys, c)[1]

    best = None
    for c0 in LINEAR_LOG_STARTS:
        res = minimize(
            profiled,
            x0=[c0],
            method="Nelder-Mead",
            options={"xatol": 1e-12, "fatol": 1e-16, "maxiter": 2000},
        )
        if best is None or res.fun < best.fun:
            best = res
    if best is None or not np.isfinite(best.fun):
        raise RuntimeError("linear_log fit failed to converge from every start")
    c = float(best.x[0])
    coef, rms = _linear_log_solve(ns, ys, c)
    return FitParams(
        form="linear_log",
        alpha=float(coef[0]),
        gamma=float(coef[1]),
        c=c,
        n_range=n_range,
        residual=rms,
    )


def extrapolate_bn(b_measured, fit: FitParams, n_total: int) -> list[float]:
    """Measured values verbatim, then the fitted law out to b_{n_total}."""
    b_measured = [float(x) for x in b_measured]
    if n_total < len(b_measured):
        raise ValueError("n_total is shorter than the measured sequence")
    if n_total == len(b_measured):
        return b_measured
    ns = np.arange(len(b_measured) + 1, n_total + 1)
    ext = fit.predict(ns)
    if np.any(ext <= 0.0):
        first = int(ns[np.argmax(ext <= 0.0)])
        raise UnphysicalExtrapolationError(
            f"fitted law gives b_{first} <= 0; refit or shorten the extension"
        )
    return b_measured + [float(x) for x in ext]


def moments_from_b(b, k_max: int) -> list[float]:
    """Even moments mu_0, mu_2, ..., mu_{2 k_max} of the spectral function
    from the first k_max coefficients: mu_{2k} = <0| T^{2k} |0> with T the
    tridiagonal chain matrix."""
    if len(b) < k_max:
        raise ValueError(f"need {k_max} coefficients for mu_{2 * k_max}")
    T = np.zeros((k_max + 1, k_max + 1))
    for i in range(k_max):
        T[i, i + 1] = T[i + 1, i] = b[i]
    out = [1.0]
    Tk = np.eye(k_max + 1)
    T2 = T @ T
    for _ in range(k_max):
        Tk = Tk @ T2
        out.append(float(Tk[0, 0]))
    return out


def autocorrelation(
    b_extended,
    t_grid,
    *,
    closed: bool = False,
    rtol: float = 1e-10,
    atol: float = 1e-12,
) -> AutocorrSeries:
    """C(t) on the given grid from the chain ODE.

    ``closed=True`` declares the coefficient list exact and complete (an
    exhausted Krylov space), so amplitude reaching the last site is physics;
    otherwise it means the truncation is felt and the run is rejected with
    advice to extend b_extended.
    """
    bs = np.asarray(b_extended, dtype=float)
    if bs.size == 0:
        raise ValueError("empty coefficient list")
    if np.any(bs < 0.0):
        raise ValueError("negative Lanczos coefficient")
    ts = np.asarray(t_grid, dtype=float)
    if ts.size == 0 or ts[0] < 0.0 or np.any(np.diff(ts) <= 0.0):
        raise ValueError("t_grid must be increasing and nonnegative")
    m = bs.size  # phi_0..phi_m

    def rhs(_, phi):
        dphi = np.empty_like(phi)
        dphi[1:] = bs * phi[:-1]
        dphi[0] = 0.0
        dphi[:-1] -= bs * phi[1:]
        return dphi

    phi0 = np.zeros(m + 1)
    phi0[0] = 1.0
    sol = solve_ivp(
        rhs,
        (0.0, float(ts[-1]) if ts[-1] > 0 else 1e-12),
        phi0,
        method="DOP853",
        t_eval=ts,
        rtol=rtol,
        atol=atol,
    )
    if not sol.success:
        raise RuntimeError(f"chain integration failed: {sol.message}")
    phis = sol.y
    if not closed:
        leak = float(np.abs(phis[-1]).max())
        if leak > REFLECTION_THRESHOLD:
            raise ChainEndReachedError(
                f"amplitude {leak:.2e} reached the end of the {m}-coefficient "
                "chain; extend b (larger n_total) or reduce t_max"
            )
    norm_error = float(np.abs((phis**2).sum(axis=0) - 1.0).max())
    values = phis[0].copy()
    if ts[0] == 0.0:
        values[0] = 1.0
    h = hashlib.sha256()
    h.update(f"quditops {__version__} rtol={rtol} atol={atol} closed={closed}\n".encode())
    h.update(np.ascontiguousarray(bs).tobytes())
    fingerprint = h.hexdigest()[:16]
    return AutocorrSeries(
        times=tuple(float(t) for t in ts),
        values=tuple(float(v) for v in values),
        chain_length=int(m),
        fingerprint=fingerprint,
        norm_error=norm_error,
    )
