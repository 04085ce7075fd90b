"""Moments, tail fits, extrapolation, and the chain autocorrelation."""

import numpy as np
import pytest

from quditops import recursion as rc
from quditops.lanczos import run_lanczos
from quditops.lattice import LatticeSpec
from quditops.models import ModelSpec, SpinValue, build_hamiltonian, build_total_magnetization


def test_moments_vs_matrix_powers():
    bs = [1.3, 0.7, 2.1, 0.9]
    mus = rc.moments_from_b(bs, 4)
    Tm = np.diag(bs, 1) + np.diag(bs, -1)
    for k in range(5):
        assert abs(mus[k] - np.linalg.matrix_power(Tm, 2 * k)[0, 0]) < 1e-12
    assert abs(mus[1] - bs[0] ** 2) < 1e-12
    assert abs(mus[2] - (bs[0] ** 4 + bs[0] ** 2 * bs[1] ** 2)) < 1e-12


def test_linear_log_fit_recovery():
    ns = np.arange(2, 21)
    alpha, gamma, c = 0.71, 1.07, 1.16
    sign = np.where(ns % 2 == 0, 1.0, -1.0)
    b_syn = alpha * ns + gamma + sign * alpha / (np.log(ns) + c)
    b_list = [0.5] + list(b_syn)
    fit = rc.fit_bn(b_list, form="linear_log", n_min=2)
    assert abs(fit.alpha - alpha) < 1e-6
    assert abs(fit.gamma - gamma) < 1e-6
    assert abs(fit.c - c) < 1e-5
    assert fit.residual < 1e-9


def test_sqrt_fit_recovery():
    b_sq = [-0.34 + 2.86 * np.sqrt(n) for n in range(1, 15)]
    fit = rc.fit_bn(b_sq, form="sqrt", n_min=2)
    assert abs(fit.alpha + 0.34) < 1e-10
    assert abs(fit.gamma - 2.86) < 1e-10
    fconst = rc.fit_bn([3.0] * 10, form="sqrt", n_min=2)
    assert abs(fconst.alpha - 3.0) < 1e-8
    assert abs(fconst.gamma) < 1e-8


def test_fit_needs_enough_points():
    with pytest.raises(ValueError):
        rc.fit_bn([1.0, 2.0, 3.0], form="sqrt", n_min=2)


def test_extrapolation_prefix_and_asymptotics():
    ns = np.arange(2, 21)
    alpha, gamma, c = 0.71, 1.07, 1.16
    sign = np.where(ns % 2 == 0, 1.0, -1.0)
    b_list = [0.5] + list(alpha * ns + gamma + sign * alpha / (np.log(ns) + c))
    fit = rc.fit_bn(b_list, form="linear_log", n_min=2)
    ext = rc.extrapolate_bn(b_list, fit, 10_000)
    assert ext[: len(b_list)] == [float(x) for x in b_list]
    assert abs(np.mean(np.diff(ext[9000:])) - alpha) < 1e-3

    b_sq = [-0.34 + 2.86 * np.sqrt(n) for n in range(1, 15)]
    fsq = rc.fit_bn(b_sq, form="sqrt", n_min=2)
    extq = rc.extrapolate_bn(b_sq, fsq, 4000)
    assert abs((extq[3999] + 0.34) - 2 * (extq[999] + 0.34)) < 1e-6
    assert rc.extrapolate_bn(b_sq, fsq, len(b_sq)) == [float(x) for x in b_sq]


def test_unphysical_extrapolation_raises():
    bad = rc.FitParams(form="sqrt", alpha=1.0, gamma=-0.4, c=None, n_range=(2, 8), residual=0.0)
    with pytest.raises(rc.UnphysicalExtrapolationError):
        rc.extrapolate_bn([1.0, 0.9], bad, 50)


def test_autocorrelation_closed_forms():
    ts = np.linspace(0.0, 3.0, 31)
    s0 = rc.autocorrelation([0.0, 0.0, 0.0], ts, closed=True)
    assert max(abs(v - 1.0) for v in s0.values) < 1e-12
    s1 = rc.autocorrelation([1.0, 0.0, 0.0], ts, closed=True)
    assert max(abs(v - np.cos(t)) for v, t in zip(s1.values, ts)) < 1e-9
    assert s1.norm_error < 1e-8


def test_autocorrelation_short_time_taylor():
    ns = np.arange(2, 21)
    b_list = [0.5] + list(0.71 * ns + 1.07)
    fit = rc.fit_bn(b_list, form="linear_log", n_min=2)
    bext = rc.extrapolate_bn(b_list, fit, 400)
    sa = rc.autocorrelation(bext, np.linspace(0, 2, 26))
    assert sa.values[0] == 1.0
    mus = rc.moments_from_b(bext, 3)
    t = 0.1
    taylor = 1 - mus[1] * t**2 / 2 + mus[2] * t**4 / 24 - mus[3] * t**6 / 720
    ct = rc.autocorrelation(bext, np.array([0.0, t]))
    assert abs(ct.values[1] - taylor) < 1e-8


def test_open_chain_reflection_detected():
    with pytest.raises(rc.ChainEndReachedError):
        rc.autocorrelation([1.0, 1.0, 1.0], np.linspace(0, 8, 20))


def test_chain_end_error_is_value_error():
    assert issubclass(rc.ChainEndReachedError, ValueError)


def test_rabi_pair_end_to_end():
    ts = np.linspace(0.0, 3.0, 31)
    lat2 = LatticeSpec(1, "ring", 2)
    spec = ModelSpec(kind="ising", lattice=lat2, spin=SpinValue(1), J=0.8)
    res = run_lanczos(
        build_hamiltonian(spec), build_total_magnetization(SpinValue(1), lat2), 5
    )
    assert res.terminated == "subspace_exhausted(2)"
    assert len(res.b) == 1
    crab = rc.autocorrelation(list(res.b), ts, closed=True)
    assert max(abs(v - np.cos(0.4 * t)) for v, t in zip(crab.values, ts)) < 1e-9
