"""Command-line surface.

Subcommands: ``lanczos`` (recursion coefficients to files), ``fit``
(growth-form fit of a coefficient file), ``autocorr`` (fit, extrapolate,
integrate C(t)), ``oed`` (equivalence class and dimension of a seed
observable), ``evolve-class`` (restricted dynamics inside one class), and
``verify`` (built-in cross-check suites).

Exit codes: 0 success; 2 configuration error; 3 budget or cap exceeded,
with partial results still written; 4 internal invariant violation;
5 unphysical time-domain request (extrapolation rejected or chain end
reached).

Every output embeds the resolved configuration and its fingerprint;
reruns with the same config on the same build are byte-identical.
"""

from __future__ import annotations

import functools
import os
import re
import sys
from pathlib import Path

import click
import numpy as np

from . import serialize as sz
from ._version import __version__
from .lattice import LatticeSpec
from .models import (
    ModelSpec,
    SpinValue,
    build_hamiltonian,
    build_total_magnetization,
    coupling_convention,
)
from .opvec import OperatorVector
from .recursion import (
    ChainEndReachedError,
    UnphysicalExtrapolationError,
    autocorrelation,
    extrapolate_bn,
    fit_bn,
)
from .weyl import WeylString

EXIT_CONFIG = 2
EXIT_BUDGET = 3
EXIT_INVARIANT = 4
EXIT_UNPHYSICAL = 5

MODEL_NAMES = ("ising1d", "ising2d", "potts", "kitaev-potts")
_KIND = {
    "ising1d": "ising",
    "ising2d": "ising",
    "potts": "potts",
    "kitaev-potts": "xz_chain",
}

_tp_controller = None  # keeps thread limits alive for the process


def _limit_threads(n: int | None) -> None:
    global _tp_controller
    if n is None:
        return
    if n < 1:
        raise click.UsageError("--threads must be >= 1")
    try:
        from threadpoolctl import threadpool_limits

        _tp_controller = threadpool_limits(limits=n)
    except ImportError:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(n)


def guarded(f):
    """Map domain errors onto the documented exit codes."""

    @functools.wraps(f)
    def wrapper(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except click.ClickException:
            raise
        except (UnphysicalExtrapolationError, ChainEndReachedError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_UNPHYSICAL)
        except AssertionError as exc:
            click.echo(f"internal invariant violation: {exc}", err=True)
            sys.exit(EXIT_INVARIANT)
        except (ValueError, KeyError, OSError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_CONFIG)

    return wrapper


# ---------------------------------------------------------------------------
# settings: config file < CLI flags, everything consumed is recorded


class Settings:
    """Layered lookup that records every resolved value for embedding."""

    def __init__(self, config_path: str | None):
        self.file_cfg = sz.read_config(config_path) if config_path else {}
        self.resolved: dict[str, dict[str, str]] = {}

    def get(self, section: str, key: str, override, default=None, required=False):
        if override is not None:
            value = str(override)
        elif key in self.file_cfg.get(section, {}):
            value = self.file_cfg[section][key]
        elif default is not None:
            value = str(default)
        elif required:
            raise click.UsageError(f"missing required setting {section}.{key}")
        else:
            return None
        self.resolved.setdefault(section, {})[key] = value
        return value

    def peek(self, section: str, key: str, override, default=None):
        """Lookup without recording; for paths that are not physics."""
        if override is not None:
            return str(override)
        return self.file_cfg.get(section, {}).get(key, default)

    def fingerprint(self) -> str:
        return sz.config_fingerprint(self.resolved)


def common_options(f):
    for opt in reversed(
        [
            click.option("--config", "config_path", type=click.Path(exists=True),
                         default=None, help="Sectioned key=value config file; flags override it."),
            click.option("--outdir", type=click.Path(file_okay=False), default=None,
                         help="Output directory (default '.')."),
            click.option("--threads", type=int, default=None,
                         help="Cap worker threads for numerical backends."),
        ]
    ):
        f = opt(f)
    return f


def model_options(f):
    for opt in reversed(
        [
            click.option("--model", "model_name", type=click.Choice(MODEL_NAMES), default=None),
            click.option("--spin", default=None, help="Spin S ('1/2', '1', '3/2', ...)."),
            click.option("--d", "d_levels", type=int, default=None, help="Qudit dimension."),
            click.option("--J", "j_coupling", default=None,
                         help="Bond coupling; 'auto' means 1/sqrt(S(S+1))."),
            click.option("--hx", type=float, default=None),
            click.option("--hz", type=float, default=None),
            click.option("--h", "h_field", type=float, default=None),
            click.option("--jx", default=None, help="Comma list, cycled over X-type bonds."),
            click.option("--jy", default=None, help="Comma list, cycled over Z-type bonds."),
            click.option("--first-bond", type=click.Choice(["x", "z"]), default=None),
            click.option("--boundary", type=click.Choice(["infinite", "ring", "chain", "torus"]),
                         default=None),
            click.option("--sites", type=int, default=None),
            click.option("--sites-y", type=int, default=None),
            click.option("--no-hc", "no_hc", is_flag=True, default=False,
                         help="Drop the adjoint closure terms of the alternating-bond chain."),
            click.option("--seed", "seed_text", default=None,
                         help="Seed observable: 'magnetization', 'Z@1', 'X2@0,1', or "
                              "explicit '(0):X1Z2 (1):X0Z1'."),
        ]
    ):
        f = opt(f)
    return f


def _float_list(text: str) -> tuple[float, ...]:
    return tuple(float(tok) for tok in text.split(","))


def resolve_model(st: Settings, ov: dict, finite_default: str | None = None):
    """Build the ModelSpec plus its resolved parameter record."""
    name = st.get("model", "model", ov.get("model_name"), required=True)
    if name not in MODEL_NAMES:
        raise click.UsageError(f"unknown model {name!r}; choices: {', '.join(MODEL_NAMES)}")
    kind = _KIND[name]
    dim = 2 if name == "ising2d" else 1

    default_boundary = finite_default or "infinite"
    boundary = st.get("model", "boundary", ov.get("boundary"), default=default_boundary)
    if boundary == "infinite":
        cell = 2 if kind == "xz_chain" else 1
        lattice = LatticeSpec(dim, "thermodynamic", cell=cell)
        lattice_label = "infinite"
    else:
        sites = st.get("model", "sites", ov.get("sites"), required=True)
        L = int(sites)
        if boundary == "torus":
            if dim != 2:
                raise click.UsageError("torus boundary needs a 2D model")
            Ly = int(st.get("model", "sites_y", ov.get("sites_y"), default=L))
            lattice = LatticeSpec(2, "torus", L, Ly)
            lattice_label = f"{L}x{Ly}"
        else:
            if dim != 1:
                raise click.UsageError(f"{boundary} boundary needs a 1D model")
            lattice = LatticeSpec(1, boundary, L)
            lattice_label = str(L)

    params: dict = {}
    if kind == "ising":
        spin = SpinValue.parse(st.get("model", "spin", ov.get("spin"), required=True))
        j_text = st.get("model", "J", ov.get("j_coupling"), default="1")
        J = coupling_convention(spin) if j_text == "auto" else float(j_text)
        hx = float(st.get("model", "hx", ov.get("hx"), default="1"))
        hz = float(st.get("model", "hz", ov.get("hz"), default="1"))
        spec = ModelSpec(kind="ising", lattice=lattice, spin=spin, J=J, hx=hx, hz=hz)
        params = {"J": J, "hx": hx, "hz": hz}
    elif kind == "potts":
        d = int(st.get("model", "d", ov.get("d_levels"), required=True))
        J = float(st.get("model", "J", ov.get("j_coupling"), default="1"))
        h = float(st.get("model", "h", ov.get("h_field"), default="1"))
        spec = ModelSpec(kind="potts", lattice=lattice, d=d, J=J, h=h)
        params = {"J": J, "h": h}
    else:
        d = int(st.get("model", "d", ov.get("d_levels"), default="3"))
        jx = _float_list(st.get("model", "jx", ov.get("jx"), default="1"))
        jy = _float_list(st.get("model", "jy", ov.get("jy"), default="1"))
        first_bond = st.get("model", "first_bond", ov.get("first_bond"), default="z")
        hc = not ov.get("no_hc", False)
        hc = st.get("model", "hermitian_closure", None if hc else "false",
                    default="true") == "true"
        spec = ModelSpec(kind="xz_chain", lattice=lattice, d=d, jx=jx, jy=jy,
                         first_bond=first_bond, hermitian_closure=hc)
        params = {"jx": list(jx), "jy": list(jy), "first_bond": first_bond,
                  "hermitian_closure": hc}

    spin_label = str(spec.spin) if spec.spin is not None else None
    return spec, {"name": name, "params": params, "boundary": boundary,
                  "lattice_label": lattice_label, "spin_label": spin_label}


_SEED_RE = re.compile(r"^((?:[XZ]\d*)+)@(-?\d+(?:,-?\d+)?)$")


def resolve_seed(st: Settings, ov: dict, spec: ModelSpec, default: str):
    """Seed grammar: 'magnetization', 'Z@1', 'X2Z1@0,1', or explicit
    string text like '(0):X1Z2 (1):X0Z1'.  Returns (OperatorVector, label)."""
    text = st.get("run", "seed", ov.get("seed_text"), default=default)
    if text == "magnetization":
        vec = build_total_magnetization(SpinValue(spec.d - 1), spec.lattice)
        return vec, text
    m = _SEED_RE.match(text)
    if m:
        v = w = 0
        for op, k in re.findall(r"([XZ])(\d*)", m.group(1)):
            power = int(k) if k else 1
            if op == "X":
                v += power
            else:
                w += power
        site = tuple(int(c) for c in m.group(2).split(","))
        if len(site) != spec.lattice.dimension:
            raise click.UsageError(f"seed site {site} does not fit the lattice")
        v, w = v % spec.d, w % spec.d
        if (v, w) == (0, 0):
            raise click.UsageError(f"seed {text!r} is the identity")
        string = WeylString(spec.d, [(site, (v, w))])
    elif "):" in text:
        string = WeylString.from_text(f"d={spec.d}; {text}")
    else:
        raise click.UsageError(f"cannot parse seed {text!r}")
    vec = OperatorVector.from_items(spec.d, spec.lattice, [(string, 1.0)])
    return vec, string.to_text()


def _outdir(st: Settings, ov: dict) -> Path:
    # not recorded in the resolved config: the destination is not physics
    out = ov.get("outdir") or st.file_cfg.get("output", {}).get("dir") or "."
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _echo_written(paths) -> None:
    click.echo("wrote " + " ".join(str(p) for p in paths))


# ---------------------------------------------------------------------------


@click.group()
@click.version_option(version=__version__, prog_name="quditops")
def cli():
    """Operator growth and operator-space fragmentation for qudit chains."""


@cli.command(name="lanczos")
@model_options
@common_options
@click.option("--n", "n_max", type=int, default=None, help="Number of coefficients.")
@click.option("--budget", type=int, default=None, help="Entry budget per operator vector.")
@click.option("--checkpoint", "checkpoint_path", type=click.Path(), default=None)
@click.option("--checkpoint-every", type=int, default=None)
@click.option("--resume", "resume_path", type=click.Path(exists=True), default=None,
              help="Continue from a checkpoint written by an earlier run.")
@guarded
def cmd_lanczos(config_path, outdir, threads, n_max, budget, checkpoint_path,
                checkpoint_every, resume_path, **ov):
    """Compute recursion coefficients; writes bn.json, bn.csv, bn.dat."""
    from .lanczos import resume_lanczos, run_lanczos

    st = Settings(config_path)
    threads_v = st.get("run", "threads", threads)
    _limit_threads(int(threads_v) if threads_v is not None else None)
    spec, info = resolve_model(st, ov)
    default_seed = "Z@1" if spec.kind == "xz_chain" else "magnetization"
    seed_vec, seed_label = resolve_seed(st, ov, spec, default_seed)
    n = int(st.get("run", "n_max", n_max, default="12"))
    budget_v = st.get("run", "budget", budget)
    budget_n = int(budget_v) if budget_v is not None else None
    ck_path = st.get("run", "checkpoint", checkpoint_path)
    ck_every = int(st.get("run", "checkpoint_every", checkpoint_every, default="0"))
    out = _outdir(st, {"outdir": outdir})

    H = build_hamiltonian(spec)
    if resume_path is not None:
        result = resume_lanczos(resume_path, H, n, entry_budget=budget_n,
                                checkpoint_path=ck_path, checkpoint_every=ck_every)
    else:
        result = run_lanczos(H, seed_vec, n, entry_budget=budget_n,
                             checkpoint_path=ck_path, checkpoint_every=ck_every)

    record = sz.bn_record(
        model=info["name"], params=info["params"], d=spec.d, spin=info["spin_label"],
        lattice=info["lattice_label"], boundary=info["boundary"], n_max=n,
        b=result.b, support_sizes=result.support_sizes, terminated=result.terminated,
        fingerprint=result.fingerprint, config=st.resolved,
    )
    record["seed"] = seed_label
    sz.write_json_record(out / "bn.json", record)
    meta = {"schema": sz.BN_SCHEMA, "config": st.fingerprint(),
            "model": result.fingerprint}
    paths = sz.write_table(out / "bn.csv", ["n", "b_n"],
                           list(enumerate(result.b, start=1)), meta=meta)

    for i, (b, s) in enumerate(zip(result.b, result.support_sizes), start=1):
        click.echo(f"b_{i} = {sz.format_float(b)}  (support {s})")
    click.echo(f"terminated: {result.terminated}")
    _echo_written([out / "bn.json", *paths])
    if result.terminated == "budget_exceeded":
        click.echo("entry budget exceeded; partial results written", err=True)
        sys.exit(EXIT_BUDGET)


def _load_bn(path) -> dict:
    rec = sz.read_json_record(path)
    if rec.get("schema") != sz.BN_SCHEMA:
        raise click.UsageError(f"{path} is not a coefficient record")
    return rec


def _fit_record(fit, source: dict, st: Settings) -> dict:
    return {
        "schema": sz.FIT_SCHEMA,
        "version": __version__,
        "form": fit.form,
        "alpha": fit.alpha,
        "gamma": fit.gamma,
        "c": fit.c,
        "n_range": list(fit.n_range),
        "residual": fit.residual,
        "source_fingerprint": source.get("fingerprint"),
        "source_model": source.get("model"),
        "config": st.resolved,
        "config_fingerprint": st.fingerprint(),
    }


@cli.command(name="fit")
@common_options
@click.option("--in", "in_path", type=click.Path(exists=True), default=None,
              help="Coefficient record to fit (default bn.json).")
@click.option("--form", type=click.Choice(["linear_log", "sqrt"]), default=None)
@click.option("--n-min", type=int, default=None)
@click.option("--n-max", "fit_n_max", type=int, default=None)
@guarded
def cmd_fit(config_path, outdir, threads, in_path, form, n_min, fit_n_max):
    """Fit a growth form to measured coefficients; writes fit.json."""
    st = Settings(config_path)
    _limit_threads(threads)
    rec = _load_bn(st.peek("fit", "input", in_path, default="bn.json"))
    form_v = st.get("fit", "form", form, default="linear_log")
    lo = int(st.get("fit", "n_min", n_min, default="2"))
    hi_v = st.get("fit", "n_max", fit_n_max)
    hi = int(hi_v) if hi_v is not None else None
    out = _outdir(st, {"outdir": outdir})

    fit = fit_bn(rec["b"], form=form_v, n_min=lo, n_max=hi)
    sz.write_json_record(out / "fit.json", _fit_record(fit, rec, st))
    click.echo(f"{fit.form}: alpha = {sz.format_float(fit.alpha)}, "
               f"gamma = {sz.format_float(fit.gamma)}"
               + (f", c = {sz.format_float(fit.c)}" if fit.c is not None else ""))
    click.echo(f"rms residual = {sz.format_float(fit.residual)} over n in {list(fit.n_range)}")
    _echo_written([out / "fit.json"])


@cli.command(name="autocorr")
@common_options
@click.option("--in", "in_path", type=click.Path(exists=True), default=None,
              help="Coefficient record to integrate (default bn.json).")
@click.option("--tmax", type=float, default=None, help="End of the time grid.")
@click.option("--points", type=int, default=None, help="Grid points including t=0.")
@click.option("--form", type=click.Choice(["linear_log", "sqrt"]), default=None)
@click.option("--n-min", type=int, default=None)
@click.option("--n-max", "fit_n_max", type=int, default=None)
@click.option("--n-total", type=int, default=None,
              help="Chain length after extrapolation.")
@click.option("--no-extrapolation", is_flag=True, default=False,
              help="Integrate with the measured coefficients only.")
@guarded
def cmd_autocorr(config_path, outdir, threads, in_path, tmax, points, form,
                 n_min, fit_n_max, n_total, no_extrapolation):
    """Reconstruct C(t); writes ct.csv, ct.dat and (when fitting) fit.json."""
    st = Settings(config_path)
    _limit_threads(threads)
    rec = _load_bn(st.peek("grid", "input", in_path, default="bn.json"))
    t_end = float(st.get("grid", "tmax", tmax, default="2"))
    npts = int(st.get("grid", "points", points, default="201"))
    skip_fit = st.get("fit", "extrapolate", "false" if no_extrapolation else None,
                      default="true") == "false"
    out = _outdir(st, {"outdir": outdir})

    b = list(rec["b"])
    if not b:
        raise click.UsageError("coefficient record is empty")
    t_grid = np.linspace(0.0, t_end, npts)
    written = []
    closed = False
    if skip_fit:
        b_ext = b
        # an exhausted space makes the measured list exact and complete
        closed = str(rec.get("terminated", "")).startswith("subspace_exhausted")
    else:
        form_v = st.get("fit", "form", form, default="linear_log")
        lo = int(st.get("fit", "n_min", n_min, default="2"))
        hi_v = st.get("fit", "n_max", fit_n_max)
        hi = int(hi_v) if hi_v is not None else None
        total = int(st.get("fit", "n_total", n_total, default="400"))
        fit = fit_bn(b, form=form_v, n_min=lo, n_max=hi)
        b_ext = extrapolate_bn(b, fit, total)
        sz.write_json_record(out / "fit.json", _fit_record(fit, rec, st))
        written.append(out / "fit.json")
        click.echo(f"{fit.form} fit: alpha = {sz.format_float(fit.alpha)}, "
                   f"gamma = {sz.format_float(fit.gamma)}"
                   + (f", c = {sz.format_float(fit.c)}" if fit.c is not None else ""))

    series = autocorrelation(b_ext, t_grid, closed=closed)
    meta = {"schema": sz.CT_SCHEMA, "config": st.fingerprint(),
            "chain": series.fingerprint, "chain_length": series.chain_length,
            "closed": str(closed).lower(), "source": rec.get("fingerprint")}
    paths = sz.write_table(out / "ct.csv", ["t", "C"],
                           list(zip(series.times, series.values)), meta=meta)
    click.echo(f"C on [0, {t_end}] from a {series.chain_length}-site chain; "
               f"norm drift {series.norm_error:.2e}")
    _echo_written(written + paths)


@cli.command(name="oed")
@model_options
@common_options
@click.option("--cap", type=int, default=None, help="Abort the search beyond this many strings.")
@click.option("--classes-out", type=click.Path(), default=None,
              help="Also write the class inventory as a string list.")
@guarded
def cmd_oed(config_path, outdir, threads, cap, classes_out, **ov):
    """Explore the seed's equivalence class; writes oed.json."""
    from .fragmentation import DEFAULT_CLASS_CAP, equivalence_classes

    st = Settings(config_path)
    _limit_threads(threads)
    spec, info = resolve_model(st, ov, finite_default="chain")
    if spec.lattice.translation_invariant:
        raise click.UsageError("class exploration needs a finite lattice (--sites)")
    default_seed = "Z@1" if spec.kind == "xz_chain" else "magnetization"
    seed_vec, seed_label = resolve_seed(st, ov, spec, default_seed)
    cap_n = int(st.get("run", "cap", cap, default=str(DEFAULT_CLASS_CAP)))
    out = _outdir(st, {"outdir": outdir})

    H = build_hamiltonian(spec)
    rep = equivalence_classes(seed_vec, H, cap=cap_n)

    record = {
        "schema": sz.OED_SCHEMA,
        "version": __version__,
        "model": info["name"],
        "params": info["params"],
        "d": spec.d,
        "sites": spec.lattice.n_sites,
        "boundary": info["boundary"],
        "seed": seed_label,
        "oed": rep.unital_dimension,
        "raw_class_dimension": rep.oed,
        "class_count": rep.class_count,
        "class_sizes": list(rep.class_sizes),
        "cap_hit": rep.cap_hit,
        "interpretation": {
            "formula_argument": "site count",
            "geometry": info["boundary"],
            "bond_pattern": f"{spec.first_bond}-type bond first"
            if spec.kind == "xz_chain" else "n/a",
            "counting": "reachable strings plus the identity direction",
            "adjacency_terms": "with adjoint closure"
            if getattr(spec, "hermitian_closure", True) else "bare couplings",
        },
        "config": st.resolved,
        "config_fingerprint": st.fingerprint(),
    }
    sz.write_json_record(out / "oed.json", record)
    if classes_out:
        sz.save_class_text(classes_out, rep.strings,
                           comment=f"seed {seed_label}\nclasses {rep.class_count}")
    kind = "lower bound (cap hit)" if rep.cap_hit else "exact"
    click.echo(f"oed = {rep.unital_dimension} ({kind}); "
               f"{rep.class_count} class(es), sizes {list(rep.class_sizes)}")
    _echo_written([out / "oed.json"] + ([Path(classes_out)] if classes_out else []))
    if rep.cap_hit:
        click.echo("string cap hit; dimensions are lower bounds", err=True)
        sys.exit(EXIT_BUDGET)


@cli.command(name="evolve-class")
@model_options
@common_options
@click.option("--tmax", type=float, default=None)
@click.option("--points", type=int, default=None)
@click.option("--cap", type=int, default=None)
@click.option("--matrix-out", type=click.Path(), default=None,
              help="Export the restricted generator as coordinate text.")
@click.option("--classes-out", type=click.Path(), default=None)
@guarded
def cmd_evolve_class(config_path, outdir, threads, tmax, points, cap,
                     matrix_out, classes_out, **ov):
    """Integrate the seed's dynamics inside its class; writes class_ct.csv."""
    from .fragmentation import (
        DEFAULT_CLASS_CAP,
        equivalence_classes,
        evolve_in_class,
        restricted_liouvillian,
    )

    st = Settings(config_path)
    _limit_threads(threads)
    spec, info = resolve_model(st, ov, finite_default="chain")
    if spec.lattice.translation_invariant:
        raise click.UsageError("class evolution needs a finite lattice (--sites)")
    default_seed = "Z@1" if spec.kind == "xz_chain" else "magnetization"
    seed_vec, seed_label = resolve_seed(st, ov, spec, default_seed)
    t_end = float(st.get("grid", "tmax", tmax, default="2"))
    npts = int(st.get("grid", "points", points, default="201"))
    cap_n = int(st.get("run", "cap", cap, default=str(DEFAULT_CLASS_CAP)))
    out = _outdir(st, {"outdir": outdir})

    H = build_hamiltonian(spec)
    rep = equivalence_classes(seed_vec, H, cap=cap_n)
    if rep.cap_hit:
        click.echo("string cap hit; the class is incomplete, refusing to evolve", err=True)
        sys.exit(EXIT_BUDGET)
    rl = restricted_liouvillian(rep, H)

    index = {s: i for i, s in enumerate(rl.strings)}
    f0 = np.zeros(len(rl.strings), dtype=complex)
    for string, amp in seed_vec.items():
        f0[index[string]] = amp
    f0 /= np.linalg.norm(f0)

    t_grid = np.linspace(0.0, t_end, npts)
    traj = evolve_in_class(rl, f0, t_grid)
    corr = traj @ f0.conj()
    norms = np.linalg.norm(traj, axis=1)

    meta = {"schema": sz.CT_SCHEMA, "config": st.fingerprint(),
            "seed": seed_label, "class_dimension": len(rl.strings)}
    paths = sz.write_table(out / "class_ct.csv", ["t", "re_C", "im_C", "norm"],
                           [(t, c.real, c.imag, n)
                            for t, c, n in zip(t_grid, corr, norms)], meta=meta)
    if matrix_out:
        sz.save_coo_text(matrix_out, rl.matrix,
                         comment=f"restricted generator, seed {seed_label}")
        paths.append(Path(matrix_out))
    if classes_out:
        sz.save_class_text(classes_out, rl.strings, comment=f"seed {seed_label}")
        paths.append(Path(classes_out))
    click.echo(f"evolved a {len(rl.strings)}-string class to t = {t_end}; "
               f"norm drift {abs(norms - 1.0).max():.2e}")
    _echo_written(paths)


# ---------------------------------------------------------------------------
# verify: built-in cross-check suites

SUITES = ("algebra", "lanczos-oracle", "autocorr-oracle", "oed")


class _Report:
    def __init__(self):
        self.failures = 0

    def check(self, name: str, passed: bool, residual: float | None = None):
        tail = f"  (residual {residual:.3e})" if residual is not None else ""
        click.echo(("  ok    " if passed else "  FAIL  ") + name + tail)
        if not passed:
            self.failures += 1


def _suite_algebra(rep: _Report, instances: int, rng_seed: int) -> None:
    from .opvec import canonical_anchor
    from .weyl import adjoint, commutator, dense_matrix, multiply

    rng = np.random.default_rng(rng_seed)
    worst = {"homomorphism": 0.0, "commutator": 0.0, "adjoint": 0.0, "unitarity": 0.0}
    anchor_ok = True
    lattices = [LatticeSpec(1, "thermodynamic"), LatticeSpec(2, "thermodynamic"),
                LatticeSpec(1, "thermodynamic", cell=2)]
    for _ in range(instances):
        d = int(rng.integers(2, 6))
        sites = [(int(s),) for s in rng.choice(6, size=2, replace=False)]
        a = WeylString(d, [(s, (int(rng.integers(d)), int(rng.integers(d)))) for s in sites])
        b = WeylString(d, [(s, (int(rng.integers(d)), int(rng.integers(d))))
                           for s in sites[:1]])
        window = sorted(set(a.support) | set(b.support) | {(0,)})
        Ma, Mb = dense_matrix(a, window), dense_matrix(b, window)

        coeff, ab = multiply(a, b)
        worst["homomorphism"] = max(worst["homomorphism"],
                                    float(np.abs(Ma @ Mb - coeff * dense_matrix(ab, window)).max()))
        comm = commutator(a, b)
        target = 0.0 if comm is None else np.abs(
            Ma @ Mb - Mb @ Ma - comm.coeff * dense_matrix(comm.string, window)).max()
        if comm is not None:
            target = float(target)
        else:
            target = float(np.abs(Ma @ Mb - Mb @ Ma).max())
        worst["commutator"] = max(worst["commutator"], target)
        pa = adjoint(a)
        worst["adjoint"] = max(worst["adjoint"], float(np.abs(
            Ma.conj().T - pa.coeff * dense_matrix(pa.string, window)).max()))
        worst["unitarity"] = max(worst["unitarity"], float(np.abs(
            Ma @ Ma.conj().T - np.eye(Ma.shape[0])).max()))

        lat = lattices[int(rng.integers(len(lattices)))]
        da = int(rng.integers(2, 6))
        if lat.dimension == 1:
            x0 = int(rng.integers(0, 5))
            s = WeylString(da, [((x0,), (1, 0)), ((x0 + 1,), (0, 1))])
        else:
            x0, y0 = int(rng.integers(0, 5)), int(rng.integers(-3, 4))
            s = WeylString(da, [((x0, y0), (1, 0)), ((x0 + 1, y0), (0, 1))])
        anch1, _ = canonical_anchor(s, lat)
        anch2, off2 = canonical_anchor(anch1, lat)
        if anch2 != anch1 or any(off2):
            anchor_ok = False
    tol = 1e-12
    rep.check(f"string product is a projective homomorphism ({instances} draws)",
              worst["homomorphism"] < tol, worst["homomorphism"])
    rep.check("commutator matches dense bracket", worst["commutator"] < tol,
              worst["commutator"])
    rep.check("adjoint phase and exponents", worst["adjoint"] < tol, worst["adjoint"])
    rep.check("strings are unitary", worst["unitarity"] < tol, worst["unitarity"])
    rep.check("anchoring is idempotent", anchor_ok)


def _suite_lanczos_oracle(rep: _Report, perturb: float) -> None:
    from .ed import dense_lanczos
    from .lanczos import run_lanczos

    ti = LatticeSpec(1, "thermodynamic")
    spec = ModelSpec(kind="ising", lattice=ti, spin=SpinValue(2), J=1.0, hx=1.0, hz=1.0)
    seed = build_total_magnetization(SpinValue(2), ti)
    result = run_lanczos(build_hamiltonian(spec), seed, 4)
    b_eng = np.array(result.b)
    if perturb:
        b_eng[1] += perturb
    ring = ModelSpec(kind="ising", lattice=LatticeSpec(1, "ring", 12),
                     spin=SpinValue(2), J=1.0, hx=1.0, hz=1.0)
    b_ref = dense_lanczos(ring, 4)
    residual = float(np.abs(b_eng / np.array(b_ref) - 1.0).max())
    rep.check("thermodynamic coefficients match the 12-site ring", residual < 1e-9,
              residual)


def _suite_autocorr_oracle(rep: _Report) -> None:
    from .ed import dense_autocorr, dense_build, dense_lanczos
    from .lanczos import run_lanczos
    from .recursion import moments_from_b

    # two-site closed form: a single coefficient J/2, C = cos(Jt/2)
    ring2 = ModelSpec(kind="ising", lattice=LatticeSpec(1, "ring", 2),
                      spin=SpinValue(1), J=1.0, hx=0.0, hz=0.0)
    seed2 = build_total_magnetization(SpinValue(1), ring2.lattice)
    r2 = run_lanczos(build_hamiltonian(ring2), seed2, 8)
    ts = np.linspace(0.0, 6.0, 61)
    series = autocorrelation(r2.b, ts, closed=True)
    resid = float(np.abs(series.values - np.cos(0.5 * ts)).max())
    rep.check("two-site closed form C = cos(Jt/2)", resid < 1e-8, resid)

    # d=2 clock model on a small ring against the dense kernel
    spec = ModelSpec(kind="potts", lattice=LatticeSpec(1, "ring", 6), d=2, J=1.0, h=1.0)
    seed = build_total_magnetization(SpinValue(1), spec.lattice)
    res = run_lanczos(build_hamiltonian(spec), seed, 400)
    closed = res.terminated.startswith("subspace_exhausted")
    tgrid = np.linspace(0.0, 2.0, 81)
    mine = autocorrelation(res.b, tgrid, closed=closed).values
    ref = dense_autocorr(dense_build(spec), tgrid)
    resid = float(np.abs(mine - ref).max())
    rep.check("measured-coefficient C(t) matches the dense kernel", resid < 1e-3,
              resid)
    mu = moments_from_b(res.b, 2)
    t = 0.1
    taylor = abs(float(np.interp(t, tgrid, mine)) - (1 - mu[1] * t**2 / 2))
    bound = 10 * t**4 / 24 * mu[2]
    rep.check("short-time Taylor window", taylor < bound, taylor)


def _suite_oed(rep: _Report) -> None:
    from .fragmentation import equivalence_classes, xz_zclass_dimension

    for n in (4, 5, 6):
        lat = LatticeSpec(1, "chain", n)
        spec = ModelSpec(kind="xz_chain", lattice=lat, d=3, first_bond="z")
        r = equivalence_classes(WeylString(3, [((1,), (0, 1))]),
                                build_hamiltonian(spec))
        rep.check(f"alternating-bond chain, {n} sites: dimension "
                  f"{r.unital_dimension}", r.unital_dimension == xz_zclass_dimension(n))
    # a seed that commutes with every coupling stays put
    lat = LatticeSpec(1, "chain", 3)
    pure = ModelSpec(kind="ising", lattice=lat, spin=SpinValue(1), J=1.0, hx=0.5, hz=0.0)
    r = equivalence_classes(WeylString(2, [((0,), (1, 0))]), build_hamiltonian(pure))
    rep.check("commuting seed explores nothing", r.class_sizes == (1,))


@cli.command(name="verify")
@click.option("--suite", type=click.Choice(("all",) + SUITES), default="all",
              show_default=True)
@click.option("--instances", type=int, default=2000, show_default=True,
              help="Randomized draws for the algebra suite.")
@click.option("--rng-seed", type=int, default=7, show_default=True)
@click.option("--perturb-bn", type=float, default=0.0, hidden=True,
              help="Test harness hook: offset one engine coefficient.")
@click.option("--threads", type=int, default=None)
@guarded
def cmd_verify(suite, instances, rng_seed, perturb_bn, threads):
    """Run the built-in cross-check suites; nonzero exit on any failure."""
    _limit_threads(threads)
    rep = _Report()
    wanted = SUITES if suite == "all" else (suite,)
    for name in wanted:
        click.echo(f"[{name}]")
        if name == "algebra":
            _suite_algebra(rep, instances, rng_seed)
        elif name == "lanczos-oracle":
            _suite_lanczos_oracle(rep, perturb_bn)
        elif name == "autocorr-oracle":
            _suite_autocorr_oracle(rep)
        elif name == "oed":
            _suite_oed(rep)
    if rep.failures:
        click.echo(f"{rep.failures} check(s) failed", err=True)
        sys.exit(1)
    click.echo("all checks passed")


def main(argv=None):
    return cli(args=argv, prog_name="quditops")


if __name__ == "__main__":
    main()
