"""File formats for run outputs and inputs.

Covers the JSON records (coefficient runs, fits, class reports), the
plot-ready CSV tables with gnuplot ``.dat`` mirrors, text and binary dumps
of operator vectors, sparse-matrix text export, and the sectioned
key=value config grammar.  All emission is deterministic: no timestamps,
fixed key order, floats at full double precision.
"""

from __future__ import annotations

import configparser
import csv
import hashlib
import io
import json
from pathlib import Path

import numpy as np

from ._version import __version__
from .lattice import LatticeSpec
from .opvec import OperatorVector
from .weyl import WeylString

BN_SCHEMA = "bn/1"
FIT_SCHEMA = "fit/1"
CT_SCHEMA = "ct/1"
OED_SCHEMA = "oed/1"
OPTEXT_SCHEMA = "opvec-text/1"
OPNPZ_SCHEMA = "opvec-npz/1"


def format_float(x: float) -> str:
    """17 significant digits; enough to reproduce any double exactly."""
    return f"{float(x):.17g}"


# ---------------------------------------------------------------------------
# config files: [section] headers over flat key = value lines


def parse_config(text: str) -> dict[str, dict[str, str]]:
    """Parse sectioned key=value text into {section: {key: value}}.

    Grammar: ``[section]`` headers, ``key = value`` lines, ``#`` or ``;``
    comments, blank lines ignored.  Keys are case sensitive and must be
    unique within their section.  Values are kept as raw strings; typing
    happens at the consumer.
    """
    cp = configparser.ConfigParser(
        interpolation=None, delimiters=("=",), strict=True
    )
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ValueError(f"bad config: {exc}") from exc
    return {sec: dict(cp.items(sec)) for sec in cp.sections()}


def format_config(cfg: dict[str, dict[str, str]]) -> str:
    lines = []
    for sec, items in cfg.items():
        lines.append(f"[{sec}]")
        for key, value in items.items():
            lines.append(f"{key} = {value}")
        lines.append("")
    return "\n".join(lines)


def read_config(path) -> dict[str, dict[str, str]]:
    return parse_config(Path(path).read_text())


def write_config(path, cfg: dict[str, dict[str, str]]) -> None:
    Path(path).write_text(format_config(cfg))


def config_fingerprint(cfg: dict[str, dict[str, str]]) -> str:
    """Order-independent digest of the resolved config."""
    h = hashlib.sha256()
    for sec in sorted(cfg):
        for key in sorted(cfg[sec]):
            h.update(f"{sec}\x00{key}\x00{cfg[sec][key]}\n".encode())
    return h.hexdigest()[:16]


# ---------------------------------------------------------------------------
# JSON records


def write_json_record(path, payload: dict) -> None:
    """Stable JSON emission: insertion order, full-precision floats."""
    text = json.dumps(payload, indent=2, allow_nan=False)
    Path(path).write_text(text + "\n")


def read_json_record(path) -> dict:
    return json.loads(Path(path).read_text())


def bn_record(
    *,
    model: str,
    params: dict,
    d: int,
    spin: str | None,
    lattice: str,
    boundary: str,
    n_max: int,
    b,
    support_sizes,
    terminated: str,
    fingerprint: str,
    config: dict[str, dict[str, str]] | None = None,
) -> dict:
    rec = {
        "schema": BN_SCHEMA,
        "version": __version__,
        "model": model,
        "params": params,
        "d": d,
        "spin": spin,
        "lattice": lattice,
        "boundary": boundary,
        "n_max": n_max,
        "b": [float(x) for x in b],
        "support_sizes": [int(s) for s in support_sizes],
        "terminated": terminated,
        "fingerprint": fingerprint,
    }
    if config is not None:
        rec["config"] = config
        rec["config_fingerprint"] = config_fingerprint(config)
    return rec


# ---------------------------------------------------------------------------
# tables: CSV plus a gnuplot-ready .dat mirror


def write_table(path, header: list[str], rows, dat_mirror: bool = True,
                meta: dict | None = None):
    """Write rows (iterables of floats/ints/strings) as CSV.

    Floats go out at 17 significant digits.  ``meta`` entries become
    ``# key: value`` comment lines ahead of the header in both files so
    each table carries its schema and config fingerprint.  With
    ``dat_mirror`` a whitespace-separated twin is written next to the CSV
    for direct gnuplot consumption.  Returns the paths written.
    """
    path = Path(path)
    comments = [f"# {k}: {v}" for k, v in (meta or {}).items()]
    formatted = [
        [format_float(v) if isinstance(v, float) else str(v) for v in row]
        for row in rows
    ]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(formatted)
    path.write_text("".join(c + "\n" for c in comments) + buf.getvalue())
    written = [path]
    if dat_mirror:
        dat = path.with_suffix(".dat")
        lines = comments + ["# " + "  ".join(header)]
        lines += ["  ".join(row) for row in formatted]
        dat.write_text("\n".join(lines) + "\n")
        written.append(dat)
    return written


# ---------------------------------------------------------------------------
# operator vectors: line-based text and binary snapshot


def _lattice_fields(lattice: LatticeSpec) -> dict:
    return {
        "dimension": lattice.dimension,
        "kind": lattice.kind,
        "size": lattice.size,
        "size_y": lattice.size_y,
        "cell": lattice.cell,
    }


def _lattice_from_fields(fields: dict) -> LatticeSpec:
    return LatticeSpec(
        dimension=int(fields["dimension"]),
        kind=str(fields["kind"]),
        size=None if fields["size"] in (None, "None") else int(fields["size"]),
        size_y=None if fields["size_y"] in (None, "None") else int(fields["size_y"]),
        cell=int(fields["cell"]),
    )


def save_operator_text(path, vec: OperatorVector) -> None:
    """One line per string: ``<re> <im> <string text>``, with a header
    carrying the lattice so the file is self-describing."""
    lat = _lattice_fields(vec.lattice)
    lines = [f"# {OPTEXT_SCHEMA}", f"# d = {vec.d}"]
    lines += [f"# {k} = {v}" for k, v in lat.items()]
    for string, amp in vec.items():
        lines.append(
            f"{format_float(amp.real)} {format_float(amp.imag)} {string.to_text()}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


def load_operator_text(path) -> OperatorVector:
    header: dict[str, str] = {}
    items: list[tuple[WeylString, complex]] = []
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, eq, value = line[1:].partition("=")
            if eq:
                header[key.strip()] = value.strip()
            continue
        re_s, im_s, text = line.split(" ", 2)
        items.append((WeylString.from_text(text), complex(float(re_s), float(im_s))))
    lattice = _lattice_from_fields(header)
    return OperatorVector.from_items(int(header["d"]), lattice, items)


def save_operator_npz(path, vec: OperatorVector) -> None:
    win = vec._win
    np.savez_compressed(
        Path(path),
        schema=OPNPZ_SCHEMA,
        d=vec.d,
        lattice=json.dumps(_lattice_fields(vec.lattice)),
        digits=vec.digits(),
        amps=vec.amplitudes(),
        window=np.array([win.width, win.half_y]),
    )


def load_operator_npz(path) -> OperatorVector:
    # deferred import: lanczos pulls from this module's siblings
    from .lanczos import _vector_from_payload

    with np.load(Path(path), allow_pickle=False) as data:
        if str(data["schema"]) != OPNPZ_SCHEMA:
            raise ValueError(f"not an operator snapshot: {path}")
        lattice = _lattice_from_fields(json.loads(str(data["lattice"])))
        payload = {
            "v_digits": data["digits"],
            "v_amps": data["amps"],
            "v_width": data["window"],
        }
        return _vector_from_payload(payload, "v", int(data["d"]), lattice)


# ---------------------------------------------------------------------------
# class inventories and sparse matrices


def save_class_text(path, strings, comment: str = "") -> None:
    """Line-based string list; one canonical text form per line."""
    lines = []
    if comment:
        lines += [f"# {c}" for c in comment.splitlines()]
    lines.append(f"# strings = {len(strings)}")
    lines += [s.to_text() for s in strings]
    Path(path).write_text("\n".join(lines) + "\n")


def save_coo_text(path, matrix, comment: str = "") -> None:
    """Coordinate-format text: ``row col re im`` per entry, 0-based."""
    coo = matrix.tocoo()
    lines = []
    if comment:
        lines += [f"# {c}" for c in comment.splitlines()]
    lines.append(f"# shape = {coo.shape[0]} {coo.shape[1]}")
    lines.append(f"# nnz = {coo.nnz}")
    order = np.lexsort((coo.col, coo.row))
    for k in order:
        v = complex(coo.data[k])
        lines.append(
            f"{coo.row[k]} {coo.col[k]} "
            f"{format_float(v.real)} {format_float(v.imag)}"
        )
    Path(path).write_text("\n".join(lines) + "\n")
