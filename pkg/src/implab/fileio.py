"""Columnar text serialization, CSV diagnostics, and JSON summaries.

Profile and weight files share one plain-text layout: a header line with a
type tag and key=value metadata, a column-name line, then one row per grid
node at 17 significant digits (lossless round-trip for float64).  Report
emission is deterministic: identical inputs give byte-identical files.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

FLOAT_FMT = "%.17g"


def write_columnar(path, tag: str, meta: dict, columns: dict):
    """Write a columnar text file: '# implab-<tag> k=v ...' header."""
    path = Path(path)
    names = list(columns)
    arrays = [np.asarray(columns[k], dtype=float) for k in names]
    n = arrays[0].size
    if any(a.size != n for a in arrays):
        raise ValueError("columns must share one length")
    meta_str = " ".join(f"{k}={format_float(v) if isinstance(v, float) else v}"
                        for k, v in meta.items())
    lines = [f"# implab-{tag} {meta_str}".rstrip(), "# " + " ".join(names)]
    for i in range(n):
        lines.append(" ".join(FLOAT_FMT % a[i] for a in arrays))
    path.write_text("\n".join(lines) + "\n", encoding="ascii")


def read_columnar(path, expect_tag: str | None = None):
    """Read a columnar file; returns (tag, meta, {name: array})."""
    path = Path(path)
    with path.open(encoding="ascii") as fh:
        header = fh.readline().strip()
        colline = fh.readline().strip()
        if not header.startswith("# implab-"):
            raise ValueError(f"{path}: not an implab columnar file")
        head = header[2:].split()
        tag = head[0].removeprefix("implab-")
        if expect_tag is not None and tag != expect_tag:
            raise ValueError(f"{path}: expected tag {expect_tag!r}, found {tag!r}")
        meta = {}
        for item in head[1:]:
            k, _, v = item.partition("=")
            try:
                meta[k] = int(v)
            except ValueError:
                try:
                    meta[k] = float(v)
                except ValueError:
                    meta[k] = v
        names = colline[2:].split()
        data = np.loadtxt(fh, ndmin=2)
    cols = {name: data[:, j] for j, name in enumerate(names)}
    return tag, meta, cols


def format_float(x: float) -> str:
    return FLOAT_FMT % x


def write_csv(path, columns: list[str], rows: list[dict]):
    """CSV with a fixed column order; floats at 17 significant digits."""
    path = Path(path)
    lines = [",".join(columns)]
    for row in rows:
        cells = []
        for c in columns:
            v = row.get(c, "")
            if isinstance(v, (float, np.floating)):
                cells.append(FLOAT_FMT % v)
            else:
                cells.append(str(v))
        lines.append(",".join(cells))
    path.write_text("\n".join(lines) + "\n", encoding="ascii")


def _jsonify(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonify(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        # round-trip exact, shortest-repr form of the 17-digit value
        return float(FLOAT_FMT % float(obj))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return [_jsonify(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def write_json(path, payload: dict):
    """Deterministic JSON: sorted keys, value-preserving float formatting."""
    Path(path).write_text(
        json.dumps(_jsonify(payload), sort_keys=True, indent=1) + "\n",
        encoding="ascii",
    )


def save_profile(path, prof):
    write_columnar(
        path,
        "profile",
        {
            "gamma": float(prof.params.gamma),
            "r": float(prof.params.r),
            "dim": int(prof.params.dim),
            "xi_s": float(prof.xi_s),
            "n": int(prof.xi.size),
        },
        {
            "xi": prof.xi,
            "u": prof.u,
            "sigma": prof.sigma,
            "du": prof.du,
            "dsigma": prof.dsigma,
        },
    )


def load_profile(path):
    from .phase import GasParams
    from .profile import Profile

    _tag, meta, cols = read_columnar(path, expect_tag="profile")
    params = GasParams(gamma=meta["gamma"], r=meta["r"], dim=int(meta["dim"]))
    xi = cols["xi"]
    with np.errstate(divide="ignore", invalid="ignore"):
        uox = np.where(xi > 0, cols["u"] / np.where(xi > 0, xi, 1.0), -params.w_e)
    return Profile(
        xi=xi,
        u=cols["u"],
        sigma=cols["sigma"],
        du=cols["du"],
        dsigma=cols["dsigma"],
        u_over_xi=uox,
        xi_s=float(meta["xi_s"]),
        params=params,
        normalization_tag=f"xi_s={meta['xi_s']:.12g} (from file)",
        source=None,
    )


def save_weight(path, w):
    write_columnar(
        path,
        "weight",
        {
            "mu1": float(w.mu1),
            "c_lo": float(w.c_lo),
            "c_hi": float(w.c_hi),
            "a": float(w.params_h["a"]),
            "b": float(w.params_h["b"]),
            "c": float(w.params_h["c"]),
            "p": float(w.g_params["p"]),
            "q": float(w.g_params["q"]),
            "beta": float(w.g_params["beta"]),
            "n": int(w.xi.size),
        },
        {"xi": w.xi, "phi1": w.phi1, "h": w.h},
    )
