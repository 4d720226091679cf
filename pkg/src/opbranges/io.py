"""
JSON and CSV serialization.

Complex scalars are ``[re, im]``; matrices are lists of rows of ``[re, im]``
pairs. CSV output is comma separated with a header row and LF line endings.
Floats are written with ``repr`` so output is byte-stable across runs.
"""

import csv
import io
import json

import numpy as np

from opbranges import efun
from opbranges.debranges import KernelCombo

__all__ = [
    "complex_to_json",
    "complex_from_json",
    "vector_to_json",
    "vector_from_json",
    "matrix_to_json",
    "matrix_from_json",
    "efun_to_dict",
    "efun_from_dict",
    "combo_to_dict",
    "combo_from_dict",
    "matrix_csv",
    "table_csv",
    "spectrum_csv",
    "spectrum_to_dict",
    "dumps",
]


def _f(x) -> float:
    x = float(x)
    return 0.0 if x == 0.0 else x  # drop negative zero


def complex_to_json(z):
    z = complex(z)
    return [_f(z.real), _f(z.imag)]


def complex_from_json(v) -> complex:
    if isinstance(v, (int, float)):
        return complex(v)
    if isinstance(v, (list, tuple)) and len(v) == 2:
        return complex(float(v[0]), float(v[1]))
    raise ValueError(f"expected a number or [re, im] pair, got {v!r}")


def vector_to_json(v):
    return [complex_to_json(x) for x in np.atleast_1d(np.asarray(v, dtype=complex))]


def vector_from_json(v) -> np.ndarray:
    return np.array([complex_from_json(x) for x in v], dtype=complex)


def matrix_to_json(M):
    M = np.asarray(M, dtype=complex)
    if M.ndim == 0:
        M = M.reshape(1, 1)
    return [[complex_to_json(x) for x in row] for row in M]


def matrix_from_json(rows) -> np.ndarray:
    if isinstance(rows, (int, float)) or (isinstance(rows, list) and len(rows) == 2
                                          and all(isinstance(x, (int, float)) for x in rows)):
        return np.array([[complex_from_json(rows)]], dtype=complex)
    M = np.array([[complex_from_json(x) for x in row] for row in rows], dtype=complex)
    if M.ndim != 2:
        raise ValueError("matrix must be a list of rows")
    return M


def efun_to_dict(f) -> dict:
    """Tagged JSON form of the closed-form :class:`~opbranges.efun.EFun` variants."""
    if isinstance(f, efun.Exponential):
        c = f.c
        rates = complex_to_json(c) if np.ndim(c) == 0 else vector_to_json(c)
        return {"tag": f.tag, "c": rates, "M": matrix_to_json(f.M)}
    if isinstance(f, efun.Pencil):
        return {"tag": f.tag, "A": matrix_to_json(f.A), "B": matrix_to_json(f.B)}
    if isinstance(f, efun.Polynomial):
        return {"tag": f.tag, "coeffs": [matrix_to_json(C) for C in f.coeffs]}
    if isinstance(f, (efun.PotapovHalfPlane, efun.CharacteristicHalfPlane)):
        return {"tag": f.tag, "A": matrix_to_json(f.A)}
    raise TypeError(f"no JSON form for {type(f).__name__}")


def efun_from_dict(d: dict):
    tag = d.get("tag")
    if tag == "Exponential":
        c = d["c"]
        if isinstance(c, list) and c and isinstance(c[0], list):
            rates = vector_from_json(c)
        else:
            rates = complex_from_json(c)
        return efun.Exponential(rates, matrix_from_json(d["M"]))
    if tag == "Pencil":
        return efun.Pencil(matrix_from_json(d["A"]), matrix_from_json(d["B"]))
    if tag == "Polynomial":
        return efun.Polynomial([matrix_from_json(C) for C in d["coeffs"]])
    if tag == "PotapovHalfPlane":
        return efun.PotapovHalfPlane(matrix_from_json(d["A"]))
    if tag == "CharacteristicHalfPlane":
        return efun.CharacteristicHalfPlane(matrix_from_json(d["A"]))
    raise ValueError(f"unknown EFun tag {tag!r}")


def combo_to_dict(f: KernelCombo) -> dict:
    return {
        "base": f.label,
        "points": [complex_to_json(w) for w in f.points],
        "coeffs": [vector_to_json(c) for c in f.coeffs],
    }


def combo_from_dict(d: dict, base) -> KernelCombo:
    pts = [complex_from_json(w) for w in d.get("points", [])]
    coeffs = [vector_from_json(c) for c in d.get("coeffs", [])]
    n = base.dim if hasattr(base, "dim") else None
    if not coeffs:
        coeffs = np.zeros((0, n or 1), dtype=complex)
    return KernelCombo(base, pts, coeffs, d.get("base", ""))


def table_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(_f(x)) if isinstance(x, (float, np.floating)) else x for x in row])
    return buf.getvalue()


def matrix_csv(M) -> str:
    """One row per entry: ``row,col,re,im``."""
    M = np.asarray(M, dtype=complex)
    rows = [(i, j, M[i, j].real, M[i, j].imag) for i in range(M.shape[0]) for j in range(M.shape[1])]
    return table_csv(["row", "col", "re", "im"], rows)


def spectrum_csv(spec) -> str:
    rows = [(float(mu), m, float(s)) for mu, m, s in zip(spec.nodes, spec.multiplicities, spec.sigmas)]
    return table_csv(["node", "multiplicity", "sigma"], rows)


def spectrum_to_dict(spec) -> dict:
    return {
        "V": matrix_to_json(spec.V),
        "interval": [_f(spec.interval[0]), _f(spec.interval[1])],
        "nodes": [
            {
                "mu": _f(mu),
                "multiplicity": int(B.shape[1]),
                "sigma": _f(s),
                "nullspace": [vector_to_json(B[:, k]) for k in range(B.shape[1])],
            }
            for mu, B, s in zip(spec.nodes, spec.nullspaces, spec.sigmas)
        ],
    }


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = _f(obj)
        return x if np.isfinite(x) else None
    if isinstance(obj, (complex, np.complexfloating)):
        return complex_to_json(obj)
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


def dumps(obj) -> str:
    """Deterministic JSON text (sorted keys, two-space indent, trailing LF)."""
    return json.dumps(_clean(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"
