"""
Shipped example pairs and construction from configuration dictionaries.

Every construction returns ``(E-, E+)``; validation is left to the caller.
"""

import numpy as np

from opbranges.csys import CanonicalSystemSpec, canonical_pair, read_potential_csv
from opbranges.efun import Exponential, Pencil
from opbranges.io import efun_from_dict, matrix_from_json

__all__ = [
    "exponential_pair",
    "pencil_pair",
    "canonical_system",
    "from_config",
    "shipped_examples",
]


def exponential_pair(a, n: int = 1):
    """
    ``(e^{iza} I, e^{-iza} I)``, the Paley-Wiener pair.

    ``a`` may be a list of per-coordinate rates, giving a diagonal pair.
    """
    rates = np.asarray(a, dtype=float)
    if rates.ndim == 1:
        n = rates.size
    if np.any(rates <= 0):
        raise ValueError("rates must be positive")
    return Exponential(1j * rates, np.eye(n)), Exponential(-1j * rates, np.eye(n))


def pencil_pair(B, X=None):
    """
    ``((I + izB) X, (I - izB) X)`` for Hermitian positive definite ``B`` and
    unitary ``X``; its kernel is the constant ``B / pi``.
    """
    B = np.asarray(B, dtype=complex)
    B = B.reshape(1, 1) if B.ndim == 0 else B
    n = B.shape[0]
    X = np.eye(n, dtype=complex) if X is None else np.asarray(X, dtype=complex)
    if not np.allclose(B, B.conj().T, atol=1e-12) or np.linalg.eigvalsh(0.5 * (B + B.conj().T))[0] <= 0:
        raise ValueError("B must be Hermitian positive definite")
    BX = B @ X
    return Pencil(X, -1j * BX), Pencil(X, 1j * BX)


def canonical_system(n, a, q="zero", r=None, step=None):
    spec = CanonicalSystemSpec(n, a, q, step)
    return canonical_pair(spec, spec.a if r is None else r)


def _potential(q, n, base_dir):
    if isinstance(q, str):
        return q, None
    if isinstance(q, dict):
        if "csv" in q:
            path = q["csv"]
            if base_dir is not None and not str(path).startswith("/"):
                path = f"{base_dir}/{path}"
            with open(path, encoding="utf-8") as fh:
                return read_potential_csv(fh.read(), n)[1], None
        if "samples" in q:
            return np.stack([matrix_from_json(M) for M in q["samples"]]), None
        if "matrix" in q:
            return matrix_from_json(q["matrix"]), None
    raise ValueError(f"cannot interpret potential {q!r}")


def from_config(cfg: dict, base_dir=None):
    """
    Build ``(E-, E+)`` from a construction dictionary.

    Recognized ``type`` values: ``exponential`` (``a``, ``n``), ``pencil``
    (``B``, optional ``X``), ``canonical`` (``n``, ``a``, ``q``, optional
    ``r`` and ``step``) and ``pair`` (tagged ``Eminus`` / ``Eplus``).
    """
    kind = cfg.get("type")
    if kind == "exponential":
        return exponential_pair(cfg["a"], int(cfg.get("n", 1)))
    if kind == "pencil":
        X = cfg.get("X")
        return pencil_pair(matrix_from_json(cfg["B"]), None if X is None else matrix_from_json(X))
    if kind == "canonical":
        n = int(cfg["n"])
        q, _ = _potential(cfg.get("q", "zero"), n, base_dir)
        return canonical_system(n, float(cfg["a"]), q, cfg.get("r"), cfg.get("step"))
    if kind == "pair":
        return efun_from_dict(cfg["Eminus"]), efun_from_dict(cfg["Eplus"])
    raise ValueError(f"unknown construction type {kind!r}")


def shipped_examples() -> dict:
    """Named example pairs used by the acceptance suite."""
    B = np.array([[2.0, 0.5 - 0.25j], [0.5 + 0.25j, 1.0]])
    theta = 0.7
    X = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]], dtype=complex)
    q = np.array([[0.3, 0.1 + 0.05j], [0.1 - 0.05j, -0.2]])
    return {
        "exponential_a1_n1": exponential_pair(1.0, 1),
        "exponential_pi_n3": exponential_pair(np.pi, 3),
        "exponential_diag": exponential_pair([np.pi, 2 * np.pi / 3]),
        "pencil_n2": pencil_pair(B, X),
        "canonical_zero_n1": canonical_system(1, 1.0, "zero", step=1e-3),
        "canonical_const_n2": canonical_system(2, 1.0, q, step=1e-3),
    }
