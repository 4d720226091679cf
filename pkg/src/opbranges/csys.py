"""
Canonical-system generator of de Branges pairs.

For a potential ``q(r)`` on ``[0, a]`` the ``n x 2n`` matrix function
``F_r(z) = [E-^r(z)  E+^r(z)]`` solves

    dF/dr = i z F j + F Q(r),    F_0 = [I  I],

with ``j = diag(I, -I)`` and ``Q = [[0, q], [q*, 0]]``. Integration is
classical fixed-step RK4, vectorized over many values of ``z`` at once. The
``z``-derivative is co-integrated from

    dG/dr = i F j + i z G j + G Q(r),    G_0 = 0.
"""

import csv
import io
import threading
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import simpson

from opbranges.debranges import DeBrangesOperator, ValidationGrid, validate
from opbranges.efun import EFun
from opbranges.errors import IntegrationError, PreconditionError
from opbranges.linops import DEFAULT_TOLERANCES, Tolerances, spectral_norm

__all__ = [
    "CanonicalSystemSpec",
    "Trace",
    "solve",
    "solve_many",
    "solve_with_zderiv",
    "solve_with_zderiv_many",
    "trace",
    "integral_identity_residual",
    "CanonicalBacked",
    "to_debranges",
    "read_potential_csv",
    "trace_csv",
]


def _parse_named(q: str, n: int) -> np.ndarray:
    if q == "zero":
        return np.zeros((n, n), dtype=complex)
    if q.startswith("constant:"):
        try:
            s = complex(q.split(":", 1)[1].strip().replace(" ", ""))
        except ValueError as exc:
            raise ValueError(f"cannot parse constant potential {q!r}") from exc
        return s * np.eye(n, dtype=complex)
    raise ValueError(f"unknown named potential {q!r} (expected 'zero' or 'constant:<scalar>')")


@dataclass(frozen=True, eq=False)
class CanonicalSystemSpec:
    """
    Parameters of a canonical system.

    Parameters
    ----------
    n : int
        Dimension of the coefficient space.
    a : float
        Right endpoint of the ``r`` interval.
    q : str, array or callable
        ``"zero"``, ``"constant:<scalar>"`` (that scalar times the identity),
        a constant ``n x n`` matrix, samples of shape ``(m, n, n)`` on the
        uniform grid ``linspace(0, a, m)`` (interpolated linearly), or a
        callable ``r -> n x n``.
    step : float, optional
        RK4 step ``h``; defaults to ``a / 1000``. Must divide ``a``.
    """

    n: int
    a: float
    q: object = "zero"
    step: float | None = None

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n!r}")
        if not (self.a > 0) or not np.isfinite(self.a):
            raise ValueError(f"a must be positive and finite, got {self.a!r}")
        h = self.a / 1000.0 if self.step is None else float(self.step)
        if not (h > 0):
            raise ValueError(f"step must be positive, got {h!r}")
        ratio = self.a / h
        if abs(ratio - round(ratio)) > 1e-8 * max(1.0, ratio):
            raise ValueError(f"step {h} does not divide a = {self.a}")
        object.__setattr__(self, "step", h)
        object.__setattr__(self, "_potential", self._build_potential())

    def _build_potential(self) -> Callable[[float], np.ndarray]:
        n, q = self.n, self.q
        if isinstance(q, str):
            const = _parse_named(q, n)
            return lambda r: const
        if callable(q):
            def fn(r):
                M = np.asarray(q(r), dtype=complex)
                if M.shape != (n, n) or not np.all(np.isfinite(M)):
                    raise ValueError(f"potential at r={r} is not a finite {n}x{n} matrix")
                return M
            return fn
        arr = np.asarray(q, dtype=complex)
        if not np.all(np.isfinite(arr)):
            raise ValueError("potential samples must be finite")
        if arr.shape == (n, n) or (n == 1 and arr.ndim == 0):
            const = arr.reshape(n, n)
            return lambda r: const
        if arr.ndim == 3 and arr.shape[1:] == (n, n) and arr.shape[0] >= 2:
            grid = np.linspace(0.0, self.a, arr.shape[0])
            dr = grid[1] - grid[0]

            def interp(r):
                t = min(max(r / dr, 0.0), arr.shape[0] - 1.0)
                k = min(int(t), arr.shape[0] - 2)
                w = t - k
                return (1.0 - w) * arr[k] + w * arr[k + 1]
            return interp
        raise ValueError(f"potential samples of shape {arr.shape} do not match n = {n}")

    def potential(self, r: float) -> np.ndarray:
        return self._potential(float(r))

    def Q(self, r: float) -> np.ndarray:
        q = self.potential(r)
        n = self.n
        out = np.zeros((2 * n, 2 * n), dtype=complex)
        out[:n, n:] = q
        out[n:, :n] = q.conj().T
        return out

    def jdiag(self) -> np.ndarray:
        return np.concatenate([np.ones(self.n), -np.ones(self.n)])


def _grid(spec: CanonicalSystemSpec, r: float) -> np.ndarray:
    r = float(r)
    if not (0.0 <= r <= spec.a * (1 + 1e-12)):
        raise PreconditionError(f"r must lie in [0, {spec.a}], got {r}")
    if r == 0.0:
        return np.zeros(1)
    steps = max(1, int(np.ceil(r / spec.step - 1e-9)))
    return np.linspace(0.0, r, steps + 1)


def _integrate(spec: CanonicalSystemSpec, r, zs, with_deriv: bool, keep: bool):
    """RK4 core. Returns final (F, G) and, if ``keep``, the stored F trajectory."""
    zs = np.atleast_1d(np.asarray(zs, dtype=complex))
    n = spec.n
    rs = _grid(spec, r)
    F = np.zeros((zs.size, n, 2 * n), dtype=complex)
    F[:, :, :n] = np.eye(n)
    F[:, :, n:] = np.eye(n)
    G = np.zeros_like(F) if with_deriv else None
    izj = 1j * zs[:, None, None] * spec.jdiag()[None, None, :]
    ij = 1j * spec.jdiag()[None, None, :]
    states = [F.copy()] if keep else None

    def rhs(Fs, Gs, Qr):
        dF = Fs * izj + Fs @ Qr
        if Gs is None:
            return dF, None
        return dF, Fs * ij + Gs * izj + Gs @ Qr

    Q_next = spec.Q(rs[0])
    with np.errstate(over="ignore", invalid="ignore"):  # finiteness is checked per step
        for k in range(rs.size - 1):
            h = rs[k + 1] - rs[k]
            Q0, Qm, Q_next = Q_next, spec.Q(rs[k] + 0.5 * h), spec.Q(rs[k + 1])
            k1 = rhs(F, G, Q0)
            k2 = rhs(F + 0.5 * h * k1[0], None if G is None else G + 0.5 * h * k1[1], Qm)
            k3 = rhs(F + 0.5 * h * k2[0], None if G is None else G + 0.5 * h * k2[1], Qm)
            k4 = rhs(F + h * k3[0], None if G is None else G + h * k3[1], Q_next)
            F = F + (h / 6.0) * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
            if G is not None:
                G = G + (h / 6.0) * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
            if not np.all(np.isfinite(F)) or (G is not None and not np.all(np.isfinite(G))):
                raise IntegrationError(f"non-finite state at step {k + 1} (r = {rs[k + 1]:.6g})",
                                       step=k + 1, r=float(rs[k + 1]))
            if keep:
                states.append(F.copy())
    return rs, F, G, (np.stack(states) if keep else None)


def _split(F, n):
    return F[..., :n], F[..., n:]


def solve_many(spec: CanonicalSystemSpec, r: float, zs):
    """``(E-, E+)`` at every ``z`` in ``zs``, each of shape ``(len(zs), n, n)``."""
    _, F, _, _ = _integrate(spec, r, zs, False, False)
    return _split(F, spec.n)


def solve(spec: CanonicalSystemSpec, r: float, z):
    """``(E-^r(z), E+^r(z))`` as two ``n x n`` matrices."""
    Em, Ep = solve_many(spec, r, [z])
    return Em[0], Ep[0]


def solve_with_zderiv_many(spec: CanonicalSystemSpec, r: float, zs):
    """Blocks and their ``z``-derivatives: ``((E-, E+), (dE-, dE+))`` batched over ``zs``."""
    _, F, G, _ = _integrate(spec, r, zs, True, False)
    return _split(F, spec.n), _split(G, spec.n)


def solve_with_zderiv(spec: CanonicalSystemSpec, r: float, z):
    (Em, Ep), (dEm, dEp) = solve_with_zderiv_many(spec, r, [z])
    return (Em[0], Ep[0]), (dEm[0], dEp[0])


@dataclass
class Trace:
    """Stored solver states ``F_s(z)`` on the integration grid."""

    rs: np.ndarray
    states: np.ndarray  # (len(rs), len(zs), n, 2n)
    zs: np.ndarray

    def norms(self, index: int = 0) -> np.ndarray:
        return np.array([spectral_norm(S[index]) for S in self.states])


def trace(spec: CanonicalSystemSpec, r: float, zs) -> Trace:
    zs = np.atleast_1d(np.asarray(zs, dtype=complex))
    rs, _, _, states = _integrate(spec, r, zs, False, True)
    return Trace(rs, states, zs)


def trace_csv(tr: Trace, index: int = 0) -> str:
    """CSV text with header ``r,norm_F`` for the ``index``-th traced point."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["r", "norm_F"])
    for r, v in zip(tr.rs, tr.norms(index)):
        w.writerow([repr(float(r)), repr(float(v))])
    return buf.getvalue()


def _gram_integral(tr: Trace, i: int, k: int) -> np.ndarray:
    """``int_0^r F_s(z_i) F_s(z_k)* ds`` by composite Simpson on the solver grid."""
    prod = tr.states[:, i] @ tr.states[:, k].conj().transpose(0, 2, 1)
    if tr.rs.size == 1:
        return np.zeros(prod.shape[1:], dtype=complex)
    return simpson(prod, x=tr.rs, axis=0)


def integral_identity_residual(spec: CanonicalSystemSpec, r: float, z, xi) -> float:
    """
    ``|| F_r(z) j F_r(xi)* - i (z - conj(xi)) int_0^r F_s(z) F_s(xi)* ds ||``.
    """
    z, xi = complex(z), complex(xi)
    tr = trace(spec, r, [z, xi])
    Fz, Fxi = tr.states[-1, 0], tr.states[-1, 1]
    lhs = (Fz * spec.jdiag()[None, :]) @ Fxi.conj().T
    rhs = 1j * (z - xi.conjugate()) * _gram_integral(tr, 0, 1)
    return spectral_norm(lhs - rhs)


class _SolveCache:
    """
    Memo of ``z -> F_r(z)`` and, when requested, ``dF_r(z)/dz``, shared by
    both components. Derivatives cost a second integration and are computed
    only on demand.
    """

    def __init__(self, spec, r):
        self.spec = spec
        self.r = float(r)
        self._values: dict = {}
        self._derivs: dict = {}
        self._lock = threading.Lock()

    def _fill(self, zs, deriv):
        store = self._derivs if deriv else self._values
        missing = [z for z in dict.fromkeys(complex(v) for v in zs) if z not in store]
        if missing:
            _, F, G, _ = _integrate(self.spec, self.r, missing, deriv, False)
            with self._lock:
                for k, z in enumerate(missing):
                    self._values[z] = F[k]
                    if deriv:
                        self._derivs[z] = G[k]
        return [store[complex(z)] for z in zs]

    def fetch(self, zs):
        """Values ``F_r(z)`` for each ``z`` in ``zs``."""
        return self._fill(np.atleast_1d(np.asarray(zs, dtype=complex)), False)

    def fetch_deriv(self, zs):
        return self._fill(np.atleast_1d(np.asarray(zs, dtype=complex)), True)

    def __len__(self):
        return len(self._values)


@dataclass(eq=False)
class CanonicalBacked(EFun):
    """
    One block of a canonical-system solution at fixed ``r`` as an entire function.

    ``component`` is ``"minus"`` (first block) or ``"plus"`` (second block).
    Both blocks built by :func:`canonical_pair` share one solve cache.
    """

    system: CanonicalSystemSpec
    r: float
    component: str
    cache: _SolveCache = field(default=None, repr=False)

    tag = "CanonicalBacked"

    def __post_init__(self):
        if self.component not in ("minus", "plus"):
            raise ValueError(f"component must be 'minus' or 'plus', got {self.component!r}")
        if self.cache is None:
            self.cache = _SolveCache(self.system, self.r)
        _grid(self.system, self.r)

    @property
    def dim(self):
        return self.system.n

    def _block(self, M):
        n = self.system.n
        return M[:, :n] if self.component == "minus" else M[:, n:]

    def prefetch(self, zs):
        self.cache.fetch(zs)

    def evaluate(self, z):
        return self._block(self.cache.fetch([z])[0]).copy()

    def derivative(self, z):
        return self._block(self.cache.fetch_deriv([z])[0]).copy()

    def evaluate_many(self, zs):
        return np.stack([self._block(f) for f in self.cache.fetch(zs)])


def canonical_pair(spec: CanonicalSystemSpec, r: float):
    """``(E-^r, E+^r)`` as :class:`CanonicalBacked` functions sharing a cache."""
    cache = _SolveCache(spec, r)
    return (CanonicalBacked(spec, r, "minus", cache), CanonicalBacked(spec, r, "plus", cache))


def _provisos(spec, r, xi0, tolerances):
    xi0 = complex(xi0)
    if xi0.imag <= 0:
        raise PreconditionError(f"xi0 must lie in the upper half-plane, got {xi0}")
    tr = trace(spec, r, [xi0, xi0.conjugate()])
    mins = []
    for i in (0, 1):
        M = _gram_integral(tr, i, i)
        mins.append(float(np.linalg.eigvalsh(0.5 * (M + M.conj().T))[0]))
    n = spec.n
    Ep_xi0 = tr.states[-1, 0][:, n:]
    Em_conj = tr.states[-1, 1][:, :n]
    sa_plus = spectral_norm(Ep_xi0 - Ep_xi0.conj().T)
    sa_minus = spectral_norm(Em_conj - Em_conj.conj().T)
    scale = 1.0 + max(spectral_norm(Ep_xi0), spectral_norm(Em_conj))
    pos = [m > tolerances.psd_tol for m in mins]
    sa = [sa_plus <= 1e-8 * scale, sa_minus <= 1e-8 * scale]
    return {
        "xi0": [xi0.real, xi0.imag],
        "integral_min_eig_xi0": mins[0],
        "integral_min_eig_conj_xi0": mins[1],
        "selfadjoint_residual_Eplus_xi0": sa_plus,
        "selfadjoint_residual_Eminus_conj_xi0": sa_minus,
        "witnessed": bool(all(pos) and all(sa)),
    }


def to_debranges(
    spec: CanonicalSystemSpec,
    r: float,
    grid: ValidationGrid = ValidationGrid(),
    tol: float = 1e-10,
    inner_tol: float = 1e-8,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
    xi0=1j,
    raise_on_failure: bool = True,
) -> DeBrangesOperator:
    """
    Validate the canonical pair at ``r`` as a de Branges operator.

    The positivity and self-adjointness provisos are spot-checked at ``xi0``
    and ``conj(xi0)`` and recorded under ``report.extras["provisos"]``; a
    positive outcome is reported as "witnessed", not proven.
    """
    if not (0.0 < float(r) <= spec.a * (1 + 1e-12)):
        raise PreconditionError(f"r must lie in (0, {spec.a}], got {r}")
    Em, Ep = canonical_pair(spec, r)
    db = validate(Em, Ep, grid, tol, inner_tol, tolerances, raise_on_failure)
    prov = _provisos(spec, r, xi0, tolerances)
    db.report.extras["provisos"] = prov
    db.report.notes.append("provisos witnessed at xi0" if prov["witnessed"]
                           else "provisos not witnessed at xi0")
    return db


def read_potential_csv(text: str, n: int) -> np.ndarray:
    """
    Parse potential samples from CSV text.

    Each row holds ``r`` followed by ``n*n`` entries as ``re, im`` pairs in
    row-major order. A header row is skipped when its first cell is not
    numeric. The ``r`` column must be uniform and start at 0.

    Returns
    -------
    (a, samples)
        The last ``r`` value and an array of shape ``(m, n, n)``.
    """
    rows = [row for row in csv.reader(io.StringIO(text)) if row and any(c.strip() for c in row)]
    if rows:
        try:
            float(rows[0][0])
        except ValueError:
            rows = rows[1:]
    if len(rows) < 2:
        raise ValueError("potential CSV needs at least two sample rows")
    width = 1 + 2 * n * n
    data = []
    for i, row in enumerate(rows):
        if len(row) != width:
            raise ValueError(f"row {i} has {len(row)} fields, expected {width}")
        data.append([float(c) for c in row])
    arr = np.asarray(data)
    rs = arr[:, 0]
    if rs[0] != 0.0 or not np.allclose(np.diff(rs), rs[1] - rs[0], rtol=1e-9, atol=0.0):
        raise ValueError("r column must start at 0 and be uniformly spaced")
    vals = arr[:, 1::2] + 1j * arr[:, 2::2]
    return float(rs[-1]), vals.reshape(len(rows), n, n)
