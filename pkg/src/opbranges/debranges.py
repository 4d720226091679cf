"""
Reproducing kernels of de Branges spaces built from operator pairs.

A pair ``(E-, E+)`` of entire matrix functions is validated once by
:func:`validate`; the resulting :class:`DeBrangesOperator` is then used for
kernel evaluation

    K_xi(z) = (E+(z) E+(xi)* - E-(z) E-(xi)*) / rho_xi(z),
    rho_xi(z) = -2 pi i (z - conj(xi)),

Gram matrices, subspace kernels, projections, norms and the recovery of a
pair from a kernel. Elements of the space are represented by
:class:`KernelCombo`, a finite sum ``sum_j K_{w_j}(.) c_j``.

Most functions accept either a :class:`DeBrangesOperator` or a bare kernel
callable ``K(xi, z)``.
"""

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import simpson

from opbranges.efun import (
    EFun,
    InnerRatio,
    cauchy_derivative,
    derivative,
    evaluate,
    extend_inner,
    inner_check,
    InnerReport,
)
from opbranges.errors import DomainError, PreconditionError, SingularityError, ValidationFailure
from opbranges.linops import (
    DEFAULT_TOLERANCES,
    Tolerances,
    fredholm_index,
    is_psd,
    pinv,
    psd_sqrt,
    spectral_norm,
)

__all__ = [
    "DIAGONAL_SWITCH",
    "ValidationGrid",
    "ValidationReport",
    "DeBrangesOperator",
    "KernelCombo",
    "rho",
    "validate",
    "kernel",
    "kernel_dz",
    "kernel_many",
    "pair_kernel",
    "gram",
    "verify_positivity",
    "PositivityReport",
    "subspace_kernel",
    "project_orthocomplement",
    "recover_E",
    "RecoveredE",
    "hF_kernel",
    "gram_norm",
    "bnorm_line_quadrature",
    "LineNormResult",
    "backward_shift_eval",
    "isometry_check",
    "IsometryReport",
]

# below this |z - conj(xi)| the quotient loses >= 8 digits; use the derivative branch
DIAGONAL_SWITCH = 1e-8
# kernel_dz switches to a Cauchy integral inside this radius around conj(xi)
_DZ_SWITCH = 1e-3

TWO_PI_I = 2j * np.pi


def rho(xi, z) -> complex:
    """``rho_xi(z) = -2 pi i (z - conj(xi))``."""
    return -TWO_PI_I * (complex(z) - complex(xi).conjugate())


# -- validation -------------------------------------------------------------

@dataclass(frozen=True)
class ValidationGrid:
    """Sampling grids used by :func:`validate`."""

    identity_box: float = 3.0
    identity_count: int = 11
    upper_box: float = 3.0
    upper_count: int = 8            # upper grid is upper_count x upper_count
    real_span: float = 10.0
    real_count: int = 64
    witness_candidates: tuple = (1j, 0.0, -1j, 2j, -2j, 0.5 + 0.5j, -0.5 - 0.5j, 3j, -3j)

    def identity_points(self):
        t = np.linspace(-self.identity_box, self.identity_box, self.identity_count)
        X, Y = np.meshgrid(t, t)
        return (X + 1j * Y).ravel()

    def upper_points(self):
        x = np.linspace(-self.upper_box, self.upper_box, self.upper_count)
        y = np.geomspace(0.05, self.upper_box, self.upper_count)
        X, Y = np.meshgrid(x, y)
        return (X + 1j * Y).ravel()

    def real_points(self):
        return np.linspace(-self.real_span, self.real_span, self.real_count)


@dataclass
class ValidationReport:
    identity12_residual: float
    inner_report: InnerReport
    invertibility_points: dict
    index_pair: tuple
    tol: float
    degenerate: bool = False
    notes: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)

    @property
    def failed_check(self):
        """Name of the first failing check, or ``None``."""
        if not (self.identity12_residual <= self.tol):
            return "identity12"
        if not self.inner_report.passed:
            return "inner"
        for side in ("minus", "plus"):
            if self.invertibility_points.get(side) is None:
                return f"invertibility_{side}"
        if tuple(self.index_pair) != (0, 0):
            return "index_pair"
        return None

    @property
    def passed(self) -> bool:
        return self.failed_check is None

    def to_dict(self):
        inv = {}
        for side, hit in self.invertibility_points.items():
            inv[side] = None if hit is None else {"z": [hit[0].real, hit[0].imag], "sigma_min": hit[1]}
        return {
            "passed": self.passed,
            "failed_check": self.failed_check,
            "identity12_residual": self.identity12_residual,
            "tol": self.tol,
            "inner": self.inner_report.to_dict(),
            "invertibility_points": inv,
            "index_pair": list(self.index_pair),
            "degenerate": self.degenerate,
            "notes": list(self.notes),
            **self.extras,
        }


@dataclass(eq=False)
class DeBrangesOperator:
    """A validated pair ``(E-, E+)``; construct it with :func:`validate`."""

    Eminus: EFun
    Eplus: EFun
    dim: int
    report: ValidationReport
    tolerances: Tolerances = DEFAULT_TOLERANCES

    @property
    def F(self) -> InnerRatio:
        """The inner function ``E+^{-1} E-`` (already extended across the real axis)."""
        return InnerRatio(self.Eplus, self.Eminus, self.tolerances)

    def kernel(self, xi, z):
        return kernel(self, xi, z)

    def __call__(self, xi, z):
        return kernel(self, xi, z)


def _witness(E: EFun, candidates, tolerances):
    for z in candidates:
        M = evaluate(E, z)
        s = np.linalg.svd(M, compute_uv=False)
        if s[0] > 0 and s[-1] >= tolerances.singular_accept * s[0]:
            return complex(z), float(s[-1])
    return None


def validate(
    Eminus: EFun,
    Eplus: EFun,
    grid: ValidationGrid = ValidationGrid(),
    tol: float = 1e-10,
    inner_tol: float = 1e-8,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
    raise_on_failure: bool = True,
) -> DeBrangesOperator:
    """
    Validate a candidate pair and wrap it as a :class:`DeBrangesOperator`.

    The checks are, in order: the reflection identity
    ``E+(z) E+(conj z)* = E-(z) E-(conj z)*`` on a square grid, membership of
    ``E+^{-1} E-`` in both inner classes, an invertibility witness for each
    component, and the index pair at the witness.

    Raises
    ------
    PreconditionError
        If a component is not entire or the dimensions differ.
    ValidationFailure
        If a check fails and ``raise_on_failure`` is true. With
        ``raise_on_failure=False`` the operator is returned with a failing
        report (useful for negative controls).
    """
    for name, E in (("Eminus", Eminus), ("Eplus", Eplus)):
        if not getattr(E, "entire", False):
            raise PreconditionError(f"{name} ({type(E).__name__}) is not entire")
    if Eminus.dim != Eplus.dim:
        raise PreconditionError(f"dimension mismatch: {Eminus.dim} vs {Eplus.dim}")
    n = Eplus.dim

    pts = grid.identity_points()
    for E in (Eminus, Eplus):
        prefetch = getattr(E, "prefetch", None)
        if prefetch is not None:
            prefetch(np.concatenate([pts, pts.conj(), grid.upper_points(), grid.real_points()]))
    residual = 0.0
    for z in pts:
        zc = z.conjugate()
        lhs = evaluate(Eplus, z) @ evaluate(Eplus, zc).conj().T
        rhs = evaluate(Eminus, z) @ evaluate(Eminus, zc).conj().T
        residual = max(residual, spectral_norm(lhs - rhs))

    F = InnerRatio(Eplus, Eminus, tolerances)
    inner = inner_check(F, grid.upper_points(), grid.real_points(), inner_tol)

    witnesses = {
        "minus": _witness(Eminus, grid.witness_candidates, tolerances),
        "plus": _witness(Eplus, grid.witness_candidates, tolerances),
    }
    index_pair = (
        fredholm_index(evaluate(Eminus, witnesses["minus"][0] if witnesses["minus"] else 0.0)),
        fredholm_index(evaluate(Eplus, witnesses["plus"][0] if witnesses["plus"] else 0.0)),
    )

    report = ValidationReport(float(residual), inner, witnesses, index_pair, tol)
    db = DeBrangesOperator(Eminus, Eplus, n, report, tolerances)

    probes = (1j, 1.0 + 1j, -1.0 + 0.5j, 0.0)
    diag = max(spectral_norm(kernel(db, p, p)) for p in probes)
    if diag <= 1e-8:
        report.degenerate = True
        report.notes.append("kernel vanishes numerically (degenerate space)")

    if raise_on_failure and not report.passed:
        raise ValidationFailure(report.failed_check, report)
    return db


# -- kernel evaluation ------------------------------------------------------

def _kernel_fn(db) -> Callable:
    if isinstance(db, DeBrangesOperator):
        return lambda xi, z: kernel(db, xi, z)
    if callable(db):
        return db
    raise TypeError(f"expected a DeBrangesOperator or kernel callable, got {type(db).__name__}")


def pair_kernel(Eminus, Eplus, xi, z) -> np.ndarray:
    """Kernel of an arbitrary (unvalidated) pair; see :func:`kernel`."""
    xi, z = complex(xi), complex(z)
    xic = xi.conjugate()
    Ep_xi = evaluate(Eplus, xi).conj().T
    Em_xi = evaluate(Eminus, xi).conj().T
    if abs(z - xic) <= DIAGONAL_SWITCH:
        num = derivative(Eplus, xic) @ Ep_xi - derivative(Eminus, xic) @ Em_xi
        return num / (-TWO_PI_I)
    num = evaluate(Eplus, z) @ Ep_xi - evaluate(Eminus, z) @ Em_xi
    return num / rho(xi, z)


def kernel(db, xi, z) -> np.ndarray:
    """
    ``K_xi(z)`` for a de Branges operator.

    Uses the derivative branch
    ``(E+'(conj xi) E+(xi)* - E-'(conj xi) E-(xi)*)/(-2 pi i)`` when
    ``|z - conj(xi)| <= DIAGONAL_SWITCH``.
    """
    if not isinstance(db, DeBrangesOperator):
        return np.asarray(db(complex(xi), complex(z)), dtype=complex)
    return pair_kernel(db.Eminus, db.Eplus, xi, z)


def kernel_many(db, xi, zs) -> np.ndarray:
    """``K_xi(z)`` for an array of ``z``, shape ``(len(zs), n, n)``."""
    zs = np.atleast_1d(np.asarray(zs, dtype=complex))
    if not isinstance(db, DeBrangesOperator):
        return np.stack([kernel(db, xi, z) for z in zs])
    xi = complex(xi)
    xic = xi.conjugate()
    Ep_xi = evaluate(db.Eplus, xi).conj().T
    Em_xi = evaluate(db.Eminus, xi).conj().T
    num = db.Eplus.evaluate_many(zs) @ Ep_xi - db.Eminus.evaluate_many(zs) @ Em_xi
    r = -TWO_PI_I * (zs - xic)
    near = np.abs(zs - xic) <= DIAGONAL_SWITCH
    r_safe = np.where(near, 1.0, r)
    out = num / r_safe[:, None, None]
    if np.any(near):
        out[near] = pair_kernel(db.Eminus, db.Eplus, xi, xic)
    return out


def kernel_dz(db, xi, z) -> np.ndarray:
    """
    ``d/dz K_xi(z)``.

    Away from ``conj(xi)`` this is ``(N'(z) + 2 pi i K_xi(z)) / rho_xi(z)``
    with ``N`` the kernel numerator; near it (and for bare kernel callables)
    the Cauchy integral of the kernel on a small circle is used.
    """
    xi, z = complex(xi), complex(z)
    if not isinstance(db, DeBrangesOperator) or abs(z - xi.conjugate()) <= _DZ_SWITCH:
        fn = _kernel_fn(db)
        return cauchy_derivative(lambda s: fn(xi, s), z, radius=1e-2)
    Ep_xi = evaluate(db.Eplus, xi).conj().T
    Em_xi = evaluate(db.Eminus, xi).conj().T
    dnum = derivative(db.Eplus, z) @ Ep_xi - derivative(db.Eminus, z) @ Em_xi
    return (dnum + TWO_PI_I * kernel(db, xi, z)) / rho(xi, z)


def _dim_of(db, probe=1j):
    if isinstance(db, DeBrangesOperator):
        return db.dim
    return np.asarray(db(probe, probe)).shape[0]


def gram(db, points: Sequence[complex], vectors: Sequence) -> np.ndarray:
    """
    Scalar Gram matrix ``G[l, m] = <K_{xi_m}(xi_l) u_m, u_l>``.

    One row per (point, vector) pair; the result is Hermitian PSD for a
    positive kernel.
    """
    pts = np.atleast_1d(np.asarray(points, dtype=complex))
    vecs = [np.atleast_1d(np.asarray(v, dtype=complex)) for v in vectors]
    if len(vecs) != pts.size:
        raise ValueError(f"{pts.size} points but {len(vecs)} vectors")
    if pts.size == 0:
        raise ValueError("gram needs at least one point")
    n = _dim_of(db)
    for v in vecs:
        if v.shape != (n,):
            raise ValueError(f"vector of shape {v.shape} does not match dimension {n}")
    m = pts.size
    if isinstance(db, DeBrangesOperator):
        # G[l, k] = (p_l* p_k - q_l* q_k) / rho_{xi_k}(xi_l), p = E+(xi)* u, q = E-(xi)* u
        U = np.stack(vecs)
        P = np.einsum("mij,mi->mj", db.Eplus.evaluate_many(pts).conj(), U)
        Q = np.einsum("mij,mi->mj", db.Eminus.evaluate_many(pts).conj(), U)
        diff = pts[:, None] - pts.conj()[None, :]
        near = np.abs(diff) <= DIAGONAL_SWITCH
        G = (P.conj() @ P.T - Q.conj() @ Q.T) / np.where(near, 1.0, -TWO_PI_I * diff)
        for l, k in zip(*np.nonzero(near)):
            G[l, k] = vecs[l].conj() @ kernel(db, pts[k], pts[l]) @ vecs[k]
        return G
    fn = _kernel_fn(db)
    G = np.empty((m, m), dtype=complex)
    for l in range(m):
        for k in range(m):
            G[l, k] = vecs[l].conj() @ np.asarray(fn(pts[k], pts[l])) @ vecs[k]
    return G


@dataclass
class PositivityReport:
    trials: int
    count: int
    tol: float
    worst_min_eig: float
    worst_scale: float
    worst_trial: int

    @property
    def passed(self) -> bool:
        return bool(self.worst_min_eig >= -self.tol * (1.0 + self.worst_scale))

    def to_dict(self):
        return {
            "passed": self.passed,
            "trials": self.trials,
            "count": self.count,
            "tol": self.tol,
            "worst_min_eig": self.worst_min_eig,
            "worst_scale": self.worst_scale,
            "worst_trial": self.worst_trial,
        }


def _sample_pairs(rng, count, box, n):
    xmin, xmax, ymin, ymax = box
    pts = rng.uniform(xmin, xmax, count) + 1j * rng.uniform(ymin, ymax, count)
    vecs = rng.standard_normal((count, n)) + 1j * rng.standard_normal((count, n))
    vecs /= np.linalg.norm(vecs, axis=1, keepdims=True)
    return pts, vecs


def verify_positivity(
    db,
    count: int = 10,
    box=(-2.0, 2.0, -2.0, 2.0),
    seed: int = 0,
    tol: float = 1e-10,
    trials: int = 1,
) -> PositivityReport:
    """
    Sample ``trials`` Gram matrices of ``count`` random (point, unit vector)
    pairs in the box ``(xmin, xmax, ymin, ymax)`` and report the worst
    smallest eigenvalue. Sampling is deterministic in ``seed``.
    """
    rng = np.random.default_rng(seed)
    n = _dim_of(db)
    draws = [_sample_pairs(rng, count, box, n) for _ in range(trials)]
    if isinstance(db, DeBrangesOperator):
        allpts = np.concatenate([p for p, _ in draws])
        for E in (db.Eminus, db.Eplus):
            prefetch = getattr(E, "prefetch", None)
            if prefetch is not None:
                prefetch(allpts)
    worst, worst_scale, worst_t = np.inf, 0.0, -1
    for t, (pts, vecs) in enumerate(draws):
        G = gram(db, pts, vecs)
        H = 0.5 * (G + G.conj().T)
        w = np.linalg.eigvalsh(H)
        scale = float(np.max(np.abs(w)))
        slack = w[0] / (1.0 + scale)
        if worst_t < 0 or slack < worst / (1.0 + worst_scale):
            worst, worst_scale, worst_t = float(w[0]), scale, t
    return PositivityReport(trials, count, tol, worst, worst_scale, worst_t)


# -- subspaces and projections ----------------------------------------------

def subspace_kernel(db, beta, xi, z, rank_rel_tol: float = DEFAULT_TOLERANCES.rank_rel_tol) -> np.ndarray:
    """Kernel of ``{f : f(beta) = 0}``: ``K_xi(z) - K_beta(z) K_beta(beta)^+ K_xi(beta)``."""
    fn = _kernel_fn(db)
    return fn(xi, z) - fn(beta, z) @ pinv(fn(beta, beta), rank_rel_tol) @ fn(xi, beta)


@dataclass(eq=False)
class KernelCombo:
    """
    The space element ``z -> sum_j K_{w_j}(z) c_j``.

    ``base`` is a :class:`DeBrangesOperator` or a kernel callable; ``label``
    is an optional reference used when serializing.
    """

    base: object
    points: np.ndarray
    coeffs: np.ndarray
    label: str = ""

    def __post_init__(self):
        self.points = np.atleast_1d(np.asarray(self.points, dtype=complex))
        n = _dim_of(self.base)
        self.coeffs = np.asarray(self.coeffs, dtype=complex).reshape(self.points.size, n)

    @property
    def dim(self):
        return self.coeffs.shape[1]

    def evaluate(self, z) -> np.ndarray:
        fn = _kernel_fn(self.base)
        out = np.zeros(self.dim, dtype=complex)
        for w, c in zip(self.points, self.coeffs):
            out += fn(w, z) @ c
        return out

    __call__ = evaluate

    def evaluate_many(self, zs) -> np.ndarray:
        zs = np.atleast_1d(np.asarray(zs, dtype=complex))
        out = np.zeros((zs.size, self.dim), dtype=complex)
        for w, c in zip(self.points, self.coeffs):
            out += kernel_many(self.base, w, zs) @ c
        return out

    def derivative(self, z) -> np.ndarray:
        out = np.zeros(self.dim, dtype=complex)
        for w, c in zip(self.points, self.coeffs):
            out += kernel_dz(self.base, w, z) @ c
        return out

    def _combine(self, other, sign):
        if other.base is not self.base:
            raise ValueError("kernel combinations over different bases")
        return KernelCombo(
            self.base,
            np.concatenate([self.points, other.points]),
            np.concatenate([self.coeffs, sign * other.coeffs]),
            self.label,
        )

    def __add__(self, other):
        return self._combine(other, 1.0)

    def __sub__(self, other):
        return self._combine(other, -1.0)

    def scaled(self, factor):
        return KernelCombo(self.base, self.points, factor * self.coeffs, self.label)


def project_orthocomplement(db, f: KernelCombo, beta) -> KernelCombo:
    """Orthogonal projection onto ``{K_beta u}``: ``K_beta K_beta(beta)^+ f(beta)``."""
    fn = _kernel_fn(db)
    beta = complex(beta)
    coeff = pinv(fn(beta, beta), db.tolerances.rank_rel_tol if isinstance(db, DeBrangesOperator)
                 else DEFAULT_TOLERANCES.rank_rel_tol) @ f.evaluate(beta)
    return KernelCombo(f.base, [beta], [coeff], f.label)


def gram_norm(db, f: KernelCombo) -> float:
    """RKHS norm ``(sum_{l,m} <K_{w_m}(w_l) c_m, c_l>)^{1/2}``."""
    if f.points.size == 0:
        return 0.0
    fn = _kernel_fn(db)
    total = 0.0 + 0.0j
    for wl, cl in zip(f.points, f.coeffs):
        for wm, cm in zip(f.points, f.coeffs):
            total += cl.conj() @ np.asarray(fn(wm, wl)) @ cm
    return float(np.sqrt(max(total.real, 0.0)))


# -- recovery of a pair from a kernel ---------------------------------------

@dataclass(eq=False)
class RecoveredE(EFun):
    """``z -> sign * rho_p(z) * scale * K_p(z) @ right`` built from a kernel."""

    kernel_source: object
    point: complex
    sign: float
    scale: float
    right: np.ndarray

    tag = "RecoveredE"

    @property
    def dim(self):
        return self.right.shape[0]

    def prefetch(self, zs):
        # forwards batching hints to a solver-backed source pair
        for E in (getattr(self.kernel_source, "Eminus", None), getattr(self.kernel_source, "Eplus", None)):
            if hasattr(E, "prefetch"):
                E.prefetch(zs)

    def evaluate(self, z):
        fn = _kernel_fn(self.kernel_source)
        return self.sign * self.scale * rho(self.point, z) * np.asarray(fn(self.point, z)) @ self.right

    def derivative(self, z):
        fn = _kernel_fn(self.kernel_source)
        dK = kernel_dz(self.kernel_source, self.point, z)
        val = -TWO_PI_I * np.asarray(fn(self.point, z)) + rho(self.point, z) * dK
        return self.sign * self.scale * val @ self.right


def _inverse_sqrt(M, what, tolerances):
    H = 0.5 * (M + M.conj().T)
    w = np.linalg.eigvalsh(H)
    if w[-1] <= 0 or w[0] < tolerances.singular_accept * w[-1]:
        raise SingularityError(f"{what} is singular or indefinite (eigenvalues {w[0]:.3e} .. {w[-1]:.3e})",
                               sigma=float(w[0]))
    return np.linalg.inv(psd_sqrt(H, tolerances.psd_tol))


def recover_E(db, beta, tolerances: Tolerances = DEFAULT_TOLERANCES):
    """
    Rebuild ``(E-, E+)`` from a kernel at a point ``beta`` in the upper half-plane.

    ``E+(z) = rho_beta(z) rho_beta(beta)^{-1/2} K_beta(z) K_beta(beta)^{-1/2}``
    and
    ``E-(z) = -rho_{conj beta}(z) rho_beta(beta)^{-1/2} K_{conj beta}(z) K_{conj beta}(conj beta)^{-1/2}``.

    Returns
    -------
    (RecoveredE, RecoveredE)
        ``(E-, E+)``.
    """
    beta = complex(beta)
    if beta.imag <= 0:
        raise PreconditionError(f"beta must lie in the upper half-plane, got {beta}")
    fn = _kernel_fn(db)
    bc = beta.conjugate()
    Kb = np.asarray(fn(beta, beta), dtype=complex)
    Kbc = np.asarray(fn(bc, bc), dtype=complex)
    right_plus = _inverse_sqrt(Kb, "K_beta(beta)", tolerances)
    right_minus = _inverse_sqrt(Kbc, "K_conj(beta)(conj(beta))", tolerances)
    s = rho(beta, beta).real ** -0.5  # rho_beta(beta) = 4 pi Im(beta) > 0
    Eplus = RecoveredE(db, beta, 1.0, s, right_plus)
    Eminus = RecoveredE(db, bc, -1.0, s, right_minus)
    return Eminus, Eplus


# -- kernel of H(F) ---------------------------------------------------------

def _extended_value(F, z):
    try:
        return evaluate(F, z)
    except DomainError:
        if complex(z).imag < 0:
            return extend_inner(F, z)
        raise


def _extended_derivative(F, z):
    z = complex(z)
    try:
        return derivative(F, z)
    except DomainError:
        if z.imag >= 0:
            raise
    Ginv = extend_inner(F, z)
    dG = derivative(F, z.conjugate()).conj().T
    return -Ginv @ dG @ Ginv


def hF_kernel(F, xi, z) -> np.ndarray:
    """
    Kernel ``(I - F(z) F(xi)*) / rho_xi(z)`` of the space attached to an
    inner function, with ``F`` reflected into the lower half-plane where
    needed; diagonal branch ``F'(conj xi) F(xi)* / (2 pi i)``.
    """
    xi, z = complex(xi), complex(z)
    Fxi = _extended_value(F, xi).conj().T
    n = Fxi.shape[0]
    if abs(z - xi.conjugate()) <= DIAGONAL_SWITCH:
        return _extended_derivative(F, xi.conjugate()) @ Fxi / TWO_PI_I
    return (np.eye(n) - _extended_value(F, z) @ Fxi) / rho(xi, z)


# -- norms on the real line -------------------------------------------------

@dataclass
class LineNormResult:
    value: float
    tail_bound: float
    tail_known: bool
    skipped: list = field(default_factory=list)

    def to_dict(self):
        return {
            "value": self.value,
            "tail_bound": self.tail_bound if self.tail_known else None,
            "tail_known": self.tail_known,
            "skipped": [float(x) for x in self.skipped],
        }


def bnorm_line_quadrature(db: DeBrangesOperator, f, T: float, steps: int = 20000) -> LineNormResult:
    """
    Composite Simpson value of ``int_{-T}^{T} ||E+(x)^{-1} f(x)||^2 dx``.

    For :class:`KernelCombo` inputs the integrand decays like ``1/x^2``; the
    reported tail bound is ``(C_- + C_+)/T`` with ``C_pm`` the largest value
    of ``x^2 * integrand`` over the outer tenth of each half-interval. Other
    inputs get ``tail_known = False``. Points where ``E+`` is singular are
    skipped (integrand set to zero) and listed.
    """
    if T <= 0:
        raise ValueError("T must be positive")
    steps = int(steps) + (int(steps) % 2)
    x = np.linspace(-T, T, steps + 1)
    if hasattr(f, "evaluate_many"):
        vals = np.asarray(f.evaluate_many(x), dtype=complex)
    else:
        vals = np.stack([np.atleast_1d(np.asarray(f(xx), dtype=complex)) for xx in x])
    Ep = db.Eplus.evaluate_many(x)
    s = np.linalg.svd(Ep, compute_uv=False)
    singular = (s[:, -1] < db.tolerances.singular_accept * s[:, 0]) | (s[:, 0] == 0)
    Ep_safe = np.where(singular[:, None, None], np.eye(db.dim)[None], Ep)
    g = np.linalg.solve(Ep_safe, vals[..., None])[..., 0]
    integrand = np.sum(np.abs(g) ** 2, axis=1)
    integrand[singular] = 0.0
    value = float(simpson(integrand, x=x))

    tail_known = isinstance(f, KernelCombo)
    tail = float("nan")
    if tail_known:
        k = max(2, steps // 20)
        c_left = float(np.max(x[:k] ** 2 * integrand[:k]))
        c_right = float(np.max(x[-k:] ** 2 * integrand[-k:]))
        tail = (c_left + c_right) / T
    return LineNormResult(value, tail, tail_known, list(x[singular]))


def backward_shift_eval(f, z0, xi) -> np.ndarray:
    """
    ``(f(xi) - f(z0)) / (xi - z0)``, or ``f'(z0)`` when ``|xi - z0| <= 1e-8``.
    """
    z0, xi = complex(z0), complex(xi)
    fn = f.evaluate if hasattr(f, "evaluate") else f
    if abs(xi - z0) <= DIAGONAL_SWITCH:
        if hasattr(f, "derivative"):
            return np.asarray(f.derivative(z0), dtype=complex)
        return cauchy_derivative(fn, z0)
    return (np.asarray(fn(xi), dtype=complex) - np.asarray(fn(z0), dtype=complex)) / (xi - z0)


# -- isometry between H_beta and H_conj(beta) -------------------------------

@dataclass
class IsometryReport:
    beta: complex
    w: complex
    f_norm_sq: float
    h_norm_sq: float
    f_norm_sq_gram: float
    h_norm_sq_gram: float
    tol: float

    @property
    def difference(self) -> float:
        return abs(self.h_norm_sq - self.f_norm_sq)

    @property
    def passed(self) -> bool:
        return bool(self.difference <= self.tol * (1.0 + self.f_norm_sq))

    def to_dict(self):
        return {
            "beta": [self.beta.real, self.beta.imag],
            "w": [self.w.real, self.w.imag],
            "f_norm_sq": self.f_norm_sq,
            "h_norm_sq": self.h_norm_sq,
            "f_norm_sq_gram": self.f_norm_sq_gram,
            "h_norm_sq_gram": self.h_norm_sq_gram,
            "difference": self.difference,
            "tol": self.tol,
            "passed": self.passed,
        }


def isometry_check(db, beta, w, u, tol: float = 1e-9,
                   tolerances: Tolerances = DEFAULT_TOLERANCES) -> IsometryReport:
    """
    Compare ``||f||`` for ``f = K^beta_w u`` with ``||h||`` for
    ``h = ((conj w - conj beta)/(conj w - beta)) K^{conj beta}_w u``.

    Each squared norm is computed twice: from the diagonal of the subspace
    kernel and from the Gram form of the two-term kernel combination that
    represents the element in the whole space.
    """
    if isinstance(db, DeBrangesOperator) and not db.report.passed:
        raise PreconditionError("isometry_check requires a pair that passed validation")
    beta, w = complex(beta), complex(w)
    if beta.imag <= 0:
        raise PreconditionError(f"beta must lie in the upper half-plane, got {beta}")
    bc = beta.conjugate()
    if abs(w.conjugate() - beta) == 0.0:
        raise PreconditionError("w = conj(beta) is a pole of the isometry factor")
    fn = _kernel_fn(db)
    u = np.atleast_1d(np.asarray(u, dtype=complex))
    Kb, Kbc = fn(beta, beta), fn(bc, bc)
    for M, what in ((Kb, "K_beta(beta)"), (Kbc, "K_conj(beta)(conj(beta))")):
        s = np.linalg.svd(M, compute_uv=False)
        if s[0] == 0 or s[-1] < tolerances.singular_accept * s[0]:
            raise PreconditionError(f"{what} is not invertible")

    factor = (w.conjugate() - bc) / (w.conjugate() - beta)
    f_sq = float(np.real(u.conj() @ subspace_kernel(fn, beta, w, w) @ u))
    h_sq = float(abs(factor) ** 2 * np.real(u.conj() @ subspace_kernel(fn, bc, w, w) @ u))

    f_combo = KernelCombo(fn, [w, beta], [u, -np.linalg.solve(Kb, fn(w, beta) @ u)])
    h_combo = KernelCombo(fn, [w, bc], [factor * u, -factor * np.linalg.solve(Kbc, fn(w, bc) @ u)])
    return IsometryReport(
        beta, w, f_sq, h_sq,
        gram_norm(fn, f_combo) ** 2, gram_norm(fn, h_combo) ** 2, tol,
    )


def psd_gram_check(G, tol: float = DEFAULT_TOLERANCES.psd_tol) -> bool:
    return is_psd(0.5 * (G + G.conj().T), tol)
