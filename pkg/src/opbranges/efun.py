"""
Operator-valued entire and half-plane holomorphic functions.

An :class:`EFun` evaluates ``z -> E(z)`` as an ``n x n`` complex matrix and
provides the analytic ``z``-derivative. The entire variants
(:class:`Exponential`, :class:`Pencil`, :class:`Polynomial` and the
canonical-system backed variant in :mod:`opbranges.csys`) may be used as
components of a de Branges pair; the half-plane variants
(:class:`PotapovHalfPlane`, :class:`CharacteristicHalfPlane`) carry
``entire = False`` and are only meant as test inner functions.

Disc formulas are transported to the upper half-plane by pre-composition
with :func:`cayley_to_disc`.
"""

from dataclasses import dataclass, field
from typing import Callable, ClassVar, NamedTuple, Sequence

import numpy as np

from opbranges.errors import DomainError, PreconditionError, SingularityError
from opbranges.linops import (
    DEFAULT_TOLERANCES,
    Tolerances,
    as_cmat,
    psd_sqrt,
    sigma_min,
    spectral_norm,
)

__all__ = [
    "EFun",
    "Exponential",
    "Pencil",
    "Polynomial",
    "PotapovHalfPlane",
    "CharacteristicHalfPlane",
    "InnerRatio",
    "ExtendedInner",
    "evaluate",
    "derivative",
    "ratio_evaluate",
    "extend_inner",
    "cayley_to_disc",
    "cayley_to_halfplane",
    "potapov",
    "characteristic_function",
    "CharacteristicValue",
    "inner_check",
    "InnerReport",
    "cauchy_derivative",
]


class EFun:
    """Base class for matrix-valued holomorphic functions."""

    tag: ClassVar[str] = "EFun"
    entire: ClassVar[bool] = True

    @property
    def dim(self) -> int:
        raise NotImplementedError

    def evaluate(self, z) -> np.ndarray:
        raise NotImplementedError

    def derivative(self, z) -> np.ndarray:
        raise NotImplementedError

    def evaluate_many(self, zs) -> np.ndarray:
        zs = np.atleast_1d(np.asarray(zs, dtype=complex))
        if zs.size == 0:
            return np.zeros((0, self.dim, self.dim), dtype=complex)
        return np.stack([self.evaluate(z) for z in zs])

    def __call__(self, z) -> np.ndarray:
        return self.evaluate(z)


def _check_dims(*mats):
    n = mats[0].shape[0]
    for M in mats:
        if M.shape != (n, n):
            raise ValueError(f"all matrices must be square of one dimension {n}, got {M.shape}")
    return n


@dataclass(eq=False)
class Exponential(EFun):
    """
    ``z -> diag(exp(c_k z)) M``.

    ``c`` is a scalar rate (then this is ``exp(c z) M``) or one rate per row.
    """

    c: object
    M: np.ndarray

    tag: ClassVar[str] = "Exponential"

    def __post_init__(self):
        self.M = as_cmat(self.M)
        n = _check_dims(self.M)
        c = np.asarray(self.c, dtype=complex)
        if c.ndim == 0:
            self.c = complex(c)
        elif c.shape == (n,):
            self.c = c
        else:
            raise ValueError(f"rates must be a scalar or a length-{n} vector, got shape {c.shape}")

    @property
    def dim(self):
        return self.M.shape[0]

    def _rates(self):
        return np.broadcast_to(np.asarray(self.c, dtype=complex), (self.dim,))

    def evaluate(self, z):
        return np.exp(self._rates() * complex(z))[:, None] * self.M

    def derivative(self, z):
        r = self._rates()
        return (r * np.exp(r * complex(z)))[:, None] * self.M

    def evaluate_many(self, zs):
        zs = np.atleast_1d(np.asarray(zs, dtype=complex))
        return np.exp(zs[:, None] * self._rates()[None, :])[:, :, None] * self.M[None]


@dataclass(eq=False)
class Pencil(EFun):
    """Linear pencil ``z -> A - z B``."""

    A: np.ndarray
    B: np.ndarray

    tag: ClassVar[str] = "Pencil"

    def __post_init__(self):
        self.A = as_cmat(self.A)
        self.B = as_cmat(self.B)
        _check_dims(self.A, self.B)

    @property
    def dim(self):
        return self.A.shape[0]

    def evaluate(self, z):
        return self.A - complex(z) * self.B

    def derivative(self, z):
        return -self.B.copy()

    def evaluate_many(self, zs):
        zs = np.atleast_1d(np.asarray(zs, dtype=complex))
        return self.A[None] - zs[:, None, None] * self.B[None]


@dataclass(eq=False)
class Polynomial(EFun):
    """``z -> sum_k coeffs[k] z**k``."""

    coeffs: Sequence[np.ndarray]

    tag: ClassVar[str] = "Polynomial"

    def __post_init__(self):
        if len(self.coeffs) == 0:
            raise ValueError("polynomial needs at least one coefficient")
        self.coeffs = [as_cmat(C) for C in self.coeffs]
        _check_dims(*self.coeffs)

    @property
    def dim(self):
        return self.coeffs[0].shape[0]

    def evaluate(self, z):
        z = complex(z)
        out = np.zeros_like(self.coeffs[0])
        for C in reversed(self.coeffs):  # Horner
            out = out * z + C
        return out

    def derivative(self, z):
        z = complex(z)
        out = np.zeros_like(self.coeffs[0])
        for k in range(len(self.coeffs) - 1, 0, -1):
            out = out * z + k * self.coeffs[k]
        return out


# -- Cayley transform ------------------------------------------------------

def cayley_to_disc(z) -> complex:
    """``(z - i)/(z + i)``: upper half-plane onto the unit disc."""
    z = complex(z)
    if z == -1j:
        raise DomainError("cayley_to_disc has a pole at z = -i")
    return (z - 1j) / (z + 1j)


def cayley_to_halfplane(w) -> complex:
    """Inverse Cayley map ``i (1 + w)/(1 - w)``."""
    w = complex(w)
    if w == 1:
        raise DomainError("cayley_to_halfplane has a pole at w = 1")
    return 1j * (1 + w) / (1 - w)


def _cayley_derivative(z):
    return 2j / (complex(z) + 1j) ** 2


# -- Potapov and characteristic functions ------------------------------------

_DISC_SLACK = 1e-12


class _PotapovFactors(NamedTuple):
    A: np.ndarray
    left: np.ndarray   # (I - A*A)^{1/2}
    right: np.ndarray  # (I - AA*)^{1/2}


def _potapov_factors(A) -> _PotapovFactors:
    A = as_cmat(A)
    _check_dims(A)
    n = A.shape[0]
    eye = np.eye(n)
    radius = float(np.max(np.abs(np.linalg.eigvals(A)))) if n else 0.0
    if radius >= 1.0:
        raise PreconditionError(f"potapov requires spectral radius < 1, got r(A) = {radius:.6g}")
    norm = spectral_norm(A)
    if norm > 1.0 + _DISC_SLACK:
        raise PreconditionError(f"potapov requires ||A|| <= 1, got ||A|| = {norm:.6g}")
    if spectral_norm(A @ A.conj().T - eye) <= _DISC_SLACK:
        raise PreconditionError("potapov requires AA* != I")
    left = psd_sqrt(eye - A.conj().T @ A)
    right = psd_sqrt(eye - A @ A.conj().T)
    return _PotapovFactors(A, left, right)


def _check_disc(w):
    w = complex(w)
    if abs(w) > 1.0 + _DISC_SLACK:
        raise DomainError(f"point {w} lies outside the closed unit disc")
    return w


def _potapov_value(f: _PotapovFactors, w):
    n = f.A.shape[0]
    resolvent = np.linalg.inv(np.eye(n) - w * f.A)
    return -f.A.conj().T + w * f.left @ resolvent @ f.right


def _potapov_dw(f: _PotapovFactors, w):
    n = f.A.shape[0]
    resolvent = np.linalg.inv(np.eye(n) - w * f.A)
    return f.left @ resolvent @ resolvent @ f.right


def potapov(A, w) -> np.ndarray:
    """
    Potapov inner function on the closed unit disc.

    ``V_A(w) = -A* + w (I - A*A)^{1/2} (I - wA)^{-1} (I - AA*)^{1/2}``.
    For scalar ``a`` this is the Blaschke factor ``(w - conj(a))/(1 - a w)``.

    Raises
    ------
    PreconditionError
        Unless ``r(A) < 1``, ``||A|| <= 1`` and ``AA* != I``.
    """
    return _potapov_value(_potapov_factors(A), _check_disc(w))


class CharacteristicValue(NamedTuple):
    matrix: np.ndarray
    defect_projector: np.ndarray      # onto cl rng (I - A*A)^{1/2}
    codefect_projector: np.ndarray    # onto cl rng (I - AA*)^{1/2}
    degenerate: bool                  # both defect spaces trivial


_DEFECT_TOL = 1e-10


def _defect_basis(D2):
    w, U = np.linalg.eigh(0.5 * (D2 + D2.conj().T))
    return U[:, w > _DEFECT_TOL]


def _check_contraction(A):
    A = as_cmat(A)
    _check_dims(A)
    norm = spectral_norm(A)
    if norm > 1.0 + _DISC_SLACK:
        raise PreconditionError(f"characteristic function requires a contraction, got ||A|| = {norm:.6g}")
    return A


def _characteristic_parts(A):
    n = A.shape[0]
    eye = np.eye(n)
    d_a = psd_sqrt(eye - A.conj().T @ A)
    d_astar = psd_sqrt(eye - A @ A.conj().T)
    return d_a, d_astar


def _characteristic_value(A, d_a, d_astar, w):
    n = A.shape[0]
    return -A + w * d_astar @ np.linalg.inv(np.eye(n) - w * A.conj().T) @ d_a


def _characteristic_dw(A, d_a, d_astar, w):
    n = A.shape[0]
    res = np.linalg.inv(np.eye(n) - w * A.conj().T)
    return d_astar @ res @ res @ d_a


def characteristic_function(A, w) -> CharacteristicValue:
    """
    Characteristic function of a contraction on the unit disc.

    Returns the full-space matrix of
    ``-A + w (I - AA*)^{1/2} (I - wA*)^{-1} (I - A*A)^{1/2}`` together with the
    orthogonal projectors onto the defect spaces. The operator proper is
    ``codefect_projector @ matrix @ defect_projector``.
    """
    A = _check_contraction(A)
    w = complex(w)
    if abs(w) >= 1.0:
        raise DomainError(f"characteristic function is evaluated on the open disc, got |w| = {abs(w):.6g}")
    d_a, d_astar = _characteristic_parts(A)
    n = A.shape[0]
    eye = np.eye(n)
    Qa = _defect_basis(eye - A.conj().T @ A)
    Qs = _defect_basis(eye - A @ A.conj().T)
    Pa = Qa @ Qa.conj().T
    Ps = Qs @ Qs.conj().T
    value = _characteristic_value(A, d_a, d_astar, w)
    return CharacteristicValue(value, Pa, Ps, Qa.shape[1] == 0 and Qs.shape[1] == 0)


def _require_upper(z, what):
    z = complex(z)
    if z.imag < 0.0:
        raise DomainError(f"{what} is defined on the closed upper half-plane, got z = {z}")
    return z


@dataclass(eq=False)
class PotapovHalfPlane(EFun):
    """Potapov inner function transported to the closed upper half-plane."""

    A: np.ndarray
    _factors: _PotapovFactors = field(init=False, repr=False)

    tag: ClassVar[str] = "PotapovHalfPlane"
    entire: ClassVar[bool] = False

    def __post_init__(self):
        self.A = as_cmat(self.A)
        self._factors = _potapov_factors(self.A)

    @property
    def dim(self):
        return self.A.shape[0]

    def evaluate(self, z):
        z = _require_upper(z, "PotapovHalfPlane")
        return _potapov_value(self._factors, cayley_to_disc(z))

    def derivative(self, z):
        z = _require_upper(z, "PotapovHalfPlane")
        return _potapov_dw(self._factors, cayley_to_disc(z)) * _cayley_derivative(z)


@dataclass(eq=False)
class CharacteristicHalfPlane(EFun):
    """
    Characteristic function of a contraction on the closed upper half-plane.

    When both defect spaces are the whole space the full matrix is returned;
    otherwise the compression ``Q_{A*}* C_A Q_A`` in orthonormal defect bases
    (both of dimension ``rank(I - A*A)``).
    """

    A: np.ndarray

    tag: ClassVar[str] = "CharacteristicHalfPlane"
    entire: ClassVar[bool] = False

    def __post_init__(self):
        self.A = _check_contraction(self.A)
        n = self.A.shape[0]
        eye = np.eye(n)
        self._d_a, self._d_astar = _characteristic_parts(self.A)
        Qa = _defect_basis(eye - self.A.conj().T @ self.A)
        Qs = _defect_basis(eye - self.A @ self.A.conj().T)
        if Qa.shape[1] == 0:
            raise PreconditionError("contraction is unitary: defect spaces are trivial")
        if Qa.shape[1] == n and Qs.shape[1] == n:
            Qa = Qs = eye.astype(complex)
        self._Qa, self._Qs = Qa, Qs

    @property
    def dim(self):
        return self._Qa.shape[1]

    def _w(self, z):
        z = _require_upper(z, "CharacteristicHalfPlane")
        w = cayley_to_disc(z)
        if abs(w) >= 1.0 and np.max(np.abs(np.linalg.eigvals(self.A))) * abs(w) >= 1.0:
            raise DomainError(f"characteristic function is singular at z = {z}")
        return z, w

    def evaluate(self, z):
        z, w = self._w(z)
        C = _characteristic_value(self.A, self._d_a, self._d_astar, w)
        return self._Qs.conj().T @ C @ self._Qa

    def derivative(self, z):
        z, w = self._w(z)
        dC = _characteristic_dw(self.A, self._d_a, self._d_astar, w)
        return self._Qs.conj().T @ dC @ self._Qa * _cayley_derivative(z)


# -- generic evaluation helpers ---------------------------------------------

def _as_function(f) -> Callable:
    return f.evaluate if hasattr(f, "evaluate") else f


def evaluate(f, z) -> np.ndarray:
    """Matrix value of an :class:`EFun` (or plain callable) at ``z``."""
    return np.asarray(_as_function(f)(complex(z)), dtype=complex)


def cauchy_derivative(fn, z, radius: float = 1e-2, nodes: int = 32):
    """
    Derivative of a holomorphic ``fn`` at ``z`` from the Cauchy integral.

    The trapezoidal rule on a circle converges geometrically for functions
    holomorphic on a larger disc, so this is accurate to roundoff for entire
    functions of moderate type.
    """
    z = complex(z)
    theta = 2.0 * np.pi * np.arange(nodes) / nodes
    shifts = radius * np.exp(1j * theta)
    acc = None
    for s in shifts:
        term = np.asarray(fn(z + s), dtype=complex) / s
        acc = term if acc is None else acc + term
    return acc / nodes


def derivative(f, z) -> np.ndarray:
    """Analytic derivative; plain callables fall back to :func:`cauchy_derivative`."""
    if hasattr(f, "derivative"):
        return np.asarray(f.derivative(complex(z)), dtype=complex)
    return cauchy_derivative(f, z)


def _singular(M, tolerances: Tolerances) -> tuple[bool, float]:
    s = np.linalg.svd(M, compute_uv=False)
    smin = float(s[-1]) if s.size else 0.0
    smax = float(s[0]) if s.size else 0.0
    return smin < tolerances.singular_accept * smax or smax == 0.0, smin


def ratio_evaluate(Eplus, Eminus, z, tolerances: Tolerances = DEFAULT_TOLERANCES) -> np.ndarray:
    """
    Solve ``E+(z) X = E-(z)`` for ``X = E+(z)^{-1} E-(z)``.

    Raises
    ------
    SingularityError
        When ``sigma_min(E+(z)) < singular_accept * sigma_max``.
    """
    Ep = evaluate(Eplus, z)
    Em = evaluate(Eminus, z)
    if Ep.shape != Em.shape:
        raise ValueError(f"dimension mismatch {Ep.shape} vs {Em.shape}")
    bad, smin = _singular(Ep, tolerances)
    if bad:
        raise SingularityError(f"E+ is numerically singular at z = {complex(z)}", sigma=smin, point=complex(z))
    return np.linalg.solve(Ep, Em)


def extend_inner(F, z, tolerances: Tolerances = DEFAULT_TOLERANCES) -> np.ndarray:
    """Reflect an inner function into the lower half-plane: ``{F(conj z)*}^{-1}``."""
    z = complex(z)
    if z.imag >= 0:
        raise DomainError(f"extend_inner expects Im z < 0, got z = {z}")
    G = evaluate(F, z.conjugate()).conj().T
    bad, smin = _singular(G, tolerances)
    if bad:
        raise SingularityError(f"F is numerically singular at the reflected point {z.conjugate()}",
                               sigma=smin, point=z)
    return np.linalg.inv(G)


@dataclass(eq=False)
class InnerRatio(EFun):
    """``z -> E+(z)^{-1} E-(z)``, meromorphic wherever ``E+`` is invertible."""

    Eplus: EFun
    Eminus: EFun
    tolerances: Tolerances = DEFAULT_TOLERANCES

    tag: ClassVar[str] = "InnerRatio"
    entire: ClassVar[bool] = False

    @property
    def dim(self):
        return self.Eplus.dim

    def evaluate(self, z):
        return ratio_evaluate(self.Eplus, self.Eminus, z, self.tolerances)

    def derivative(self, z):
        Ep = evaluate(self.Eplus, z)
        bad, smin = _singular(Ep, self.tolerances)
        if bad:
            raise SingularityError(f"E+ is numerically singular at z = {complex(z)}", sigma=smin, point=complex(z))
        X = np.linalg.solve(Ep, evaluate(self.Eminus, z))
        return np.linalg.solve(Ep, derivative(self.Eminus, z) - derivative(self.Eplus, z) @ X)


@dataclass(eq=False)
class ExtendedInner(EFun):
    """
    An inner-from-both-sides function on the upper half-plane together with
    its reflection ``{F(conj z)*}^{-1}`` below the real axis.
    """

    F: EFun
    tolerances: Tolerances = DEFAULT_TOLERANCES

    tag: ClassVar[str] = "ExtendedInner"
    entire: ClassVar[bool] = False

    @property
    def dim(self):
        return self.F.dim

    def evaluate(self, z):
        z = complex(z)
        if z.imag >= 0:
            return evaluate(self.F, z)
        return extend_inner(self.F, z, self.tolerances)

    def derivative(self, z):
        z = complex(z)
        if z.imag >= 0:
            return derivative(self.F, z)
        Ginv = extend_inner(self.F, z, self.tolerances)
        dG = derivative(self.F, z.conjugate()).conj().T
        return -Ginv @ dG @ Ginv


# -- inner-function membership ----------------------------------------------

@dataclass
class InnerReport:
    """Outcome of :func:`inner_check`.

    ``contractive_excess`` is ``max lambda_max(F*F) - 1`` over the upper
    grid; the two residuals are ``max ||F*F - I||`` and ``max ||FF* - I||``
    over the real grid (spectral norms).
    """

    tol: float
    contractive_excess: float
    isometry_residual: float
    coisometry_residual: float
    failures: list = field(default_factory=list)

    @property
    def in_schur(self) -> bool:
        return bool(self.contractive_excess <= self.tol)

    @property
    def inner(self) -> bool:
        return self.in_schur and bool(self.isometry_residual <= self.tol)

    @property
    def star_inner(self) -> bool:
        return self.in_schur and bool(self.coisometry_residual <= self.tol)

    @property
    def passed(self) -> bool:
        return self.inner and self.star_inner

    def to_dict(self):
        return {
            "tol": self.tol,
            "contractive_excess": self.contractive_excess,
            "isometry_residual": self.isometry_residual,
            "coisometry_residual": self.coisometry_residual,
            "in_schur": self.in_schur,
            "inner": self.inner,
            "star_inner": self.star_inner,
            "passed": self.passed,
            "failures": [{"point": [p.real, p.imag], "error": msg} for p, msg in self.failures],
        }


def inner_check(F, upper_grid, real_grid, tol: float = 1e-8) -> InnerReport:
    """
    Check membership of ``F`` in the Schur class and the inner / *-inner classes.

    Evaluation failures at individual points are recorded in ``failures`` and
    skipped. A grid on which no point could be evaluated yields ``nan``
    residuals, which fail every comparison.
    """
    upper = np.atleast_1d(np.asarray(upper_grid, dtype=complex))
    real = np.atleast_1d(np.asarray(real_grid, dtype=float))
    if upper.size == 0 or real.size == 0:
        raise PreconditionError("inner_check needs nonempty grids")
    fn = _as_function(F)
    failures = []

    excess = -np.inf
    ok_upper = 0
    for z in upper:
        try:
            M = np.asarray(fn(complex(z)), dtype=complex)
        except (SingularityError, DomainError, ArithmeticError, ValueError) as exc:
            failures.append((complex(z), str(exc)))
            continue
        ok_upper += 1
        excess = max(excess, float(np.linalg.eigvalsh(M.conj().T @ M)[-1]) - 1.0)

    iso = coiso = 0.0
    ok_real = 0
    for x in real:
        try:
            M = np.asarray(fn(complex(x)), dtype=complex)
        except (SingularityError, DomainError, ArithmeticError, ValueError) as exc:
            failures.append((complex(x), str(exc)))
            continue
        ok_real += 1
        eye = np.eye(M.shape[0])
        iso = max(iso, spectral_norm(M.conj().T @ M - eye))
        coiso = max(coiso, spectral_norm(M @ M.conj().T - eye))

    if ok_upper == 0:
        excess = float("nan")
    if ok_real == 0:
        iso = coiso = float("nan")
    return InnerReport(tol, float(excess), float(iso), float(coiso), failures)
