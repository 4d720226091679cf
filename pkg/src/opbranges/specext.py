"""
Self-adjoint extensions of multiplication by ``z`` in a de Branges space.

The extension with unitary parameter ``V`` has eigenvalue ``mu`` exactly
when ``E+(mu) - E-(mu) V`` is singular; the eigenfunctions are the kernel
sections ``K_mu (E+(mu)*)^{-1} u`` with ``u`` in the null space. Nodes are
located by scanning the smallest singular value and refining local minima
with a golden-section search.
"""

from dataclasses import dataclass, field

import numpy as np

from opbranges.debranges import DeBrangesOperator, KernelCombo, gram_norm, kernel
from opbranges.efun import evaluate
from opbranges.errors import PreconditionError, SingularityError
from opbranges.linops import DEFAULT_TOLERANCES, as_cmat, is_unitary, spectral_norm

__all__ = [
    "v_mu",
    "ExtensionSpectrum",
    "spectrum",
    "eigenfunction",
    "orthogonality_check",
    "OrthogonalityReport",
    "kramer_reconstruct",
    "sampling_convergence",
    "ConvergenceReport",
]

_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


def _tol(db):
    return db.tolerances if isinstance(db, DeBrangesOperator) else DEFAULT_TOLERANCES


def v_mu(db: DeBrangesOperator, mu: float) -> np.ndarray:
    """``V_mu = E-(mu)^{-1} E+(mu)``, unitary for a validated pair."""
    mu = float(mu)
    Em = evaluate(db.Eminus, mu)
    s = np.linalg.svd(Em, compute_uv=False)
    if s[0] == 0 or s[-1] < _tol(db).singular_accept * s[0]:
        raise SingularityError(f"E-({mu}) is singular", sigma=float(s[-1]), point=mu)
    return np.linalg.solve(Em, evaluate(db.Eplus, mu))


@dataclass
class ExtensionSpectrum:
    """
    Eigenvalues of one self-adjoint extension inside an interval.

    ``nullspaces[i]`` has orthonormal columns spanning the null space of
    ``E+(mu_i) - E-(mu_i) V``; ``sigmas[i]`` is the refined smallest singular
    value. ``profile`` holds the scan grid and its sigma values.
    """

    V: np.ndarray
    interval: tuple
    nodes: np.ndarray
    nullspaces: list
    sigmas: np.ndarray
    profile: tuple = field(repr=False, default=None)

    @property
    def multiplicities(self) -> list:
        return [B.shape[1] for B in self.nullspaces]

    @property
    def empty(self) -> bool:
        return self.nodes.size == 0

    def __len__(self):
        return int(self.nodes.size)


def _pencil(db, V, mu):
    return evaluate(db.Eplus, mu) - evaluate(db.Eminus, mu) @ V


def _sigma(db, V, mu):
    return float(np.linalg.svd(_pencil(db, V, mu), compute_uv=False)[-1])


def _golden(fn, lo, hi, iters):
    c = hi - _GOLDEN * (hi - lo)
    d = lo + _GOLDEN * (hi - lo)
    fc, fd = fn(c), fn(d)
    for _ in range(iters):
        if fc <= fd:
            hi, d, fd = d, c, fc
            c = hi - _GOLDEN * (hi - lo)
            fc = fn(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + _GOLDEN * (hi - lo)
            fd = fn(d)
    return (c, fc) if fc <= fd else (d, fd)


def spectrum(
    db: DeBrangesOperator,
    V,
    interval=(-1.0, 1.0),
    grid_count: int = 2000,
    refine_iters: int = 60,
) -> ExtensionSpectrum:
    """
    Locate the eigenvalues of the extension with parameter ``V`` in ``interval``.

    Parameters
    ----------
    db : DeBrangesOperator
    V : array_like
        Unitary ``n x n`` parameter (a scalar is accepted for ``n = 1``).
    interval : (float, float)
    grid_count : int
        Number of uniform scan points.
    refine_iters : int
        Golden-section iterations per local minimum.

    Returns
    -------
    ExtensionSpectrum
        Possibly empty; the sigma profile is always attached.
    """
    V = as_cmat(V)
    tol = _tol(db)
    if V.shape != (db.dim, db.dim):
        raise ValueError(f"V has shape {V.shape}, expected {(db.dim, db.dim)}")
    if not is_unitary(V, tol.unitary_tol):
        raise PreconditionError("V is not unitary")
    lo, hi = float(interval[0]), float(interval[1])
    if not hi > lo:
        raise ValueError(f"empty interval {interval}")
    if grid_count < 3:
        raise ValueError("grid_count must be at least 3")

    mus = np.linspace(lo, hi, grid_count)
    Ep = db.Eplus.evaluate_many(mus)
    Em = db.Eminus.evaluate_many(mus)
    sig = np.linalg.svd(Ep - Em @ V, compute_uv=False)[:, -1]
    dx = mus[1] - mus[0]

    candidates = []
    for i in range(grid_count):
        left = sig[i - 1] if i > 0 else np.inf
        right = sig[i + 1] if i < grid_count - 1 else np.inf
        if sig[i] <= left and sig[i] <= right:
            a, b = mus[max(i - 1, 0)], mus[min(i + 1, grid_count - 1)]
            mu, s = _golden(lambda m: _sigma(db, V, m), a, b, refine_iters)
            if sig[i] < s:
                mu, s = float(mus[i]), float(sig[i])
            candidates.append((float(mu), float(s)))

    nodes, nulls, sigmas = [], [], []
    for mu, s in sorted(candidates):
        P = _pencil(db, V, mu)
        thresh = tol.singular_accept * (1.0 + spectral_norm(evaluate(db.Eplus, mu)))
        if s > thresh:
            continue
        if nodes and mu - nodes[-1] < dx:
            if s < sigmas[-1]:
                nodes.pop(), nulls.pop(), sigmas.pop()
            else:
                continue
        _, sv, Vh = np.linalg.svd(P)
        basis = Vh.conj().T[:, sv <= thresh]
        nodes.append(mu)
        nulls.append(basis)
        sigmas.append(s)
    return ExtensionSpectrum(V, (lo, hi), np.asarray(nodes, dtype=float), nulls,
                             np.asarray(sigmas, dtype=float), (mus, sig))


def _tilde(db, mu, u):
    Ep = evaluate(db.Eplus, mu)
    s = np.linalg.svd(Ep, compute_uv=False)
    if s[0] == 0 or s[-1] < _tol(db).singular_accept * s[0]:
        raise SingularityError(f"E+({mu}) is singular", sigma=float(s[-1]), point=mu)
    return np.linalg.solve(Ep.conj().T, np.asarray(u, dtype=complex))


def eigenfunction(db: DeBrangesOperator, mu: float, u) -> KernelCombo:
    """The eigenfunction ``K_mu (E+(mu)*)^{-1} u`` as a one-term combination."""
    u = np.atleast_1d(np.asarray(u, dtype=complex))
    return KernelCombo(db, [float(mu)], [_tilde(db, float(mu), u)])


def _sections(db, spec: ExtensionSpectrum):
    """Per node, the matrix whose columns are ``(E+(mu)*)^{-1} u`` over the null basis."""
    return [_tilde(db, mu, B) for mu, B in zip(spec.nodes, spec.nullspaces)]


@dataclass
class OrthogonalityReport:
    max_offdiag: float
    scale: float
    tol: float
    pairs: int

    @property
    def passed(self) -> bool:
        return bool(self.max_offdiag <= self.tol * self.scale)

    def to_dict(self):
        return {"passed": self.passed, "max_offdiag": self.max_offdiag,
                "scale": self.scale, "tol": self.tol, "pairs": self.pairs}


def orthogonality_check(db: DeBrangesOperator, spec: ExtensionSpectrum, tol: float = 1e-8) -> OrthogonalityReport:
    """
    Largest ``|<K_{mu_j}(mu_i) u~_j, u~_i>|`` over distinct nodes, against
    ``tol`` times the largest diagonal entry (at least 1).
    """
    if spec.empty:
        raise PreconditionError("spectrum is empty")
    secs = _sections(db, spec)
    worst, scale, pairs = 0.0, 1.0, 0
    for i, (mi, Ui) in enumerate(zip(spec.nodes, secs)):
        D = Ui.conj().T @ kernel(db, mi, mi) @ Ui
        scale = max(scale, float(np.max(np.abs(D))) if D.size else 0.0)
        for j, (mj, Uj) in enumerate(zip(spec.nodes, secs)):
            if i == j:
                continue
            M = Ui.conj().T @ kernel(db, mj, mi) @ Uj
            pairs += 1
            if M.size:
                worst = max(worst, float(np.max(np.abs(M))))
    return OrthogonalityReport(worst, scale, tol, pairs)


def _coefficients(db, spec, samples):
    """
    Expansion coefficients ``c_i`` with ``f ~ sum_i K_{mu_i} c_i``.

    ``c_i = U~_i (U~_i* K(mu_i) U~_i)^{-1} U~_i* f(mu_i)`` where the columns of
    ``U~_i`` are the eigen-sections at ``mu_i``; with a full null space this
    is ``K_{mu_i}(mu_i)^{-1} f(mu_i)``.
    """
    secs = _sections(db, spec)
    coeffs = []
    for mu, U, f in zip(spec.nodes, secs, samples):
        f = np.atleast_1d(np.asarray(f, dtype=complex))
        D = U.conj().T @ kernel(db, mu, mu) @ U
        s = np.linalg.svd(D, compute_uv=False)
        if s.size == 0 or s[-1] < _tol(db).singular_accept * max(s[0], 1e-300):
            raise SingularityError(f"diagonal kernel singular at node {mu}", sigma=float(s[-1]) if s.size else 0.0,
                                   point=float(mu))
        coeffs.append(U @ np.linalg.solve(D, U.conj().T @ f))
    return coeffs


def _sample_list(spec, samples):
    if isinstance(samples, dict):
        out = []
        for mu in spec.nodes:
            key = min(samples, key=lambda k: abs(float(k) - mu))
            if abs(float(key) - mu) > 1e-6 * (1 + abs(mu)):
                raise KeyError(f"no sample supplied for node {mu}")
            out.append(samples[key])
        return out
    samples = list(samples)
    if len(samples) != len(spec.nodes):
        raise ValueError(f"{len(samples)} samples for {len(spec.nodes)} nodes")
    return samples


def kramer_expansion(db: DeBrangesOperator, spec: ExtensionSpectrum, samples) -> KernelCombo:
    """The truncated Kramer expansion as a :class:`KernelCombo`."""
    samples = _sample_list(spec, samples)
    return KernelCombo(db, spec.nodes.astype(complex), _coefficients(db, spec, samples)
                       if len(samples) else np.zeros((0, db.dim)))


def kramer_reconstruct(db: DeBrangesOperator, spec: ExtensionSpectrum, samples, z) -> np.ndarray:
    """
    Reconstruct ``f(z)`` from ``f(mu_i)`` via ``sum_i K_{mu_i}(z) c_i``.

    ``samples`` is either a sequence aligned with ``spec.nodes`` or a mapping
    node -> vector. ``z`` may be a scalar or an array (result then has a
    leading axis).
    """
    combo = kramer_expansion(db, spec, samples)
    if np.ndim(z) == 0:
        return combo.evaluate(complex(z))
    return combo.evaluate_many(np.asarray(z, dtype=complex))


@dataclass
class ConvergenceReport:
    levels: list
    errors: list
    monotone: bool

    def to_dict(self):
        return {"levels": list(self.levels), "errors": list(self.errors), "monotone": self.monotone}


def _nearest(spec: ExtensionSpectrum, N: int, center: float) -> ExtensionSpectrum:
    order = np.argsort(np.abs(spec.nodes - center), kind="stable")[:N]
    order = np.sort(order)
    return ExtensionSpectrum(spec.V, spec.interval, spec.nodes[order],
                             [spec.nullspaces[i] for i in order], spec.sigmas[order], spec.profile)


def sampling_convergence(db: DeBrangesOperator, spec: ExtensionSpectrum, f, eval_grid, levels,
                         center: float = 0.0) -> ConvergenceReport:
    """
    Sup-norm reconstruction error on ``eval_grid`` using the ``N`` nodes
    nearest to ``center``, for each ``N`` in ``levels``.

    ``monotone`` is true when the error never increases with ``N``.
    """
    grid = np.atleast_1d(np.asarray(eval_grid, dtype=complex))
    if grid.size == 0:
        return ConvergenceReport([], [], True)
    fn = f.evaluate if hasattr(f, "evaluate") else f
    if hasattr(f, "evaluate_many"):
        exact = np.asarray(f.evaluate_many(grid))
    else:
        exact = np.stack([np.atleast_1d(np.asarray(fn(z), dtype=complex)) for z in grid])
    levels = sorted(int(N) for N in levels)
    errors = []
    for N in levels:
        sub = _nearest(spec, N, center)
        samples = [fn(complex(mu)) for mu in sub.nodes]
        approx = kramer_reconstruct(db, sub, samples, grid)
        errors.append(float(np.max(np.abs(approx - exact))))
    monotone = all(b <= a for a, b in zip(errors, errors[1:]))
    return ConvergenceReport(levels, errors, monotone)


def eigenfunction_norms(db: DeBrangesOperator, spec: ExtensionSpectrum) -> list:
    return [[gram_norm(db, eigenfunction(db, mu, B[:, k])) for k in range(B.shape[1])]
            for mu, B in zip(spec.nodes, spec.nullspaces)]
