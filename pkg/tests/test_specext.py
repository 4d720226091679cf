"""Self-adjoint extensions: V_mu, spectra, eigenfunctions, Kramer sampling."""

import numpy as np
import pytest

from conftest import sinc_kernel
from opbranges.catalog import exponential_pair
from opbranges.debranges import KernelCombo, gram, gram_norm, kernel, validate
from opbranges.efun import Polynomial
from opbranges.errors import PreconditionError, SingularityError
from opbranges.specext import (
    ExtensionSpectrum,
    eigenfunction,
    kramer_expansion,
    kramer_reconstruct,
    orthogonality_check,
    sampling_convergence,
    spectrum,
    v_mu,
)

RNG = np.random.default_rng(4)


@pytest.fixture(scope="module")
def diag2():
    return validate(*exponential_pair([np.pi, 2 * np.pi / 3]))


@pytest.fixture(scope="module")
def integers(pw_pi):
    return spectrum(pw_pi, 1.0, (-3.5, 3.5))


class TestVMu:
    def test_origin(self, pw_pi):
        assert v_mu(pw_pi, 0.0)[0, 0] == pytest.approx(1.0)

    @pytest.mark.parametrize("a", [1.0, np.pi])
    def test_scalar_oracle(self, pw_factory, a):
        mu = np.pi / (4 * a)
        assert v_mu(pw_factory(a), mu)[0, 0] == pytest.approx(np.exp(-2j * a * mu), abs=1e-14)
        assert v_mu(pw_factory(a), mu)[0, 0] == pytest.approx(-1j, abs=1e-14)

    def test_unitary(self, diag2):
        for mu in RNG.uniform(-5, 5, 10):
            V = v_mu(diag2, mu)
            assert abs(abs(np.linalg.det(V)) - 1) <= 1e-8
            np.testing.assert_allclose(V @ V.conj().T, np.eye(2), atol=1e-8)

    def test_singular(self):
        z = Polynomial([np.zeros((1, 1)), np.eye(1)])
        db = validate(z, z, raise_on_failure=False)
        with pytest.raises(SingularityError):
            v_mu(db, 0.0)


class TestSpectrum:
    def test_integers(self, integers):
        np.testing.assert_allclose(integers.nodes, np.arange(-3, 4), atol=1e-8)
        assert integers.multiplicities == [1] * 7
        assert np.all(integers.sigmas <= 1e-8)

    def test_half_integers(self, pw_pi):
        sp = spectrum(pw_pi, -1.0, (-3.5, 3.5))
        # the closed interval contains the endpoints +-3.5, where cos(pi mu) also vanishes
        np.testing.assert_allclose(sp.nodes, np.arange(-3.5, 3.6, 1.0), atol=1e-8)
        inner = spectrum(pw_pi, -1.0, (-3.2, 3.2))
        np.testing.assert_allclose(inner.nodes, [-2.5, -1.5, -0.5, 0.5, 1.5, 2.5], atol=1e-8)

    def test_block_diagonal_union(self, diag2):
        sp = spectrum(diag2, np.eye(2), (-3.5, 3.5))
        expected = sorted(set(range(-3, 4)) | {-3.0, -1.5, 0.0, 1.5, 3.0})
        np.testing.assert_allclose(sp.nodes, expected, atol=1e-8)
        mult = dict(zip(np.round(sp.nodes, 6), sp.multiplicities))
        assert mult[0.0] == 2 and mult[3.0] == 2 and mult[-3.0] == 2
        assert mult[1.0] == 1 and mult[1.5] == 1
        # null vector at mu = 1.5 lives in the second coordinate only
        B = sp.nullspaces[list(np.round(sp.nodes, 6)).index(1.5)]
        assert abs(B[0, 0]) < 1e-8 and abs(abs(B[1, 0]) - 1) < 1e-8

    def test_contains_chosen_point(self, diag2):
        mu_star = 0.8137
        sp = spectrum(diag2, v_mu(diag2, mu_star), (-2.0, 2.0))
        assert np.min(np.abs(sp.nodes - mu_star)) <= 1e-8

    def test_nodes_are_local_minima(self, pw_pi):
        sp = spectrum(pw_pi, np.exp(0.7j), (-2.0, 2.0), grid_count=500)
        for mu, s in zip(sp.nodes, sp.sigmas):
            assert s <= 1e-8 * (1 + np.linalg.norm(pw_pi.Eplus(mu), 2))
            # generic parameter: nodes solve e^{-2 pi i mu} = e^{0.7 i}
            assert abs(np.exp(-2j * np.pi * mu) - np.exp(0.7j)) <= 1e-7

    def test_empty(self, pw_pi):
        sp = spectrum(pw_pi, 1.0, (0.2, 0.8))
        assert sp.empty and len(sp) == 0 and sp.profile[0].size == 2000

    def test_non_unitary_rejected(self, pw_pi):
        with pytest.raises(PreconditionError):
            spectrum(pw_pi, 2.0, (-1, 1))

    def test_bad_interval(self, pw_pi):
        with pytest.raises(ValueError):
            spectrum(pw_pi, 1.0, (1.0, -1.0))


class TestEigenfunction:
    def test_scalar(self, pw_pi):
        g = eigenfunction(pw_pi, 1.0, [1.0])
        # (E+(1)*)^{-1} = 1/conj(e^{-i pi}) = -1
        assert g.coeffs[0, 0] == pytest.approx(-1.0, abs=1e-14)
        assert g(0.3)[0] == pytest.approx(-sinc_kernel(np.pi, 1.0, 0.3), abs=1e-14)

    def test_positive_norm(self, pw_pi):
        assert gram_norm(pw_pi, eigenfunction(pw_pi, 2.0, [1.0])) > 0

    def test_linear_in_u(self, diag2):
        u = np.array([0.3, 1j])
        g1 = eigenfunction(diag2, 0.0, u)
        g2 = eigenfunction(diag2, 0.0, 2.5 * u)
        np.testing.assert_allclose(g2.coeffs, 2.5 * g1.coeffs)

    def test_eigen_relation(self, pw_pi, integers):
        # multiplication by z acts as mu on the eigenfunction inside the space,
        # so (z - mu) g(z) vanishes at every other node
        g = eigenfunction(pw_pi, 2.0, [1.0])
        for mu in integers.nodes:
            if abs(mu - 2.0) > 0.5:
                assert abs(g(mu)[0]) <= 1e-14


class TestOrthogonality:
    def test_integer_nodes(self, pw_pi, integers):
        rep = orthogonality_check(pw_pi, integers, 1e-12)
        assert rep.passed and rep.max_offdiag <= 1e-12

    def test_block_diagonal(self, diag2):
        sp = spectrum(diag2, np.eye(2), (-3.5, 3.5))
        assert orthogonality_check(diag2, sp).passed

    def test_single_node(self, pw_pi):
        sp = spectrum(pw_pi, 1.0, (-0.5, 0.5))
        rep = orthogonality_check(pw_pi, sp)
        assert len(sp) == 1 and rep.passed and rep.pairs == 0

    def test_perturbed_node_fails(self, pw_pi, integers):
        bad = ExtensionSpectrum(integers.V, integers.interval, integers.nodes + np.r_[0.1, np.zeros(6)],
                                integers.nullspaces, integers.sigmas)
        assert not orthogonality_check(pw_pi, bad).passed

    def test_empty_rejected(self, pw_pi):
        with pytest.raises(PreconditionError):
            orthogonality_check(pw_pi, spectrum(pw_pi, 1.0, (0.2, 0.8)))


class TestKramer:
    def test_section_at_node(self, pw_pi, integers):
        f = KernelCombo(pw_pi, [2.0], [[0.7 - 0.2j]])
        samples = [f(mu) for mu in integers.nodes]
        for z in (0.3 + 0.4j, -5.0, 2.0):
            np.testing.assert_allclose(kramer_reconstruct(pw_pi, integers, samples, z), f(z), atol=1e-13)

    def test_shannon_series(self, pw_pi, integers):
        f = KernelCombo(pw_pi, [0.37], [[1.0]])
        samples = [f(k) for k in integers.nodes]
        z = 0.81 - 0.2j
        shannon = sum(f(k)[0] * np.sinc(z - k) for k in integers.nodes)
        assert kramer_reconstruct(pw_pi, integers, samples, z)[0] == pytest.approx(shannon, abs=1e-13)

    def test_zero_samples(self, pw_pi, integers):
        assert np.all(kramer_reconstruct(pw_pi, integers, [np.zeros(1)] * 7, 0.5) == 0)

    def test_mapping_samples(self, pw_pi, integers):
        samples = {float(k): np.array([k]) for k in range(-3, 4)}
        seq = [np.array([k]) for k in range(-3, 4)]
        np.testing.assert_allclose(kramer_reconstruct(pw_pi, integers, samples, 0.2),
                                   kramer_reconstruct(pw_pi, integers, seq, 0.2))

    def test_linear(self, diag2):
        sp = spectrum(diag2, np.eye(2), (-2.2, 2.2))
        f = [RNG.standard_normal(2) + 1j * RNG.standard_normal(2) for _ in sp.nodes]
        g = [RNG.standard_normal(2) for _ in sp.nodes]
        z = np.array([0.1 + 0.2j, -1.3])
        lhs = kramer_reconstruct(diag2, sp, [a + b for a, b in zip(f, g)], z)
        rhs = kramer_reconstruct(diag2, sp, f, z) + kramer_reconstruct(diag2, sp, g, z)
        assert np.abs(lhs - rhs).max() <= 1e-12

    def _projection_oracle(self, db, sections, f, z):
        """Least-squares Gram projection of f onto span{K_{mu} v} over the given (mu, v)."""
        pts = [mu for mu, _ in sections]
        vecs = [v for _, v in sections]
        G = gram(db, pts, vecs)
        rhs = np.array([v.conj() @ f(mu) for mu, v in sections])
        c = np.linalg.lstsq(G, rhs, rcond=None)[0]
        return sum(kernel(db, mu, z) @ (ck * v) for (mu, v), ck in zip(sections, c))

    def test_five_node_gram_oracle(self, pw_pi):
        sp = spectrum(pw_pi, 1.0, (-2.5, 2.5))
        assert len(sp) == 5
        f = KernelCombo(pw_pi, [0.3, -1.7, 0.9 + 0.2j], [[1.0], [0.5j], [-0.3]])
        sections = [(mu, np.eye(1)[:, 0]) for mu in sp.nodes]
        for z in (0.15, 1.2 - 0.3j, -3.0):
            np.testing.assert_allclose(kramer_reconstruct(pw_pi, sp, [f(m) for m in sp.nodes], z),
                                       self._projection_oracle(pw_pi, sections, f, z), atol=1e-12)

    def test_partial_multiplicity_oracle(self, diag2):
        sp = spectrum(diag2, np.eye(2), (-1.6, 1.6))  # nodes -1.5, -1, 0, 1, 1.5
        assert len(sp) == 5 and sp.multiplicities == [1, 1, 2, 1, 1]
        f = KernelCombo(diag2, [0.4, -0.8j], [[1.0, 0.5], [0.2j, -1.0]])
        sections = []
        for mu, B in zip(sp.nodes, sp.nullspaces):
            Ut = np.linalg.solve(diag2.Eplus(mu).conj().T, B)
            sections += [(mu, Ut[:, k]) for k in range(B.shape[1])]
        for z in (0.15, 1.2 - 0.3j):
            np.testing.assert_allclose(kramer_reconstruct(diag2, sp, [f(m) for m in sp.nodes], z),
                                       self._projection_oracle(diag2, sections, f, z), atol=1e-12)
        # the full-block coefficient K(mu)^{-1} f(mu) is not the projection once a node is simple
        z = 0.15
        naive = sum(kernel(diag2, m, z) @ np.linalg.solve(kernel(diag2, m, m), f(m)) for m in sp.nodes)
        assert np.abs(naive - self._projection_oracle(diag2, sections, f, z)).max() > 1e-3

    def test_expansion_combo(self, pw_pi, integers):
        combo = kramer_expansion(pw_pi, integers, [np.ones(1)] * 7)
        np.testing.assert_allclose(combo.points.real, integers.nodes)


@pytest.fixture(scope="module")
def wide(pw_pi):
    return spectrum(pw_pi, 1.0, (-60.5, 60.5), grid_count=2420)


class TestSamplingConvergence:
    def test_decreasing(self, pw_pi, wide):
        f = KernelCombo(pw_pi, [0.3, -1.4], [[1.0], [0.5]])
        rep = sampling_convergence(pw_pi, wide, f, np.linspace(-5, 5, 101), [10, 20, 40, 80])
        assert rep.monotone and rep.errors[-1] < rep.errors[0] / 4

    def test_exact_on_nodes(self, pw_pi, wide):
        f = KernelCombo(pw_pi, [0.0, 2.0, -3.0], [[1.0], [1j], [0.5]])
        rep = sampling_convergence(pw_pi, wide, f, np.linspace(-5, 5, 51), [7, 15])
        assert max(rep.errors) <= 1e-10

    def test_empty_grid(self, pw_pi, wide):
        rep = sampling_convergence(pw_pi, wide, lambda z: np.zeros(1), [], [5])
        assert rep.levels == [] and rep.errors == []
