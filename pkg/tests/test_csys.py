"""Canonical-system integrator and the pairs it generates."""

import numpy as np
import pytest

from conftest import sinc_kernel
from opbranges.csys import (
    CanonicalBacked,
    CanonicalSystemSpec,
    canonical_pair,
    integral_identity_residual,
    read_potential_csv,
    solve,
    solve_many,
    solve_with_zderiv,
    to_debranges,
    trace,
    trace_csv,
)
from opbranges.debranges import kernel, verify_positivity
from opbranges.errors import IntegrationError, PreconditionError

RNG = np.random.default_rng(5)
Q_HERM = np.array([[0.3, 0.1 + 0.05j], [0.1 - 0.05j, -0.2]])


def zero_spec(step=1e-3, n=1):
    return CanonicalSystemSpec(n, 1.0, "zero", step)


def max_error_zero(step, zs):
    Em, Ep = solve_many(zero_spec(step), 1.0, zs)
    return max(np.abs(Em[:, 0, 0] - np.exp(1j * zs)).max(), np.abs(Ep[:, 0, 0] - np.exp(-1j * zs)).max())


class TestSpec:
    def test_default_step(self):
        assert CanonicalSystemSpec(1, 2.0).step == pytest.approx(2e-3)

    @pytest.mark.parametrize("kwargs", [dict(n=0, a=1.0), dict(n=1, a=-1.0), dict(n=1, a=1.0, step=0.3)])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            CanonicalSystemSpec(**kwargs)

    def test_named_constant(self):
        spec = CanonicalSystemSpec(2, 1.0, "constant:0.5-0.25j")
        np.testing.assert_allclose(spec.potential(0.3), (0.5 - 0.25j) * np.eye(2))

    def test_unknown_name(self):
        with pytest.raises(ValueError):
            CanonicalSystemSpec(1, 1.0, "banana")

    def test_sample_interpolation(self):
        samples = np.stack([np.zeros((1, 1)), np.ones((1, 1)), 3 * np.ones((1, 1))])  # on r = 0, 0.5, 1
        spec = CanonicalSystemSpec(1, 1.0, samples)
        assert spec.potential(0.25)[0, 0] == pytest.approx(0.5)
        assert spec.potential(0.75)[0, 0] == pytest.approx(2.0)
        assert spec.potential(1.0)[0, 0] == pytest.approx(3.0)

    def test_Q_block_structure(self):
        spec = CanonicalSystemSpec(2, 1.0, Q_HERM)
        Q = spec.Q(0.0)
        np.testing.assert_allclose(Q[:2, 2:], Q_HERM)
        np.testing.assert_allclose(Q[2:, :2], Q_HERM.conj().T)
        assert np.all(Q[:2, :2] == 0) and np.all(Q[2:, 2:] == 0)


class TestSolve:
    @pytest.mark.parametrize("z", [0.0, 2.0, -1.3 + 0.8j, 1.5j])
    def test_zero_potential_closed_form(self, z):
        Em, Ep = solve(zero_spec(n=2), 1.0, z)
        np.testing.assert_allclose(Em, np.exp(1j * z) * np.eye(2), atol=1e-10)
        np.testing.assert_allclose(Ep, np.exp(-1j * z) * np.eye(2), atol=1e-10)

    def test_initial_condition(self):
        Em, Ep = solve(CanonicalSystemSpec(2, 1.0, Q_HERM), 0.0, 1 + 1j)
        np.testing.assert_allclose(Em, np.eye(2))
        np.testing.assert_allclose(Ep, np.eye(2))

    @pytest.mark.parametrize("r", [0.1, 0.55, 1.0])
    def test_z_zero_trivial(self, r):
        Em, Ep = solve(zero_spec(), r, 0.0)
        assert np.allclose(Em, 1) and np.allclose(Ep, 1)

    def test_r_out_of_range(self):
        with pytest.raises(PreconditionError):
            solve(zero_spec(), 1.5, 0.0)

    def test_overflow_reported(self):
        with pytest.raises(IntegrationError) as info:
            solve(zero_spec(), 1.0, -900j)
        assert info.value.step is not None and info.value.step > 0

    def test_fourth_order(self):
        zs = (RNG.uniform(-1.4, 1.4, 16) + 1j * RNG.uniform(-1.4, 1.4, 16))
        ratio = max_error_zero(1e-2, zs) / max_error_zero(5e-3, zs)
        assert 8 <= ratio <= 32

    def test_constant_potential_reflection_identity(self):
        spec = CanonicalSystemSpec(2, 1.0, Q_HERM, 1e-3)
        z = 0.7 - 0.4j
        Em, Ep = solve(spec, 1.0, z)
        Emc, Epc = solve(spec, 1.0, np.conj(z))
        assert np.abs(Ep @ Epc.conj().T - Em @ Emc.conj().T).max() <= 1e-10


class TestZDerivative:
    def test_zero_potential(self):
        (_, _), (dEm, dEp) = solve_with_zderiv(zero_spec(), 0.6, 0.0)
        np.testing.assert_allclose(dEp, -0.6j * np.eye(1), atol=1e-12)
        np.testing.assert_allclose(dEm, 0.6j * np.eye(1), atol=1e-12)

    def test_r_zero(self):
        (_, _), (dEm, dEp) = solve_with_zderiv(zero_spec(), 0.0, 1 + 1j)
        assert np.all(dEm == 0) and np.all(dEp == 0)

    @pytest.mark.parametrize("seed", range(3))
    def test_central_differences(self, seed):
        rng = np.random.default_rng(seed)
        spec = CanonicalSystemSpec(2, 1.0, Q_HERM, 1e-3)
        r = float(rng.uniform(0.2, 1.0))
        z = complex(rng.uniform(-2, 2), rng.uniform(-2, 2))
        (_, _), (dEm, dEp) = solve_with_zderiv(spec, r, z)
        h = 1e-5
        (Em1, Ep1), (Em0, Ep0) = solve(spec, r, z + h), solve(spec, r, z - h)
        scale = 1 + np.abs(dEp).max()
        assert np.abs((Ep1 - Ep0) / (2 * h) - dEp).max() <= 1e-6 * scale
        assert np.abs((Em1 - Em0) / (2 * h) - dEm).max() <= 1e-6 * scale


class TestIntegralIdentity:
    def test_r_zero(self):
        assert integral_identity_residual(zero_spec(), 0.0, 1j, 0.5) == 0.0

    def test_zero_potential(self):
        assert integral_identity_residual(zero_spec(), 1.0, 1j, 1j) <= 1e-6

    @pytest.mark.parametrize("q", ["zero", Q_HERM])
    def test_random_points(self, q):
        n = 1 if isinstance(q, str) else 2
        spec = CanonicalSystemSpec(n, 1.0, q, 1e-2)
        for z, xi in zip(RNG.uniform(-2, 2, 5) + 1j * RNG.uniform(-2, 2, 5),
                         RNG.uniform(-2, 2, 5) + 1j * RNG.uniform(-2, 2, 5)):
            assert integral_identity_residual(spec, 1.0, z, xi) <= 50 * 1e-2**4

    def test_convergence(self):
        z, xi = 1.3 + 0.9j, -0.4 + 1.7j
        coarse = integral_identity_residual(CanonicalSystemSpec(2, 1.0, Q_HERM, 2e-2), 1.0, z, xi)
        fine = integral_identity_residual(CanonicalSystemSpec(2, 1.0, Q_HERM, 1e-2), 1.0, z, xi)
        assert 8 <= coarse / fine <= 32


class TestTrace:
    def test_shape_and_csv(self):
        tr = trace(zero_spec(1e-1), 1.0, [1j])
        assert tr.states.shape == (11, 1, 1, 2)
        text = trace_csv(tr)
        assert text.startswith("r,norm_F\n0.0,") and text.count("\n") == 12
        # Q = 0: |F_r(i)| = sqrt(e^{-2r} + e^{2r})
        assert tr.norms()[-1] == pytest.approx(np.sqrt(np.exp(-2) + np.exp(2)), rel=1e-6)

    def test_read_potential_csv(self):
        text = "r,q00_re,q00_im\n0,1,0\n0.5,2,1\n1.0,3,0\n"
        a, samples = read_potential_csv(text, 1)
        assert a == 1.0 and samples.shape == (3, 1, 1) and samples[1, 0, 0] == 2 + 1j

    def test_read_potential_csv_bad(self):
        with pytest.raises(ValueError):
            read_potential_csv("0,1,0\n0.3,1,0\n1.0,1,0\n", 1)


class TestBacked:
    def test_shared_cache(self):
        Em, Ep = canonical_pair(zero_spec(), 1.0)
        Em(0.3 + 0.1j)
        Ep(0.3 + 0.1j)
        Ep.derivative(0.3 + 0.1j)
        assert len(Ep.cache) == 1 and Em.cache is Ep.cache

    def test_component_check(self):
        with pytest.raises(ValueError):
            CanonicalBacked(zero_spec(), 1.0, "middle")

    def test_evaluate_many(self):
        Em, _ = canonical_pair(zero_spec(), 1.0)
        zs = np.array([0.1, 1j, 0.1])
        np.testing.assert_allclose(Em.evaluate_many(zs)[:, 0, 0], np.exp(1j * zs), atol=1e-10)


class TestToDebranges:
    def test_zero_matches_exponential(self):
        db = to_debranges(zero_spec(), 1.0)
        assert db.report.passed and db.report.extras["provisos"]["witnessed"]
        for xi, z in zip(RNG.uniform(-2, 2, 10) + 1j * RNG.uniform(-2, 2, 10),
                         RNG.uniform(-2, 2, 10) + 1j * RNG.uniform(-2, 2, 10)):
            assert abs(kernel(db, xi, z)[0, 0] - sinc_kernel(1.0, xi, z)) <= 1e-7

    def test_small_r_degenerate(self):
        db = to_debranges(CanonicalSystemSpec(1, 1.0, "zero", 1e-3), 1e-10)
        assert db.report.degenerate

    def test_constant_hermitian_positive(self):
        db = to_debranges(CanonicalSystemSpec(2, 1.0, 0.2 * Q_HERM, 1e-3), 1.0)
        assert verify_positivity(db, count=8, trials=10, seed=2).passed

    def test_r_must_be_positive(self):
        with pytest.raises(PreconditionError):
            to_debranges(zero_spec(), 0.0)


def test_backed_overflow_is_singularity():
    from opbranges.errors import SingularityError
    Em, _ = canonical_pair(zero_spec(), 1.0)
    with pytest.raises(SingularityError):
        Em(-900j)
