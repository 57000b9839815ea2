import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mrct.coeff import (
    BasisSpec,
    CoefficientSample,
    SparseCurves,
    basis_eval,
    basis_matrix,
    coeff_distances,
    coeff_trimmed_cov,
    fit_coefficients,
    gram_matrix,
    mrct_fit_coeff,
    orthonormalize,
)
from mrct.core import MrctConfig, eigensystem, mrct_fit, standardized_distances
from mrct.errors import DimensionError, DomainError, NumericalError, UnderdeterminedCurveError
from mrct.funcdata import FunctionalSample, Grid, SubsetH, inner_product


def unit_grid(p):
    return Grid(np.arange(p, dtype=float) * p / (p - 1))


class TestBasis:
    @settings(max_examples=40)
    @given(st.floats(0.0, 1.0), st.integers(4, 20), st.integers(1, 3))
    def test_partition_of_unity(self, t, M, degree):
        v = basis_eval(BasisSpec(M, degree), t)
        assert v.shape == (M,) and v.min() >= 0
        assert v.sum() == pytest.approx(1.0, abs=1e-12)

    def test_endpoints(self):
        b = BasisSpec(8)
        np.testing.assert_allclose(basis_eval(b, 0.0), np.eye(8)[0], atol=1e-15)
        np.testing.assert_allclose(basis_eval(b, 1.0), np.eye(8)[-1], atol=1e-15)

    def test_bernstein(self):
        np.testing.assert_allclose(basis_eval(BasisSpec(4, 3), 0.5), [0.125, 0.375, 0.375, 0.125], atol=1e-15)

    def test_outside_domain(self):
        with pytest.raises(DomainError):
            basis_eval(BasisSpec(5), 1.01)

    def test_bad_spec(self):
        with pytest.raises(DomainError):
            BasisSpec(3, 3)
        with pytest.raises(DomainError):
            BasisSpec(5, a=1.0, b=1.0)
        with pytest.raises(DomainError):
            BasisSpec(5, family="fourier")


class TestGram:
    def test_total_mass(self):
        b = BasisSpec(12, a=-1.0, b=2.0)
        assert gram_matrix(b).sum() == pytest.approx(3.0, abs=1e-12)

    def test_hat_functions(self):
        np.testing.assert_allclose(gram_matrix(BasisSpec(2, 1)), [[1 / 3, 1 / 6], [1 / 6, 1 / 3]], atol=1e-15)

    @pytest.mark.parametrize("M,degree", [(4, 3), (15, 3), (30, 2), (6, 1)])
    def test_positive_definite(self, M, degree):
        g = gram_matrix(BasisSpec(M, degree))
        np.testing.assert_array_equal(g, g.T)
        assert np.linalg.eigvalsh(g).min() > 0

    def test_matches_fine_quadrature(self):
        b = BasisSpec(7)
        t = np.linspace(0, 1, 200_001)
        B = basis_matrix(b, t)
        w = np.full(t.size, t[1] - t[0])
        w[[0, -1]] /= 2
        np.testing.assert_allclose(gram_matrix(b), (B * w[:, None]).T @ B, atol=1e-9)


class TestOrthonormalize:
    def test_identity(self):
        C = np.random.default_rng(0).standard_normal((3, 4))
        np.testing.assert_allclose(orthonormalize(C, np.eye(4)), C)

    def test_values_unchanged(self):
        b = BasisSpec(10)
        C = np.random.default_rng(1).standard_normal((5, 10))
        cs = CoefficientSample(b, orthonormalize(C, gram_matrix(b)))
        t = np.linspace(0, 1, 200)
        ref = C @ basis_matrix(b, t).T
        assert np.max(np.abs(cs.evaluate(t) - ref)) <= 1e-9

    def test_parseval(self):
        b = BasisSpec(9)
        C = np.random.default_rng(2).standard_normal((4, 9))
        Ct = orthonormalize(C, gram_matrix(b))
        p = 100_000
        grid = Grid.uniform(p)
        vals = C @ basis_matrix(b, grid.points).T
        for i in range(4):
            # rectangle rule on p points: O(1/p) relative error
            assert Ct[i] @ Ct[i] == pytest.approx(inner_product(vals[i], vals[i], grid), rel=1e-4)

    def test_not_pd(self):
        with pytest.raises(NumericalError):
            orthonormalize(np.ones((2, 2)), np.array([[1.0, 0.0], [0.0, -1.0]]))

    def test_shape(self):
        with pytest.raises(DimensionError):
            orthonormalize(np.ones((2, 3)), np.eye(2))


def sparse_from(fn, n_obs, seed=0, n=2):
    rng = np.random.default_rng(seed)
    ids, times, values = [], [], []
    for i in range(n):
        t = np.sort(rng.uniform(0, 1, n_obs))
        ids.append(f"c{i}")
        times.append(t)
        values.append(fn(t))
    return SparseCurves(ids, times, values)


class TestFitCoefficients:
    def test_exact_basis_function(self):
        b = BasisSpec(6)
        curves = sparse_from(lambda t: basis_matrix(b, t)[:, 2], 20, seed=3)
        cs = fit_coefficients(curves, b)
        raw = cs.coeffs @ np.linalg.inv(orthonormalize(np.eye(6), gram_matrix(b)))
        np.testing.assert_allclose(raw[0], np.eye(6)[2], atol=1e-8)

    def test_constant(self):
        b = BasisSpec(8)
        cs = fit_coefficients(sparse_from(np.ones_like, 30, seed=4), b)
        np.testing.assert_allclose(cs.evaluate(np.linspace(0, 1, 50)), 1.0, atol=1e-8)

    def test_noisy_sine(self):
        rng = np.random.default_rng(5)
        sigma = 0.05
        t = np.linspace(0, 1, 40)
        v = np.sin(2 * np.pi * t) + sigma * rng.standard_normal(40)
        cs = fit_coefficients(SparseCurves(["s", "flat"], [t, t], [v, np.zeros(40)]), BasisSpec(10))
        err = np.abs(cs.evaluate(t)[0] - np.sin(2 * np.pi * t))
        assert err.max() < 3 * sigma

    def test_underdetermined(self):
        curves = SparseCurves(["a", "short"], [np.linspace(0, 1, 10), np.linspace(0, 1, 4)], [np.ones(10), np.ones(4)])
        with pytest.raises(UnderdeterminedCurveError, match="short"):
            fit_coefficients(curves, BasisSpec(6))

    def test_coincident_times(self):
        t = np.array([0.1] * 5 + [0.9] * 5)
        with pytest.raises(NumericalError, match="rank"):
            fit_coefficients(SparseCurves(["x"], [t], [np.ones(10)]), BasisSpec(6))

    def test_times_sorted(self):
        c = SparseCurves(["a"], [[0.5, 0.1, 0.9]], [[2.0, 1.0, 3.0]])
        np.testing.assert_array_equal(c.times[0], [0.1, 0.5, 0.9])
        np.testing.assert_array_equal(c.values[0], [1.0, 2.0, 3.0])


class TestCoeffCov:
    def test_brute_force(self):
        C = np.random.default_rng(6).standard_normal((9, 5))
        H = SubsetH((0, 2, 3, 5, 8))
        rows = C[list(H.indices)]
        rc = rows - rows.mean(axis=0)
        np.testing.assert_allclose(coeff_trimmed_cov(C, H), rc.T @ rc / 5, atol=1e-10)

    def test_identical_rows(self):
        C = np.vstack([np.tile([1.0, 2.0, 3.0], (3, 1)), np.eye(3)])
        np.testing.assert_allclose(coeff_trimmed_cov(C, SubsetH((0, 1, 2))), 0.0, atol=1e-15)

    def test_projector(self):
        n, H = 7, SubsetH((1, 2, 4, 6))
        ind = H.mask(n).astype(float)
        P = np.diag(ind) - np.outer(ind, ind) / H.h
        np.testing.assert_allclose(P @ P, P, atol=1e-15)
        np.testing.assert_array_equal(P, P.T)

    def test_cross_path_spectrum(self):
        # exactly representable curves: coefficient-space eigenvalues equal the grid path's
        b = BasisSpec(8)
        rng = np.random.default_rng(7)
        C = rng.standard_normal((12, 8))
        H = SubsetH(tuple(range(9)))
        coef_vals = np.linalg.eigvalsh(coeff_trimmed_cov(orthonormalize(C, gram_matrix(b)), H))[::-1]
        grid = Grid.uniform(200_001)
        s = FunctionalSample(grid, C @ basis_matrix(b, grid.points).T)
        eig = eigensystem(s, H)
        r = eig.rank
        np.testing.assert_allclose(eig.eigvals[:r], coef_vals[:r], rtol=1e-4)


class TestCoeffDistances:
    def test_mean_row(self):
        C = np.random.default_rng(8).standard_normal((5, 4))
        C = np.vstack([C, C[:4].mean(axis=0)])
        assert coeff_distances(C, SubsetH((0, 1, 2, 3)), 0.3)[5] == pytest.approx(0.0, abs=1e-12)

    def test_identity_basis_reduction(self):
        x = np.random.default_rng(9).standard_normal((15, 6))
        s = FunctionalSample(unit_grid(6), x)
        H = SubsetH(tuple(range(2, 13)))
        ref = standardized_distances(s, eigensystem(s, H), 0.7)
        np.testing.assert_allclose(coeff_distances(x, H, 0.7), ref, rtol=1e-10)

    def test_monotone_in_a(self):
        C = np.random.default_rng(10).standard_normal((10, 7))
        H = SubsetH(tuple(range(7)))
        prev = None
        for a in np.logspace(-2, 2, 9):
            d = coeff_distances(C, H, a)
            if prev is not None:
                assert np.all(d <= prev + 1e-15)
            prev = d

    @pytest.mark.parametrize("a", [0.0, -1.0])
    def test_bad_a(self, a):
        with pytest.raises(DomainError):
            coeff_distances(np.eye(3), SubsetH((0, 1)), a)


class TestFitCoeff:
    def test_identity_equivalence(self):
        x = np.random.default_rng(11).standard_normal((20, 5))
        cfg = MrctConfig(alpha=0.5, seed=4)
        a = mrct_fit(FunctionalSample(unit_grid(5), x), cfg)
        b = mrct_fit_coeff(CoefficientSample(None, x), cfg)
        assert a.subset == b.subset
        assert b.k == pytest.approx(a.k, rel=1e-10)
        np.testing.assert_allclose(b.distances, a.distances, rtol=1e-10)

    def test_more_coefficients_than_curves(self):
        C = np.random.default_rng(12).standard_normal((10, 40))
        res = mrct_fit_coeff(CoefficientSample(None, C), MrctConfig(alpha=1.0, seed=0))
        assert np.all(np.isfinite(res.distances)) and res.subset.h == 7

    def test_enso_style(self):
        # 41 seasons of 53 weekly readings; a few seasons carry a warm anomaly
        rng = np.random.default_rng(13)
        weeks = np.arange(53) / 52
        ids, times, values = [], [], []
        for i in range(41):
            v = 26 + 1.5 * np.sin(2 * np.pi * weeks + rng.normal(0, 0.1)) + rng.normal(0, 0.3, 53)
            if i in (7, 22, 35):
                v += 2.5 * np.exp(-((weeks - 0.85) ** 2) / 0.01)
            ids.append(str(1982 + i))
            times.append(weeks)
            values.append(v)
        cs = fit_coefficients(SparseCurves(ids, times, values), BasisSpec(15))
        res = mrct_fit_coeff(cs, MrctConfig(alpha=2.0, seed=0))
        assert res.subset.h == 30
        assert res.flags.any()

    def test_rotation_invariance(self):
        rng = np.random.default_rng(14)
        C = rng.standard_normal((25, 6)) * np.linspace(2, 0.3, 6)
        Q, _ = np.linalg.qr(rng.standard_normal((6, 6)))
        cfg = MrctConfig(alpha=0.4, seed=1)
        a = mrct_fit_coeff(CoefficientSample(None, C), cfg)
        b = mrct_fit_coeff(CoefficientSample(None, C @ Q), cfg)
        assert a.subset == b.subset
        np.testing.assert_allclose(b.distances, a.distances, rtol=1e-8, atol=1e-12)

    def test_needs_orthonormal(self):
        cs = CoefficientSample(BasisSpec(5), np.ones((3, 5)), orthonormalized=False)
        with pytest.raises(DomainError):
            mrct_fit_coeff(cs, MrctConfig(alpha=1.0))
