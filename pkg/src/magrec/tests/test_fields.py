import decimal
import math
from unittest import TestCase

import numpy as np
from parameterized import parameterized

from magrec.exception import MeasurementMismatchError, NonFiniteError, SeparationError, SingularEvaluationError, \
    SupportMismatchError, UsageError
from magrec.fields import FieldData, ForwardModel, adjoint, dipole_potential, estimate_operator_norm, field_vector, \
    forward, kappa_for_mode, kernel_Kv, operator_norm, potential_phi
from magrec.geometry import Direction, build_dipole_grid, build_measurement_grid
from magrec.measures import DiscreteMagnetization
from magrec.splitmix import SplitMix64
from magrec.tests.testcase import ModelTestCaseBase, TestCaseBase, random_magnetization, small_model

OBLIQUE = (0.48, 0.6, 0.64)


class KernelTestCase(TestCase):

    def test_on_axis(self):
        np.testing.assert_array_equal([0.0, 0.0, -2.0], kernel_Kv([0.0, 0.0, 1.0], (0.0, 0.0, 1.0)))

    def test_in_plane(self):
        np.testing.assert_array_equal([0.0, 0.0, 1.0], kernel_Kv([1.0, 0.0, 0.0], Direction((0.0, 0.0, 1.0))))

    def test_singular(self):
        self.assertRaises(SingularEvaluationError, lambda: kernel_Kv([0.0, 0.0, 0.0], (0.0, 0.0, 1.0)))

    def test_gradient_of_potential(self):
        # K_v(x) is the gradient of v·x/|x|³
        rng = SplitMix64(23)
        radii = 0.5 + 1.5 * rng.uniform(100)
        points = rng.unit_vectors(100) * radii[:, None]
        directions = rng.unit_vectors(100)
        for x, v in zip(points, directions):

            def g(point):
                return float(np.dot(v, point) / np.linalg.norm(point)**3)

            h = 1e-5 * float(np.linalg.norm(x))
            gradient = np.zeros(3)
            for axis in range(3):
                step = np.zeros(3)
                step[axis] = h
                gradient[axis] = (g(x + step) - g(x - step)) / (2 * h)
            expected = kernel_Kv(x, v)
            self.assertLessEqual(np.linalg.norm(gradient - expected), 1e-6 * np.linalg.norm(expected),
                                 'x={}, v={}'.format(x.tolist(), v.tolist()))

    @parameterized.expand([
        ((1.0, 1.0, 1.0), (0.0, 0.0, 1.0)),
        ((0.3, -2.0, 0.7), OBLIQUE),
        ((-1e-3, 2e-3, 5e-4), (0.0, 1.0, 0.0)),
        ((40.0, -25.0, 3.0), (0.6, 0.0, -0.8)),
    ])
    def test_high_precision(self, x, v):
        with decimal.localcontext() as context:
            context.prec = 50
            d = [decimal.Decimal(c) for c in x]
            w = [decimal.Decimal(c) for c in v]
            r2 = sum(c * c for c in d)
            r = r2.sqrt()
            vd = sum(a * b for a, b in zip(w, d))
            exact = [w[axis] / (r2 * r) - 3 * d[axis] * vd / (r2 * r2 * r) for axis in range(3)]
            expected = np.array([float(c) for c in exact])
        actual = kernel_Kv(x, v)
        self.assertLessEqual(np.linalg.norm(actual - expected), 1e-14 * np.linalg.norm(expected))

    def test_high_precision_closed_form(self):
        # (−1, −1, 0)/(3√3) at x = (1, 1, 1) for v = e₃
        expected = np.array([-1.0, -1.0, 0.0]) / (3.0 * math.sqrt(3.0))
        actual = kernel_Kv([1.0, 1.0, 1.0], (0.0, 0.0, 1.0))
        self.assertLessEqual(np.linalg.norm(actual - expected), 1e-15)

    @parameterized.expand([('normalized', 1.0), ('physical', 1e-7)])
    def test_kappa(self, mode, kappa):
        self.assertEqual(kappa, kappa_for_mode(mode))

    def test_unknown_kappa_mode(self):
        self.assertRaises(UsageError, lambda: kappa_for_mode('cgs'))


class FieldDataTestCase(TestCase):

    def setUp(self):
        self.grid = build_measurement_grid(origin=[0.0, 0.0],
                                           spacing=0.5,
                                           counts=[3, 2],
                                           plane_height=1.0,
                                           weights='trapezoid')

    def test_length_mismatch(self):
        self.assertRaises(MeasurementMismatchError, lambda: FieldData(grid=self.grid, values=np.zeros(5)))

    def test_non_finite(self):
        values = np.zeros(6)
        values[2] = np.nan
        self.assertRaises(NonFiniteError, lambda: FieldData(grid=self.grid, values=values))

    def test_inner(self):
        f = FieldData(grid=self.grid, values=np.arange(6.0))
        expected = math.fsum(self.grid.weights * np.arange(6.0)**2)
        self.assertEqual(expected, f.inner(f))
        self.assertAlmostEqual(math.sqrt(expected), f.weighted_norm())
        np.testing.assert_array_equal(np.zeros(6), (f - f).values)
        np.testing.assert_array_equal(2.0 * np.arange(6.0), (f + f).values)
        self.assertTrue(f.scaled(2.0).same_values(f + f))

    def test_values_are_readonly(self):
        f = FieldData(grid=self.grid, values=np.arange(6.0))
        with self.assertRaises(ValueError):
            f.values[0] = 1.0

    def test_different_grids(self):
        other = build_measurement_grid(origin=[0.0, 0.0], spacing=0.5, counts=[3, 2], plane_height=2.0)
        self.assertRaises(MeasurementMismatchError,
                          lambda: FieldData.zeros(self.grid).inner(FieldData.zeros(other)))


class ForwardModelTestCase(ModelTestCaseBase, TestCase):

    def test_shape_and_storage(self):
        self.assertEqual((169, 48), self.model.matrix().shape)
        self.assertEqual('dense', self.model.storage)
        self.assertAlmostEqual(0.1, self.model.separation, places=15)

    def test_coincident_planes(self):
        self.assertRaises(SeparationError, lambda: small_model(height=0.0))

    def test_invalid_scale(self):
        self.assertRaises(UsageError, lambda: small_model(scale=0.0))

    def test_adjoint_consistency(self):
        rng = SplitMix64(11)
        for trial in range(100):
            source_counts = tuple(int(n) for n in 2 + rng.integers(4, 2))
            measurement_counts = tuple(int(n) for n in 3 + rng.integers(6, 2))
            height = 0.05 + 0.45 * float(rng.uniform(1)[0])
            direction = tuple(float(c) for c in rng.unit_vectors(1)[0])
            options = {'dense_budget': 0, 'block_entries': 40} if trial % 4 == 3 else {}
            model = small_model(source_counts=source_counts,
                                measurement_counts=measurement_counts,
                                height=height,
                                direction=direction,
                                weights='trapezoid' if trial % 2 else 'uniform',
                                **options)
            try:
                x = rng.normal(3 * model.n_sites)
                psi = rng.normal(model.n_meas)
                weights = model.target.weights
                left = math.fsum(weights * model.apply(x) * psi)
                right = math.fsum(x * model.apply_adjoint(psi).ravel())
                scale = float(np.dot(weights * np.abs(psi), np.abs(model.matrix()) @ np.abs(x)))
                self.assertLessEqual(abs(left - right), 1e-12 * scale, 'trial {}'.format(trial))
            finally:
                model.close()

    def test_dense_and_matrix_free_agree(self):
        free = small_model(dense_budget=0, block_entries=500, weights='trapezoid')
        dense = small_model(weights='trapezoid')
        try:
            self.assertEqual('matrix-free', free.storage)
            rng = SplitMix64(5)
            x = rng.normal(3 * free.n_sites)
            psi = rng.normal(free.n_meas)
            sites = np.array([1, 4, 9, 15])
            np.testing.assert_allclose(dense.matrix(), free.matrix(), rtol=1e-14)
            np.testing.assert_allclose(dense.submatrix(sites), free.submatrix(sites), rtol=1e-14)
            np.testing.assert_allclose(dense.apply(x), free.apply(x), rtol=1e-12, atol=1e-12)
            np.testing.assert_allclose(dense.apply(x[:12], sites), free.apply(x[:12], sites), rtol=1e-12, atol=1e-12)
            np.testing.assert_allclose(dense.apply_adjoint(psi), free.apply_adjoint(psi), rtol=1e-12, atol=1e-12)
            np.testing.assert_allclose(dense.apply_adjoint(psi, sites),
                                       free.apply_adjoint(psi, sites),
                                       rtol=1e-12,
                                       atol=1e-12)
        finally:
            free.close()
            dense.close()

    def test_thread_count_does_not_change_results(self):
        single = small_model(dense_budget=0, block_entries=300, threads=1)
        multi = small_model(dense_budget=0, block_entries=300, threads=4)
        try:
            rng = SplitMix64(9)
            x = rng.normal(3 * single.n_sites)
            psi = rng.normal(single.n_meas)
            np.testing.assert_array_equal(single.apply(x), multi.apply(x))
            np.testing.assert_array_equal(single.apply_adjoint(psi), multi.apply_adjoint(psi))
        finally:
            single.close()
            multi.close()

    def test_scaled(self):
        doubled = self.model.scaled(2.0)
        try:
            x = SplitMix64(1).normal(3 * self.model.n_sites)
            np.testing.assert_allclose(2.0 * self.model.apply(x), doubled.apply(x), rtol=1e-14, atol=0)
        finally:
            doubled.close()


class ForwardTestCase(ModelTestCaseBase, TestCase):

    def test_matches_field_vector(self):
        model = small_model(direction=OBLIQUE)
        try:
            mu = random_magnetization(model, seed=3, density=0.5)
            f = forward(model, mu)
            points = model.target.points()
            v = np.array(OBLIQUE)
            for p in (0, 17, 84, 168):
                self.assertAlmostEqual(f.values[p], float(np.dot(v, field_vector(mu, points[p]))), places=9)
        finally:
            model.close()

    def test_field_is_potential_gradient(self):
        mu = random_magnetization(self.model, seed=4)
        positions = mu.positions()
        norms = mu.norms()
        rng = SplitMix64(31)
        for _ in range(50):
            xy = rng.uniform(2) - 0.5
            z = (0.1 + 0.5 * float(rng.uniform(1)[0])) * (1.0 if rng.uniform(1)[0] < 0.5 else -1.0)
            x = np.array([xy[0], xy[1], z])
            distances = np.linalg.norm(x[None, :] - positions, axis=1)
            h = 1e-5 * float(distances.min())
            gradient = np.zeros(3)
            for axis in range(3):
                step = np.zeros(3)
                step[axis] = h
                gradient[axis] = (potential_phi(mu, x + step) - potential_phi(mu, x - step)) / (2 * h)
            scale = math.fsum(norms / distances**3)
            error = np.linalg.norm(-4.0 * math.pi * gradient - field_vector(mu, x))
            self.assertLessEqual(error, 1e-6 * scale, 'x={}'.format(x.tolist()))

    def test_linearity(self):
        first = random_magnetization(self.model, seed=1)
        second = random_magnetization(self.model, seed=2)
        combined = forward(self.model, first + second.scaled(3.0))
        expected = forward(self.model, first).values + 3.0 * forward(self.model, second).values
        np.testing.assert_allclose(expected, combined.values, rtol=1e-10, atol=1e-10)

    def test_zero(self):
        f = forward(self.model, DiscreteMagnetization.zeros(self.model.source))
        np.testing.assert_array_equal(np.zeros(self.model.n_meas), f.values)

    def test_support_mismatch(self):
        other = build_dipole_grid(origin=[0.0, 0.0], spacing=0.2, counts=[2, 2], plane_height=0.0)
        mu = DiscreteMagnetization.from_entries(other, [0], [[0.0, 0.0, 1.0]])
        self.assertRaises(SupportMismatchError, lambda: forward(self.model, mu))

    def test_adjoint_mismatch(self):
        self.assertRaises(MeasurementMismatchError, lambda: adjoint(self.model, np.zeros(5)))

    def test_singular_potential(self):
        self.assertRaises(SingularEvaluationError,
                          lambda: dipole_potential(np.zeros((1, 3)), np.array([[0.0, 0.0, 1.0]]), [0.0, 0.0, 0.0]))
        self.assertEqual(0.0, dipole_potential(np.zeros((0, 3)), np.zeros((0, 3)), [0.0, 0.0, 0.0]))

    def test_physical_scale(self):
        physical = small_model(scale=kappa_for_mode('physical'))
        try:
            mu = random_magnetization(self.model, seed=8)
            np.testing.assert_allclose(1e-7 * forward(self.model, mu).values,
                                       forward(physical, mu).values,
                                       rtol=1e-14,
                                       atol=0)
        finally:
            physical.close()


class OperatorNormTestCase(ModelTestCaseBase, TestCase):

    def _exact(self, model: ForwardModel, sites=None) -> float:
        matrix = model.matrix() if sites is None else model.submatrix(sites)
        gram = matrix.T @ (model.target.weights[:, None] * matrix)
        return float(np.linalg.eigvalsh(gram)[-1])

    def test_full(self):
        exact = self._exact(self.model)
        estimate = estimate_operator_norm(self.model, 1e-10, max_iter=100000)
        self.assertLessEqual(estimate.raw, exact * (1.0 + 1e-12))
        self.assertAlmostEqual(1.0, estimate.raw / exact, places=6)
        self.assertGreater(estimate.bound, estimate.raw)

    def test_restricted(self):
        model = small_model(direction=OBLIQUE, weights='trapezoid')
        try:
            sites = np.array([0, 5, 6, 10])
            exact = self._exact(model, sites)
            self.assertAlmostEqual(1.0, operator_norm(model, 1e-10, sites=sites, max_iter=100000) / exact, places=6)
        finally:
            model.close()

    def test_deterministic(self):
        self.assertEqual(operator_norm(self.model, 1e-8), operator_norm(self.model, 1e-8))

    def test_invalid_tolerance(self):
        self.assertRaises(UsageError, lambda: operator_norm(self.model, 0.0))


class PhysicalModeTestCase(TestCaseBase, TestCase):

    CONFIG = """
        configurationVersion: '1'
        kappaMode: physical
        """

    def test_kappa_from_config(self):
        self.assertEqual(1e-7, kappa_for_mode(self.config.get('kappaMode', types=str)))
