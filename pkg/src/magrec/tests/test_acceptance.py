import copy
import os
import unittest
from unittest import TestCase

import numpy as np
from parameterized import parameterized

from magrec.certificate import check_optimality
from magrec.config import Config
from magrec.fields import forward
from magrec.io.results import encode_arrays
from magrec.measures import DiscreteMagnetization, local_mass, mean_direction, net_moment, off_neighborhood_mass, \
    restrict, tv_norm, unidirectionality_defect, vector_norm
from magrec.scenarios import scenario_from_preset, scenario_from_spec
from magrec.solver import METHOD_FISTA, SolveProblem, SolverConfig, lambda_sweep, objective, solve
from magrec.splitmix import SplitMix64
from magrec.tests.testcase import TestCaseBase, SPARSE_SPEC, small_model, random_magnetization, zero_threshold

try:
    import cvxpy
except ImportError:
    cvxpy = None

ACCEPTANCE = os.environ.get('MAGREC_ACCEPTANCE', '') not in ('', '0')

TIGHT = SolverConfig(certificate_tol=1e-8, rel_obj_tol=1e-15, max_iter=200000)


class ZeroThresholdTestCase(TestCaseBase, TestCase):

    def test_zero_above_threshold(self):
        for seed in range(20):
            spec = copy.deepcopy(SPARSE_SPEC)
            spec['seed'] = seed
            scenario = scenario_from_spec(spec, self.config)
            try:
                lam = 1.005 * zero_threshold(scenario.model, scenario.field)
                result = solve(SolveProblem(model=scenario.model, f=scenario.field, lam=lam))
                self.assertTrue(result.mu.is_zero, 'seed {}'.format(seed))
                self.assertTrue(check_optimality(scenario.model, scenario.field, result.mu, lam, 1e-6).passed)
            finally:
                scenario.model.close()


class MomentInequalityTestCase(TestCaseBase, TestCase):

    def test_moment_inequality(self):
        model = small_model()
        try:
            rng = SplitMix64(17)
            for seed in range(1000):
                mu = random_magnetization(model, seed, density=0.5)
                if mu.is_zero:
                    continue
                self.assertLessEqual(vector_norm(net_moment(mu)), tv_norm(mu) * (1 + 1e-15))

                u = rng.normal(3)
                u = u / vector_norm(u)
                amplitudes = rng.uniform(model.n_sites)
                uni = DiscreteMagnetization.from_dense(model.source, amplitudes[:, None] * u[None, :])
                tv = tv_norm(uni)
                self.assertLessEqual(abs(tv - vector_norm(net_moment(uni))), 1e-14 * tv)
        finally:
            model.close()


@unittest.skipIf(cvxpy is None, 'cvxpy is not installed')
class ConvexOracleTestCase(TestCaseBase, TestCase):

    def _oracle(self, model, f, lam: float) -> float:
        matrix = model.matrix()
        weights = model.target.weights
        x = cvxpy.Variable(3 * model.n_sites)
        moments = cvxpy.reshape(x, (model.n_sites, 3), order='C')
        residual = f.values - matrix @ x
        problem = cvxpy.Problem(
            cvxpy.Minimize(cvxpy.sum(cvxpy.multiply(weights, cvxpy.square(residual))) +
                           lam * cvxpy.sum(cvxpy.norm(moments, 2, axis=1))))
        problem.solve()
        return float(problem.value)

    @parameterized.expand([(seed,) for seed in range(20)])
    def test_objective_matches_oracle(self, seed):
        source_counts = (3 + seed % 4, 3 + (seed // 4) % 4)
        direction = (0.0, 0.0, 1.0) if seed % 2 == 0 else (0.48, 0.6, 0.64)
        model = small_model(source_counts=source_counts,
                            measurement_counts=(13, 13),
                            height=0.2,
                            direction=direction,
                            weights='trapezoid' if seed % 3 == 0 else 'uniform')
        try:
            self.assertLessEqual(model.n_sites, 60)
            truth = random_magnetization(model, seed, density=0.5)
            if truth.is_zero:
                truth = random_magnetization(model, seed, density=1.0)
            f = forward(model, truth)
            lam = (0.02 + 0.18 * SplitMix64(seed).uniform(1)[0]) * zero_threshold(model, f)
            ours = solve(SolveProblem(model=model, f=f, lam=lam), TIGHT)
            fista = solve(SolveProblem(model=model, f=f, lam=lam), TIGHT.evolve(method=METHOD_FISTA))
            oracle = self._oracle(model, f, lam)

            self.assertLessEqual(abs(ours.objective - fista.objective), 1e-8 * ours.objective)
            self.assertLessEqual(abs(ours.objective - oracle), 1e-6 * oracle)
            self.assertLessEqual(abs(fista.objective - oracle), 1e-6 * oracle)
            self.assertAlmostEqual(ours.objective, objective(model, f, ours.mu, lam), delta=1e-12 * ours.objective)
        finally:
            model.close()


@unittest.skipUnless(ACCEPTANCE, 'set MAGREC_ACCEPTANCE=1 to run the desk-scale acceptance runs')
class DeskScaleTestCase(TestCaseBase, TestCase):

    def _sweep(self, name: str):
        scenario = scenario_from_preset(name, self.config)
        self.addCleanup(scenario.model.close)
        points = lambda_sweep(scenario.model, scenario.field, scenario.lambdas, reference=scenario.mu0)
        for point in points:
            self.assertIsNotNone(point.result, point.error)
        return scenario, points

    def test_sparse_recovery(self):
        scenario, points = self._sweep('sparse5-small')
        distances = [point.relative_distance for point in points]
        for previous, current in zip(distances, distances[1:]):
            self.assertLessEqual(current, previous + 1e-12)
        self.assertLess(distances[-1], 0.05)

        mu = points[-1].result.mu
        radius = 3.0 * min(scenario.model.source.spacing)
        truth = scenario.mu0
        for position, norm in zip(truth.positions(), truth.norms()):
            mass, _ = local_mass(mu, position, radius)
            self.assertLessEqual(abs(mass - norm), 0.05 * norm)
        self.assertLess(off_neighborhood_mass(mu, truth.positions(), radius), 0.02 * tv_norm(truth))

    def test_unidirectional_recovery(self):
        scenario, points = self._sweep('uni2-small')
        mu = points[-1].result.mu
        for component in range(scenario.model.source.n_components):
            recovered = restrict(mu, component)
            truth = restrict(scenario.mu0, component)
            truth_net = net_moment(truth)
            self.assertLessEqual(vector_norm(net_moment(recovered) - truth_net), 0.02 * vector_norm(truth_net))
            self.assertGreaterEqual(float(np.dot(mean_direction(recovered), mean_direction(truth))), 0.99)
            self.assertLessEqual(unidirectionality_defect(recovered), 0.05)

    @parameterized.expand([('sparse5-small',), ('uni2-small',)])
    def test_certificate_soundness(self, name):
        scenario, points = self._sweep(name)
        for point in points:
            mu = point.result.mu
            self.assertTrue(check_optimality(scenario.model, scenario.field, mu, point.lam, 1e-6).passed)
            if mu.is_zero:
                continue
            largest = int(np.argmax(mu.norms()))
            doubled = mu.with_moment(int(mu.sites[largest]), 2.0 * mu.moments[largest])
            self.assertFalse(check_optimality(scenario.model, scenario.field, doubled, point.lam, 1e-6).passed)

    def test_thread_count_determinism(self):
        encoded = []
        for threads in (1, 4):
            config = Config(ad_hoc_config="configurationVersion: '1'\nthreads: {}\n".format(threads))
            scenario = scenario_from_preset('sparse5-small', config)
            try:
                result = solve(SolveProblem(model=scenario.model, f=scenario.field, lam=1e-4),
                               SolverConfig.from_config(config))
                encoded.append(
                    encode_arrays({
                        'sites': result.mu.sites,
                        'moments': result.mu.moments,
                        'residual': result.residual.values,
                    }))
            finally:
                scenario.model.close()
        self.assertEqual(encoded[0], encoded[1])
