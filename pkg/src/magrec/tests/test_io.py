import copy
import json
import os
from unittest import TestCase

import numpy as np
from parameterized import parameterized

from magrec.certificate import Certificate
from magrec.exception import ChecksumError, InputDataError, NonFiniteError, SchemaError, SupportMismatchError
from magrec.fields import FieldData, forward
from magrec.geometry import build_dipole_grid, build_measurement_grid, read_mask
from magrec.io.base import META_SUFFIX, read_bytes, read_document, read_with_metadata, write_document, \
    write_with_metadata
from magrec.io.bundle import FIELD_FILE, MU0_FILE, NOISY_FIELD_FILE, RunManifest, load_bundle, read_manifest, \
    save_bundle, write_manifest
from magrec.io.documents import load_certificate, load_dipole_grid, load_measurement_grid, save_certificate, \
    save_dipole_grid, save_measurement_grid
from magrec.io.raster import save_magnitude_raster
from magrec.io.results import load_result, save_result
from magrec.io.tables import FIELD_TYPE, MAGNETIZATION_TYPE, format_float, load_field, load_magnetization, \
    read_table, save_field, save_magnetization, write_table
from magrec.measures import DiscreteMagnetization
from magrec.scenarios import scenario_from_spec
from magrec.solver import SolveResult
from magrec.tests.testcase import SPARSE_SPEC, ModelTestCaseBase, TestCaseBase, random_magnetization, small_model


class MetadataTestCase(TestCaseBase, TestCase):

    def test_round_trip(self):
        path = self.path('payload')
        written = write_with_metadata(path, b'payload', type_='blob', rows=1, extra={'answer': 42})
        data, metadata = read_with_metadata(path, type_='blob')
        self.assertEqual(b'payload', data)
        self.assertEqual(written, metadata)
        self.assertEqual(42, metadata['answer'])
        self.assertEqual(7, metadata['size'])

    def test_truncated(self):
        path = self.path('payload')
        write_with_metadata(path, b'payload', type_='blob')
        with open(path, 'wb') as f:
            f.write(b'pay')
        self.assertRaises(ChecksumError, lambda: read_with_metadata(path, type_='blob'))

    def test_modified(self):
        path = self.path('payload')
        write_with_metadata(path, b'payload', type_='blob')
        with open(path, 'wb') as f:
            f.write(b'PAYLOAD')
        self.assertRaises(ChecksumError, lambda: read_with_metadata(path, type_='blob'))

    def test_wrong_type(self):
        path = self.path('payload')
        write_with_metadata(path, b'payload', type_='blob')
        self.assertRaises(InputDataError, lambda: read_with_metadata(path, type_='other'))

    def test_unsupported_version(self):
        path = self.path('payload')
        write_with_metadata(path, b'payload', type_='blob')
        metadata = json.loads(read_bytes(path + META_SUFFIX).decode('utf-8'))
        metadata['metadata_version'] = '2.0.0'
        with open(path + META_SUFFIX, 'w') as f:
            json.dump(metadata, f)
        self.assertRaises(InputDataError, lambda: read_with_metadata(path, type_='blob'))

    def test_missing(self):
        self.assertRaises(FileNotFoundError, lambda: read_with_metadata(self.path('missing'), type_='blob'))

    def test_document_digest(self):
        path = self.path('document.json')
        written = write_document(path, {'type': 'note', 'value': 1.5, 'items': [1, 2]})
        self.assertIn('digest', written)
        self.assertEqual({'type': 'note', 'value': 1.5, 'items': [1, 2]}, read_document(path, type_='note'))
        self.assertRaises(InputDataError, lambda: read_document(path, type_='other'))

        document = json.loads(read_bytes(path).decode('utf-8'))
        document['value'] = 2.5
        with open(path, 'w') as f:
            json.dump(document, f)
        self.assertRaises(ChecksumError, lambda: read_document(path))

        with open(path, 'w') as f:
            f.write('{"type": "no')
        self.assertRaises(ChecksumError, lambda: read_document(path))


class TablesTestCase(ModelTestCaseBase, TestCase):

    def test_field_round_trip(self):
        f = forward(self.model, random_magnetization(self.model, seed=1))
        metadata = save_field(f, self.path('field.csv'))
        self.assertEqual(self.model.target.grid_id, metadata['grid_id'])
        self.assertEqual(self.model.n_meas, metadata['rows'])
        self.assertTrue(f.same_values(load_field(self.path('field.csv'), self.model.target)))

    def test_field_wrong_grid(self):
        save_field(FieldData.zeros(self.model.target), self.path('field.csv'))
        other = build_measurement_grid(origin=[0.0, 0.0], spacing=0.1, counts=[13, 13], plane_height=0.2)
        self.assertRaises(InputDataError, lambda: load_field(self.path('field.csv'), other))

    def test_magnetization_round_trip(self):
        mu = random_magnetization(self.model, seed=2, density=0.3)
        save_magnetization(mu, self.path('mu.csv'))
        self.assertTrue(mu.same_entries(load_magnetization(self.path('mu.csv'), self.model.source)))

    def test_empty_magnetization(self):
        save_magnetization(DiscreteMagnetization.zeros(self.model.source), self.path('mu.csv'))
        self.assertEqual(0, load_magnetization(self.path('mu.csv'), self.model.source).n_entries)

    def test_magnetization_wrong_grid(self):
        save_magnetization(random_magnetization(self.model, seed=2), self.path('mu.csv'))
        other = build_dipole_grid(origin=[0.0, 0.0], spacing=0.2, counts=[4, 4], plane_height=0.0)
        self.assertRaises(SupportMismatchError, lambda: load_magnetization(self.path('mu.csv'), other))

    def test_type_mismatch(self):
        save_field(FieldData.zeros(self.model.target), self.path('field.csv'))
        self.assertRaises(InputDataError, lambda: load_magnetization(self.path('field.csv'), self.model.source))

    def _rewrite_field(self, transform) -> None:
        path = self.path('field.csv')
        save_field(FieldData.zeros(self.model.target), path)
        lines = read_bytes(path).decode('utf-8').splitlines()
        data = ('\n'.join(transform(lines)) + '\n').encode('utf-8')
        write_with_metadata(path, data, type_=FIELD_TYPE, rows=len(lines) - 1,
                            extra={'grid_id': self.model.target.grid_id})

    def test_field_header(self):
        save_field(FieldData.zeros(self.model.target), self.path('field.csv'))
        self.assertEqual('x,y,z,b', read_bytes(self.path('field.csv')).decode('utf-8').split('\n', 1)[0])

    def test_reordered_columns(self):
        self._rewrite_field(lambda lines: ['y,x,z,b'] + lines[1:])
        with self.assertRaises(SchemaError) as context:
            load_field(self.path('field.csv'), self.model.target)
        self.assertIn('columns are out of order', str(context.exception))

    def test_missing_column(self):
        self._rewrite_field(lambda lines: ['x,y,z'] + [line.rsplit(',', 1)[0] for line in lines[1:]])
        with self.assertRaises(SchemaError) as context:
            load_field(self.path('field.csv'), self.model.target)
        self.assertIn('missing: b', str(context.exception))

    def test_non_finite_value(self):
        self._rewrite_field(lambda lines: lines[:-1] + [lines[-1].rsplit(',', 1)[0] + ',nan'])
        self.assertRaises(NonFiniteError, lambda: load_field(self.path('field.csv'), self.model.target))

    def test_field_moved_point(self):
        self._rewrite_field(lambda lines: lines[:1] + ['5,' + lines[1].split(',', 1)[1]] + lines[2:])
        self.assertRaises(InputDataError, lambda: load_field(self.path('field.csv'), self.model.target))

    def _write_magnetization(self, rows) -> str:
        path = self.path('mu.csv')
        lines = ['x,y,z,mx,my,mz'] + [','.join(format_float(c) for c in row) for row in rows]
        write_with_metadata(path, ('\n'.join(lines) + '\n').encode('utf-8'), type_=MAGNETIZATION_TYPE,
                            rows=len(rows))
        return path

    def test_magnetization_header(self):
        save_magnetization(random_magnetization(self.model, seed=2), self.path('mu.csv'))
        self.assertEqual('x,y,z,mx,my,mz', read_bytes(self.path('mu.csv')).decode('utf-8').split('\n', 1)[0])

    @parameterized.expand([
        (0.0,),
        (1e-12,),
        (-1e-12,),
    ])
    def test_magnetization_snapped(self, offset):
        x, y, z = self.model.source.positions(np.array([5]))[0]
        path = self._write_magnetization([[x + offset, y - offset, z + offset, 0.5, -1.0, 2.0],
                                          [0.3, 0.3, 0.0, 1.0, 0.0, 0.0]])
        mu = load_magnetization(path, self.model.source)
        np.testing.assert_array_equal([5, 15], mu.sites)
        np.testing.assert_array_equal([[0.5, -1.0, 2.0], [1.0, 0.0, 0.0]], mu.moments)

    @parameterized.expand([
        (1e-6, 0.0, 0.0),
        (0.0, -1e-6, 0.0),
        (0.0, 0.0, 1e-6),
        (0.1, 0.0, 0.0),
        (5.0, 0.0, 0.0),
    ])
    def test_magnetization_off_site(self, dx, dy, dz):
        x, y, z = self.model.source.positions(np.array([5]))[0]
        path = self._write_magnetization([[x + dx, y + dy, z + dz, 0.5, -1.0, 2.0]])
        self.assertRaises(SupportMismatchError, lambda: load_magnetization(path, self.model.source))

    def test_magnetization_masked_site(self):
        mask = np.ones((4, 4), dtype=bool)
        mask[1, 1] = False
        model = small_model(mask=mask)
        try:
            path = self._write_magnetization([[-0.1, -0.1, 0.0, 1.0, 0.0, 0.0]])
            self.assertRaises(SupportMismatchError, lambda: load_magnetization(path, model.source))
        finally:
            model.close()

    def test_magnetization_duplicate_site(self):
        x, y, z = self.model.source.positions(np.array([5]))[0]
        path = self._write_magnetization([[x, y, z, 1.0, 0.0, 0.0], [x + 1e-12, y, z, 0.0, 1.0, 0.0]])
        self.assertRaises(SupportMismatchError, lambda: load_magnetization(path, self.model.source))

    def test_generic_table(self):
        path = self.path('table.csv')
        write_table(path, ['lambda', 'passed', 'reason', 'distance'], [[0.1, True, 'certificate', None],
                                                                        [np.float64(1e-3), False, 'max_iter', 0.25]],
                    type_='metrics')
        rows = read_table(path, type_='metrics')
        self.assertEqual(2, len(rows))
        self.assertEqual({'lambda': '0.10000000000000001', 'passed': 'true', 'reason': 'certificate',
                          'distance': ''}, rows[0])
        self.assertEqual(1e-3, float(rows[1]['lambda']))
        self.assertRaises(NonFiniteError,
                          lambda: write_table(self.path('bad.csv'), ['value'], [[float('inf')]], type_='metrics'))


class DocumentsTestCase(TestCaseBase, TestCase):

    def test_dipole_grid(self):
        mask = np.ones((3, 4), dtype=bool)
        mask[1, 2] = False
        grid = build_dipole_grid(origin=[0.1, -0.3], spacing=[0.1, 0.2], counts=[4, 3], plane_height=-0.05, mask=mask)
        save_dipole_grid(grid, self.path('source.json'))
        loaded = load_dipole_grid(self.path('source.json'))
        self.assertEqual(grid.grid_id, loaded.grid_id)
        np.testing.assert_array_equal(grid.positions(), loaded.positions())

    def test_measurement_grid(self):
        grid = build_measurement_grid(origin=[0.0, 0.0],
                                      spacing=0.1,
                                      counts=[3, 1],
                                      plane_height=0.3,
                                      weights=np.array([0.1, 0.2, 0.3]))
        save_measurement_grid(grid, self.path('measurement.json'))
        loaded = load_measurement_grid(self.path('measurement.json'))
        self.assertEqual(grid, loaded)
        np.testing.assert_array_equal(grid.weights, loaded.weights)

    def test_certificate(self):
        certificate = Certificate(site_values=[[0.0, 0.0, 1.0], [0.2, 0.0, 0.0]],
                                  lam=2.0,
                                  tol=1e-6,
                                  support=[0],
                                  support_moments=[[0.0, 0.0, 0.5]])
        document = save_certificate(certificate, self.path('certificate.json'), extra={'method': 'in-crowd'})
        self.assertTrue(document['summary']['passed'])
        loaded = load_certificate(self.path('certificate.json'))
        self.assertTrue(loaded.passed)
        np.testing.assert_array_equal(certificate.site_values, loaded.site_values)
        np.testing.assert_array_equal(certificate.support, loaded.support)
        self.assertEqual(certificate.lam, loaded.lam)


class ResultsTestCase(ModelTestCaseBase, TestCase):

    def _result(self, duration: float) -> SolveResult:
        mu = random_magnetization(self.model, seed=6, density=0.25)
        return SolveResult(mu=mu,
                           objective_trace=np.array([3.0, 2.5, 2.25]),
                           residual=forward(self.model, mu).scaled(0.01),
                           lam=0.5,
                           objective=2.25,
                           iterations=2,
                           active_set_passes=1,
                           converged=True,
                           reason='certificate',
                           lipschitz=12.5,
                           duration=duration)

    def test_round_trip(self):
        result = self._result(1.0)
        save_result(result, self.path('result.npz'))
        loaded = load_result(self.path('result.npz'), self.model)
        self.assertTrue(result.mu.same_entries(loaded.mu))
        self.assertTrue(result.residual.same_values(loaded.residual))
        np.testing.assert_array_equal(result.objective_trace, loaded.objective_trace)
        for name in ('lam', 'objective', 'iterations', 'active_set_passes', 'converged', 'reason', 'lipschitz'):
            self.assertEqual(getattr(result, name), getattr(loaded, name))

    def test_byte_identical(self):
        save_result(self._result(1.0), self.path('first.npz'))
        save_result(self._result(7.0), self.path('second.npz'))
        for suffix in ('', META_SUFFIX):
            self.assertEqual(read_bytes(self.path('first.npz' + suffix)), read_bytes(self.path('second.npz' + suffix)))

    def test_other_model(self):
        save_result(self._result(1.0), self.path('result.npz'))
        other = small_model(height=0.2)
        try:
            self.assertRaises(InputDataError, lambda: load_result(self.path('result.npz'), other))
        finally:
            other.close()

    def test_truncated(self):
        save_result(self._result(1.0), self.path('result.npz'))
        data = read_bytes(self.path('result.npz'))
        with open(self.path('result.npz'), 'wb') as f:
            f.write(data[:len(data) // 2])
        self.assertRaises(ChecksumError, lambda: load_result(self.path('result.npz'), self.model))


class RasterTestCase(TestCaseBase, TestCase):

    def test_cross(self):
        grid = build_dipole_grid(origin=[0.0, 0.0], spacing=1.0, counts=[5, 5], plane_height=0.0)
        mu = DiscreteMagnetization.from_entries(grid, [12], [[0.0, 3.0, 4.0]])
        metadata = save_magnitude_raster(mu, self.path('smooth.pgm'))
        self.assertEqual(5.0, metadata['peak'])
        expected = np.zeros((5, 5), dtype=bool)
        expected[2, 1:4] = True
        expected[1:4, 2] = True
        np.testing.assert_array_equal(expected, read_mask(self.path('smooth.pgm')))

        save_magnitude_raster(mu, self.path('plain.pgm'), smooth=False)
        np.testing.assert_array_equal(np.arange(25).reshape(5, 5) == 12, read_mask(self.path('plain.pgm')))

    def test_zero(self):
        grid = build_dipole_grid(origin=[0.0, 0.0], spacing=1.0, counts=[3, 2], plane_height=0.0)
        metadata = save_magnitude_raster(DiscreteMagnetization.zeros(grid), self.path('zero.pgm'))
        self.assertEqual(0.0, metadata['peak'])
        self.assertFalse(read_mask(self.path('zero.pgm')).any())


class BundleTestCase(TestCaseBase, TestCase):

    def setUp(self):
        super().setUp()
        spec = copy.deepcopy(SPARSE_SPEC)
        spec['noise'] = {'mode': 'ratio', 'ratio': 0.1, 'lambda': 0.01}
        self.scenario = scenario_from_spec(spec, self.config)

    def tearDown(self):
        self.scenario.model.close()
        super().tearDown()

    def test_round_trip(self):
        directory = self.path('bundle')
        save_bundle(self.scenario, directory)
        loaded = load_bundle(directory, self.config)
        try:
            self.assertEqual(self.scenario.name, loaded.name)
            self.assertEqual(self.scenario.seed, loaded.seed)
            self.assertEqual(self.scenario.lambdas, loaded.lambdas)
            self.assertEqual(self.scenario.noise_norm, loaded.noise_norm)
            self.assertEqual(self.scenario.kappa_mode, loaded.kappa_mode)
            self.assertEqual(self.scenario.model.source, loaded.model.source)
            self.assertEqual(self.scenario.model.target, loaded.model.target)
            self.assertTrue(self.scenario.mu0.same_entries(loaded.mu0))
            self.assertTrue(self.scenario.field.same_values(loaded.field))
            self.assertTrue(self.scenario.noisy_field.same_values(loaded.noisy_field))
            self.assertEqual(self.scenario.spec['sparse'], loaded.spec['sparse'])
        finally:
            loaded.model.close()

    def test_field_sidecar(self):
        directory = self.path('bundle')
        save_bundle(self.scenario, directory)
        for name in (FIELD_FILE, NOISY_FIELD_FILE):
            _, metadata = read_with_metadata(os.path.join(directory, name), type_=FIELD_TYPE)
            self.assertEqual(list(self.scenario.model.direction.v), metadata['direction'])
            self.assertEqual(self.scenario.kappa_mode, metadata['kappa_mode'])
            self.assertEqual(self.scenario.model.target.to_dict(), metadata['grid'])
            self.assertEqual(self.scenario.seed, metadata['seed'])
        _, metadata = read_with_metadata(os.path.join(directory, NOISY_FIELD_FILE), type_=FIELD_TYPE)
        self.assertEqual(self.scenario.noise_norm, metadata['noise_norm'])

    def test_identical_bundles(self):
        save_bundle(self.scenario, self.path('first'))
        save_bundle(self.scenario, self.path('second'))
        for name in sorted(os.listdir(self.path('first'))):
            self.assertEqual(read_bytes(os.path.join(self.path('first'), name)),
                             read_bytes(os.path.join(self.path('second'), name)))

    def test_tampered(self):
        directory = self.path('bundle')
        save_bundle(self.scenario, directory)
        with open(os.path.join(directory, MU0_FILE), 'ab') as f:
            f.write(b'0,0,0,0,0,0\n')
        self.assertRaises(ChecksumError, lambda: load_bundle(directory, self.config))

    def test_missing(self):
        self.assertRaises(InputDataError, lambda: load_bundle(self.path('nothing'), self.config))


class ManifestTestCase(TestCaseBase, TestCase):

    def test_round_trip(self):
        with open(self.path('output.txt'), 'w') as f:
            f.write('output')
        child = write_document(self.path('child.json'), {'type': 'run-manifest-child'})
        manifest = RunManifest(command='solve', config_digest=self.config.digest(), seed=3, kappa_mode='normalized')
        manifest.add_output(self.path('output.txt'))
        manifest.add_child('child.json', child)
        written = write_manifest(manifest, self.path('manifest.json'))
        self.assertIn('duration', written['timing'])

        loaded = read_manifest(self.path('manifest.json'))
        self.assertEqual('solve', loaded.command)
        self.assertEqual(self.config.digest(), loaded.config_digest)
        self.assertEqual(3, loaded.seed)
        self.assertEqual(manifest.outputs, loaded.outputs)
        self.assertEqual([{'path': 'child.json', 'digest': child['digest']}], loaded.children)
        self.assertEqual(manifest.to_dict(), loaded.to_dict())
