import json
import os
from typing import Any, Dict, List, Optional, Sequence

from prettytable import PrettyTable

import magrec.exception
from magrec import __version__
from magrec.certificate import Certificate, certificate_from_residual, certificate_slack, check_optimality, \
    violating_sites
from magrec.config import Config
from magrec.io.base import write_document
from magrec.io.bundle import META_FILE, RunManifest, load_bundle, save_bundle, write_manifest
from magrec.io.documents import save_certificate
from magrec.io.raster import save_magnitude_raster
from magrec.io.results import load_result, save_result
from magrec.io.tables import write_table
from magrec.logging import logger
from magrec.measures import DiscreteMagnetization, local_mass, net_moment, off_neighborhood_mass, \
    relative_tv_distance, summarize, tv_norm, vector_norm
from magrec.scenarios import Scenario, load_scenario_spec, preset_names, load_preset, scenario_from_spec
from magrec.solver import SolveProblem, SolverConfig, SolveResult, check_lambdas, lambda_sweep, solve
from magrec.utils import PrettyPrint, ProgressReporting, format_lambda, geometric_schedule
from magrec.versions import VERSIONS

OUTPUT_ROOT_ENV = 'MAGREC_OUTPUT_ROOT'

RESULT_FILE = 'result.npz'
CERTIFICATE_FILE = 'certificate.json'
SUMMARY_FILE = 'summary.json'
RASTER_FILE = 'magnitude.pgm'
METRICS_FILE = 'metrics.csv'
SWEEP_FILE = 'sweep.csv'
MANIFEST_FILE = 'manifest.json'

METRICS_TYPE = 'metrics'
SWEEP_TYPE = 'sweep'

_UNITS = {
    'physical': {
        'field': '(T)',
        'moment': '(A*m^2)',
        'lambda': '(T^2/(A*m^2))',
        'objective': '(T^2)',
    },
    'normalized': {
        'field': '(1)',
        'moment': '(1)',
        'lambda': '(1)',
        'objective': '(1)',
    },
}


def _units(kappa_mode: str) -> Dict[str, str]:
    return _UNITS.get(kappa_mode, _UNITS['normalized'])


def _lambda_directory(out: str, lam: float) -> str:
    return os.path.join(out, 'lambda-{}'.format(format_lambda(lam)))


class Commands:
    """Proxy between CLI calls and the library."""

    def __init__(self, machine_output: bool, config: Config) -> None:
        self.machine_output = machine_output
        self.config = config
        self._progress = ProgressReporting(config.get('processName', types=str))

    def _default_output(self, name: str) -> str:
        root = os.getenv(OUTPUT_ROOT_ENV, None) or self.config.get('outputRoot', types=str)
        return os.path.join(root, name)

    def _solver_config(self, method: Optional[str]) -> SolverConfig:
        solver_config = SolverConfig.from_config(self.config)
        if method is not None:
            solver_config = solver_config.evolve(method=method)
        return solver_config

    def _manifest(self, command: str, scenario: Scenario, bundle: str) -> RunManifest:
        manifest = RunManifest(command=command,
                               config_digest=self.config.digest(),
                               seed=scenario.seed,
                               kappa_mode=scenario.kappa_mode)
        manifest.add_input(os.path.join(bundle, META_FILE), name='bundle/{}'.format(META_FILE))
        return manifest

    def _print(self, document: Any) -> None:
        print(json.dumps(document, indent=4, sort_keys=True))

    def gen(self, preset: Optional[str], scenario_file: Optional[str], seed: Optional[int], out: Optional[str]) -> None:
        if (preset is None) == (scenario_file is None):
            raise magrec.exception.UsageError('Exactly one of --preset and --scenario-file is required.')
        if preset is not None:
            spec, base_dir = load_preset(preset), None
        else:
            spec, base_dir = load_scenario_spec(scenario_file), os.path.dirname(os.path.abspath(scenario_file))
        if seed is not None:
            spec['seed'] = seed

        self._progress.task('Generating scenario {}'.format(spec.get('name', preset)))
        scenario = scenario_from_spec(spec, self.config, base_dir=base_dir)
        if out is None:
            out = self._default_output('{}-s{}'.format(scenario.name, scenario.seed))

        manifest = RunManifest(command='gen',
                               config_digest=self.config.digest(),
                               seed=scenario.seed,
                               kappa_mode=scenario.kappa_mode)
        if scenario_file is not None:
            manifest.add_input(scenario_file, name='scenario')
        meta = save_bundle(scenario, out)
        for name in sorted(meta['checksums']):
            manifest.outputs[name] = meta['checksums'][name]
        manifest.add_output(os.path.join(out, META_FILE))
        write_manifest(manifest, os.path.join(out, MANIFEST_FILE))
        self._progress.reset()

        if self.machine_output:
            self._print({'bundle': out, 'name': scenario.name, 'seed': scenario.seed, 'entries': scenario.mu0.n_entries})
        else:
            logger.info('Scenario {} with {} dipoles written to {}.'.format(scenario.name, scenario.mu0.n_entries, out))

    @staticmethod
    def _metrics_header(units: Dict[str, str]) -> List[str]:
        return [
            'lambda {}'.format(units['lambda']),
            'objective {}'.format(units['objective']),
            'tv {}'.format(units['moment']),
            'relative_distance (1)',
            'certificate_passed',
            'converged',
            'reason',
            'iterations (1)',
        ]

    @staticmethod
    def _solve_row(result: SolveResult, relative_distance: Optional[float], certificate: Certificate) -> List[Any]:
        return [
            result.lam,
            result.objective,
            tv_norm(result.mu),
            relative_distance,
            certificate.passed,
            result.converged,
            result.reason,
            result.iterations,
        ]

    def solve(self, bundle: str, lambdas: Optional[List[float]], method: Optional[str], out: Optional[str]) -> None:
        scenario = load_bundle(bundle, self.config)
        values = check_lambdas(lambdas if lambdas is not None else scenario.lambdas)
        solver_config = self._solver_config(method)
        out = out if out is not None else os.path.join(bundle, 'solve')
        os.makedirs(out, exist_ok=True)
        data = scenario.data
        reference = scenario.mu0 if not scenario.mu0.is_zero else None

        manifest = self._manifest('solve', scenario, bundle)
        rows: List[List[Any]] = []
        unconverged: List[float] = []
        failed: List[float] = []
        previous: Optional[DiscreteMagnetization] = None
        for index, lam in enumerate(values):
            self._progress.task_with_lambda('Solving', lam=lam, done=index + 1, count=len(values))
            result = solve(SolveProblem(model=scenario.model, f=data, lam=lam), solver_config, previous)
            previous = result.mu
            logger.info('Lambda {} finished in {} after {} iterations ({}).'.format(
                format_lambda(lam), PrettyPrint.duration(result.duration), result.iterations, result.reason))
            certificate = check_optimality(scenario.model, data, result.mu, lam, solver_config.certificate_tol)
            relative_distance = relative_tv_distance(result.mu, reference) if reference is not None else None

            lambda_manifest = self._manifest('solve', scenario, bundle)
            directory = self._write_lambda_outputs(_lambda_directory(out, lam),
                                                   result,
                                                   certificate,
                                                   lambda_manifest,
                                                   relative_distance=relative_distance)
            manifest.add_child(os.path.relpath(os.path.join(directory, MANIFEST_FILE), out),
                               write_manifest(lambda_manifest, os.path.join(directory, MANIFEST_FILE)))

            rows.append(self._solve_row(result, relative_distance, certificate))
            if not result.converged:
                unconverged.append(lam)
            if not certificate.passed:
                logger.warning('Certificate failed at lambda {}, violating sites: {}.'.format(
                    format_lambda(lam), violating_sites(certificate)[:10]))
                failed.append(lam)

        header = self._metrics_header(_units(scenario.kappa_mode))
        write_table(os.path.join(out, METRICS_FILE), header, rows, type_=METRICS_TYPE)
        manifest.add_output(os.path.join(out, METRICS_FILE))
        write_manifest(manifest, os.path.join(out, MANIFEST_FILE))
        self._progress.reset()
        self._table_output(header, rows)

        if unconverged:
            raise magrec.exception.NonConvergenceError('Solver did not converge for lambda(s) {}.'.format(', '.join(
                format_lambda(lam) for lam in unconverged)))
        if failed:
            raise magrec.exception.CertificateError('Certificate failed for lambda(s) {}.'.format(', '.join(
                format_lambda(lam) for lam in failed)))

    @staticmethod
    def _write_lambda_outputs(directory: str,
                              result: SolveResult,
                              certificate: Certificate,
                              manifest: RunManifest,
                              relative_distance: Optional[float] = None) -> str:
        os.makedirs(directory, exist_ok=True)
        result_path = os.path.join(directory, RESULT_FILE)
        save_result(result, result_path)
        save_certificate(certificate, os.path.join(directory, CERTIFICATE_FILE))
        summary = {
            'type': 'moment-summary',
            'lambda': result.lam,
            'relative_distance': relative_distance,
            'summary': summarize(result.mu).to_dict(),
        }
        write_document(os.path.join(directory, SUMMARY_FILE), summary)
        save_magnitude_raster(result.mu, os.path.join(directory, RASTER_FILE))
        for name in (RESULT_FILE, RESULT_FILE + '.meta', CERTIFICATE_FILE, SUMMARY_FILE, RASTER_FILE,
                     RASTER_FILE + '.meta'):
            manifest.add_output(os.path.join(directory, name))
        return directory

    def _table_output(self, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> None:
        if self.machine_output:
            self._print([dict(zip(header, row)) for row in rows])
            return
        tbl = PrettyTable()
        tbl.field_names = list(header)
        for name in header:
            tbl.align[name] = 'r'
        for row in rows:
            tbl.add_row(['' if value is None else ('{:.6g}'.format(value) if isinstance(value, float) else value)
                         for value in row])
        print(tbl)

    @staticmethod
    def _sweep_header(units: Dict[str, str]) -> List[str]:
        return [
            'lambda {}'.format(units['lambda']),
            'objective {}'.format(units['objective']),
            'tv {}'.format(units['moment']),
            'relative_distance (1)',
            'net_moment_error {}'.format(units['moment']),
            'local_mass_error (1)',
            'off_neighborhood_mass {}'.format(units['moment']),
            'certificate_slack (1)',
            'certificate_passed',
            'noise_norm {}'.format(units['field']),
            'bound {}'.format(units['moment']),
            'bound_satisfied',
            'converged',
            'reason',
            'iterations (1)',
        ]

    def sweep(self, bundle: str, lambdas: Optional[List[float]], schedule: Optional[List[float]],
              noise_ratio: Optional[float], noise_seed: Optional[int], radius: Optional[float], method: Optional[str],
              out: Optional[str]) -> None:
        if lambdas is not None and schedule is not None:
            raise magrec.exception.UsageError('Only one of --lambdas and --schedule may be given.')
        scenario = load_bundle(bundle, self.config)
        if schedule is not None:
            start, stop, count = schedule
            if count != int(count):
                raise magrec.exception.UsageError('Schedule count must be an integer, got {}.'.format(count))
            values = geometric_schedule(start, stop, int(count))
        elif lambdas is not None:
            values = lambdas
        else:
            values = list(scenario.lambdas)
        values = check_lambdas(values)
        if noise_ratio is not None and noise_ratio < 0:
            raise magrec.exception.UsageError('Noise ratio must be non-negative, got {}.'.format(noise_ratio))
        if radius is None:
            radius = 3.0 * min(scenario.model.source.spacing)
        if not radius > 0:
            raise magrec.exception.UsageError('Radius must be positive, got {}.'.format(radius))

        solver_config = self._solver_config(method)
        out = out if out is not None else os.path.join(bundle, 'sweep')
        os.makedirs(out, exist_ok=True)
        reference = scenario.mu0 if not scenario.mu0.is_zero else None
        # Per-lambda noise is drawn onto the noiseless field
        data = scenario.field if noise_ratio else scenario.data

        self._progress.task('Sweeping {} lambda values'.format(len(values)))
        points = lambda_sweep(scenario.model,
                              data,
                              values,
                              solver_config,
                              reference=reference,
                              noise_ratio=noise_ratio,
                              noise_seed=noise_seed if noise_seed is not None else scenario.seed,
                              warm_start=True)

        manifest = self._manifest('sweep', scenario, bundle)
        rows: List[List[Any]] = []
        problems: List[str] = []
        unconverged: List[float] = []
        failed: List[float] = []
        sparse = scenario.spec.get('kind') == 'sparse'
        for point in points:
            if point.result is None:
                problems.append('{}: {}'.format(format_lambda(point.lam), point.error))
                rows.append([point.lam] + [None] * 8 + [point.noise_norm, None, None, False, 'error', None])
                continue
            result = point.result
            certificate = certificate_from_residual(scenario.model, result.residual, result.mu, result.lam,
                                                    solver_config.certificate_tol)
            lambda_manifest = self._manifest('sweep', scenario, bundle)
            directory = self._write_lambda_outputs(_lambda_directory(out, point.lam),
                                                   result,
                                                   certificate,
                                                   lambda_manifest,
                                                   relative_distance=point.relative_distance)
            manifest.add_child(os.path.relpath(os.path.join(directory, MANIFEST_FILE), out),
                               write_manifest(lambda_manifest, os.path.join(directory, MANIFEST_FILE)))

            net_moment_error, local_mass_error, off_mass = None, None, None
            if reference is not None:
                net_moment_error = vector_norm(net_moment(result.mu) - net_moment(reference))
                if sparse:
                    local_mass_error = _local_mass_error(result.mu, reference, radius)
                    off_mass = off_neighborhood_mass(result.mu, reference.positions(), radius)
            rows.append([
                point.lam,
                result.objective,
                point.summary.tv if point.summary is not None else tv_norm(result.mu),
                point.relative_distance,
                net_moment_error,
                local_mass_error,
                off_mass,
                certificate_slack(certificate),
                certificate.passed,
                point.noise_norm,
                point.bound,
                point.bound_satisfied,
                result.converged,
                result.reason,
                result.iterations,
            ])
            if not result.converged:
                unconverged.append(point.lam)
            if not certificate.passed:
                failed.append(point.lam)

        header = self._sweep_header(_units(scenario.kappa_mode))
        write_table(os.path.join(out, SWEEP_FILE), header, rows, type_=SWEEP_TYPE)
        manifest.add_output(os.path.join(out, SWEEP_FILE))
        write_manifest(manifest, os.path.join(out, MANIFEST_FILE))
        self._progress.reset()
        self._table_output(header, rows)

        for problem in problems:
            logger.error('Sweep point failed at lambda {}.'.format(problem))
        if problems or unconverged:
            raise magrec.exception.NonConvergenceError('Sweep has {} failed and {} unconverged point(s).'.format(
                len(problems), len(unconverged)))
        if failed:
            raise magrec.exception.CertificateError('Certificate failed for lambda(s) {}.'.format(', '.join(
                format_lambda(lam) for lam in failed)))

    def certify(self, bundle: str, result: str, tol: Optional[float], out: Optional[str]) -> None:
        scenario = load_bundle(bundle, self.config)
        solve_result = load_result(result, scenario.model)
        if tol is None:
            tol = self.config.get('solver.certificateTolerance', types=float)
        certificate = check_optimality(scenario.model, scenario.data, solve_result.mu, solve_result.lam, tol)
        if out is not None:
            save_certificate(certificate, out)

        summary = certificate.summary()
        if self.machine_output:
            self._print(summary)
        else:
            tbl = PrettyTable()
            tbl.field_names = ['check', 'value']
            tbl.align['check'] = 'l'
            tbl.align['value'] = 'r'
            for key in sorted(summary):
                tbl.add_row([key, summary[key]])
            print(tbl)

        if not certificate.passed:
            raise magrec.exception.CertificateError(
                'Certificate failed for lambda {}: {} collinearity and {} feasibility violation(s).'.format(
                    format_lambda(solve_result.lam), certificate.collinearity_violations.size,
                    certificate.feasibility_violations.size))
        logger.info('Certificate passed for lambda {} (slack {:.3e}).'.format(format_lambda(solve_result.lam),
                                                                       certificate.slack))

    def presets(self) -> None:
        entries = []
        for name in preset_names():
            spec = load_preset(name)
            entries.append({
                'name': name,
                'kind': spec['kind'],
                'source': 'x'.join(str(count) for count in spec['source']['counts']),
                'measurement': 'x'.join(str(count) for count in spec['measurement']['counts']),
                'lambdas': spec.get('lambdas', []),
            })
        if self.machine_output:
            self._print(entries)
            return
        tbl = PrettyTable()
        tbl.field_names = ['name', 'kind', 'source', 'measurement', 'lambdas']
        tbl.align['name'] = 'l'
        tbl.align['kind'] = 'l'
        tbl.align['lambdas'] = 'l'
        for entry in entries:
            tbl.add_row([
                entry['name'], entry['kind'], entry['source'], entry['measurement'],
                ', '.join(format_lambda(lam) for lam in entry['lambdas'])
            ])
        print(tbl)

    def version_info(self) -> None:
        if not self.machine_output:
            logger.info('magrec version: {}.'.format(__version__))
            logger.info('Configuration version: {}, supported {}.'.format(VERSIONS.configuration.current,
                                                                          VERSIONS.configuration.supported))
            logger.info('File metadata version: {}, supported {}.'.format(VERSIONS.file_metadata.current,
                                                                          VERSIONS.file_metadata.supported))
            logger.info('Manifest version: {}, supported {}.'.format(VERSIONS.manifest.current,
                                                                     VERSIONS.manifest.supported))
        else:
            result = {
                'version': __version__,
                'configuration_version': {
                    'current': str(VERSIONS.configuration.current),
                    'supported': str(VERSIONS.configuration.supported)
                },
                'file_metadata_version': {
                    'current': str(VERSIONS.file_metadata.current),
                    'supported': str(VERSIONS.file_metadata.supported)
                },
                'manifest_version': {
                    'current': str(VERSIONS.manifest.current),
                    'supported': str(VERSIONS.manifest.supported)
                },
            }
            print(json.dumps(result, indent=4))


def _local_mass_error(mu: DiscreteMagnetization, reference: DiscreteMagnetization, radius: float) -> float:
    """Largest relative deviation of |μ|(B(x_j, r)) from |v_j| over the dipoles of ``reference``."""
    errors = []
    for position, norm in zip(reference.positions(), reference.norms()):
        if norm == 0.0:
            continue
        mass, _ = local_mass(mu, position, radius)
        errors.append(abs(mass - norm) / norm)
    return max(errors) if errors else 0.0
