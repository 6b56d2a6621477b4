#!/usr/bin/env python
# -*- encoding: utf-8 -*-
"""Scenario bundles and run manifests.

A bundle is a directory holding everything needed to rerun a scenario::

    config.json          validated scenario specification including the seed
    source.json          dipole grid
    measurement.json     measurement grid
    mu0.csv              ground truth
    field.csv            noiseless data
    field_noisy.csv      noisy data, only when noise was requested
    meta.json            noise norm, kappa mode and checksums of the files above
"""
import os
import time
from typing import Any, Dict, List, Optional

import attr
import semantic_version

from magrec import __version__
from magrec.config import Config
from magrec.exception import ChecksumError, InputDataError
from magrec.io.base import read_document, write_document
from magrec.io.documents import load_dipole_grid, load_measurement_grid, save_dipole_grid, save_measurement_grid
from magrec.io.tables import load_field, load_magnetization, save_field, save_magnetization
from magrec.logging import logger
from magrec.scenarios import Scenario, build_model
from magrec.utils import file_checksum
from magrec.versions import VERSIONS

CONFIG_FILE = 'config.json'
SOURCE_FILE = 'source.json'
MEASUREMENT_FILE = 'measurement.json'
MU0_FILE = 'mu0.csv'
FIELD_FILE = 'field.csv'
NOISY_FIELD_FILE = 'field_noisy.csv'
META_FILE = 'meta.json'
MANIFEST_FILE = 'manifest.json'

BUNDLE_TYPE = 'scenario-bundle'
SCENARIO_SPEC_TYPE = 'scenario-spec'
MANIFEST_TYPE = 'run-manifest'


def save_bundle(scenario: Scenario, directory: str) -> Dict[str, Any]:
    os.makedirs(directory, exist_ok=True)
    spec = dict(scenario.spec)
    spec['seed'] = scenario.seed
    write_document(os.path.join(directory, CONFIG_FILE), {'type': SCENARIO_SPEC_TYPE, 'spec': spec})
    save_dipole_grid(scenario.model.source, os.path.join(directory, SOURCE_FILE))
    save_measurement_grid(scenario.model.target, os.path.join(directory, MEASUREMENT_FILE))
    save_magnetization(scenario.mu0, os.path.join(directory, MU0_FILE))
    field_meta = {
        'direction': list(scenario.model.direction.v),
        'kappa_mode': scenario.kappa_mode,
        'grid': scenario.model.target.to_dict(),
        'seed': scenario.seed,
    }
    save_field(scenario.field, os.path.join(directory, FIELD_FILE), extra=field_meta)
    files = [CONFIG_FILE, SOURCE_FILE, MEASUREMENT_FILE, MU0_FILE, FIELD_FILE]
    if scenario.noisy_field is not None:
        save_field(scenario.noisy_field,
                   os.path.join(directory, NOISY_FIELD_FILE),
                   extra=dict(field_meta, noise_norm=scenario.noise_norm))
        files.append(NOISY_FIELD_FILE)

    meta = {
        'type': BUNDLE_TYPE,
        'name': scenario.name,
        'seed': scenario.seed,
        'kappa_mode': scenario.kappa_mode,
        'direction': list(scenario.model.direction.v),
        'noise_norm': scenario.noise_norm,
        'lambdas': list(scenario.lambdas),
        'checksums': {name: file_checksum(os.path.join(directory, name)) for name in files},
    }
    logger.info('Saved scenario {} to {}.'.format(scenario.name, directory))
    return write_document(os.path.join(directory, META_FILE), meta)


def load_bundle(directory: str, config: Config) -> Scenario:
    """Loads and verifies a bundle, the forward model is rebuilt with the run configuration's settings."""
    if not os.path.isdir(directory):
        raise InputDataError('Bundle directory {} does not exist.'.format(directory))
    meta = read_document(os.path.join(directory, META_FILE), type_=BUNDLE_TYPE)
    for name, checksum in meta['checksums'].items():
        actual = file_checksum(os.path.join(directory, name))
        if actual != checksum:
            raise ChecksumError('Checksum mismatch for {} in bundle {}. Expected: {}, got: {}.'.format(
                name, directory, checksum[:16], actual[:16]))

    spec = read_document(os.path.join(directory, CONFIG_FILE), type_=SCENARIO_SPEC_TYPE)['spec']
    source = load_dipole_grid(os.path.join(directory, SOURCE_FILE))
    measurement = load_measurement_grid(os.path.join(directory, MEASUREMENT_FILE))
    model = build_model(source, measurement, meta['direction'], config, kappa_mode=meta['kappa_mode'])
    noisy_field = None
    if NOISY_FIELD_FILE in meta['checksums']:
        noisy_field = load_field(os.path.join(directory, NOISY_FIELD_FILE), measurement)
    return Scenario(name=meta['name'],
                    spec=spec,
                    model=model,
                    mu0=load_magnetization(os.path.join(directory, MU0_FILE), source),
                    field=load_field(os.path.join(directory, FIELD_FILE), measurement),
                    seed=meta['seed'],
                    noisy_field=noisy_field,
                    noise_norm=meta['noise_norm'],
                    lambdas=tuple(meta['lambdas']))


@attr.s(auto_attribs=True)
class RunManifest:
    """Inputs, outputs and timing of one command run.

    Only ``timing`` differs between reruns with identical inputs, outputs are compared via their checksums.
    """

    command: str
    config_digest: str
    seed: Optional[int] = None
    kappa_mode: Optional[str] = None
    inputs: Dict[str, str] = attr.Factory(dict)
    outputs: Dict[str, str] = attr.Factory(dict)
    children: List[Dict[str, str]] = attr.Factory(list)
    timing: Dict[str, float] = attr.Factory(dict)
    tool_version: str = __version__
    started: float = attr.ib(factory=time.time, repr=False)

    def add_input(self, path: str, name: Optional[str] = None) -> None:
        self.inputs[name or os.path.basename(path)] = file_checksum(path)

    def add_output(self, path: str, name: Optional[str] = None) -> None:
        self.outputs[name or os.path.basename(path)] = file_checksum(path)

    def add_child(self, path: str, document: Dict[str, Any]) -> None:
        """References another manifest, e.g. the per-lambda manifests of a sweep."""
        self.children.append({'path': path, 'digest': document['digest']})

    def to_dict(self) -> Dict[str, Any]:
        return {
            'type': MANIFEST_TYPE,
            'manifest_version': str(VERSIONS.manifest.current),
            'tool_version': self.tool_version,
            'command': self.command,
            'config_digest': self.config_digest,
            'seed': self.seed,
            'kappa_mode': self.kappa_mode,
            'inputs': dict(sorted(self.inputs.items())),
            'outputs': dict(sorted(self.outputs.items())),
            'children': list(self.children),
            'timing': dict(self.timing),
        }


def write_manifest(manifest: RunManifest, path: str) -> Dict[str, Any]:
    manifest.timing.setdefault('duration', time.time() - manifest.started)
    return write_document(path, manifest.to_dict())


def read_manifest(path: str) -> RunManifest:
    document = read_document(path, type_=MANIFEST_TYPE)
    version_obj = semantic_version.Version(document.get('manifest_version', '0.0.0'))
    if version_obj not in VERSIONS.manifest.supported:
        raise InputDataError('Unsupported manifest version of {}: "{}".'.format(path, str(version_obj)))
    return RunManifest(command=document['command'],
                       config_digest=document['config_digest'],
                       seed=document['seed'],
                       kappa_mode=document['kappa_mode'],
                       inputs=document['inputs'],
                       outputs=document['outputs'],
                       children=document['children'],
                       timing=document['timing'],
                       tool_version=document['tool_version'])
