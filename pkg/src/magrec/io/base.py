#!/usr/bin/env python
# -*- encoding: utf-8 -*-
"""Files with ``.meta`` sidecars and digested JSON documents.

Every payload file ``<name>`` is accompanied by ``<name>.meta``, a JSON object holding the metadata version,
the payload type, its size and SHA-256 checksum. Loaders verify both before parsing anything. Metadata never
contains timestamps so that identical payloads produce identical sidecars.
"""
import json
import os
import tempfile
from typing import Any, Dict, Optional, Tuple

import semantic_version

from magrec.exception import ChecksumError, InputDataError
from magrec.utils import canonical_json, data_checksum
from magrec.versions import VERSIONS

METADATA_VERSION_KEY = 'metadata_version'
TYPE_KEY = 'type'
CHECKSUM_KEY = 'checksum'
SIZE_KEY = 'size'
ROWS_KEY = 'rows'
DIGEST_KEY = 'digest'

META_SUFFIX = '.meta'


def write_bytes(path: str, data: bytes) -> None:
    """Replaces ``path`` atomically, readers never see a partially written file."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, temporary = tempfile.mkstemp(dir=directory, prefix='.' + os.path.basename(path) + '.')
    try:
        with os.fdopen(fd, 'wb', buffering=0) as f:
            f.write(data)
            os.fdatasync(f.fileno())
        os.replace(temporary, path)
    except BaseException:
        if os.path.exists(temporary):
            os.unlink(temporary)
        raise


def read_bytes(path: str) -> bytes:
    if not os.path.isfile(path):
        raise FileNotFoundError('File {} not found.'.format(path))
    with open(path, 'rb') as f:
        return f.read()


def build_metadata(*, type_: str, data: bytes, rows: Optional[int] = None,
                   extra: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    metadata: Dict[str, Any] = dict(extra) if extra else {}
    metadata.update({
        METADATA_VERSION_KEY: str(VERSIONS.file_metadata.current),
        TYPE_KEY: type_,
        SIZE_KEY: len(data),
        CHECKSUM_KEY: data_checksum(data),
    })
    if rows is not None:
        metadata[ROWS_KEY] = rows
    return metadata


def write_with_metadata(path: str,
                        data: bytes,
                        *,
                        type_: str,
                        rows: Optional[int] = None,
                        extra: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    metadata = build_metadata(type_=type_, data=data, rows=rows, extra=extra)
    write_bytes(path, data)
    write_bytes(path + META_SUFFIX, (canonical_json(metadata) + '\n').encode('utf-8'))
    return metadata


def decode_metadata(*, metadata_json: bytes, path: str, type_: str) -> Dict[str, Any]:
    try:
        metadata = json.loads(metadata_json.decode('utf-8'))
    except (UnicodeDecodeError, ValueError) as exception:
        raise InputDataError('Metadata of {} is not valid JSON.'.format(path)) from exception
    if not isinstance(metadata, dict):
        raise InputDataError('Metadata of {} must be a JSON object.'.format(path))

    for required_key in [METADATA_VERSION_KEY, TYPE_KEY, SIZE_KEY, CHECKSUM_KEY]:
        if required_key not in metadata:
            raise InputDataError('Required metadata key {} is missing for {}.'.format(required_key, path))
    try:
        version_obj = semantic_version.Version(metadata[METADATA_VERSION_KEY])
    except ValueError as exception:
        raise InputDataError('Metadata of {} has an invalid version.'.format(path)) from exception
    if version_obj not in VERSIONS.file_metadata.supported:
        raise InputDataError('Unsupported metadata version of {}: "{}".'.format(path, str(version_obj)))
    if metadata[TYPE_KEY] != type_:
        raise InputDataError('File {} contains {}, expected {}.'.format(path, metadata[TYPE_KEY], type_))
    return metadata


def read_with_metadata(path: str, *, type_: str) -> Tuple[bytes, Dict[str, Any]]:
    """Returns payload and metadata of ``path`` after verifying size and checksum."""
    data = read_bytes(path)
    metadata = decode_metadata(metadata_json=read_bytes(path + META_SUFFIX), path=path, type_=type_)
    if len(data) != metadata[SIZE_KEY]:
        raise ChecksumError('Length mismatch for {}. Expected: {}, got: {}.'.format(path, metadata[SIZE_KEY],
                                                                                    len(data)))
    checksum = data_checksum(data)
    if checksum != metadata[CHECKSUM_KEY]:
        raise ChecksumError('Checksum mismatch for {}. Expected: {}, got: {}.'.format(
            path, metadata[CHECKSUM_KEY][:16], checksum[:16]))
    return data, metadata


def add_digest(document: Dict[str, Any]) -> Dict[str, Any]:
    document = {key: value for key, value in document.items() if key != DIGEST_KEY}
    document[DIGEST_KEY] = data_checksum(canonical_json(document).encode('utf-8'))
    return document


def verify_digest(document: Dict[str, Any], path: str) -> Dict[str, Any]:
    if DIGEST_KEY not in document:
        raise InputDataError('Document {} has no digest.'.format(path))
    content = {key: value for key, value in document.items() if key != DIGEST_KEY}
    digest = data_checksum(canonical_json(content).encode('utf-8'))
    if digest != document[DIGEST_KEY]:
        raise ChecksumError('Digest mismatch for {}. Expected: {}, got: {}.'.format(path, document[DIGEST_KEY][:16],
                                                                                    digest[:16]))
    return content


def write_document(path: str, document: Dict[str, Any]) -> Dict[str, Any]:
    """Writes a JSON document with sorted keys and a digest over its content."""
    document = add_digest(document)
    write_bytes(path, (json.dumps(document, sort_keys=True, indent=2, ensure_ascii=False, allow_nan=False) +
                       '\n').encode('utf-8'))
    return document


def read_document(path: str, *, type_: Optional[str] = None) -> Dict[str, Any]:
    try:
        document = json.loads(read_bytes(path).decode('utf-8'))
    except (UnicodeDecodeError, ValueError) as exception:
        raise ChecksumError('Document {} is truncated or not valid JSON.'.format(path)) from exception
    if not isinstance(document, dict):
        raise InputDataError('Document {} must be a JSON object.'.format(path))
    content = verify_digest(document, path)
    if type_ is not None and content.get(TYPE_KEY) != type_:
        raise InputDataError('Document {} contains {}, expected {}.'.format(path, content.get(TYPE_KEY), type_))
    return content
