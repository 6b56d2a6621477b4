#!/usr/bin/env python
# -*- encoding: utf-8 -*-


class MagrecException(Exception):
    pass


class UsageError(MagrecException, RuntimeError):
    pass


class InputDataError(MagrecException, RuntimeError):
    pass


class InternalError(MagrecException, RuntimeError):
    pass


class ConfigurationError(MagrecException, RuntimeError):
    pass


class GeometryError(UsageError):
    pass


class EmptySupportError(GeometryError):
    pass


class SeparationError(GeometryError):
    pass


class DirectionError(UsageError):
    pass


class UnknownComponentError(UsageError):
    pass


class SingularEvaluationError(InputDataError):
    pass


class SupportMismatchError(InputDataError):
    pass


class MeasurementMismatchError(InputDataError):
    pass


class GridMismatchError(InputDataError):
    pass


class UndefinedDirectionError(InputDataError):
    pass


class SchemaError(InputDataError):
    pass


class ChecksumError(InputDataError):
    pass


class NonFiniteError(InputDataError):
    pass


class NormEstimationError(MagrecException, ArithmeticError):
    pass


class PackingError(MagrecException, RuntimeError):
    pass


class NonConvergenceError(MagrecException, RuntimeError):
    pass


class CertificateError(MagrecException, RuntimeError):
    pass
