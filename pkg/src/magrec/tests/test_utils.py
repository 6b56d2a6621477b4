from unittest import TestCase

from parameterized import parameterized

from magrec.exception import UsageError
from magrec.utils import PrettyPrint, canonical_json, data_checksum, file_checksum, format_lambda, \
    geometric_schedule
from magrec.tests.testcase import TestCaseBase


class UtilsTestCase(TestCaseBase, TestCase):

    def test_geometric_schedule(self):
        schedule = geometric_schedule(1e-2, 1e-8, 7)
        self.assertEqual(7, len(schedule))
        self.assertEqual(1e-2, schedule[0])
        self.assertEqual(1e-8, schedule[-1])
        for previous, current in zip(schedule, schedule[1:]):
            self.assertAlmostEqual(0.1, current / previous, places=12)

    def test_geometric_schedule_single(self):
        self.assertEqual([0.5], geometric_schedule(0.5, 1e-3, 1))

    @parameterized.expand([
        (1.0, 1.0, 3),
        (1e-3, 1.0, 3),
        (0.0, 1.0, 3),
        (1.0, 1e-3, 0),
    ])
    def test_geometric_schedule_invalid(self, start, stop, count):
        self.assertRaises(UsageError, geometric_schedule, start, stop, count)

    def test_format_lambda(self):
        self.assertEqual('1.000e-08', format_lambda(1e-8))
        self.assertEqual('2.500e+00', format_lambda(2.5))

    @parameterized.expand([
        (0, '00s'),
        (59.6, '01m 00s'),
        (3723, '01h 02m 03s'),
        (90000, '01d 01h 00s'),
    ])
    def test_duration(self, seconds, expected):
        self.assertEqual(expected, PrettyPrint.duration(seconds))

    def test_canonical_json(self):
        self.assertEqual('{"a":[1,2],"b":1.5}', canonical_json({'b': 1.5, 'a': [1, 2]}))
        self.assertRaises(ValueError, canonical_json, {'a': float('nan')})

    def test_checksums(self):
        path = self.path('data')
        with open(path, 'wb') as f:
            f.write(b'abc')
        expected = 'ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad'
        self.assertEqual(expected, data_checksum(b'abc'))
        self.assertEqual(expected, file_checksum(path))
