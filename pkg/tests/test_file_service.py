"""Tests for the file service and worker utilities."""

import unittest
import os
import tempfile
import shutil
import threading
import sys

# Add the project root to path for imports
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

# Import with patched home directory so settings and logs stay out of the real home
os.environ['HOME'] = tempfile.mkdtemp()
os.environ['USERPROFILE'] = os.environ['HOME']  # For Windows

from src.utils.file_service import FileService
from src.utils.workers import WorkerManager
from src.core.errors import DataFormatError


class TestFileService(unittest.TestCase):
    """Test the FileService class."""

    def setUp(self):
        """Set up test environment."""
        self.file_service = FileService()
        self.test_dir = tempfile.mkdtemp()

    def tearDown(self):
        """Clean up test environment."""
        shutil.rmtree(self.test_dir)

    def _write(self, name, text):
        path = os.path.join(self.test_dir, name)
        with open(path, 'w') as f:
            f.write(text)
        return path

    def test_ensure_directory(self):
        """Test the ensure_directory method."""
        test_subdir = os.path.join(self.test_dir, 'subdir', 'nested')
        self.assertFalse(os.path.exists(test_subdir))

        result = self.file_service.ensure_directory(test_subdir)

        self.assertTrue(result.is_dir())
        self.assertTrue(os.path.isdir(test_subdir))

    def test_json_is_sorted(self):
        """Test that JSON output is key-sorted and reloads."""
        path = os.path.join(self.test_dir, 'out', 'doc.json')
        self.file_service.write_json(path, {'b': 1, 'a': [0.1, 2]})
        with open(path) as f:
            text = f.read()
        self.assertLess(text.index('"a"'), text.index('"b"'))
        self.assertEqual(self.file_service.read_json(path), {'a': [0.1, 2], 'b': 1})

    def test_invalid_json(self):
        """Test that malformed JSON raises DataFormatError."""
        path = self._write('bad.json', '{"a": ')
        with self.assertRaises(DataFormatError):
            self.file_service.read_json(path)

    def test_csv_floats_exact(self):
        """Test that written floats are read back bit for bit."""
        path = os.path.join(self.test_dir, 'values.csv')
        values = [[0.1, 1.0 / 3.0], [2.0 ** -40, -123.456789012345]]
        self.file_service.write_csv(path, ('a', 'b'), values)
        self.assertEqual(self.file_service.read_csv(path, ('a', 'b')), values)

    def test_csv_optional_columns(self):
        """Test a file that omits trailing optional columns."""
        path = self._write('short.csv', 'P,F_odd\n2,0.6\n\n4,0.5\n')
        rows = self.file_service.read_csv(path, ('P', 'F_odd', 'alpha'), min_columns=2)
        self.assertEqual(rows, [[2.0, 0.6], [4.0, 0.5]])

    def test_csv_errors(self):
        """Test header, column-count and numeric checks."""
        cases = {
            'header.csv': 'P,eta,extra\n1,2,3\n',
            'wrong.csv': 'Q,eta\n1,2\n',
            'columns.csv': 'P,eta\n1,2,3\n',
            'text.csv': 'P,eta\n1,abc\n',
            'empty.csv': '',
        }
        for name, text in cases.items():
            with self.subTest(name=name):
                with self.assertRaises(DataFormatError):
                    self.file_service.read_csv(self._write(name, text), ('P', 'eta'))


class TestWorkerManager(unittest.TestCase):
    """Test the bounded worker pool."""

    def test_order_preserved(self):
        """Test that results follow the input order."""
        workers = WorkerManager(max_concurrent=3)
        self.assertEqual(workers.map(lambda v: v * v, range(10)), [v * v for v in range(10)])

    def test_concurrency_limit(self):
        """Test that no more than max_concurrent jobs run at once."""
        lock = threading.Lock()
        state = {'running': 0, 'peak': 0}

        def job(_):
            with lock:
                state['running'] += 1
                state['peak'] = max(state['peak'], state['running'])
            threading.Event().wait(0.01)
            with lock:
                state['running'] -= 1

        WorkerManager(max_concurrent=2).map(job, range(8))
        self.assertLessEqual(state['peak'], 2)

    def test_error_propagates(self):
        """Test that a failing job re-raises its exception."""
        def job(v):
            if v == 2:
                raise ValueError("bad item")
            return v

        with self.assertRaises(ValueError):
            WorkerManager(max_concurrent=2).map(job, range(4))
        with self.assertRaises(ValueError):
            WorkerManager(max_concurrent=1).map(job, range(4))


if __name__ == '__main__':
    unittest.main()
