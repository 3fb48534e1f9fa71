"""File service utilities: every on-disk format the toolkit reads or writes."""

import csv
import json
from pathlib import Path
from typing import List, Dict, Any, Sequence, Iterable

from src.core.errors import DataFormatError
from src.utils.logging import get_logger

logger = get_logger()


def _fmt(value: Any) -> str:
    """Format a cell so floats survive a write/read cycle exactly."""
    if isinstance(value, float):
        return repr(value)
    return str(value)


class FileService:
    """Service for file operations."""

    _instance = None

    @classmethod
    def get_instance(cls):
        """Get or create the singleton file service instance."""
        if cls._instance is None:
            cls._instance = FileService()
        return cls._instance

    def ensure_directory(self, directory_path: str) -> Path:
        """Ensure a directory exists, create if it doesn't."""
        path = Path(directory_path)
        path.mkdir(parents=True, exist_ok=True)
        return path

    def write_json(self, file_path: str, payload: Dict[str, Any]) -> Path:
        """Write a JSON document with sorted keys (byte-stable across reruns)."""
        path = Path(file_path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(payload, f, indent=2, sort_keys=True)
            f.write('\n')
        logger.debug(f"Wrote {path}")
        return path

    def read_json(self, file_path: str) -> Dict[str, Any]:
        """Read a JSON document; parse failures become DataFormatError."""
        path = Path(file_path)
        with open(path, 'r', encoding='utf-8') as f:
            try:
                return json.load(f)
            except json.JSONDecodeError as e:
                raise DataFormatError(f"Invalid JSON in {path}: {e}", operation="read_json")

    def write_csv(self, file_path: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
        """Write a UTF-8 CSV with a header row."""
        path = Path(file_path)
        path.parent.mkdir(parents=True, exist_ok=True)
        count = 0
        with open(path, 'w', encoding='utf-8', newline='') as f:
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow(header)
            for row in rows:
                writer.writerow([_fmt(v) for v in row])
                count += 1
        logger.debug(f"Wrote {count} rows to {path}")
        return path

    def read_csv(self, file_path: str, header: Sequence[str], min_columns: int = None) -> List[List[float]]:
        """Read a numeric CSV whose header must start with ``header``.

        Trailing optional columns are allowed down to ``min_columns``.
        """
        path = Path(file_path)
        min_columns = min_columns or len(header)
        with open(path, 'r', encoding='utf-8', newline='') as f:
            reader = csv.reader(f)
            try:
                found = [h.strip() for h in next(reader)]
            except StopIteration:
                raise DataFormatError(f"{path} is empty", operation="read_csv")
            if found[:min_columns] != list(header[:min_columns]) or \
                    found != list(header[:len(found)]):
                raise DataFormatError(
                    f"{path}: expected header {','.join(header)}, found {','.join(found)}",
                    operation="read_csv")
            rows = []
            for line_no, row in enumerate(reader, start=2):
                if not row or all(not cell.strip() for cell in row):
                    continue
                if len(row) != len(found):
                    raise DataFormatError(f"{path}:{line_no}: expected {len(found)} columns",
                                          operation="read_csv")
                try:
                    rows.append([float(cell) for cell in row])
                except ValueError:
                    raise DataFormatError(f"{path}:{line_no}: non-numeric value",
                                          operation="read_csv")
        logger.debug(f"Read {len(rows)} rows from {path}")
        return rows


def get_file_service() -> FileService:
    """Get the file service instance."""
    return FileService.get_instance()
