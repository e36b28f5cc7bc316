import csv
import hashlib
import json
import math
import os
from typing import Any, Iterable, Sequence

from vlcakit.config import ToolkitConfig


def format_cell(value: Any, float_format: str = ToolkitConfig.CSV_FLOAT_FORMAT) -> str:
    if value is None:
        return ''
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, float):
        if math.isnan(value):
            return 'nan'
        if math.isinf(value):
            return 'inf' if value > 0 else '-inf'
        return format(value, float_format)
    return str(value)


class FileSystem:
    """Abstraction over file system operations (SRP)."""
    def __init__(self, float_format: str = ToolkitConfig.CSV_FLOAT_FORMAT):
        self._float_format = float_format

    def ensure_dir(self, path: str) -> str:
        os.makedirs(path, exist_ok=True)
        return path

    def write_csv(self, path: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
        self.ensure_dir(os.path.dirname(path) or '.')
        with open(path, 'w', encoding='utf-8', newline='') as f:
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow(header)
            for row in rows:
                writer.writerow([format_cell(v, self._float_format) for v in row])
        return path

    def read_csv(self, path: str) -> list[dict[str, str]]:
        with open(path, 'r', encoding='utf-8', newline='') as f:
            return list(csv.DictReader(f))

    def write_json(self, path: str, payload: Any) -> str:
        self.ensure_dir(os.path.dirname(path) or '.')
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(payload, f, indent=2, sort_keys=True, default=str)
            f.write('\n')
        return path

    def write_text(self, path: str, text: str) -> str:
        self.ensure_dir(os.path.dirname(path) or '.')
        with open(path, 'w', encoding='utf-8') as f:
            f.write(text)
        return path

    def read_text(self, path: str) -> str:
        with open(path, 'r', encoding='utf-8') as f:
            return f.read()

    def digest(self, path: str) -> str:
        sha = hashlib.sha256()
        with open(path, 'rb') as f:
            for chunk in iter(lambda: f.read(65536), b''):
                sha.update(chunk)
        return sha.hexdigest()
