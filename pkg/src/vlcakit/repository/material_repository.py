import logging
import os
from typing import Iterable

from pydantic import ValidationError

from vlcakit.errors import ConfigInvalid
from vlcakit.models.material import MaterialRecord
from vlcakit.storage.filesystem import FileSystem

logger = logging.getLogger(__name__)

MATERIAL_CSV_HEADER = ('name', 'compression_set_pct', 'linearity_r2', 'linear_stiffness_N_per_mm',
                       'preloaded_modulus_N_per_mm2', 'damping_Ns_per_m', 'creep_pct', 'cost_usd',
                       'diameter_mm', 'thickness_mm')


class MaterialRepository:
    """Material table persistence as CSV mirroring the summary table; empty cells stay absent."""
    def __init__(self, path: str, fs: FileSystem):
        self._path = path
        self._fs = fs

    @property
    def path(self) -> str:
        return self._path

    def exists(self) -> bool:
        return os.path.isfile(self._path)

    def load_all(self) -> list[MaterialRecord]:
        records = []
        for line, row in enumerate(self._fs.read_csv(self._path), start=2):
            values = {key: (value if value != '' else None) for key, value in row.items() if key}
            try:
                records.append(MaterialRecord(**{k: v for k, v in values.items() if v is not None}))
            except ValidationError as exc:
                raise ConfigInvalid(exc.errors()[0]['msg'], f"{os.path.basename(self._path)}:{line}") from exc
        logger.debug("loaded %d materials from %s", len(records), self._path)
        return records

    def save_all(self, records: Iterable[MaterialRecord]) -> str:
        rows = [[getattr(r, name) for name in MATERIAL_CSV_HEADER] for r in records]
        return self._fs.write_csv(self._path, MATERIAL_CSV_HEADER, rows)
