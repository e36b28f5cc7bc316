from dataclasses import dataclass, field

import numpy as np

CSV_COLUMNS: tuple[str, ...] = ('t_s', 'f_cmd_N', 'f_meas_N', 'f_loadcell_N', 'i_m_A', 'x_r_m', 'q_out', 'temp_C')


@dataclass(frozen=True)
class SimTrace:
    """Uniformly sampled run record. Column arrays share one length; `t_s` is always present."""
    dt: float
    columns: dict[str, np.ndarray]
    events: tuple[str, ...] = ()
    attrs: dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        lengths = {len(v) for v in self.columns.values()}
        if len(lengths) > 1:
            raise ValueError(f"column lengths differ: {sorted(lengths)}")
        if 't_s' not in self.columns:
            raise ValueError("trace needs a t_s column")
        for v in self.columns.values():
            v.setflags(write=False)

    def __len__(self) -> int:
        return len(self.columns['t_s'])

    def __getitem__(self, name: str) -> np.ndarray:
        return self.columns[name]

    def __contains__(self, name: str) -> bool:
        return name in self.columns

    @property
    def time(self) -> np.ndarray:
        return self.columns['t_s']

    def rows(self, header: tuple[str, ...] = CSV_COLUMNS) -> list[list[float | None]]:
        present = [self.columns.get(name) for name in header]
        return [[None if col is None else float(col[i]) for col in present] for i in range(len(self))]
