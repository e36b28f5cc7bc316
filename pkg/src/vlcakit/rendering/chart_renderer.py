import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from jinja2 import Environment, FileSystemLoader

from vlcakit.config import ToolkitConfig

logger = logging.getLogger(__name__)

PALETTE = ('#1f77b4', '#d62728', '#2ca02c', '#ff7f0e', '#9467bd', '#8c564b', '#17becf', '#7f7f7f')


@dataclass(frozen=True)
class Series:
    label: str
    x: Sequence[float]
    y: Sequence[float]


@dataclass(frozen=True)
class _Frame:
    left: float
    top: float
    width: float
    height: float

    @property
    def right(self) -> float:
        return self.left + self.width

    @property
    def bottom(self) -> float:
        return self.top + self.height


def _nice_ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    span = hi - lo
    raw = span / count
    magnitude = 10 ** math.floor(math.log10(raw))
    step = next(m * magnitude for m in (1, 2, 5, 10) if m * magnitude >= raw)
    first = math.ceil(lo / step) * step
    return [float(v) for v in np.arange(first, hi + step * 1e-9, step)]


def _label(value: float) -> str:
    return format(0.0 if abs(value) < 1e-12 else value, '.4g')


class ChartRenderer:
    """Renders line charts to standalone SVG through a Jinja2 template."""

    def __init__(self, templates_dir: str | None = None, width: int = 720, height: int = 420,
                 max_points: int = 1500):
        self._env = Environment(loader=FileSystemLoader(templates_dir or ToolkitConfig.TEMPLATES_DIR),
                                autoescape=True, trim_blocks=True, lstrip_blocks=True)
        self._width = width
        self._height = height
        self._max_points = max_points

    def line_chart(self, title: str, series: Sequence[Series], x_label: str = '', y_label: str = '',
                   log_x: bool = False) -> str:
        if not series:
            raise ValueError('a chart needs at least one series')
        frame = _Frame(left=70.0, top=30.0, width=self._width - 90.0, height=self._height - 75.0)
        xs = [self._x_values(s.x, log_x) for s in series]
        ys = [np.asarray(s.y, dtype=float) for s in series]
        x_lo, x_hi = self._bounds(xs)
        y_lo, y_hi = self._bounds(ys)

        def to_px(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
            px = frame.left + (x - x_lo) / (x_hi - x_lo) * frame.width
            py = frame.bottom - (y - y_lo) / (y_hi - y_lo) * frame.height
            return px, py

        lines = []
        for index, (s, x, y) in enumerate(zip(series, xs, ys)):
            keep = np.isfinite(x) & np.isfinite(y)
            x, y = x[keep], y[keep]
            stride = max(1, math.ceil(len(x) / self._max_points))
            px, py = to_px(x[::stride], y[::stride])
            points = ' '.join(f"{a:.2f},{b:.2f}" for a, b in zip(px, py))
            lines.append({'label': s.label, 'color': PALETTE[index % len(PALETTE)], 'points': points})

        if log_x:
            decades = range(math.ceil(x_lo - 1e-9), math.floor(x_hi + 1e-9) + 1)
            x_ticks = [{'pos': f"{float(to_px(np.array(d), np.array(y_lo))[0]):.2f}", 'label': _label(10.0 ** d)}
                       for d in decades]
        else:
            x_ticks = [{'pos': f"{float(to_px(np.array(v), np.array(y_lo))[0]):.2f}", 'label': _label(v)}
                       for v in _nice_ticks(x_lo, x_hi)]
        y_ticks = [{'pos': f"{float(to_px(np.array(x_lo), np.array(v))[1]):.2f}", 'label': _label(v)}
                   for v in _nice_ticks(y_lo, y_hi)]

        template = self._env.get_template('line_chart.svg.j2')
        logger.debug("Rendering chart %r with %d series", title, len(series))
        return template.render(title=title, x_label=x_label, y_label=y_label, width=self._width,
                               height=self._height, plot=frame, series=lines, x_ticks=x_ticks, y_ticks=y_ticks)

    @staticmethod
    def _x_values(x: Sequence[float], log_x: bool) -> np.ndarray:
        values = np.asarray(x, dtype=float)
        if not log_x:
            return values
        if np.any(values <= 0):
            raise ValueError('log-scaled axis needs positive x values')
        return np.log10(values)

    @staticmethod
    def _bounds(arrays: list[np.ndarray]) -> tuple[float, float]:
        finite = np.concatenate([a[np.isfinite(a)] for a in arrays])
        if finite.size == 0:
            return 0.0, 1.0
        lo, hi = float(finite.min()), float(finite.max())
        if hi - lo < 1e-12 * max(1.0, abs(hi)):
            pad = max(abs(hi) * 0.05, 1.0)
            return lo - pad, hi + pad
        return lo, hi
