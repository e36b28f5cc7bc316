import logging
import sys

from vlcakit.config import ToolkitConfig

HANDLER_NAME = 'vlcakit'
# Per-point scenario logs; a sweep keeps only their warnings.
SCENARIO_LOGGERS = ('vlcakit.services', 'vlcakit.rendering')


def configure_logging(level: str | None = None) -> None:
    """Single stderr handler on the root logger; stdout carries only output paths."""
    level = (level or ToolkitConfig.LOG_LEVEL).upper()
    root = logging.getLogger()
    root.setLevel(level)
    handler = next((h for h in root.handlers if h.get_name() == HANDLER_NAME), None)
    if handler is None:
        handler = logging.StreamHandler(sys.stderr)
        handler.set_name(HANDLER_NAME)
        root.addHandler(handler)
    handler.setLevel(level)
    handler.setFormatter(logging.Formatter(ToolkitConfig.LOG_FORMAT))


def quiet_scenario_logs() -> None:
    """Raise scenario loggers to SWEEP_LOG_LEVEL unless the root logger is already more verbose than INFO."""
    if logging.getLogger().getEffectiveLevel() < logging.INFO:
        return
    for name in SCENARIO_LOGGERS:
        logging.getLogger(name).setLevel(ToolkitConfig.SWEEP_LOG_LEVEL)


__all__ = ['configure_logging', 'quiet_scenario_logs']
