import logging

import pytest

from vlcakit.config import ToolkitConfig
from vlcakit.logging_config import HANDLER_NAME, SCENARIO_LOGGERS, configure_logging, quiet_scenario_logs


@pytest.fixture(autouse=True)
def restore_logging():
    root = logging.getLogger()
    handlers, level = list(root.handlers), root.level
    scenario_levels = {name: logging.getLogger(name).level for name in SCENARIO_LOGGERS}
    for name in SCENARIO_LOGGERS:
        logging.getLogger(name).setLevel(logging.NOTSET)
    yield
    root.handlers[:] = handlers
    root.setLevel(level)
    for name, value in scenario_levels.items():
        logging.getLogger(name).setLevel(value)


def own_handlers() -> list[logging.Handler]:
    return [h for h in logging.getLogger().handlers if h.get_name() == HANDLER_NAME]


def test_repeated_configuration_keeps_one_handler() -> None:
    configure_logging('info')
    configure_logging('debug')

    assert len(own_handlers()) == 1
    assert own_handlers()[0].level == logging.DEBUG
    assert logging.getLogger().level == logging.DEBUG


def test_format_comes_from_config(monkeypatch) -> None:
    monkeypatch.setattr(ToolkitConfig, 'LOG_FORMAT', '%(levelname)s:%(message)s')
    configure_logging('INFO')

    record = logging.LogRecord('vlcakit.cli', logging.INFO, __file__, 1, 'hello', None, None)
    assert own_handlers()[0].format(record) == 'INFO:hello'


def test_sweeps_quiet_scenario_loggers() -> None:
    configure_logging('INFO')
    quiet_scenario_logs()

    assert logging.getLogger('vlcakit.services.scenario_service').getEffectiveLevel() == logging.WARNING
    assert logging.getLogger('vlcakit.cli').getEffectiveLevel() == logging.INFO


def test_debug_level_keeps_scenario_logs() -> None:
    configure_logging('DEBUG')
    quiet_scenario_logs()

    assert logging.getLogger('vlcakit.services').getEffectiveLevel() == logging.DEBUG
