import argparse
import itertools
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from typing import Sequence

import numpy as np
from werkzeug.utils import secure_filename

from vlcakit import __version__
from vlcakit.errors import ConfigInvalid, ScenarioFailed
from vlcakit.logging_config import configure_logging, quiet_scenario_logs
from vlcakit.models.scenario import ScenarioConfig
from vlcakit.rendering.chart_renderer import ChartRenderer
from vlcakit.services.scenario_service import ScenarioService, run_scenario
from vlcakit.storage.filesystem import FileSystem
from vlcakit.validation.config_validator import ConfigValidator

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SCENARIO = 3
SWEEP_CSV_NAME = 'sweep.csv'


def sweep_values(spec: str) -> list[float] | None:
    """`a:b:step` -> inclusive float range, or None when the value is not a range."""
    parts = spec.split(':')
    if len(parts) != 3:
        return None
    try:
        start, stop, step = (float(p) for p in parts)
    except ValueError:
        return None
    if step <= 0 or stop < start:
        raise ConfigInvalid(f"range {spec!r} needs step > 0 and stop >= start")
    count = int(np.floor((stop - start) / step + 1e-9)) + 1
    return [float(f"{start + i * step:.12g}") for i in range(count)]


def _load(path: str, overrides: Sequence[str], fs: FileSystem, validator: ConfigValidator) -> dict[str, str]:
    if not os.path.isfile(path):
        raise ConfigInvalid(f"config file not found: {path}")
    return validator.parse_text(fs.read_text(path), overrides)


def _build_service(args: argparse.Namespace) -> tuple[ScenarioService, FileSystem, ConfigValidator]:
    fs = FileSystem()
    validator = ConfigValidator()
    return ScenarioService(fs, ChartRenderer(), validator, output_root=args.out), fs, validator


def cmd_run(args: argparse.Namespace) -> int:
    service, fs, validator = _build_service(args)
    config = validator.build(_load(args.config, args.set, fs, validator))
    manifest = service.run(config)
    print(os.path.join(service.output_dir(config), 'manifest.json'))
    logger.info("Summary: %s", manifest.summary)
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    service, fs, validator = _build_service(args)
    config, diagnostics = validator.check(_load(args.config, args.set, fs, validator))
    if config is not None and not diagnostics:
        diagnostics = service.validate(config)
    for item in diagnostics:
        print(f"config error: {item}", file=sys.stderr)
    if diagnostics:
        return EXIT_CONFIG
    print(f"{args.config}: ok")
    return EXIT_OK


def sweep_configs(entries: dict[str, str], validator: ConfigValidator,
                  base_dir: str) -> list[tuple[str, dict[str, float], ScenarioConfig]]:
    """Expand every `a:b:step` value into its grid; one config per grid point with its own subdirectory."""
    axes = {}
    for key, value in entries.items():
        values = sweep_values(value)
        if values is not None:
            axes[key] = values
    if not axes:
        raise ConfigInvalid("sweep needs at least one `--set key=a:b:step`")
    runs = []
    for point in itertools.product(*axes.values()):
        assignment = dict(zip(axes, point))
        name = secure_filename('__'.join(f"{key}-{value:g}" for key, value in assignment.items()))
        resolved = {**entries, **{key: f"{value:.12g}" for key, value in assignment.items()},
                    'output_dir': os.path.join(base_dir, name)}
        runs.append((name, assignment, validator.build(resolved)))
    return runs


def cmd_sweep(args: argparse.Namespace) -> int:
    service, fs, validator = _build_service(args)
    entries = _load(args.config, args.set, fs, validator)
    base = validator.build({k: v for k, v in entries.items() if sweep_values(v) is None})
    base_dir = service.output_dir(base)
    runs = sweep_configs(entries, validator, base_dir)
    logger.info("Sweeping %d configurations into %s with %d job(s)", len(runs), base_dir, args.jobs)
    quiet_scenario_logs()

    statuses = []
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            futures = [pool.submit(run_scenario, config) for _, _, config in runs]
            for (name, _, _), future in zip(runs, futures):
                statuses.append(_status(name, future.exception()))
    else:
        for name, _, config in runs:
            try:
                service.run(config)
                statuses.append('ok')
            except ScenarioFailed as exc:
                statuses.append(_status(name, exc))

    keys = list(runs[0][1])
    fs.write_csv(os.path.join(base_dir, SWEEP_CSV_NAME), ('run', *keys, 'status'),
                 [(name, *(assignment[k] for k in keys), status)
                  for (name, assignment, _), status in zip(runs, statuses)])
    failed = sum(status != 'ok' for status in statuses)
    print(os.path.join(base_dir, SWEEP_CSV_NAME))
    return EXIT_SCENARIO if failed else EXIT_OK


def _status(name: str, exc: BaseException | None) -> str:
    if exc is None:
        return 'ok'
    logger.error("Sweep point %s failed: %s", name, exc)
    return 'failed'


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='vlca', description="Actuator simulation scenarios (run | validate | sweep)")
    parser.add_argument('--version', action='version', version=f"%(prog)s {__version__}")
    parser.add_argument('--log-level', default=None, help="Overrides LOG_LEVEL")
    sub = parser.add_subparsers(dest='cmd', required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument('config', help="Scenario file with `key = value` lines")
        p.add_argument('--set', action='append', default=[], metavar='KEY=VALUE', help="Override one key")
        p.add_argument('--out', default=None, help="Output root (default: VLCA_OUT)")

    pr = sub.add_parser('run', help="Run one scenario and write CSV, SVG and manifest files")
    common(pr)
    pr.set_defaults(func=cmd_run)

    pv = sub.add_parser('validate', help="Check a scenario file without running it")
    common(pv)
    pv.set_defaults(func=cmd_validate)

    ps = sub.add_parser('sweep', help="Run a scenario over every `--set key=a:b:step` grid point")
    common(ps)
    ps.add_argument('--jobs', type=int, default=1, help="Worker processes")
    ps.set_defaults(func=cmd_sweep)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        return args.func(args)
    except ConfigInvalid as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ScenarioFailed as exc:
        print(f"scenario failed: {exc}", file=sys.stderr)
        return EXIT_SCENARIO


if __name__ == '__main__':
    sys.exit(main())
