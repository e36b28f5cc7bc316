import logging
from dataclasses import dataclass
from typing import Any, Iterable

from pydantic import BaseModel, ValidationError

from vlcakit.errors import ConfigInvalid
from vlcakit.models.actuator import ActuatorParams, ControllerGains, PositionGains
from vlcakit.models.material import RankingWeights
from vlcakit.models.scenario import RunOptions, ScenarioConfig, ScenarioKind
from vlcakit.models.simulation import ForceReference, ImpactConfig
from vlcakit.models.testbed import SensingParams, TaskGains, TrajectorySpec, TwoDofParams
from vlcakit.models.thermal import ThermalParams, ThermalTargets

logger = logging.getLogger(__name__)

TOP_LEVEL_KEYS = ('scenario', 'output_dir', 'seed')


@dataclass(frozen=True)
class Diagnostic:
    key_path: str
    message: str

    def __str__(self) -> str:
        return f"{self.key_path}: {self.message}" if self.key_path else self.message


@dataclass(frozen=True)
class ResolvedParameters:
    actuator: ActuatorParams
    gains: ControllerGains
    position: PositionGains
    testbed: TwoDofParams
    task: TaskGains
    trajectory: TrajectorySpec
    sensing: SensingParams
    thermal: ThermalParams
    targets: ThermalTargets
    impact: ImpactConfig
    reference: ForceReference
    weights: RankingWeights
    run: RunOptions

    def as_dict(self) -> dict[str, Any]:
        return {name: getattr(self, name).model_dump(mode='json') for name in ConfigValidator.SECTIONS}


def parse_value(raw: str) -> Any:
    """`a, b` becomes a tuple, `a, b; c, d` a tuple of tuples, `none` is None; scalars stay text for pydantic."""
    text = raw.strip()
    if text.lower() in ('none', 'null', ''):
        return None
    if ';' in text:
        return tuple(tuple(part.strip() for part in row.split(',')) for row in text.split(';') if row.strip())
    if ',' in text:
        return tuple(part.strip() for part in text.split(','))
    return text


def _field_exists(model: type[BaseModel], parts: list[str]) -> bool:
    fields = model.model_fields
    if parts[0] not in fields:
        return False
    if len(parts) == 1:
        return True
    annotation = fields[parts[0]].annotation
    if isinstance(annotation, type) and issubclass(annotation, BaseModel):
        return _field_exists(annotation, parts[1:])
    return False


def _message(error: dict) -> str:
    ctx = error.get('ctx') or {}
    if error['type'] == 'greater_than' and ctx.get('gt') == 0:
        return 'must be positive'
    if error['type'] == 'greater_than_equal' and ctx.get('ge') == 0:
        return 'must be nonnegative'
    return error['msg']


class ConfigValidator:
    """Parses flat `section.key = value` scenario files and checks overrides against the parameter models."""

    SECTIONS: dict[str, type[BaseModel]] = {
        'actuator': ActuatorParams,
        'gains': ControllerGains,
        'position': PositionGains,
        'testbed': TwoDofParams,
        'task': TaskGains,
        'trajectory': TrajectorySpec,
        'sensing': SensingParams,
        'thermal': ThermalParams,
        'targets': ThermalTargets,
        'impact': ImpactConfig,
        'reference': ForceReference,
        'weights': RankingWeights,
        'run': RunOptions,
    }

    def parse_text(self, text: str, overrides: Iterable[str] = ()) -> dict[str, str]:
        entries: dict[str, str] = {}
        for number, line in enumerate(text.splitlines(), start=1):
            stripped = line.split('#', 1)[0].strip()
            if not stripped:
                continue
            if '=' not in stripped:
                raise ConfigInvalid("expected `key = value`", f"line {number}")
            key, value = (part.strip() for part in stripped.split('=', 1))
            entries[key] = value
        for item in overrides:
            key, value = self.split_assignment(item)
            entries[key] = value
        return entries

    @staticmethod
    def split_assignment(item: str) -> tuple[str, str]:
        if '=' not in item:
            raise ConfigInvalid(f"override {item!r} is not `key=value`", item)
        key, value = item.split('=', 1)
        return key.strip(), value.strip()

    def build(self, entries: dict[str, str]) -> ScenarioConfig:
        config, diagnostics = self.check(entries)
        if diagnostics:
            raise ConfigInvalid(diagnostics[0].message, diagnostics[0].key_path)
        return config

    def check(self, entries: dict[str, str]) -> tuple[ScenarioConfig | None, list[Diagnostic]]:
        """Every problem in the entries at once; the config is None when the scenario itself is unusable."""
        diagnostics: list[Diagnostic] = []
        kind = None
        if not entries.get('scenario'):
            diagnostics.append(Diagnostic('scenario', 'missing required key'))
        else:
            try:
                kind = ScenarioKind(entries['scenario'])
            except ValueError:
                choices = ', '.join(k.value for k in ScenarioKind)
                diagnostics.append(Diagnostic('scenario', f"unknown scenario (choose from {choices})"))
        seed = 0
        try:
            seed = int(entries.get('seed', 0))
        except ValueError:
            diagnostics.append(Diagnostic('seed', 'must be an integer'))
        overrides = {k: v for k, v in entries.items() if k not in TOP_LEVEL_KEYS}
        diagnostics.extend(self._resolve(overrides)[1])
        for item in diagnostics:
            logger.debug("Config diagnostic %s", item)
        if kind is None:
            return None, diagnostics
        config = ScenarioConfig(scenario=kind, overrides=overrides, output_dir=entries.get('output_dir') or None,
                                seed=seed)
        return config, diagnostics

    def validate(self, config: ScenarioConfig) -> list[Diagnostic]:
        _, diagnostics = self._resolve(config.overrides)
        for item in diagnostics:
            logger.debug("Config diagnostic %s", item)
        return diagnostics

    def resolve(self, config: ScenarioConfig) -> ResolvedParameters:
        resolved, diagnostics = self._resolve(config.overrides)
        if diagnostics:
            raise ConfigInvalid(diagnostics[0].message, diagnostics[0].key_path)
        return resolved

    def _resolve(self, overrides: dict[str, Any]) -> tuple[ResolvedParameters | None, list[Diagnostic]]:
        diagnostics: list[Diagnostic] = []
        nested: dict[str, dict[str, Any]] = {name: {} for name in self.SECTIONS}
        for key in sorted(overrides):
            section, _, rest = key.partition('.')
            model = self.SECTIONS.get(section)
            if model is None or not rest or not _field_exists(model, rest.split('.')):
                diagnostics.append(Diagnostic(key, 'unknown key'))
                continue
            value = overrides[key]
            target = nested[section]
            *parents, leaf = rest.split('.')
            for parent in parents:
                target = target.setdefault(parent, {})
            target[leaf] = parse_value(value) if isinstance(value, str) else value

        models: dict[str, BaseModel] = {}
        for section, model in self.SECTIONS.items():
            try:
                models[section] = model.model_validate(nested[section])
            except ValidationError as exc:
                for error in exc.errors():
                    path = '.'.join([section, *(str(part) for part in error['loc'])])
                    diagnostics.append(Diagnostic(path, _message(error)))
        if diagnostics:
            return None, diagnostics
        return ResolvedParameters(**models), []
