from enum import Enum
from typing import Any

from pydantic import BaseModel, Field

from vlcakit.models.actuator import ControllerKind
from vlcakit.models.testbed import TorqueMode
from vlcakit.models.thermal import Cooling


class ScenarioKind(str, Enum):
    BODE = 'bode'
    MARGINS = 'margins'
    FORCE_TRACKING = 'force_tracking'
    POSITION_STEP = 'position_step'
    IMPACT = 'impact'
    OSC = 'osc'
    THERMAL = 'thermal'
    EFFICIENCY = 'efficiency'
    MATERIALS = 'materials'
    HIGH_POWER = 'high_power'


class ScenarioConfig(BaseModel):
    scenario: ScenarioKind
    overrides: dict[str, Any] = Field(default_factory=dict, description="Dotted key -> value")
    output_dir: str | None = None
    seed: int = 0

    model_config = {'frozen': True, 'use_enum_values': False}


class RunManifest(BaseModel):
    toolkit_version: str
    scenario: str
    status: str = 'ok'
    error: str | None = None
    config_digest: str
    parameters: dict[str, Any]
    files: list[str] = Field(default_factory=list)
    summary: dict[str, Any] = Field(default_factory=dict)


class RunOptions(BaseModel):
    """Scenario-level knobs under the `run.` config section."""
    controller: ControllerKind = ControllerKind.PDmDOB
    duration: float | None = Field(None, gt=0, description="s; scenario default when unset")
    mode: TorqueMode | None = Field(None, description="testbed torque path; scenario default when unset")
    payload: float | None = Field(None, ge=0, description="kg")
    travel: float | None = Field(None, gt=0, description="m, lift scenarios")
    lift_time: float | None = Field(None, gt=0, description="s, lift scenarios")
    cooling: Cooling = Cooling.ON
    push_force: float = Field(50.0, description="N")
    omega_min: float = Field(0.1, gt=0, description="rad/s")
    omega_max: float = Field(1e4, gt=0, description="rad/s")
    points_per_decade: int = Field(24, ge=8)
    calibrate: bool = False
    identify: bool = False
    thermal: bool = False
    materials_csv: str | None = None

    model_config = {'frozen': True}
