from enum import Enum

from pydantic import BaseModel, Field, model_validator


class Cooling(str, Enum):
    ON = 'on'
    OFF = 'off'


class ThermalParams(BaseModel):
    """Two-node winding/housing network. Defaults are starting values; calibrate_thermal refines them."""
    c_winding: float = Field(1.9, gt=0, description="J/°C")
    r_winding_housing: float = Field(1.2, gt=0, description="°C/W")
    c_housing: float = Field(60.0, gt=0, description="J/°C")
    r_housing_ambient_off: float = Field(69.2, gt=0, description="°C/W, cooling off")
    r_housing_ambient_on: float = Field(4.17, gt=0, description="°C/W, cooling on")
    r_electrical_25c: float = Field(0.3, gt=0, description="Winding resistance at 25 °C, Ω")
    alpha_cu: float = Field(0.0039, ge=0, description="1/°C")
    ambient_c: float = 25.0
    winding_limit_c: float = 155.0

    model_config = {'frozen': True}

    @model_validator(mode='after')
    def _cooling_helps(self) -> 'ThermalParams':
        if self.r_housing_ambient_on > self.r_housing_ambient_off:
            raise ValueError('cooling-on ambient resistance must be below cooling-off')
        return self

    def r_ambient(self, cooling: Cooling) -> float:
        return self.r_housing_ambient_on if cooling is Cooling.ON else self.r_housing_ambient_off

    def r_electrical(self, t_winding: float) -> float:
        return self.r_electrical_25c * (1.0 + self.alpha_cu * (t_winding - 25.0))


class ThermalState(BaseModel):
    t_winding: float
    t_housing: float

    model_config = {'frozen': True}


class ThermalTargets(BaseModel):
    current_ratio: float = Field(3.59, gt=0)
    settle_c: float = 115.0
    settle_force_n: float = Field(860.0, gt=0)
    peak_current_a: float = Field(31.0, gt=0)
    peak_duration_s: float = Field(0.5, gt=0)
    peak_c: float = 107.0
    tolerance: float = Field(0.05, gt=0)

    model_config = {'frozen': True}


class PowerSample(BaseModel):
    t: float
    input_power: float
    motor_power: float
    joint_power: float

    model_config = {'frozen': True}


class PowerFlowReport(BaseModel):
    samples: list[PowerSample]
    drivetrain_efficiency_avg: float
    electrical_efficiency_avg: float
