import math
from dataclasses import dataclass
from enum import Enum
from typing import Literal

from pydantic import BaseModel, Field, model_validator


@dataclass(frozen=True)
class PlantState:
    """Deflection state of the fixed-output plant together with its lumped coefficients."""
    x_r: float
    v_r: float
    mass: float
    damping: float
    stiffness: float
    current_gain: float

    def __post_init__(self) -> None:
        if not self.mass > 0:
            raise ValueError(f"effective mass must be positive, got {self.mass}")

    @classmethod
    def at_rest(cls, params, x_r: float = 0.0, v_r: float = 0.0) -> 'PlantState':
        return cls(x_r, v_r, params.effective_mass, params.effective_damping, params.k_r, params.N)

    @property
    def spring_force(self) -> float:
        return self.stiffness * self.x_r

    def energy(self) -> float:
        return 0.5 * self.mass * self.v_r ** 2 + 0.5 * self.stiffness * self.x_r ** 2

    def is_finite(self) -> bool:
        return math.isfinite(self.x_r) and math.isfinite(self.v_r)


class ReferenceKind(str, Enum):
    STEP = 'step'
    RAMP = 'ramp'
    SINE = 'sine'
    CHIRP = 'chirp'


class ForceReference(BaseModel):
    """Commanded elastomer force. `amplitude` is the full-scale (step/ramp) or peak (sine/chirp) value."""
    kind: ReferenceKind = ReferenceKind.RAMP
    amplitude: float = Field(25.0 / 0.0458, description="N")
    offset: float = Field(1.0 / 0.0458, description="N, level held before the motion starts")
    t_start: float = Field(0.2, ge=0, description="s")
    ramp_time: float = Field(0.1, gt=0, description="s")
    frequency: float = Field(5.0, ge=0, description="Hz, sine only")
    f0: float = Field(0.5, gt=0, description="Hz, chirp start")
    f1: float = Field(40.0, gt=0, description="Hz, chirp end")
    sweep_time: float = Field(10.0, gt=0, description="s, chirp only")

    model_config = {'frozen': True}

    def value(self, t: float) -> float:
        if self.kind is ReferenceKind.CHIRP:
            return chirp_value(t - self.t_start, self.f0, self.f1, self.sweep_time, self.amplitude)
        if t < self.t_start:
            return self.offset
        elapsed = t - self.t_start
        if self.kind is ReferenceKind.STEP:
            return self.amplitude
        if self.kind is ReferenceKind.RAMP:
            frac = min(elapsed / self.ramp_time, 1.0)
            return self.offset + (self.amplitude - self.offset) * frac
        return self.offset + self.amplitude * math.sin(2.0 * math.pi * self.frequency * elapsed)


def chirp_value(t: float, f0: float, f1: float, duration: float, amplitude: float) -> float:
    """Exponential sine sweep from f0 to f1 Hz; zero outside [0, duration]."""
    if t < 0.0 or t > duration:
        return 0.0
    rate = duration / math.log(f1 / f0)
    return amplitude * math.sin(2.0 * math.pi * f0 * rate * (math.exp(t / rate) - 1.0))


class Grounding(str, Enum):
    RIGID = 'rigid'
    VISCOELASTIC = 'viscoelastic'


class ImpactConfig(BaseModel):
    grounding: Grounding = Grounding.VISCOELASTIC
    impulse: float = Field(20.0, ge=0, description="N·s")
    pulse_width: float = Field(2e-3, ge=0.5e-3, le=5e-3, description="s, half-sine")
    sensor_mass: float = Field(0.1, ge=0, description="kg")
    duration: float = Field(0.05, gt=0, description="s")

    model_config = {'frozen': True}

    @property
    def peak_force(self) -> float:
        return self.impulse * math.pi / (2.0 * self.pulse_width)

    def hammer_force(self, t: float) -> float:
        if t < 0.0 or t > self.pulse_width:
            return 0.0
        return self.peak_force * math.sin(math.pi * t / self.pulse_width)


class SpringElement(BaseModel):
    """Compliant element between drivetrain and output."""
    name: Literal['elastomer', 'steel_spring'] = 'elastomer'
    stiffness: float = Field(5.5e6, gt=0, description="N/m")
    damping: float = Field(2.0e4, ge=0, description="N·s/m")

    model_config = {'frozen': True}

    @model_validator(mode='after')
    def _finite(self) -> 'SpringElement':
        if not (math.isfinite(self.stiffness) and math.isfinite(self.damping)):
            raise ValueError('spring element constants must be finite')
        return self

    @classmethod
    def elastomer(cls, k_r: float = 5.5e6, b_r: float = 2.0e4) -> 'SpringElement':
        return cls(name='elastomer', stiffness=k_r, damping=b_r)

    @classmethod
    def steel_spring(cls, k_r: float = 5.5e6, ratio: float = 0.11, damping: float = 8.0e3) -> 'SpringElement':
        return cls(name='steel_spring', stiffness=ratio * k_r, damping=damping)
