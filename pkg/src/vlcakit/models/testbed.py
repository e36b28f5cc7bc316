import math
from enum import Enum
from typing import Literal

from pydantic import BaseModel, Field, model_validator


class LinkParams(BaseModel):
    length: float = Field(0.4, gt=0, description="m")
    mass: float = Field(2.0, gt=0, description="kg")
    com: float = Field(0.2, ge=0, description="Center-of-mass offset from the proximal joint, m")
    inertia: float = Field(2.0 * 0.4 ** 2 / 12.0, ge=0, description="Rotational inertia about the COM, kg·m²")

    model_config = {'frozen': True}


class TwoDofParams(BaseModel):
    """Planar ankle/knee chain with a point payload at the hip; the foot is a rigid anchor."""
    shank: LinkParams = LinkParams()
    thigh: LinkParams = LinkParams()
    payload_mass: float = Field(10.0, ge=0, description="kg at the hip")
    gravity: float = Field(9.81, ge=0)

    model_config = {'frozen': True}

    @property
    def links(self) -> tuple[LinkParams, LinkParams]:
        return self.shank, self.thigh

    @property
    def reach(self) -> float:
        return self.shank.length + self.thigh.length


class LinkageProfile(BaseModel):
    """Tabulated moment arm r(q), linearly interpolated between joint angles."""
    angles: tuple[float, ...] = (-math.pi, math.pi)
    moment_arms: tuple[float, ...] = (0.0458, 0.0458)

    model_config = {'frozen': True}

    @model_validator(mode='after')
    def _check_table(self) -> 'LinkageProfile':
        if len(self.angles) != len(self.moment_arms) or len(self.angles) < 2:
            raise ValueError('angles and moment_arms need the same length (>= 2)')
        if any(b <= a for a, b in zip(self.angles, self.angles[1:])):
            raise ValueError('angles must be strictly increasing')
        if any(r <= 0 for r in self.moment_arms):
            raise ValueError('moment arms must be positive')
        for a, b in zip(self.moment_arms, self.moment_arms[1:]):
            if abs(b - a) >= 0.2 * min(a, b):
                raise ValueError('adjacent moment arms differ by 20% or more')
        return self

    @property
    def angle_range(self) -> tuple[float, float]:
        return self.angles[0], self.angles[-1]

    @classmethod
    def constant(cls, moment_arm: float = 0.0458) -> 'LinkageProfile':
        return cls(angles=(-math.pi, math.pi), moment_arms=(moment_arm, moment_arm))

    @classmethod
    def crouch_biased(cls, extended: float = 0.0458, crouched: float = 0.0650) -> 'LinkageProfile':
        # larger arm at deep flexion, symmetric in the sign of the angle
        flex = (0.0, 0.5, 1.0, 1.5, 2.0, 2.5, math.pi)
        arms = [extended + (crouched - extended) * min(f / 2.5, 1.0) for f in flex]
        angles = tuple(-f for f in reversed(flex[1:])) + flex
        table = tuple(reversed(arms[1:])) + tuple(arms)
        return cls(angles=angles, moment_arms=table)


class TaskGains(BaseModel):
    kp: tuple[float, float] = Field((900.0, 900.0), description="1/s²")
    kd: tuple[float, float] = Field((60.0, 60.0), description="1/s")

    model_config = {'frozen': True}

    @model_validator(mode='after')
    def _nonnegative(self) -> 'TaskGains':
        if min(self.kp) < 0 or min(self.kd) < 0:
            raise ValueError('task gains must be nonnegative')
        return self


class TorqueMode(str, Enum):
    IDEAL = 'ideal_torque'
    CASCADED = 'cascaded_vlca'


class TrajectorySpec(BaseModel):
    kind: Literal['sine', 'bspline', 'lift', 'hold'] = 'sine'
    center: tuple[float, float] = (0.05, 0.50)
    amplitude: float = Field(0.15, ge=0, description="m; half the travel for sine, full travel for lift")
    frequency: float = Field(1.7, ge=0, description="Hz")
    axis: Literal['x', 'y'] = 'y'
    lift_duration: float = Field(1.0, gt=0, description="s, lift kind only")
    knots: tuple[tuple[float, float, float], ...] = ()

    model_config = {'frozen': True}


class SensingParams(BaseModel):
    """Joint measurement path: sample delay in control periods and a first-order velocity filter."""
    delay_samples: int = Field(1, ge=0)
    velocity_cutoff_hz: float | None = Field(100.0, gt=0)

    model_config = {'frozen': True}

    @classmethod
    def exact(cls) -> 'SensingParams':
        return cls(delay_samples=0, velocity_cutoff_hz=None)
