import math
from enum import Enum

from pydantic import BaseModel, Field, model_validator


class ControllerKind(str, Enum):
    PDf = 'PDf'
    PDm = 'PDm'
    PIDm = 'PIDm'
    PDmDOB = 'PDmDOB'


class ActuatorParams(BaseModel):
    """Drivetrain and compliant-element constants of the fixed-output plant."""
    eta: float = Field(0.9, gt=0, le=1, description="Ball-screw efficiency")
    k_tau: float = Field(0.0448, gt=0, description="Motor torque constant, N·m/A")
    N_m: float = Field(2 * math.pi * 2.111 / 0.004, gt=0, description="Motor-to-screw speed reduction, rad/m")
    J_m: float = Field(3.8e-5, gt=0, description="Motor rotor inertia, kg·m²")
    b_m: float = Field(2.0e-4, gt=0, description="Motor viscous friction, N·m·s")
    m_r: float = Field(1.3, gt=0, description="Moving drivetrain mass, kg")
    b_r: float = Field(2.0e4, gt=0, description="Elastomer damping, N·s/m")
    k_r: float = Field(5.5e6, gt=0, description="Elastomer stiffness, N/m")

    model_config = {'frozen': True}

    @property
    def N(self) -> float:
        """Current-to-force gain eta·k_tau·N_m, N/A."""
        return self.eta * self.k_tau * self.N_m

    @property
    def effective_mass(self) -> float:
        return self.J_m * self.N_m ** 2 + self.m_r

    @property
    def effective_damping(self) -> float:
        return self.b_m * self.N_m ** 2 + self.b_r


class ControllerGains(BaseModel):
    k_p: float = Field(4.0, ge=0)
    k_dm: float = Field(15.0, ge=0, description="Motor-velocity derivative gain")
    k_df: float | None = Field(None, ge=0, description="Deflection-derivative gain; defaults to k_dm·N_m/k_r")
    k_i: float = Field(300.0, ge=0, description="Integral gain, 1/s")
    q_d_cutoff: float | None = Field(2 * math.pi * 50, gt=0, description="Derivative low-pass cutoff, rad/s")
    q_taud_cutoff: float | None = Field(2 * math.pi * 15, gt=0, description="DOB Q filter cutoff, rad/s")
    q_taud_zeta: float = Field(math.sqrt(0.5), gt=0, description="DOB Q filter damping (Butterworth)")
    delay_T: float = Field(1e-3, ge=0, description="Loop delay, s")

    model_config = {'frozen': True}

    def resolved_k_df(self, params: ActuatorParams) -> float:
        if self.k_df is not None:
            return self.k_df
        return self.k_dm * params.N_m / params.k_r


class PositionGains(BaseModel):
    """Joint position loop on the output encoder with motor-velocity damping (linear equivalents)."""
    k_p: float = Field(5.443e5, ge=0, description="N/m")
    k_d: float = Field(4.86e4, ge=0, description="N·s/m on motor-side velocity")
    load_mass: float = Field(2000.0, gt=0, description="Reflected load mass, kg")
    step: float = Field(1e-3, description="Output position step, m")

    model_config = {'frozen': True}

    @model_validator(mode='after')
    def _finite_step(self) -> 'PositionGains':
        if not math.isfinite(self.step):
            raise ValueError('step must be finite')
        return self
