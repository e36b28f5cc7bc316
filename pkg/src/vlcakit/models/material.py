from typing import Annotated

from pydantic import BaseModel, Field

Percent = Annotated[float, Field(ge=0, le=100)]


class MaterialRecord(BaseModel):
    """One row of the viscoelastic material summary; absent cells are None, never zero."""
    name: Annotated[str, Field(..., min_length=1)]
    compression_set_pct: Percent | None = None
    linearity_r2: Annotated[float, Field(ge=0, le=1)] | None = None
    linear_stiffness_N_per_mm: Annotated[float, Field(ge=0)] | None = None
    preloaded_modulus_N_per_mm2: Annotated[float, Field(ge=0)] | None = None
    damping_Ns_per_m: Annotated[float, Field(ge=0)] | None = None
    creep_pct: Percent | None = None
    cost_usd: Annotated[float, Field(ge=0)] | None = None
    diameter_mm: float = Field(46.0, gt=0)
    thickness_mm: float = Field(27.0, gt=0)

    model_config = {'frozen': True}


class RelaxationFit(BaseModel):
    f0: float
    creep_pct: float = Field(..., ge=0)
    tau: float = Field(..., gt=0)

    model_config = {'frozen': True}


class StiffnessFit(BaseModel):
    stiffness: float
    r_square: float

    model_config = {'frozen': True}


class RankingWeights(BaseModel):
    linearity: float = Field(1.0, ge=0)
    compression_set: float = Field(1.0, ge=0)
    creep: float = Field(1.0, ge=0)
    damping: float = Field(1.0, ge=0)
    cost: float = Field(1.0, ge=0)
    min_damping_Ns_per_m: float | None = Field(None, ge=0)

    model_config = {'frozen': True}


class RankingResult(BaseModel):
    ranked: list[tuple[str, float]]
    excluded: dict[str, str]
