"""Validated run configurations for the command-line workflows."""

from __future__ import annotations

from pathlib import Path
from typing import List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, model_validator

from .copula import CopulaModel
from .equilibrium import AuctionEnvironment
from .marginal import ValueDistribution


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class UniformSpec(_Strict):
    kind: Literal["uniform"]
    lower: float = 0.0
    upper: float = 1.0


class ScaledBetaSpec(_Strict):
    kind: Literal["scaled_beta"]
    a: float = Field(gt=0)
    b: float = Field(gt=0)
    lower: float
    upper: float


class GridSpec(_Strict):
    kind: Literal["grid"]
    csv: Optional[str] = None
    v: Optional[List[float]] = None
    F: Optional[List[float]] = None

    @model_validator(mode="after")
    def _one_source(self):
        inline = self.v is not None or self.F is not None
        if (self.csv is None) == (not inline):
            raise ValueError("grid needs either 'csv' or both 'v' and 'F'")
        if inline and (self.v is None or self.F is None):
            raise ValueError("inline grid needs both 'v' and 'F'")
        return self


ValuesSpec = Union[UniformSpec, ScaledBetaSpec, GridSpec]


class CopulaSpec(_Strict):
    family: Literal["frank", "joe", "independence", "comonotone"]
    theta: Optional[float] = None


def build_values(spec, base_dir: Optional[Path] = None) -> ValueDistribution:
    return ValueDistribution.from_config(spec.model_dump(exclude_none=True), base_dir)


def build_copula(spec: CopulaSpec) -> CopulaModel:
    return CopulaModel.from_config(spec.model_dump(exclude_none=True))


class EquilibriumConfig(_Strict):
    n: int = Field(ge=2)
    kappa: float = Field(ge=0)
    format: Literal["hard", "soft", "reserve"]
    reserve: Optional[float] = None
    values: ValuesSpec = Field(discriminator="kind")
    copula: CopulaSpec
    grid_size: int = Field(2000, ge=10)
    quasiconcavity_grid: int = Field(400, ge=10)

    def environment(self, base_dir=None) -> AuctionEnvironment:
        return AuctionEnvironment(
            self.n, self.kappa, self.format, build_values(self.values, base_dir), build_copula(self.copula), self.reserve
        )


class MarketSpec(_Strict):
    n: int = Field(ge=2)
    kappa: Optional[float] = Field(None, ge=0)
    p: Optional[float] = Field(None, gt=0, le=1)

    @model_validator(mode="after")
    def _one_of(self):
        if (self.kappa is None) == (self.p is None):
            raise ValueError("each market needs exactly one of 'kappa' or 'p'")
        return self


class SimulateConfig(_Strict):
    format: Literal["hard", "soft", "reserve"] = "hard"
    reserve: Optional[float] = None
    values: ValuesSpec = Field(discriminator="kind")
    copula: CopulaSpec
    markets: List[MarketSpec] = Field(min_length=1)
    auctions_per_n: int = Field(ge=1)
    seed: int = 0
    grid_size: int = Field(2000, ge=10)


class FormatSpec(_Strict):
    format: Literal["hard", "soft", "reserve"]
    reserve: Optional[float] = None


class CounterfactualConfig(_Strict):
    values: ValuesSpec = Field(discriminator="kind")
    family: Literal["frank", "joe"] = "frank"
    formats: List[FormatSpec] = Field(min_length=1)
    n: List[int] = Field(min_length=1)
    kappa: List[float] = Field(min_length=1)
    theta: Optional[List[float]] = None
    rho: Optional[List[float]] = None
    grid_size: int = Field(2000, ge=10)

    @model_validator(mode="after")
    def _theta_or_rho(self):
        if (self.theta is None) == (self.rho is None):
            raise ValueError("give exactly one of 'theta' or 'rho'")
        return self
