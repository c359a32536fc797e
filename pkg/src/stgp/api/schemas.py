"""Request/response models shared by the service layer, HTTP app and CLI.

The JSON config file given to `stgp fit` parses directly into RunConfig;
defaults here are therefore the documented defaults of the tool.
"""

from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

VARIANTS = ("st-vgp", "st-svgp", "mf-st-vgp", "mf-st-svgp")


class TemporalKernelSpec(BaseModel):
    family: Literal["matern12", "matern32", "matern52"] = "matern32"
    variance: float = 1.0
    lengthscale: float = 0.5


class SpatialKernelSpec(BaseModel):
    family: Literal["matern12", "matern32", "matern52"] = "matern32"
    lengthscales: List[float] = Field(default_factory=lambda: [0.5])


class LikelihoodSpec(BaseModel):
    family: Literal["gaussian", "poisson", "bernoulli"] = "gaussian"
    noise_variance: float = 0.1      # gaussian only
    binsize: float = 1.0             # poisson only


class InducingSpec(BaseModel):
    """Either a count (k-means initialized) or explicit coordinates."""
    count: Optional[int] = None
    points: Optional[List[List[float]]] = None
    optimize: bool = False

    @model_validator(mode="after")
    def _one_of(self):
        if (self.count is None) == (self.points is None):
            raise ValueError("give exactly one of inducing.count or "
                             "inducing.points")
        if self.count is not None and self.count < 1:
            raise ValueError("inducing.count must be positive")
        return self


class RunConfig(BaseModel):
    model_config = ConfigDict(protected_namespaces=())

    variant: Literal[VARIANTS] = "st-vgp"
    temporal_kernel: TemporalKernelSpec = Field(
        default_factory=TemporalKernelSpec)
    spatial_kernel: SpatialKernelSpec = Field(
        default_factory=SpatialKernelSpec)
    likelihood: LikelihoodSpec = Field(default_factory=LikelihoodSpec)
    inducing: Optional[InducingSpec] = None
    beta: float = 1.0
    rho: float = 0.01
    iters: int = 100
    filter_mode: Literal["sequential", "parallel"] = "sequential"
    quad_order: int = 20
    nlpd_quad_order: int = 100
    seed: int = 0
    normalize: bool = False

    @model_validator(mode="after")
    def _consistent(self):
        sparse = self.variant in ("st-svgp", "mf-st-svgp")
        if sparse and self.inducing is None:
            raise ValueError(f"variant {self.variant} needs an inducing spec")
        if not sparse and self.inducing is not None:
            raise ValueError(f"variant {self.variant} does not take inducing "
                             "points")
        if self.iters < 1:
            raise ValueError("iters must be positive")
        return self


class DatasetPayload(BaseModel):
    """Gridded observations; null y entries are missing cells."""
    t: List[float]
    S: List[List[float]]
    y: List[List[Optional[float]]]


class Normalization(BaseModel):
    s_mean: List[float]
    s_std: List[float]
    t_scale: float


class BankState(BaseModel):
    """Serialized approximate-likelihood bank.

    kind "site": lam1/lam2 are N_t × G, informative N_t × G.
    kind "block": lam1 N_t × M, lam2 N_t × M × M, informative N_t.
    """
    kind: Literal["site", "block"]
    lam1: list
    lam2: list
    informative: list


class ModelState(BaseModel):
    """Everything needed to reproduce predictions from a finished fit."""
    model_config = ConfigDict(protected_namespaces=())

    variant: Literal[VARIANTS]
    config: RunConfig
    hyper_names: List[str]
    theta: List[float]               # log-domain (raw for z_* coordinates)
    bank: BankState
    inducing_points: Optional[List[List[float]]] = None
    normalization: Optional[Normalization] = None
    train: DatasetPayload
    elbo_trace: List[float]
    iter_seconds: List[float]


class FitRequest(BaseModel):
    config: RunConfig
    data: DatasetPayload


class FitResponse(BaseModel):
    model_config = ConfigDict(protected_namespaces=())
    model: ModelState


class PredictRequest(BaseModel):
    model_config = ConfigDict(protected_namespaces=())
    model: ModelState
    t: List[float]
    S: List[List[float]]
    y: Optional[List[List[Optional[float]]]] = None   # enables nlpd/metrics


class Metrics(BaseModel):
    rmse: float
    nlpd: float
    elbo_final: float
    iters: int
    seconds_per_iter: float


class PredictResponse(BaseModel):
    mean: List[List[float]]
    var: List[List[float]]
    nlpd: Optional[List[List[Optional[float]]]] = None
    metrics: Optional[Metrics] = None


class SimulateRequest(BaseModel):
    kind: Literal["pseudo_periodic", "lgcp_counts"] = "pseudo_periodic"
    nt: int = 100
    ns: int = 10
    seed: int = 0


class SimulateResponse(BaseModel):
    data: DatasetPayload


class BenchRequest(BaseModel):
    nt: List[int]
    ns: int = 5
    modes: List[Literal["sequential", "parallel"]] = Field(
        default_factory=lambda: ["sequential"])
    iters: int = 3
    config: Optional[RunConfig] = None   # kernels/likelihood/rates override
    seed: int = 0


class BenchRow(BaseModel):
    nt: int
    mode: str
    iters: int
    total_seconds: float
    seconds_per_iter: float              # warm-up iteration excluded


class BenchResponse(BaseModel):
    rows: List[BenchRow]


class ErrorBody(BaseModel):
    kind: Literal["usage", "data", "numerical"]
    message: str
