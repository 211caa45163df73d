"""Pydantic request/response models for the accounting service."""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field, model_validator


class GraphModel(BaseModel):
    """Inline graph description or a named generator.

    Either ``name`` (e.g. ``hypercube:32``, ``regular:256:10:7``) or ``n`` +
    ``edges``/``matrix`` must be given.
    """

    name: Optional[str] = None
    n: Optional[int] = None
    edges: Optional[list[tuple[int, int]]] = None
    matrix: Optional[list[list[float]]] = None
    scheme: Literal["metropolis_hastings", "lazy_simple_walk", "explicit"] = (
        "metropolis_hastings"
    )
    seed: int = 0

    @model_validator(mode="after")
    def _check_source(self):
        if self.name is None and self.n is None:
            raise ValueError("graph needs either a name or an explicit n/edges")
        return self


class AmplificationModel(BaseModel):
    K: int = Field(1, ge=1)
    eta: float = Field(0.1, gt=0)
    delta_grad: float = Field(1.0, ge=0)
    sigma: float = Field(1.0, gt=0)
    convexity: Literal["nonconvex", "strongly_convex"] = "nonconvex"
    m_strong: Optional[float] = None
    m_smooth: Optional[float] = None
    batch: Optional[int] = None
    local_size: Optional[int] = None


class GridModel(BaseModel):
    spacing: float = Field(1e-4, gt=0)
    tail_budget: float = Field(1e-12, gt=0)
    tau_pess: float = Field(1e-9, gt=0)
    tau_wrap: float = Field(1e-12, gt=0)
    weight_tail_cut: float = Field(1e-10, ge=0)
    epsilon_slack: float = Field(5e-3, gt=0)


class AccountingModel(BaseModel):
    T: int = Field(..., ge=1)
    delta: float = Field(1e-5, gt=0, lt=1)
    delta_split: float = Field(0.5, ge=0, lt=1)
    level: Literal["user", "record"] = "user"
    cap_contributions: bool = False
    gamma_policy: Literal["all_ones", "grid_search"] = "all_ones"
    params: AmplificationModel = Field(default_factory=AmplificationModel)
    grid: GridModel = Field(default_factory=GridModel)


class GraphCheckRequest(BaseModel):
    graph: GraphModel


class GraphCheckResponse(BaseModel):
    n: int
    scheme: str
    lambda2: float
    spectral_gap: float
    is_irreducible: bool
    is_aperiodic: bool
    stationary: list[float]
    fiedler_value: Optional[float] = None
    config: dict


class WeightsRequest(BaseModel):
    graph: GraphModel
    i: int = Field(..., ge=0)
    j: int = Field(..., ge=0)
    T: int = Field(..., ge=1)
    mc_samples: Optional[int] = Field(None, ge=1)
    seed: int = 0


class WeightsResponse(BaseModel):
    i: int
    j: int
    T: int
    weights: list[float]
    residual: float
    mc_weights: Optional[list[float]] = None
    mc_residual: Optional[float] = None
    config: dict


class PairBudgetRequest(BaseModel):
    graph: GraphModel
    accounting: AccountingModel
    i: int = Field(..., ge=0)
    j: int = Field(..., ge=0)


class PairBudgetResponse(BaseModel):
    i: int
    j: int
    epsilon: float
    delta: float
    delta_prime: float
    delta_conv_budget: float
    delta_trunc: float
    zeta: float
    count: int
    lambda2: float
    level: str
    sigma: float
    spacing: float
    config: dict


class MatrixRequest(BaseModel):
    graph: GraphModel
    accounting: AccountingModel


class MatrixResponse(BaseModel):
    epsilon: list[list[Optional[float]]]
    count: int
    zeta: float
    delta_prime: float
    lambda2: float
    config: dict


class CalibrateRequest(BaseModel):
    graph: GraphModel
    accounting: AccountingModel
    i: int = Field(..., ge=0)
    j: int = Field(..., ge=0)
    target_epsilon: float = Field(..., gt=0)
    bracket: tuple[float, float] = (1e-3, 1e3)


class CalibrateResponse(BaseModel):
    sigma: float
    achieved_epsilon: float
    target_epsilon: float
    config: dict


class RdpBudgetRequest(BaseModel):
    graph: GraphModel
    accounting: AccountingModel
    i: int = Field(..., ge=0)
    j: int = Field(..., ge=0)
    weighting: Literal["hitting_time", "power_of_kernel"] = "hitting_time"


class RdpBudgetResponse(BaseModel):
    i: int
    j: int
    epsilon: float
    weighting: str
    config: dict


class SecLdpRequest(BaseModel):
    graph: GraphModel
    q: int = Field(..., ge=0)
    delta_grad: float = Field(..., ge=0)
    rounds: int = Field(..., ge=1)
    delta: float = Field(1e-5, gt=0, lt=1)
    sigma_dp: Optional[float] = Field(None, gt=0)
    sigma_cor: Optional[float] = Field(None, ge=0)
    target_epsilon: Optional[float] = Field(None, gt=0)
    cor_ratio: Optional[float] = Field(None, ge=0)

    @model_validator(mode="after")
    def _check_mode(self):
        account = self.sigma_dp is not None and self.sigma_cor is not None
        calibrate = self.target_epsilon is not None and self.cor_ratio is not None
        if not (account or calibrate):
            raise ValueError(
                "provide sigma_dp+sigma_cor (accounting) or "
                "target_epsilon+cor_ratio (calibration)"
            )
        return self


class SecLdpResponse(BaseModel):
    mu_round: float
    mu_total: float
    epsilon: float
    epsilon_closed_form: float
    delta: float
    rounds: int
    sigma_dp: float
    sigma_cor: float
    fiedler_value: float
    config: dict


class SimulateRequest(BaseModel):
    graph: GraphModel
    algorithm: Literal["walk", "decor"] = "walk"
    T: int = Field(..., ge=1)
    K: int = Field(1, ge=1)
    eta: float = Field(0.1, gt=0)
    clip: float = Field(1.0, ge=0)
    sigma: float = Field(0.0, ge=0)
    sigma_dp: float = Field(0.0, ge=0)
    sigma_cor: float = Field(0.0, ge=0)
    batch: int = Field(1, ge=1)
    start_node: int = Field(0, ge=0)
    seed: int = 0
    dim: int = Field(5, ge=1)
    per_user: int = Field(64, ge=1)
    eval_every: int = Field(100, ge=1)
    cap_contributions: Optional[int] = Field(None, ge=1)


class SimulateResponse(BaseModel):
    steps: list[int]
    objective: list[float]
    accuracy: list[float]
    visit_counts: list[int]
    params_hash: str
    noise_imbalance: float
    config: dict


class CompareRequest(BaseModel):
    graph: GraphModel
    accounting: AccountingModel
    mode: Literal["budgets", "sigma"] = "budgets"
    i: Optional[int] = Field(None, ge=0)
    j: Optional[int] = Field(None, ge=0)
    target_epsilon: Optional[float] = Field(None, gt=0)

    @model_validator(mode="after")
    def _check_mode(self):
        if self.mode == "sigma":
            if self.i is None or self.j is None or self.target_epsilon is None:
                raise ValueError("sigma mode needs i, j and target_epsilon")
        return self


class ComparePairRow(BaseModel):
    i: int
    j: int
    eps_fdp: float
    eps_rdp_hitting: float
    eps_rdp_power: float


class CompareResponse(BaseModel):
    mode: str
    rows: list[ComparePairRow] = []
    sigma_fdp: Optional[float] = None
    sigma_rdp_hitting: Optional[float] = None
    sigma_rdp_power: Optional[float] = None
    ordering_holds: Optional[bool] = None
    config: dict


class ErrorBody(BaseModel):
    error: str
    kind: str
