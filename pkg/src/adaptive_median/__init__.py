"""Answering adaptively chosen estimator queries with private approximate medians."""

from .accountant import PrivacyLedger, calibrate_interior_point, calibrate_session
from .core import (
    BlockedDataset,
    DiscreteDistribution,
    EmpiricalDistribution,
    EstimatorQuery,
    FiniteRange,
    QuantileInterval,
    block_partition,
    grid,
    project_to_range,
    quantile_interval,
)
from .engine import Session, SessionConfig, Transcript, answer, answer_mad, open_session, replay
from .errors import (
    BudgetExceeded,
    DomainError,
    InsufficientDataError,
    OracleScaleError,
    ParameterError,
    ProtocolError,
    RangeTooLargeError,
    SchemaError,
    UpdateBudgetExhausted,
)
from .median import bs_median, em_median, interior_point, sq_median
from .pmw import PMWConfig, PMWState
from .verify import Verdict, VerifyConfig, VerifySession, verify

__version__ = "0.1.0"

__all__ = [
    "BlockedDataset",
    "BudgetExceeded",
    "DiscreteDistribution",
    "DomainError",
    "EmpiricalDistribution",
    "EstimatorQuery",
    "FiniteRange",
    "InsufficientDataError",
    "OracleScaleError",
    "PMWConfig",
    "PMWState",
    "ParameterError",
    "PrivacyLedger",
    "ProtocolError",
    "QuantileInterval",
    "RangeTooLargeError",
    "SchemaError",
    "Session",
    "SessionConfig",
    "Transcript",
    "UpdateBudgetExhausted",
    "Verdict",
    "VerifyConfig",
    "VerifySession",
    "answer",
    "answer_mad",
    "block_partition",
    "bs_median",
    "calibrate_interior_point",
    "calibrate_session",
    "em_median",
    "grid",
    "interior_point",
    "open_session",
    "project_to_range",
    "quantile_interval",
    "replay",
    "sq_median",
    "verify",
]
