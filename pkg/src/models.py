"""Data models for signed-graphon opinion dynamics."""

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, Generic, List, Optional, Tuple, TypeVar, Union

import numpy as np
import scipy.sparse as sp


# Result type for error handling
T = TypeVar('T')
E = TypeVar('E')


@dataclass
class Ok(Generic[T]):
    """Success result containing a value."""
    value: T


@dataclass
class Err(Generic[E]):
    """Error result containing an error."""
    error: E


Result = Union[Ok[T], Err[E]]


# Exceptions raised by the numerical layer
class GraphonError(Exception):
    """Base class for all library errors."""
    pass


class ParameterError(GraphonError):
    """Precondition, dimension or resolution violation."""
    pass


class DomainError(ParameterError):
    """Evaluation point outside the unit interval."""
    pass


class ScheduleError(ParameterError):
    """Sparsity schedule produced a value outside (0, 1]."""
    pass


class ConfigError(GraphonError):
    """Unreadable or invalid experiment configuration."""
    pass


class NumericError(GraphonError):
    """Numerical failure, optionally carrying the last estimate."""

    def __init__(
        self,
        message: str,
        estimate: Optional[float] = None,
        residual: Optional[float] = None,
        time: Optional[float] = None
    ):
        super().__init__(message)
        self.estimate = estimate
        self.residual = residual
        self.time = time


# Kernels
Evaluator = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class Kernel:
    """
    Signed graphon or kernel on [0,1]^2.

    Exactly one of ``evaluator`` (analytic form) and ``matrix`` (grid form on
    the uniform partition I_i = ((i-1)/m, i/m]) is set. ``scale`` multiplies
    every evaluation; ``bounded`` is False only for difference kernels, whose
    values may leave [-1, 1].
    """
    name: str
    evaluator: Optional[Evaluator] = None
    matrix: Optional[np.ndarray] = None
    scale: float = 1.0
    bounded: bool = True

    @property
    def is_grid(self) -> bool:
        return self.matrix is not None

    @property
    def resolution(self) -> int:
        if self.matrix is None:
            raise ParameterError(f"Kernel '{self.name}' is analytic and has no resolution")
        return self.matrix.shape[0]


@dataclass(frozen=True, eq=False)
class DegreeProfile:
    """Degree function sampled at cell centers."""
    values: np.ndarray
    sup: float
    l1: float


# Sampling
class LatentScheme(Enum):
    """How latent variables are placed in the unit interval."""
    DETERMINISTIC = "deterministic"
    STOCHASTIC = "stochastic"


@dataclass(frozen=True, eq=False)
class LatentVariables:
    """Ordered sample points X_1 <= ... <= X_n in (0, 1]."""
    n: int
    points: np.ndarray
    scheme: LatentScheme
    seed: Optional[int] = None


@dataclass(frozen=True, eq=False)
class SignedAdjacency:
    """Sampled signed graph with entries in {-1, 0, +1} and empty diagonal."""
    n: int
    entries: sp.csr_matrix
    eps: float
    latents: LatentVariables
    seed: Optional[int] = None

    @property
    def edge_count(self) -> int:
        """Number of undirected edges."""
        return int(self.entries.nnz // 2)

    def to_dense(self) -> np.ndarray:
        return self.entries.toarray().astype(float)

    def degrees(self) -> np.ndarray:
        """Incident edge counts regardless of sign."""
        return np.asarray(abs(self.entries).sum(axis=1), dtype=float).ravel()


class SparsityFamily(Enum):
    """Functional forms of the sparsity parameter eps_n."""
    CONSTANT = "constant"
    POWER = "power"
    POLYLOG = "polylog"


@dataclass(frozen=True)
class SparsitySchedule:
    """
    Sparsity schedule eps_n.

    constant: eps_n = c; power: eps_n = n^(-tau); polylog: eps_n = c (log n)^q / n.
    """
    family: SparsityFamily = SparsityFamily.CONSTANT
    c: float = 1.0
    tau: float = 0.0
    q: float = 1.0

    def eps(self, n: int) -> float:
        """
        Evaluate eps_n.

        Args:
            n: Node count

        Returns:
            eps_n in (0, 1]

        Raises:
            ScheduleError: If the value falls outside (0, 1]; never clamped
        """
        if n < 1:
            raise ParameterError(f"Node count must be positive, got {n}")

        if self.family is SparsityFamily.CONSTANT:
            value = float(self.c)
        elif self.family is SparsityFamily.POWER:
            value = float(n) ** (-self.tau)
        else:
            value = self.c * np.log(n) ** self.q / n

        if not (0.0 < value <= 1.0):
            raise ScheduleError(
                f"Sparsity schedule {self.family.value} gives eps_n={value!r} at n={n}, outside (0, 1]"
            )
        return float(value)

    def satisfies_log_condition(self, n: int) -> float:
        """Ratio n*eps_n / log n; growth of this ratio is what convergence needs."""
        if n < 2:
            return float('inf')
        return n * self.eps(n) / np.log(n)


# Dynamics
class Model(Enum):
    """Signed opinion dynamics variants."""
    REPELLING = "repelling"
    OPPOSING = "opposing"


@dataclass(frozen=True, eq=False)
class InitialCondition:
    """Initial opinion profile: analytic g on [0,1] or a fixed vector."""
    name: str
    evaluator: Optional[Callable[[np.ndarray], np.ndarray]] = None
    values: Optional[np.ndarray] = None

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        if self.evaluator is None:
            raise ParameterError(f"Initial condition '{self.name}' has no analytic form")
        return np.asarray(self.evaluator(np.asarray(x, dtype=float)), dtype=float)


@dataclass(frozen=True, eq=False)
class OpinionTrajectory:
    """Opinion vectors recorded on a uniform time grid."""
    model: Model
    times: np.ndarray
    states: np.ndarray  # shape (K+1, n)
    alpha: float
    source: str  # "graph(n=..., eps=...)" or "graphon_grid(M=...)"

    @property
    def n(self) -> int:
        return self.states.shape[1]

    @property
    def step(self) -> float:
        if len(self.times) < 2:
            return 0.0
        return float(self.times[1] - self.times[0])

    @property
    def horizon(self) -> float:
        return float(self.times[-1])


# Analysis
@dataclass(frozen=True, eq=False)
class ErrorReport:
    """Approximation errors of one run together with the evaluated bound."""
    times: np.ndarray
    l2_errors: np.ndarray
    sup_error: float
    c_u_T: float
    op_norm_diff: Optional[float] = None
    op_norm_diff_pos: Optional[float] = None
    op_norm_diff_neg: Optional[float] = None
    deg_sup: Optional[float] = None
    g_error: Optional[float] = None
    bound_values: Optional[np.ndarray] = None

    @property
    def margin(self) -> Optional[float]:
        """min_t (bound - error) with the non-squared error."""
        if self.bound_values is None:
            return None
        return float(np.min(self.bound_values - self.l2_errors))

    @property
    def squared_margin(self) -> Optional[float]:
        """min_t (bound - error^2), the literal reading of the bound statement."""
        if self.bound_values is None:
            return None
        return float(np.min(self.bound_values - self.l2_errors ** 2))


@dataclass(frozen=True)
class DegreeReport:
    """Normalized degree statistics of a sampled graph."""
    n: int
    eps: float
    max_norm_deg: float
    avg_norm_deg: float
    scaled_max: float
    scaled_avg: float
    expected_max: float
    bound_gamma: float
    sorted_gap: float = 0.0

    @property
    def b_n(self) -> float:
        """Diagnostic n * eps * max expected degree."""
        return self.n * self.eps * self.expected_max

    def to_dict(self) -> Dict[str, float]:
        return {
            'n': self.n,
            'eps': self.eps,
            'max_norm_deg': self.max_norm_deg,
            'avg_norm_deg': self.avg_norm_deg,
            'scaled_max': self.scaled_max,
            'scaled_avg': self.scaled_avg,
            'expected_max': self.expected_max,
            'bound_gamma': self.bound_gamma,
            'sorted_gap': self.sorted_gap,
        }


# Harness
@dataclass
class RunRecord:
    """Outcome of one (n, seed) run for one model."""
    model: Model
    n: int
    eps: float
    alpha: float
    seed: int
    status: str  # "ok" or "failed"
    report: Optional[ErrorReport] = None
    degrees: Optional[DegreeReport] = None
    message: Optional[str] = None

    @property
    def sup_error(self) -> Optional[float]:
        return None if self.report is None else self.report.sup_error

    @property
    def min_bound_margin(self) -> Optional[float]:
        return None if self.report is None else self.report.margin


@dataclass
class SweepSummary:
    """Collected results of a sweep, ready for serialization."""
    config_hash: str
    runs: List[RunRecord] = field(default_factory=list)
    medians_by_n: Dict[str, Dict[int, float]] = field(default_factory=dict)
    files: List[str] = field(default_factory=list)
    control_margin: Optional[float] = None
    solver_gap: Optional[float] = None  # RK4 vs Picard, sup-norm at T
    findings: List[str] = field(default_factory=list)

    @property
    def failed(self) -> List[RunRecord]:
        return [run for run in self.runs if run.status != "ok"]

    def global_min_margin(self) -> Optional[float]:
        margins = [run.min_bound_margin for run in self.runs if run.min_bound_margin is not None]
        return min(margins) if margins else None


@dataclass
class DegreeCampaign:
    """Monte Carlo degree statistics over (n, seed) trials."""
    config_hash: str
    trials: List[Tuple[int, DegreeReport]] = field(default_factory=list)  # (seed, report)
    l1_gaps: List[Tuple[float, float]] = field(default_factory=list)  # (gap, threshold)
    files: List[str] = field(default_factory=list)

    def violation_rate(self, n: int) -> float:
        """Fraction of trials at n whose sorted degree gap exceeds the concentration radius."""
        reports = [r for _, r in self.trials if r.n == n]
        if not reports:
            return 0.0
        return sum(r.sorted_gap > r.bound_gamma for r in reports) / len(reports)

    def l1_pass_rate(self, n: int) -> float:
        """Fraction of trials at n whose average degree gap stays under sqrt(1/(n eps))."""
        pairs = [gap for (_, r), gap in zip(self.trials, self.l1_gaps) if r.n == n]
        if not pairs:
            return 0.0
        return sum(gap <= threshold for gap, threshold in pairs) / len(pairs)


class ErrorType(Enum):
    """Types of errors that can occur."""
    CONFIG_ERROR = "config_error"
    SCHEDULE_VIOLATION = "schedule_violation"
    NUMERIC_ERROR = "numeric_error"
    FILE_WRITE_ERROR = "file_write_error"


@dataclass
class ProcessingError:
    """Error information."""
    error_type: ErrorType
    message: str
    details: Optional[str] = None
