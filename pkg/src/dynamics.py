"""Repelling and opposing opinion dynamics on graphs and discretized graphons."""

import logging
import math
from typing import Callable, List, Optional, Tuple

import numpy as np

from src.kernel import cell_centers, discretize
from src.models import (
    InitialCondition,
    Kernel,
    LatentVariables,
    Model,
    NumericError,
    OpinionTrajectory,
    ParameterError,
)

logger = logging.getLogger(__name__)

STEP_TOL_REL = 1e-12
PICARD_TOL = 1e-10
PICARD_STEPS = 64
PICARD_ITERS = 200
INITIAL_CHECK_POINTS = 10_000

Field = Callable[[np.ndarray], np.ndarray]


def _require_grid(k: Kernel) -> None:
    if not k.is_grid:
        raise ParameterError(f"Dynamics need a grid kernel; discretize '{k.name}' first")


def _vector_field(model: Model, k: Kernel, alpha: float) -> Field:
    """
    Linear right-hand side for states stored along the last axis.

    The scale of ``k`` is not applied; alpha carries the full rate.
    """
    matrix = k.matrix
    if model is Model.REPELLING:
        diagonal = matrix.sum(axis=1)
    else:
        diagonal = np.abs(matrix).sum(axis=1)

    def field(u: np.ndarray) -> np.ndarray:
        return alpha * (u @ matrix.T - diagonal * u)

    return field


def rhs(model, k: Kernel, alpha: float, u: np.ndarray) -> np.ndarray:
    """
    Time derivative of the opinions.

    repelling: alpha * sum_j M_ij (u_j - u_i)
    opposing:  alpha * (sum_j M_ij u_j - sum_j |M_ij| u_i)

    Args:
        model: Model or its string value
        k: Grid kernel with matrix M (scale ignored)
        alpha: Rate
        u: Opinion vector of length n

    Returns:
        Derivative vector
    """
    model = Model(model)
    _require_grid(k)
    u = np.asarray(u, dtype=float)
    if u.shape != (k.resolution,):
        raise ParameterError(f"State of shape {u.shape} does not match {k.resolution} nodes")
    return _vector_field(model, k, alpha)(u)


def _step_count(T: float, h: float) -> int:
    if h <= 0:
        raise ParameterError(f"Step size must be positive, got {h}")
    if T < 0:
        raise ParameterError(f"Horizon must be nonnegative, got {T}")
    steps = int(round(T / h))
    if abs(steps * h - T) > STEP_TOL_REL * max(T, h):
        raise ParameterError(f"Step {h} does not divide horizon {T}")
    return steps


def snap_step(T: float, h: float) -> float:
    """Largest step not above h that divides T."""
    if T <= 0:
        return h
    return T / math.ceil(T / h - STEP_TOL_REL)


def integrate(
    model,
    k: Kernel,
    alpha: float,
    g: np.ndarray,
    T: float,
    h: float,
    source: Optional[str] = None
) -> OpinionTrajectory:
    """
    Integrate the dynamics with classical fixed-step RK4.

    Args:
        model: Model or its string value
        k: Grid kernel with n cells (the graph's adjacency or a graphon grid)
        alpha: Rate alpha_n
        g: Initial opinions, length n
        T: Horizon
        h: Step dividing T
        source: Provenance label, defaults to "graph(n=...)"

    Returns:
        OpinionTrajectory with every step recorded

    Raises:
        NumericError: If a state becomes non-finite, with the failing time
    """
    model = Model(model)
    _require_grid(k)
    g = np.array(g, dtype=float)
    n = k.resolution
    if g.shape != (n,):
        raise ParameterError(f"Initial condition of shape {g.shape} does not match {n} nodes")
    steps = _step_count(T, h)
    field = _vector_field(model, k, alpha)

    states = np.empty((steps + 1, n))
    states[0] = g
    u = g
    for step in range(steps):
        k1 = field(u)
        k2 = field(u + 0.5 * h * k1)
        k3 = field(u + 0.5 * h * k2)
        k4 = field(u + h * k3)
        u = u + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(u)):
            raise NumericError(
                f"Non-finite opinion state at t={(step + 1) * h:g}",
                time=(step + 1) * h
            )
        states[step + 1] = u

    return OpinionTrajectory(
        model=model,
        times=h * np.arange(steps + 1, dtype=float),
        states=states,
        alpha=float(alpha),
        source=source or f"graph(n={n})"
    )


def validate_initial(g: InitialCondition) -> None:
    """Reject analytic initial conditions that are not finite on a fine grid."""
    values = g.evaluate(np.linspace(0.0, 1.0, INITIAL_CHECK_POINTS))
    if not np.all(np.isfinite(values)):
        raise ParameterError(f"Initial condition '{g.name}' is not bounded on [0, 1]")


def solve_graphon(
    model,
    k: Kernel,
    g: InitialCondition,
    T: float,
    h: float,
    M: int,
    mode: str = "midpoint",
    samples: int = 4
) -> OpinionTrajectory:
    """
    Nystrom solution of the graphon dynamics on M cells.

    The kernel is discretized at resolution M, g is evaluated at the cell
    midpoints and the resulting weighted-graph dynamics run with alpha = scale/M.

    Args:
        model: Model or its string value
        k: Kernel (analytic or grid)
        g: Analytic initial condition
        T: Horizon
        h: Step dividing T
        M: Grid resolution
        mode: Discretization mode
        samples: Sub-grid size for cell averaging

    Returns:
        OpinionTrajectory on the M-grid
    """
    if int(M) != M or M < 1:
        raise ParameterError(f"Graphon grid resolution must be a positive integer, got {M}")
    validate_initial(g)
    grid = discretize(k, int(M), mode=mode, samples=samples)
    g_grid = g.evaluate(cell_centers(int(M)))
    return integrate(model, grid, grid.scale / M, g_grid, T, h, source=f"graphon_grid(M={int(M)})")


def picard_window(
    field: Field,
    u0: np.ndarray,
    length: float,
    n_steps: int,
    iters: int,
    tol: float = PICARD_TOL
) -> Tuple[np.ndarray, List[float]]:
    """
    Fixed-point iteration u <- g + int_0^t F(u(s)) ds on one window.

    The time integral uses the trapezoidal rule on n_steps uniform sub-steps.

    Returns:
        (states of shape (n_steps+1, n), sup-norm deltas of successive iterates)

    Raises:
        NumericError: If the delta is still above tol after iters iterations
    """
    dt = length / n_steps
    current = np.tile(u0, (n_steps + 1, 1))
    deltas: List[float] = []

    for _ in range(iters):
        derivative = field(current)
        increments = 0.5 * dt * (derivative[1:] + derivative[:-1])
        updated = np.empty_like(current)
        updated[0] = u0
        updated[1:] = u0 + np.cumsum(increments, axis=0)
        delta = float(np.max(np.abs(updated - current)))
        deltas.append(delta)
        current = updated
        if delta < tol:
            return current, deltas

    raise NumericError(
        f"Picard iteration did not converge in {iters} iterations",
        residual=deltas[-1] if deltas else None
    )


def picard_solve(
    model,
    k: Kernel,
    alpha: float,
    g: np.ndarray,
    T: float,
    n_steps: int = PICARD_STEPS,
    iters: int = PICARD_ITERS
) -> OpinionTrajectory:
    """
    Solve the integral form of the dynamics by Picard iteration.

    The horizon is cut into equal windows no longer than 1/(8 L) with
    L = alpha * n * max|M_ij|, which makes each window map a contraction
    with constant at most 1/2.

    Args:
        model: Model or its string value
        k: Grid kernel with n cells
        alpha: Rate
        g: Initial opinions
        T: Horizon
        n_steps: Uniform sub-steps per window
        iters: Iteration cap per window

    Returns:
        OpinionTrajectory on the concatenated window grids
    """
    model = Model(model)
    _require_grid(k)
    g = np.array(g, dtype=float)
    n = k.resolution
    if g.shape != (n,):
        raise ParameterError(f"Initial condition of shape {g.shape} does not match {n} nodes")
    if T < 0 or n_steps < 1 or iters < 1:
        raise ParameterError("Picard iteration needs T >= 0, n_steps >= 1 and iters >= 1")

    field = _vector_field(model, k, alpha)
    if T == 0:
        return OpinionTrajectory(model, np.zeros(1), g[None, :], float(alpha), f"graph(n={n})")

    lipschitz = abs(alpha) * n * float(np.max(np.abs(k.matrix)))
    window = T if lipschitz == 0 else min(T, 1.0 / (8.0 * lipschitz))
    windows = max(1, math.ceil(T / window - STEP_TOL_REL))
    length = T / windows

    pieces = [g[None, :]]
    u0 = g
    for index in range(windows):
        states, deltas = picard_window(field, u0, length, n_steps, iters)
        logger.debug("picard window %d/%d converged in %d iterations", index + 1, windows, len(deltas))
        pieces.append(states[1:])
        u0 = states[-1]

    total = windows * n_steps
    return OpinionTrajectory(
        model=model,
        times=(T / total) * np.arange(total + 1, dtype=float),
        states=np.concatenate(pieces, axis=0),
        alpha=float(alpha),
        source=f"graph(n={n})"
    )


def sample_initial(g: InitialCondition, lat: LatentVariables) -> np.ndarray:
    """Node opinions g(X_1), ..., g(X_n) at the latent points, or the given values on n nodes."""
    if g.values is not None and g.values.shape == (lat.n,):
        return g.values.copy()
    return g.evaluate(lat.points)


def default_step(k: Kernel, alpha: float) -> float:
    """
    Step min(1e-2, 0.1/L) with L = 4 * alpha * max_i sum_j |M_ij|.

    L bounds the Lipschitz constant of both models on this grid.
    """
    _require_grid(k)
    lipschitz = 4.0 * abs(alpha) * float(np.max(np.abs(k.matrix).sum(axis=1)))
    if lipschitz == 0:
        return 1e-2
    return min(1e-2, 0.1 / lipschitz)
