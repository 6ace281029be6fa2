"""Error metrics, theoretical bounds and degree statistics."""

import logging
from dataclasses import replace
from typing import Iterable, Sequence, Tuple, Union

import numpy as np

from src.kernel import cell_centers, split_parts
from src.models import (
    DegreeReport,
    ErrorReport,
    InitialCondition,
    Kernel,
    LatentVariables,
    Model,
    NumericError,
    OpinionTrajectory,
    ParameterError,
    SignedAdjacency,
)
from src.sampler import expected_matrix

logger = logging.getLogger(__name__)

GRID_TOL = 1e-12


def _parent_factor(n: int, M: int) -> int:
    if n < 1 or M % n != 0:
        raise ParameterError(f"Partition size {n} does not divide reference resolution {M}")
    return M // n


def l2_step_error(u_n: np.ndarray, u_ref: np.ndarray) -> float:
    """
    Exact L2 distance between two step functions on nested uniform partitions.

    Args:
        u_n: Values on n cells
        u_ref: Values on M cells, n dividing M

    Returns:
        sqrt((1/M) sum_c (u_ref[c] - u_n[parent(c)])^2)
    """
    u_n = np.asarray(u_n, dtype=float)
    u_ref = np.asarray(u_ref, dtype=float)
    factor = _parent_factor(len(u_n), len(u_ref))
    return float(np.sqrt(np.mean((u_ref - np.repeat(u_n, factor)) ** 2)))


def trajectory_error(traj_n: OpinionTrajectory, traj_ref: OpinionTrajectory) -> ErrorReport:
    """
    L2 errors of a graph trajectory against a reference on a finer grid.

    Both trajectories must share the time grid. The report carries the errors
    and C_{u,T}, the largest absolute reference value; bound fields stay empty.
    """
    if len(traj_n.times) != len(traj_ref.times) or not np.allclose(
        traj_n.times, traj_ref.times, rtol=0.0, atol=GRID_TOL * max(1.0, traj_ref.horizon)
    ):
        raise ParameterError(
            f"Time grids differ: {len(traj_n.times)} points (h={traj_n.step:g}) "
            f"vs {len(traj_ref.times)} points (h={traj_ref.step:g})"
        )
    factor = _parent_factor(traj_n.n, traj_ref.n)

    diff = traj_ref.states - np.repeat(traj_n.states, factor, axis=1)
    errors = np.sqrt(np.mean(diff ** 2, axis=1))
    return ErrorReport(
        times=traj_ref.times.copy(),
        l2_errors=errors,
        sup_error=float(errors.max()),
        c_u_T=float(np.max(np.abs(traj_ref.states))),
    )


def error_bound(
    model,
    g_error: float,
    c_u_T: float,
    op_norms: Union[float, Sequence[float]],
    deg_sup: float,
    n_alpha: float,
    times: Iterable[float]
) -> np.ndarray:
    """
    Evaluate the approximation error bound at each time.

    repelling: (g_error + C/(n alpha deg) * op) * exp(2 n alpha deg t)
    opposing:  (g_error + C/(n alpha deg) * (op+ + op-)) * exp(4 n alpha deg t)

    Args:
        model: Model or its string value
        g_error: |g - g_n|_2
        c_u_T: Sup of the reference solution
        op_norms: One operator norm (repelling) or the positive/negative pair (opposing)
        deg_sup: |d_{|W_n|}|_inf of the unscaled step graphon
        n_alpha: n * alpha_n
        times: Times at which to evaluate, substituted for the horizon

    Returns:
        Bound values, nondecreasing in t

    Raises:
        NumericError: If deg_sup * n_alpha is zero while the operator term is not
    """
    model = Model(model)
    norms = np.atleast_1d(np.asarray(op_norms, dtype=float))
    expected = 1 if model is Model.REPELLING else 2
    if norms.size != expected:
        raise ParameterError(f"The {model.value} bound takes {expected} operator norm(s), got {norms.size}")
    inputs = [g_error, c_u_T, deg_sup, n_alpha, *norms]
    if any(value < 0 or not np.isfinite(value) for value in inputs):
        raise ParameterError("Bound inputs must be finite and nonnegative")

    times = np.asarray(list(times), dtype=float)
    rate = n_alpha * deg_sup
    operator_term = c_u_T * float(norms.sum())
    if operator_term == 0.0:
        prefactor = g_error
    elif rate == 0.0:
        raise NumericError("Degenerate bound: the sampled graph has no edges but the operator term is nonzero")
    else:
        prefactor = g_error + operator_term / rate

    coefficient = 2.0 if model is Model.REPELLING else 4.0
    return prefactor * np.exp(coefficient * rate * times)


def with_bound(
    report: ErrorReport,
    model,
    g_error: float,
    op_norms: Union[float, Sequence[float]],
    deg_sup: float,
    n_alpha: float
) -> ErrorReport:
    """Complete a partial report with the bound ingredients and values."""
    model = Model(model)
    norms = np.atleast_1d(np.asarray(op_norms, dtype=float))
    bound = error_bound(model, g_error, report.c_u_T, norms, deg_sup, n_alpha, report.times)
    if model is Model.REPELLING:
        extra = {'op_norm_diff': float(norms[0])}
    else:
        extra = {'op_norm_diff_pos': float(norms[0]), 'op_norm_diff_neg': float(norms[1])}
    completed = replace(report, deg_sup=float(deg_sup), g_error=float(g_error), bound_values=bound, **extra)
    if completed.margin < 0:
        logger.warning("bound violated: margin %.3e", completed.margin)
    return completed


def normalized_degrees(adj: SignedAdjacency) -> np.ndarray:
    """delta_i = d_i / n with d_i the number of incident edges of either sign."""
    return adj.degrees() / adj.n


def max_abs_degree(adj: SignedAdjacency) -> float:
    """|d_{|W_n|}|_inf of the unscaled step graphon."""
    return float(normalized_degrees(adj).max()) if adj.n else 0.0


def expected_degrees(k: Kernel, lat: LatentVariables) -> np.ndarray:
    """
    Expected normalized degrees (1/n) sum_{j != i} |W(X_i, X_j)|.

    The diagonal is left out to match graphs sampled without self-loops.
    """
    _, _, absolute = split_parts(k)
    expected = expected_matrix(absolute, lat)
    matrix = expected.scale * expected.matrix
    return (matrix.sum(axis=1) - np.diag(matrix)) / lat.n


def degree_report(adj: SignedAdjacency, k: Kernel, nu: float = 0.05) -> DegreeReport:
    """
    Normalized degree statistics of a sampled graph against its graphon.

    Args:
        adj: Sampled graph
        k: Graphon it was sampled from
        nu: Confidence parameter of the concentration radius, in (0, 1)

    Returns:
        DegreeReport
    """
    if not 0.0 < nu < 1.0:
        raise ParameterError(f"Confidence parameter nu must lie in (0, 1), got {nu}")
    n, eps = adj.n, adj.eps
    delta = normalized_degrees(adj)
    expected = expected_degrees(k, adj.latents)
    scaled = delta / eps
    gap = float(np.max(np.abs(np.sort(scaled) - np.sort(expected))))
    return DegreeReport(
        n=n,
        eps=eps,
        max_norm_deg=float(delta.max()),
        avg_norm_deg=float(delta.mean()),
        scaled_max=float(scaled.max()),
        scaled_avg=float(scaled.mean()),
        expected_max=float(expected.max()),
        bound_gamma=float(np.sqrt(np.log(2.0 * n / nu) / (n * eps))),
        sorted_gap=gap,
    )


def sorted_degree_gap(adj: SignedAdjacency, k: Kernel) -> float:
    """max_i |eps^-1 delta_(i) - expected delta_(i)| over the sorted sequences."""
    scaled = normalized_degrees(adj) / adj.eps
    expected = expected_degrees(k, adj.latents)
    return float(np.max(np.abs(np.sort(scaled) - np.sort(expected))))


def l1_gap(adj: SignedAdjacency, k: Kernel) -> Tuple[float, float]:
    """
    Concentration of the average degree.

    Returns:
        (|eps^-1 |W_n|_1 - |expected W_n|_1|, sqrt(1/(n eps)))
    """
    _, _, absolute = split_parts(k)
    expected = expected_matrix(absolute, adj.latents)
    expected_l1 = float(expected.scale * expected.matrix.mean())
    sampled_l1 = float(adj.degrees().sum()) / adj.n ** 2
    return abs(sampled_l1 / adj.eps - expected_l1), float(np.sqrt(1.0 / (adj.n * adj.eps)))


def degree_window(reports: Sequence[DegreeReport], kernel_l1: float, upper: float = 1.5) -> bool:
    """Whether every scaled max degree lies in [0.5 |W|_1, upper]."""
    lower = 0.5 * kernel_l1
    return all(lower <= report.scaled_max <= upper for report in reports)


def initial_condition_error(g: InitialCondition, lat: LatentVariables, refine: int = 16) -> float:
    """
    |g - g_n|_2 where g_n = g(X_i) on I_i, integrated on a grid refine times finer.
    """
    if refine < 1:
        raise ParameterError(f"Refinement factor must be positive, got {refine}")
    fine = g.evaluate(cell_centers(lat.n * refine))
    return l2_step_error(g.evaluate(lat.points), fine)
