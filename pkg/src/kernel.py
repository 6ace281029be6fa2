"""Signed graphons: evaluation, sign parts, degrees, grids and the integral operator."""

import logging
from typing import Tuple

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

from src.models import DegreeProfile, DomainError, Kernel, NumericError, ParameterError

logger = logging.getLogger(__name__)

POWER_TOL_REL = 1e-10
POWER_TOL_ABS = 1e-12
POWER_MAX_ITERS = 10_000
START_PERTURBATION = 1e-3
BOUNDARY_TOL = 1e-12


def analytic_kernel(evaluator, name: str = "analytic", scale: float = 1.0) -> Kernel:
    """
    Wrap a vectorized symmetric evaluator as a kernel.

    Args:
        evaluator: Callable (x, y) -> W(x, y) accepting broadcastable arrays
        name: Label used in messages and output files
        scale: Nonnegative multiplier applied on evaluation

    Returns:
        Analytic Kernel
    """
    if scale < 0:
        raise ParameterError(f"Kernel scale must be nonnegative, got {scale}")
    return Kernel(name=name, evaluator=evaluator, scale=float(scale))


def grid_kernel(
    matrix: np.ndarray,
    scale: float = 1.0,
    name: str = "grid",
    bounded: bool = True
) -> Kernel:
    """
    Build a grid kernel from a symmetric matrix of cell values.

    Args:
        matrix: Square matrix, exactly symmetric
        scale: Nonnegative multiplier applied on evaluation
        name: Label used in messages and output files
        bounded: Whether unscaled values must lie in [-1, 1]

    Returns:
        Grid Kernel

    Raises:
        ParameterError: On non-square, asymmetric or out-of-range input
    """
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1] or matrix.shape[0] == 0:
        raise ParameterError(f"Grid kernel needs a non-empty square matrix, got shape {matrix.shape}")
    if not np.array_equal(matrix, matrix.T):
        raise ParameterError(f"Grid kernel '{name}' is not exactly symmetric")
    if bounded and np.max(np.abs(matrix)) > 1.0:
        raise ParameterError(f"Grid kernel '{name}' has values outside [-1, 1]")
    if scale < 0:
        raise ParameterError(f"Kernel scale must be nonnegative, got {scale}")
    return Kernel(name=name, matrix=matrix, scale=float(scale), bounded=bounded)


def with_scale(k: Kernel, scale: float) -> Kernel:
    """Same kernel values with a different scale."""
    if k.is_grid:
        return grid_kernel(k.matrix, scale=scale, name=k.name, bounded=k.bounded)
    return Kernel(name=k.name, evaluator=k.evaluator, scale=float(scale), bounded=k.bounded)


def cell_index(x: np.ndarray, m: int) -> np.ndarray:
    """Zero-based cell index of points on the partition ((i-1)/m, i/m]; x=0 goes to the first cell."""
    # right endpoints like i/n land on their own cell despite rounding in x*m
    idx = np.ceil((np.asarray(x, dtype=float) - BOUNDARY_TOL) * m).astype(np.int64) - 1
    return np.clip(idx, 0, m - 1)


def cell_centers(m: int) -> np.ndarray:
    """Midpoints (i - 1/2)/m of the uniform partition."""
    return (np.arange(m, dtype=float) + 0.5) / m


def _check_domain(*points: np.ndarray) -> None:
    for p in points:
        p = np.asarray(p, dtype=float)
        if np.any(~np.isfinite(p)) or np.any(p < 0.0) or np.any(p > 1.0):
            raise DomainError("Evaluation points must lie in [0, 1]")


def evaluate_unscaled(k: Kernel, x, y) -> np.ndarray:
    """W(x, y) without the scale factor; vectorized over broadcastable x, y."""
    _check_domain(x, y)
    if k.is_grid:
        m = k.resolution
        return k.matrix[cell_index(x, m), cell_index(y, m)]
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    values = np.asarray(k.evaluator(x, y), dtype=float)
    return np.broadcast_to(values, np.broadcast(x, y).shape)


def evaluate(k: Kernel, x, y):
    """
    Evaluate scale * W(x, y).

    Args:
        k: Kernel
        x: Point(s) in [0, 1]
        y: Point(s) in [0, 1]

    Returns:
        Float for scalar input, array otherwise

    Raises:
        DomainError: If a point lies outside [0, 1]
    """
    value = k.scale * evaluate_unscaled(k, x, y)
    if np.ndim(value) == 0:
        return float(value)
    return value


def split_parts(k: Kernel) -> Tuple[Kernel, Kernel, Kernel]:
    """
    Positive part, negative part and absolute value of a kernel.

    W = W+ - W- and |W| = W+ + W- pointwise; the scale is kept on every part.
    """
    if k.is_grid:
        pos = np.maximum(k.matrix, 0.0)
        neg = np.maximum(-k.matrix, 0.0)
        return (
            grid_kernel(pos, k.scale, f"{k.name}+", k.bounded),
            grid_kernel(neg, k.scale, f"{k.name}-", k.bounded),
            grid_kernel(np.abs(k.matrix), k.scale, f"|{k.name}|", k.bounded),
        )

    f = k.evaluator
    return (
        Kernel(f"{k.name}+", lambda x, y: np.maximum(f(x, y), 0.0), scale=k.scale, bounded=k.bounded),
        Kernel(f"{k.name}-", lambda x, y: np.maximum(-f(x, y), 0.0), scale=k.scale, bounded=k.bounded),
        Kernel(f"|{k.name}|", lambda x, y: np.abs(f(x, y)), scale=k.scale, bounded=k.bounded),
    )


def _check_resolution(m: int) -> None:
    if int(m) != m or m < 1:
        raise ParameterError(f"Resolution must be a positive integer, got {m}")


def _refine(matrix: np.ndarray, factor: int) -> np.ndarray:
    if factor == 1:
        return matrix
    return np.repeat(np.repeat(matrix, factor, axis=0), factor, axis=1)


def discretize(k: Kernel, m: int, mode: str = "midpoint", samples: int = 4) -> Kernel:
    """
    Sample a kernel on the uniform m-grid.

    Args:
        k: Kernel to discretize
        m: Grid resolution
        mode: "midpoint" (value at cell centers) or "cell_average"
        samples: Sub-grid size per cell side for cell averaging

    Returns:
        Exactly symmetric Grid kernel with the same scale
    """
    _check_resolution(m)
    if mode not in ("midpoint", "cell_average"):
        raise ParameterError(f"Unknown discretization mode '{mode}'")

    # Grid input on a refinement of its own partition is exact
    if k.is_grid and m % k.resolution == 0:
        matrix = _refine(k.matrix, m // k.resolution)
        return grid_kernel(matrix, k.scale, k.name, k.bounded)

    if mode == "midpoint":
        centers = cell_centers(m)
        matrix = evaluate_unscaled(k, centers[:, None], centers[None, :])
    else:
        if samples < 1:
            raise ParameterError(f"Cell averaging needs at least one sample, got {samples}")
        offsets = (np.arange(samples, dtype=float) + 0.5) / (samples * m)
        sub = (np.arange(m, dtype=float)[:, None] / m + offsets[None, :]).ravel()
        matrix = np.empty((m, m))
        # row blocks keep the sub-grid memory at O(block * m * samples^2)
        block = max(1, 2048 // samples)
        for start in range(0, m, block):
            stop = min(m, start + block)
            rows = sub[start * samples:stop * samples]
            values = evaluate_unscaled(k, rows[:, None], sub[None, :])
            matrix[start:stop] = values.reshape(stop - start, samples, m, samples).mean(axis=(1, 3))

    matrix = 0.5 * (matrix + matrix.T)
    return grid_kernel(matrix, k.scale, k.name, k.bounded)


def degree_profile(k: Kernel, m: int) -> DegreeProfile:
    """
    Degree function d_W(x) = int W(x, y) dy at the m cell centers.

    Exact for grid kernels whose resolution divides m; midpoint rule otherwise.
    """
    _check_resolution(m)
    grid = discretize(k, m)
    values = grid.scale * grid.matrix.mean(axis=1)
    return DegreeProfile(values=values, sup=float(values.max()), l1=float(values.mean()))


def _require_grid(k: Kernel) -> None:
    if not k.is_grid:
        raise ParameterError(f"Kernel '{k.name}' must be in grid form; discretize it first")


def apply_operator(k: Kernel, f: np.ndarray) -> np.ndarray:
    """
    Nystrom quadrature of (T_W f)(x) = int W(x, y) f(y) dy on the kernel's grid.

    Args:
        k: Grid kernel of resolution m
        f: Vector of length m

    Returns:
        Vector (scale/m) * M @ f
    """
    _require_grid(k)
    f = np.asarray(f, dtype=float)
    m = k.resolution
    if f.shape != (m,):
        raise ParameterError(f"Operator on {m} cells cannot act on a vector of shape {f.shape}")
    return (k.scale / m) * (k.matrix @ f)


def operator_norm(
    k: Kernel,
    tol_rel: float = POWER_TOL_REL,
    max_iters: int = POWER_MAX_ITERS
) -> float:
    """
    Operator norm of T_W for a grid kernel by power iteration.

    Iterates x <- A x / |A x| on A = (scale/m) M. For symmetric A the
    estimates |A x| are nondecreasing and converge to the largest absolute
    eigenvalue. When the two extreme eigenvalues have nearly equal magnitude
    the iterate keeps rotating between their eigenvectors while the estimate
    has already settled, so an absolute change below POWER_TOL_ABS * m also
    counts as converged. If the cap is reached anyway the norm is taken from
    a Lanczos solve.

    Args:
        k: Grid kernel
        tol_rel: Stop when successive estimates differ by less than tol_rel * estimate
        max_iters: Iteration cap before the Lanczos fallback

    Returns:
        Largest absolute eigenvalue of (scale/m) M

    Raises:
        NumericError: If neither power iteration nor the fallback converges, carrying the last estimate
    """
    _require_grid(k)
    m = k.resolution
    a = (k.scale / m) * k.matrix
    tol_abs = POWER_TOL_ABS * m

    x = np.ones(m)
    x[1::2] -= START_PERTURBATION
    x[0::2] += START_PERTURBATION
    x /= np.linalg.norm(x)

    estimate = 0.0
    for iteration in range(1, max_iters + 1):
        y = a @ x
        current = float(np.linalg.norm(y))
        if current == 0.0:
            return 0.0
        change = abs(current - estimate)
        if change < tol_rel * current or change < tol_abs:
            logger.debug("power iteration on '%s' converged after %d iterations", k.name, iteration)
            return current
        estimate = current
        x = y / current

    logger.warning(
        "power iteration on '%s' stalled at %.10g after %d iterations, using Lanczos", k.name, estimate, max_iters
    )
    return _lanczos_norm(a, k.name, estimate)


def _lanczos_norm(a: np.ndarray, name: str, estimate: float) -> float:
    if a.shape[0] < 3:
        return float(np.max(np.abs(scipy.linalg.eigvalsh(a))))
    try:
        top = scipy.sparse.linalg.eigsh(a, k=1, which='LM', return_eigenvectors=False)
    except scipy.sparse.linalg.ArpackNoConvergence as e:
        raise NumericError(f"Operator norm of '{name}' did not converge: {e}", estimate=estimate) from e
    return float(abs(top[0]))


def kernel_difference(a: Kernel, b: Kernel, m: int) -> Kernel:
    """
    Difference a - b on the common m-grid with both scales folded in.

    Grid operands must have a resolution dividing m so the comparison is an
    exact sum over cells. The result may leave [-1, 1] and is marked unbounded.
    """
    _check_resolution(m)
    for operand in (a, b):
        if operand.is_grid and m % operand.resolution != 0:
            raise ParameterError(
                f"Resolution {m} is not a multiple of the partition size {operand.resolution} of '{operand.name}'"
            )
    grid_a = discretize(a, m)
    grid_b = discretize(b, m)
    matrix = grid_a.scale * grid_a.matrix - grid_b.scale * grid_b.matrix
    return grid_kernel(matrix, 1.0, f"{a.name}-{b.name}", bounded=False)


def l2_distance(a: Kernel, b: Kernel, m: int) -> float:
    """L2 distance of two kernels on the common m-grid."""
    diff = kernel_difference(a, b, m)
    return float(np.sqrt(np.mean(diff.matrix ** 2)))


def laplacian_matrix(k: Kernel) -> np.ndarray:
    """Discrete graphon Laplacian diag(d) - (scale/m) M of a grid kernel."""
    _require_grid(k)
    m = k.resolution
    weights = (k.scale / m) * k.matrix
    return np.diag(weights.sum(axis=1)) - weights


def laplacian_spectrum(k: Kernel) -> np.ndarray:
    """Ascending eigenvalues of the discrete Laplacian."""
    return scipy.linalg.eigvalsh(laplacian_matrix(k))


def quadratic_form_gap(k: Kernel, f: np.ndarray) -> Tuple[float, float]:
    """
    Discrete int int W(x,y) (f(x)^2 - f(x) f(y)) dx dy and its bound.

    Returns:
        (form value, 2 * sup d_|W| * |f|_2^2)
    """
    _require_grid(k)
    f = np.asarray(f, dtype=float)
    m = k.resolution
    if f.shape != (m,):
        raise ParameterError(f"Quadratic form on {m} cells cannot use a vector of shape {f.shape}")
    degrees = k.scale * k.matrix.mean(axis=1)
    form = float(np.mean(degrees * f ** 2) - np.mean(f * apply_operator(k, f)))
    abs_sup = float(np.max(k.scale * np.abs(k.matrix).mean(axis=1)))
    return form, 2.0 * abs_sup * float(np.mean(f ** 2))
