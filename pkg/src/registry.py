"""Named kernels and initial conditions addressable from experiment configs."""

from pathlib import Path
from typing import Any, Callable, Dict, Mapping, Optional

import numpy as np

from src.kernel import analytic_kernel, cell_index, grid_kernel
from src.models import ConfigError, InitialCondition, Kernel, ParameterError

GRID_FILE_SYMMETRY_TOL = 1e-12


def constant_kernel(p: float) -> Kernel:
    """W(x, y) = p."""
    p = float(p)
    if abs(p) > 1.0:
        raise ParameterError(f"Constant kernel value must lie in [-1, 1], got {p}")
    return analytic_kernel(lambda x, y: np.full(np.broadcast(x, y).shape, p), name=f"constant({p:g})")


def block_kernel(values) -> Kernel:
    """Signed community blocks: a k x k symmetric matrix on the uniform k-partition."""
    return grid_kernel(np.asarray(values, dtype=float), name=f"block({len(values)})")


def product_kernel() -> Kernel:
    """W(x, y) = x y."""
    return analytic_kernel(lambda x, y: x * y, name="product")


def polarized_kernel(a: float) -> Kernel:
    """W(x, y) = a cos(pi (x + y)), values in [-a, a]."""
    a = float(a)
    if not 0.0 <= a <= 1.0:
        raise ParameterError(f"Polarized kernel amplitude must lie in [0, 1], got {a}")
    return analytic_kernel(lambda x, y: a * np.cos(np.pi * (x + y)), name=f"polarized({a:g})")


def grid_file_kernel(path: str) -> Kernel:
    """
    Load an m x m kernel matrix from CSV.

    Args:
        path: CSV file with m rows of m comma-separated values

    Returns:
        Grid kernel, symmetrized after validation

    Raises:
        ConfigError: If the file is missing, not square or asymmetric beyond 1e-12
    """
    file_path = Path(path)
    if not file_path.is_file():
        raise ConfigError(f"Kernel grid file not found: {file_path}")

    try:
        matrix = np.loadtxt(file_path, delimiter=",", ndmin=2, comments="#")
    except ValueError as e:
        raise ConfigError(f"Kernel grid file {file_path} is not numeric CSV: {str(e)}")

    if matrix.shape[0] != matrix.shape[1]:
        raise ConfigError(f"Kernel grid file {file_path} is {matrix.shape[0]}x{matrix.shape[1]}, expected square")
    if np.max(np.abs(matrix - matrix.T)) > GRID_FILE_SYMMETRY_TOL:
        raise ConfigError(f"Kernel grid file {file_path} is not symmetric within {GRID_FILE_SYMMETRY_TOL}")

    return grid_kernel(0.5 * (matrix + matrix.T), name=file_path.stem)


# name -> builder(params)
KERNELS: Dict[str, Callable[..., Kernel]] = {
    'constant': lambda p: constant_kernel(p['p']),
    'block': lambda p: block_kernel(p['values']),
    'product': lambda p: product_kernel(),
    'polarized': lambda p: polarized_kernel(p.get('a', 1.0)),
    'grid_file': lambda p: grid_file_kernel(p['path']),
}


def linear_initial() -> InitialCondition:
    """g(x) = x."""
    return InitialCondition(name="linear", evaluator=lambda x: x.copy())


def sine_initial(k: float = 1.0) -> InitialCondition:
    """g(x) = sin(2 pi k x)."""
    k = float(k)
    return InitialCondition(name=f"sine({k:g})", evaluator=lambda x: np.sin(2.0 * np.pi * k * x))


def step_initial(a: float = -1.0, b: float = 1.0) -> InitialCondition:
    """Two-level polarization: a on (0, 1/2], b on (1/2, 1]."""
    a, b = float(a), float(b)
    return InitialCondition(name=f"step({a:g},{b:g})", evaluator=lambda x: np.where(x <= 0.5, a, b))


def constant_initial(c: float) -> InitialCondition:
    """g(x) = c."""
    c = float(c)
    return InitialCondition(name=f"constant({c:g})", evaluator=lambda x: np.full(np.shape(x), c))


def vector_initial(values, name: str = "vector") -> InitialCondition:
    """
    Opinions given as m values, read as the step function constant on each cell.

    A graph on exactly m nodes takes the values as they are; any other graph or
    grid evaluates the step function at its points.
    """
    values = np.asarray(values, dtype=float)
    if values.ndim != 1 or values.size == 0:
        raise ParameterError(f"Vector initial condition needs a non-empty list of values, got shape {values.shape}")
    m = values.size
    return InitialCondition(name=name, evaluator=lambda x: values[cell_index(x, m)], values=values)


INITIAL_CONDITIONS: Dict[str, Callable[..., InitialCondition]] = {
    'linear': lambda p: linear_initial(),
    'sine': lambda p: sine_initial(p.get('k', 1.0)),
    'step': lambda p: step_initial(p.get('a', -1.0), p.get('b', 1.0)),
    'constant': lambda p: constant_initial(p['c']),
    'vector': lambda p: vector_initial(p['values']),
}


def _lookup(table: Mapping[str, Callable], kind: str, name: str, params: Optional[Mapping[str, Any]]):
    if name not in table:
        known = ", ".join(sorted(table))
        raise ConfigError(f"Unknown {kind} '{name}'. Available: {known}")
    try:
        return table[name](dict(params or {}))
    except KeyError as e:
        raise ConfigError(f"{kind} '{name}' is missing parameter {e}")
    except ParameterError as e:
        raise ConfigError(f"Invalid {kind} '{name}': {str(e)}")


def build_kernel(name: str, params: Optional[Mapping[str, Any]] = None) -> Kernel:
    """
    Build a registry kernel.

    Args:
        name: Registry name (constant, block, product, polarized, grid_file)
        params: Builder parameters

    Returns:
        Kernel

    Raises:
        ConfigError: For unknown names, missing or invalid parameters
    """
    return _lookup(KERNELS, "kernel", name, params)


def build_initial(name: str, params: Optional[Mapping[str, Any]] = None) -> InitialCondition:
    """
    Build a registry initial condition.

    Args:
        name: Registry name (linear, sine, step, constant)
        params: Builder parameters

    Returns:
        InitialCondition
    """
    return _lookup(INITIAL_CONDITIONS, "initial condition", name, params)
