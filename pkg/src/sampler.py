"""Latent variables, W-random signed graphs and their step graphons."""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Tuple

import numpy as np
import scipy.sparse as sp

from src.kernel import evaluate_unscaled, grid_kernel
from src.models import (
    Kernel,
    LatentScheme,
    LatentVariables,
    ParameterError,
    SignedAdjacency,
)

logger = logging.getLogger(__name__)

# Philox stream purposes; the top counter word separates them
_LATENT_STREAM = 1
_EDGE_STREAM = 0

ROW_BLOCK = 256


def _stream(seed: int, purpose: int, row: int = 0) -> np.random.Generator:
    """Counter-based generator for (seed, purpose, row); streams never overlap."""
    if not 0 <= int(seed) < 2 ** 64:
        raise ParameterError(f"Seed must be a 64-bit unsigned integer, got {seed}")
    counter = (int(purpose) << 192) | (int(row) << 128)
    return np.random.Generator(np.random.Philox(key=int(seed), counter=counter))


def make_latents(n: int, scheme=LatentScheme.DETERMINISTIC, rng_seed: int = 0) -> LatentVariables:
    """
    Generate latent variables.

    Args:
        n: Number of nodes
        scheme: LatentScheme or its string value
        rng_seed: Seed for the stochastic scheme

    Returns:
        Sorted LatentVariables in (0, 1]

    Raises:
        ParameterError: If n < 1
    """
    if int(n) != n or n < 1:
        raise ParameterError(f"Number of nodes must be a positive integer, got {n}")
    n = int(n)
    scheme = LatentScheme(scheme)

    if scheme is LatentScheme.DETERMINISTIC:
        points = np.arange(1, n + 1, dtype=float) / n
    else:
        # 1 - U maps [0, 1) onto (0, 1]
        uniforms = 1.0 - _stream(rng_seed, _LATENT_STREAM).random(n)
        points = np.sort(uniforms)

    return LatentVariables(n=n, points=points, scheme=scheme, seed=int(rng_seed))


def _check_eps(eps: float) -> None:
    if not (0.0 < eps <= 1.0):
        raise ParameterError(f"Sparsity eps must lie in (0, 1], got {eps}")


def _sample_rows(
    k: Kernel,
    points: np.ndarray,
    eps: float,
    seed: int,
    rows: range
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Upper-triangle edges of the given rows; row i only reads its own stream."""
    n = len(points)
    row_idx: List[np.ndarray] = []
    col_idx: List[np.ndarray] = []
    signs: List[np.ndarray] = []

    for i in rows:
        if i >= n - 1:
            continue
        cols = np.arange(i + 1, n)
        weights = evaluate_unscaled(k, points[i], points[cols])
        draws = _stream(seed, _EDGE_STREAM, i).random(len(cols))
        present = draws < eps * np.abs(weights)
        if np.any(present):
            row_idx.append(np.full(int(present.sum()), i))
            col_idx.append(cols[present])
            signs.append(np.sign(weights[present]).astype(np.int8))

    if not row_idx:
        empty = np.empty(0, dtype=np.int64)
        return empty, empty, np.empty(0, dtype=np.int8)
    return np.concatenate(row_idx), np.concatenate(col_idx), np.concatenate(signs)


def sample_adjacency(
    k: Kernel,
    lat: LatentVariables,
    eps: float,
    rng_seed: int,
    workers: int = 1
) -> SignedAdjacency:
    """
    Sample a signed graph from a signed graphon.

    For every i < j independently, an edge of sign sign(W(X_i, X_j)) is present
    with probability eps * |W(X_i, X_j)|. The diagonal stays empty.

    Args:
        k: Bounded kernel (scale is ignored; the unscaled values are probabilities)
        lat: Latent variables
        eps: Sparsity parameter in (0, 1]
        rng_seed: 64-bit seed; identical inputs give identical graphs
        workers: Threads used over row blocks; the result does not depend on it

    Returns:
        SignedAdjacency
    """
    _check_eps(eps)
    if not k.bounded:
        raise ParameterError(f"Cannot sample from unbounded kernel '{k.name}'")

    n = lat.n
    blocks = [range(start, min(n, start + ROW_BLOCK)) for start in range(0, n, ROW_BLOCK)]

    if workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda rows: _sample_rows(k, lat.points, eps, rng_seed, rows), blocks))
    else:
        parts = [_sample_rows(k, lat.points, eps, rng_seed, rows) for rows in blocks]

    rows = np.concatenate([p[0] for p in parts]) if parts else np.empty(0, dtype=np.int64)
    cols = np.concatenate([p[1] for p in parts]) if parts else np.empty(0, dtype=np.int64)
    signs = np.concatenate([p[2] for p in parts]) if parts else np.empty(0, dtype=np.int8)

    entries = sp.coo_matrix(
        (np.concatenate([signs, signs]), (np.concatenate([rows, cols]), np.concatenate([cols, rows]))),
        shape=(n, n),
        dtype=np.int8
    ).tocsr()
    entries.sort_indices()

    logger.debug("sampled %d edges on %d nodes (eps=%g, seed=%d)", len(signs), n, eps, rng_seed)
    return SignedAdjacency(n=n, entries=entries, eps=float(eps), latents=lat, seed=int(rng_seed))


def from_edges(
    n: int,
    edges: List[Tuple[int, int, int]],
    eps: float,
    latents: LatentVariables,
    seed: Optional[int] = None
) -> SignedAdjacency:
    """
    Rebuild a signed graph from zero-based (i, j, sign) triples with i < j.

    Raises:
        ParameterError: On self-loops, out-of-range nodes or signs other than +-1
    """
    rows, cols, signs = [], [], []
    for i, j, s in edges:
        if not (0 <= i < j < n):
            raise ParameterError(f"Edge ({i}, {j}) is not an upper-triangle pair of {n} nodes")
        if s not in (-1, 1):
            raise ParameterError(f"Edge ({i}, {j}) has sign {s}, expected -1 or +1")
        rows.append(i)
        cols.append(j)
        signs.append(s)

    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    signs = np.asarray(signs, dtype=np.int8)
    entries = sp.coo_matrix(
        (np.concatenate([signs, signs]), (np.concatenate([rows, cols]), np.concatenate([cols, rows]))),
        shape=(n, n),
        dtype=np.int8
    ).tocsr()
    entries.sort_indices()
    return SignedAdjacency(n=n, entries=entries, eps=float(eps), latents=latents, seed=seed)


def expected_matrix(k: Kernel, lat: LatentVariables) -> Kernel:
    """
    Weighted graph of expected edge values W(X_i, X_j), diagonal included.

    Returns:
        Grid kernel of resolution n, i.e. the step graphon of the expected graph
    """
    x = lat.points
    matrix = np.array(evaluate_unscaled(k, x[:, None], x[None, :]), dtype=float)
    matrix = 0.5 * (matrix + matrix.T)
    return grid_kernel(matrix, scale=k.scale, name=f"E[{k.name}]", bounded=k.bounded)


def step_graphon(adj: SignedAdjacency, scale: float = 1.0) -> Kernel:
    """
    Step graphon W_n of a sampled graph on the partition I_i = ((i-1)/n, i/n].

    Args:
        adj: Sampled graph
        scale: Multiplier, e.g. 1/eps or n * alpha

    Returns:
        Grid kernel whose matrix is the dense adjacency
    """
    return grid_kernel(adj.to_dense(), scale=scale, name=f"W_{adj.n}")


def split_adjacency(adj: SignedAdjacency) -> Tuple[SignedAdjacency, SignedAdjacency]:
    """
    Positive and negative parts of a signed graph.

    Both parts are unsigned graphs (entries 0/1); their step graphons are the
    positive and negative parts of the step graphon of ``adj``.
    """
    positive = adj.entries.multiply(adj.entries > 0).astype(np.int8).tocsr()
    negative = (-adj.entries).multiply(adj.entries < 0).astype(np.int8).tocsr()
    positive.eliminate_zeros()
    negative.eliminate_zeros()
    return (
        SignedAdjacency(n=adj.n, entries=positive, eps=adj.eps, latents=adj.latents, seed=adj.seed),
        SignedAdjacency(n=adj.n, entries=negative, eps=adj.eps, latents=adj.latents, seed=adj.seed),
    )
