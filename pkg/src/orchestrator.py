"""Orchestration of sampling, simulation, sweep and bound-check pipelines."""

import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from statistics import median
from typing import Dict, List, Optional, Tuple

import numpy as np

from src.analysis import (
    degree_report,
    l1_gap,
    l2_step_error,
    max_abs_degree,
    trajectory_error,
    with_bound,
)
from src.config import ExperimentConfig, config_hash
from src.dynamics import integrate, picard_solve, sample_initial, snap_step, solve_graphon
from src.file_writer import (
    DEGREE_HEADER,
    SWEEP_HEADER,
    adjacency_to_dict,
    campaign_to_dict,
    degree_rows,
    read_adjacency_csv,
    save_adjacency,
    save_csv,
    save_json,
    save_latents,
    save_trajectory,
    summary_to_dict,
    sweep_rows,
    trajectory_to_dict,
)
from src.kernel import degree_profile, discretize, kernel_difference, operator_norm, split_parts
from src.models import (
    ConfigError,
    DegreeCampaign,
    Err,
    ErrorType,
    GraphonError,
    InitialCondition,
    Kernel,
    Model,
    NumericError,
    Ok,
    OpinionTrajectory,
    ProcessingError,
    Result,
    RunRecord,
    ScheduleError,
    SignedAdjacency,
    SweepSummary,
)
from src.registry import build_initial, build_kernel
from src.sampler import make_latents, sample_adjacency, split_adjacency, step_graphon

logger = logging.getLogger(__name__)

MAX_STEP = 1e-2
STEP_SAFETY = 2.0  # slack over the expected degree for sampling fluctuations
SOLVER_AGREEMENT = 1e-6


def _to_error(exc: GraphonError) -> ProcessingError:
    if isinstance(exc, ScheduleError):
        error_type = ErrorType.SCHEDULE_VIOLATION
    elif isinstance(exc, NumericError):
        error_type = ErrorType.NUMERIC_ERROR
    else:
        error_type = ErrorType.CONFIG_ERROR
    return ProcessingError(error_type=error_type, message=str(exc), details=type(exc).__name__)


def build_inputs(cfg: ExperimentConfig) -> Tuple[Kernel, InitialCondition]:
    """Kernel and initial condition named by the config."""
    return build_kernel(cfg.kernel, cfg.kernel_params), build_initial(cfg.initial, cfg.initial_params)


def time_step(cfg: ExperimentConfig, kernel: Kernel) -> float:
    """
    Step shared by graph and reference runs.

    A configured h must divide T. Otherwise h = min(1e-2, 0.1/L) snapped to
    divide T, with L = 4 n alpha_n eps_n sup d_|W| times a safety factor; under
    the default scaling n alpha_n eps_n = 1.
    """
    if cfg.h is not None:
        if cfg.T > 0 and abs(round(cfg.T / cfg.h) * cfg.h - cfg.T) > 1e-12 * cfg.T:
            raise ConfigError(f"'h'={cfg.h} does not divide T={cfg.T}")
        return float(cfg.h)

    _, _, absolute = split_parts(kernel)
    sup_degree = degree_profile(absolute, max(cfg.n_list)).sup
    rates = []
    for n in cfg.n_list:
        try:
            eps = cfg.sparsity.eps(n)
        except ScheduleError:
            continue  # reported by the run itself
        rates.append(n * cfg.alpha(n, eps) * eps)
    rate = max(rates, default=1.0)
    lipschitz = 4.0 * STEP_SAFETY * rate * sup_degree
    h = MAX_STEP if lipschitz == 0 else min(MAX_STEP, 0.1 / lipschitz)
    return snap_step(cfg.T, h)


def reference_grid(cfg: ExperimentConfig, kernel: Kernel) -> Kernel:
    return discretize(kernel, cfg.M, mode=cfg.discretization, samples=cfg.cell_samples)


def _operator_gap(grid: Kernel, adj: SignedAdjacency, n_alpha: float, max_iters: int) -> float:
    """|||T_{W - n alpha W_n}||| on the reference grid."""
    difference = kernel_difference(grid, step_graphon(adj, n_alpha), grid.resolution)
    return operator_norm(difference, max_iters=max_iters)


def run_single(
    cfg: ExperimentConfig,
    model: Model,
    n: int,
    seed: int,
    kernel: Kernel,
    g: InitialCondition,
    grid: Kernel,
    reference: OpinionTrajectory,
    h: float
) -> RunRecord:
    """
    One sampled-graph run compared with the reference solution.

    Failures are recorded on the returned RunRecord instead of raised.
    """
    eps = alpha = float('nan')
    try:
        eps = cfg.sparsity.eps(n)
        alpha = cfg.alpha(n, eps)
        lat = make_latents(n, cfg.latent_scheme, seed)
        adj = sample_adjacency(kernel, lat, eps, seed)
        g_n = sample_initial(g, lat)

        traj = integrate(model, step_graphon(adj), alpha, g_n, cfg.T, h, source=f"graph(n={n}, eps={eps:g})")
        report = trajectory_error(traj, reference)

        n_alpha = n * alpha
        g_error = l2_step_error(g_n, reference.states[0])
        if model is Model.REPELLING:
            norms = [_operator_gap(grid, adj, n_alpha, cfg.power_max_iters)]
        else:
            positive, negative, _ = split_parts(grid)
            adj_positive, adj_negative = split_adjacency(adj)
            norms = [
                _operator_gap(positive, adj_positive, n_alpha, cfg.power_max_iters),
                _operator_gap(negative, adj_negative, n_alpha, cfg.power_max_iters),
            ]
        report = with_bound(report, model, g_error, norms, max_abs_degree(adj), n_alpha)
        degrees = degree_report(adj, kernel, cfg.nu)
    except GraphonError as e:
        logger.warning("run %s n=%d seed=%d failed: %s", model.value, n, seed, e)
        return RunRecord(model=model, n=n, eps=eps, alpha=alpha, seed=seed, status="failed", message=str(e))

    logger.info("run %s n=%d seed=%d: sup error %.3e, margin %.3e", model.value, n, seed, report.sup_error, report.margin)
    return RunRecord(model=model, n=n, eps=eps, alpha=alpha, seed=seed, status="ok", report=report, degrees=degrees)


def _medians(runs: List[RunRecord]) -> Dict[str, Dict[int, float]]:
    grouped: Dict[str, Dict[int, List[float]]] = {}
    for run in runs:
        if run.status == "ok":
            grouped.setdefault(run.model.value, {}).setdefault(run.n, []).append(run.sup_error)
    return {
        model: {n: float(median(errors)) for n, errors in sorted(by_n.items())}
        for model, by_n in sorted(grouped.items())
    }


def collect_runs(cfg: ExperimentConfig) -> SweepSummary:
    """
    Solve the reference once per model, then run every (n, seed) pair.

    Runs are spread over cfg.workers threads; their order in the summary
    follows the config (model, then n_list, then seeds).
    """
    kernel, g = build_inputs(cfg)
    h = time_step(cfg, kernel)
    grid = reference_grid(cfg, kernel)
    logger.info("reference grid M=%d, h=%g, %d runs per model", cfg.M, h, len(cfg.n_list) * len(cfg.seeds))

    runs: List[RunRecord] = []
    for model in cfg.models:
        reference = solve_graphon(model, grid, g, cfg.T, h, cfg.M)
        tasks = [(n, seed) for n in cfg.n_list for seed in cfg.seeds]

        def task(pair: Tuple[int, int]) -> RunRecord:
            return run_single(cfg, model, pair[0], pair[1], kernel, g, grid, reference, h)

        if cfg.workers > 1 and len(tasks) > 1:
            with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
                runs.extend(pool.map(task, tasks))
        else:
            runs.extend(task(pair) for pair in tasks)

    return SweepSummary(config_hash=config_hash(cfg), runs=runs, medians_by_n=_medians(runs))


def _save_all(writes: List[Result[Path, ProcessingError]]) -> Result[List[str], ProcessingError]:
    files = []
    for result in writes:
        if isinstance(result, Err):
            return result
        files.append(str(result.value))
    return Ok(files)


def run_sweep(cfg: ExperimentConfig, fmt: str = "csv") -> Result[SweepSummary, ProcessingError]:
    """
    Convergence sweep over n, seeds and models.

    Writes one CSV per model (model,n,eps,seed,t,l2_error,bound) unless fmt is
    json, and always a JSON summary with per-n median sup errors.

    Args:
        cfg: Experiment config
        fmt: "csv" or "json"

    Returns:
        Result containing the SweepSummary or ProcessingError
    """
    try:
        summary = collect_runs(cfg)
    except GraphonError as e:
        return Err(_to_error(e))

    out = Path(cfg.output_dir)
    writes = []
    if fmt == "csv":
        for model in cfg.models:
            rows = sweep_rows(run for run in summary.runs if run.model is model)
            writes.append(save_csv(out / f"sweep_{model.value}.csv", SWEEP_HEADER, rows, summary.config_hash, cfg.alpha_override))
    writes.append(save_json(out / "summary.json", summary_to_dict(summary), cfg.alpha_override))

    saved = _save_all(writes)
    if isinstance(saved, Err):
        return saved
    summary.files = saved.value
    return Ok(summary)


def control_margin(cfg: ExperimentConfig, kernel: Kernel, g: InitialCondition, h: float) -> float:
    """
    Exact-discretization control: the grid solver at the smallest n against itself.

    Error and bound are both identically zero, so the margin is 0.
    """
    n = min(cfg.n_list)
    margins = []
    for model in cfg.models:
        traj = solve_graphon(model, kernel, g, cfg.T, h, n, mode=cfg.discretization, samples=cfg.cell_samples)
        report = trajectory_error(traj, traj)
        norms = [0.0] if model is Model.REPELLING else [0.0, 0.0]
        report = with_bound(report, model, 0.0, norms, 1.0, 1.0)
        margins.append(report.margin)
    return float(min(margins))


def solver_cross_check(cfg: ExperimentConfig, kernel: Kernel, g: InitialCondition, h: float) -> Optional[float]:
    """
    RK4 against Picard iteration on the first seed's graph at the smallest valid n.

    Returns the largest sup-norm gap of the final states over the configured
    models, or None when the schedule admits no n. Gaps above SOLVER_AGREEMENT
    are logged, not raised.
    """
    seed = cfg.seeds[0]
    for n in sorted(cfg.n_list):
        try:
            eps = cfg.sparsity.eps(n)
        except ScheduleError:
            continue
        break
    else:
        return None
    alpha = cfg.alpha(n, eps)
    lat = make_latents(n, cfg.latent_scheme, seed)
    graph = step_graphon(sample_adjacency(kernel, lat, eps, seed))
    g_n = sample_initial(g, lat)

    gaps = []
    for model in cfg.models:
        rk4 = integrate(model, graph, alpha, g_n, cfg.T, h)
        picard = picard_solve(model, graph, alpha, g_n, cfg.T, n_steps=cfg.picard_steps)
        gaps.append(float(np.max(np.abs(rk4.states[-1] - picard.states[-1]))))
    gap = max(gaps)
    if gap > SOLVER_AGREEMENT:
        logger.warning("RK4 and Picard differ by %.3e at n=%d seed=%d", gap, n, seed)
    return gap


MARGIN_HEADER = ("model", "n", "eps", "seed", "sup_error", "min_margin", "min_squared_margin")


def run_bound_check(cfg: ExperimentConfig, fmt: str = "csv") -> Result[SweepSummary, ProcessingError]:
    """
    Check the approximation error bound on every run of the sweep.

    Negative margins are not errors of the pipeline: they are listed as
    findings in the summary and in bound_check.json.
    """
    try:
        summary = collect_runs(cfg)
        kernel, g = build_inputs(cfg)
        h = time_step(cfg, kernel)
        summary.control_margin = control_margin(cfg, kernel, g, h)
        summary.solver_gap = solver_cross_check(cfg, kernel, g, h)
    except GraphonError as e:
        return Err(_to_error(e))

    for run in summary.runs:
        margin = run.min_bound_margin
        if margin is not None and margin < 0:
            summary.findings.append(
                f"{run.model.value} n={run.n} seed={run.seed}: error exceeds bound, margin {margin:.6e}"
            )
        elif run.status != "ok":
            summary.findings.append(f"{run.model.value} n={run.n} seed={run.seed}: run failed ({run.message})")
    for finding in summary.findings:
        logger.warning(finding)

    out = Path(cfg.output_dir)
    writes = []
    if fmt == "csv":
        rows = [
            (run.model.value, run.n, run.eps, run.seed, run.sup_error, run.min_bound_margin, run.report.squared_margin)
            for run in summary.runs if run.status == "ok"
        ]
        writes.append(save_csv(out / "margins.csv", MARGIN_HEADER, rows, summary.config_hash, cfg.alpha_override))
    writes.append(save_json(out / "bound_check.json", summary_to_dict(summary), cfg.alpha_override))

    saved = _save_all(writes)
    if isinstance(saved, Err):
        return saved
    summary.files = saved.value
    return Ok(summary)


def run_degrees(cfg: ExperimentConfig, fmt: str = "csv") -> Result[DegreeCampaign, ProcessingError]:
    """
    Monte Carlo degree campaign: one DegreeReport and average-degree gap per (n, seed).
    """
    try:
        kernel, _ = build_inputs(cfg)
        campaign = DegreeCampaign(config_hash=config_hash(cfg))

        def trial(pair: Tuple[int, int]):
            n, seed = pair
            eps = cfg.sparsity.eps(n)
            adj = sample_adjacency(kernel, make_latents(n, cfg.latent_scheme, seed), eps, seed)
            return (seed, degree_report(adj, kernel, cfg.nu)), l1_gap(adj, kernel)

        tasks = [(n, seed) for n in cfg.n_list for seed in cfg.seeds]
        if cfg.workers > 1 and len(tasks) > 1:
            with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
                results = list(pool.map(trial, tasks))
        else:
            results = [trial(pair) for pair in tasks]
    except GraphonError as e:
        return Err(_to_error(e))

    campaign.trials = [entry for entry, _ in results]
    campaign.l1_gaps = [gap for _, gap in results]
    for n in cfg.n_list:
        logger.info("degrees n=%d: violation rate %.3f", n, campaign.violation_rate(n))

    out = Path(cfg.output_dir)
    writes = []
    if fmt == "csv":
        writes.append(save_csv(out / "degrees.csv", DEGREE_HEADER, degree_rows(campaign), campaign.config_hash))
    writes.append(save_json(out / "degrees.json", campaign_to_dict(campaign)))

    saved = _save_all(writes)
    if isinstance(saved, Err):
        return saved
    campaign.files = saved.value
    return Ok(campaign)


def _single(cfg: ExperimentConfig, seed: Optional[int], n: Optional[int]) -> Tuple[int, int]:
    n = cfg.n_list[0] if n is None else n
    if n < 1:
        raise ConfigError(f"Node count must be positive, got {n}")
    return (cfg.seeds[0] if seed is None else seed), n


def sample_graph(
    cfg: ExperimentConfig,
    seed: Optional[int] = None,
    n: Optional[int] = None,
    fmt: str = "csv"
) -> Result[List[str], ProcessingError]:
    """Sample one graph and write its adjacency and latents."""
    try:
        seed, n = _single(cfg, seed, n)
        kernel, _ = build_inputs(cfg)
        eps = cfg.sparsity.eps(n)
        lat = make_latents(n, cfg.latent_scheme, seed)
        adj = sample_adjacency(kernel, lat, eps, seed, workers=cfg.workers)
    except GraphonError as e:
        return Err(_to_error(e))

    logger.info("sampled %d edges on %d nodes", adj.edge_count, n)
    out = Path(cfg.output_dir)
    digest = config_hash(cfg)
    if fmt == "json":
        payload = adjacency_to_dict(adj)
        payload['config_hash'] = digest
        return _save_all([save_json(out / f"graph_n{n}_seed{seed}.json", payload)])
    return _save_all([
        save_adjacency(adj, out / f"adjacency_n{n}_seed{seed}.csv", digest),
        save_latents(lat, out / f"latents_n{n}_seed{seed}.csv", digest),
    ])


def _save_trajectories(
    cfg: ExperimentConfig,
    trajectories: List[Tuple[str, OpinionTrajectory]],
    fmt: str,
    layout: str
) -> Result[List[str], ProcessingError]:
    out = Path(cfg.output_dir)
    digest = config_hash(cfg)
    writes = []
    for stem, traj in trajectories:
        if fmt == "json":
            payload = trajectory_to_dict(traj)
            payload['config_hash'] = digest
            writes.append(save_json(out / f"{stem}.json", payload, cfg.alpha_override))
        else:
            writes.append(save_trajectory(traj, out / f"{stem}.csv", digest, layout, cfg.alpha_override))
    return _save_all(writes)


def simulate(
    cfg: ExperimentConfig,
    seed: Optional[int] = None,
    n: Optional[int] = None,
    fmt: str = "csv",
    layout: str = "wide",
    graph_path: Optional[str] = None,
    latents_path: Optional[str] = None
) -> Result[List[str], ProcessingError]:
    """
    Integrate the dynamics on one graph for every configured model.

    The graph is sampled from the config unless graph_path names an adjacency
    CSV written by `sample`; its n, eps and seed then replace the configured ones.
    """
    try:
        kernel, g = build_inputs(cfg)
        h = time_step(cfg, kernel)
        if graph_path is None:
            seed, n = _single(cfg, seed, n)
            eps = cfg.sparsity.eps(n)
            lat = make_latents(n, cfg.latent_scheme, seed)
            adj = sample_adjacency(kernel, lat, eps, seed, workers=cfg.workers)
        else:
            adj = _load_graph(graph_path, latents_path)
            n, eps, lat = adj.n, adj.eps, adj.latents
            seed = "stored" if adj.seed is None else adj.seed
        alpha = cfg.alpha(n, eps)
        graph = step_graphon(adj)
        g_n = sample_initial(g, lat)
        trajectories = [
            (f"trajectory_{model.value}_n{n}_seed{seed}",
             integrate(model, graph, alpha, g_n, cfg.T, h, source=f"graph(n={n}, eps={eps:g})"))
            for model in cfg.models
        ]
    except GraphonError as e:
        return Err(_to_error(e))
    return _save_trajectories(cfg, trajectories, fmt, layout)


def _load_graph(graph_path: str, latents_path: Optional[str]) -> SignedAdjacency:
    try:
        return read_adjacency_csv(Path(graph_path), None if latents_path is None else Path(latents_path))
    except (OSError, ValueError) as e:
        raise ConfigError(f"Cannot read stored graph {graph_path}: {str(e)}")


def solve_reference(
    cfg: ExperimentConfig,
    fmt: str = "csv",
    layout: str = "wide"
) -> Result[List[str], ProcessingError]:
    """Solve the graphon dynamics on the reference grid for every configured model."""
    try:
        kernel, g = build_inputs(cfg)
        h = time_step(cfg, kernel)
        grid = reference_grid(cfg, kernel)
        trajectories = [
            (f"reference_{model.value}_M{cfg.M}", solve_graphon(model, grid, g, cfg.T, h, cfg.M))
            for model in cfg.models
        ]
    except GraphonError as e:
        return Err(_to_error(e))
    for _, traj in trajectories:
        logger.info("reference %s: sup |u| = %.3e", traj.model.value, float(np.max(np.abs(traj.states))))
    return _save_trajectories(cfg, trajectories, fmt, layout)
