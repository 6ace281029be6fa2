"""Deterministic CSV and JSON output for graphs, trajectories and sweeps."""

import csv
import io
import json
import re
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np

from src import __version__
from src.models import (
    DegreeCampaign,
    Err,
    ErrorType,
    LatentScheme,
    LatentVariables,
    Ok,
    OpinionTrajectory,
    ParameterError,
    ProcessingError,
    Result,
    RunRecord,
    SignedAdjacency,
    SweepSummary,
)
from src.sampler import from_edges, make_latents

TOOL_NAME = "graphon-opinions"

SWEEP_HEADER = ("model", "n", "eps", "seed", "t", "l2_error", "bound")
DEGREE_HEADER = (
    "n", "eps", "seed", "max_norm_deg", "avg_norm_deg", "scaled_max", "scaled_avg",
    "expected_max", "bound_gamma", "sorted_gap", "l1_gap", "l1_threshold",
)
ADJACENCY_HEADER = ("i", "j", "sign")

_SCHEME_TAGS = {LatentScheme.DETERMINISTIC: "det", LatentScheme.STOCHASTIC: "stoch"}
_GRAPH_LINE = re.compile(r"^# n=(\d+) eps=(\S+) seed=(\S+) scheme=(det|stoch)$")


def format_float(value: float) -> str:
    """Shortest round-tripping text for a float."""
    return repr(float(value))


def override_warning(alpha_override: float) -> str:
    return f"alpha overridden to {format_float(alpha_override)}; alpha_n = 1/(n eps_n) not used"


def provenance_lines(config_hash: str, alpha_override: Optional[float] = None) -> List[str]:
    """
    Comment lines opening every output file.

    Args:
        config_hash: Hash of the effective config
        alpha_override: Set when alpha_n was overridden; adds a warning line

    Returns:
        Lines without trailing newlines
    """
    lines = [f"# {TOOL_NAME} {__version__} config={config_hash}"]
    if alpha_override is not None:
        lines.append(f"# WARNING {override_warning(alpha_override)}")
    return lines


def _render_csv(comments: Sequence[str], header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    buffer = io.StringIO()
    for line in comments:
        buffer.write(line + "\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_float(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return buffer.getvalue()


def _write(path: Path, content: str) -> Result[Path, ProcessingError]:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(content, encoding="utf-8")
        return Ok(path)
    except OSError as e:
        return Err(ProcessingError(
            error_type=ErrorType.FILE_WRITE_ERROR,
            message=f"Failed to write output file {path}: {str(e)}",
            details=str(e)
        ))


def save_csv(
    path: Path,
    header: Sequence[str],
    rows: Iterable[Sequence[Any]],
    config_hash: str,
    alpha_override: Optional[float] = None,
    extra_comments: Sequence[str] = ()
) -> Result[Path, ProcessingError]:
    """Write a CSV with provenance lines, then a fixed header row."""
    comments = provenance_lines(config_hash, alpha_override) + list(extra_comments)
    return _write(Path(path), _render_csv(comments, header, rows))


def save_json(
    path: Path,
    payload: Dict[str, Any],
    alpha_override: Optional[float] = None
) -> Result[Path, ProcessingError]:
    """
    Write JSON with sorted keys so identical payloads give identical bytes.

    An alpha override adds an alpha_override_warning field with the text of
    the CSV warning line.
    """
    if alpha_override is not None:
        payload = dict(payload, alpha_override_warning=override_warning(alpha_override))
    return _write(Path(path), json.dumps(payload, sort_keys=True, indent=2) + "\n")


# Sweeps
def sweep_rows(runs: Iterable[RunRecord]) -> List[tuple]:
    """One row per recorded time of every successful run."""
    rows = []
    for run in runs:
        if run.status != "ok" or run.report is None:
            continue
        bounds = run.report.bound_values
        for index, t in enumerate(run.report.times):
            bound = float(bounds[index]) if bounds is not None else ""
            rows.append((run.model.value, run.n, run.eps, run.seed, float(t), float(run.report.l2_errors[index]), bound))
    return rows


def _finite(value: float) -> Optional[float]:
    return None if value is None or not np.isfinite(value) else float(value)


def run_to_dict(run: RunRecord) -> Dict[str, Any]:
    report = run.report
    entry: Dict[str, Any] = {
        'model': run.model.value,
        'n': run.n,
        'eps': _finite(run.eps),
        'alpha': _finite(run.alpha),
        'seed': run.seed,
        'status': run.status,
        'sup_error': run.sup_error,
        'min_bound_margin': run.min_bound_margin,
        'deg': run.degrees.to_dict() if run.degrees is not None else None,
    }
    if report is not None:
        entry['min_squared_margin'] = report.squared_margin
        entry['c_u_T'] = report.c_u_T
        entry['g_error'] = report.g_error
        entry['deg_sup'] = report.deg_sup
        entry['op_norm_diff'] = report.op_norm_diff
        entry['op_norm_diff_pos'] = report.op_norm_diff_pos
        entry['op_norm_diff_neg'] = report.op_norm_diff_neg
    if run.message is not None:
        entry['message'] = run.message
    return entry


def summary_to_dict(summary: SweepSummary) -> Dict[str, Any]:
    return {
        'tool': TOOL_NAME,
        'version': __version__,
        'config_hash': summary.config_hash,
        'runs': [run_to_dict(run) for run in summary.runs],
        'medians_by_n': summary.medians_by_n,
        'global_min_margin': summary.global_min_margin(),
        'control_margin': summary.control_margin,
        'solver_gap': summary.solver_gap,
        'findings': list(summary.findings),
        'failed': len(summary.failed),
    }


# Degree campaigns
def degree_rows(campaign: DegreeCampaign) -> List[tuple]:
    rows = []
    for (seed, report), (gap, threshold) in zip(campaign.trials, campaign.l1_gaps):
        rows.append((
            report.n, report.eps, seed, report.max_norm_deg, report.avg_norm_deg, report.scaled_max,
            report.scaled_avg, report.expected_max, report.bound_gamma, report.sorted_gap, gap, threshold,
        ))
    return rows


def campaign_to_dict(campaign: DegreeCampaign) -> Dict[str, Any]:
    sizes = sorted({report.n for _, report in campaign.trials})
    trials = []
    for (seed, report), (gap, threshold) in zip(campaign.trials, campaign.l1_gaps):
        entry = report.to_dict()
        entry.update({'seed': seed, 'b_n': report.b_n, 'l1_gap': gap, 'l1_threshold': threshold})
        trials.append(entry)
    return {
        'tool': TOOL_NAME,
        'version': __version__,
        'config_hash': campaign.config_hash,
        'trials': trials,
        'violation_rate_by_n': {n: campaign.violation_rate(n) for n in sizes},
        'l1_pass_rate_by_n': {n: campaign.l1_pass_rate(n) for n in sizes},
    }


# Trajectories
def trajectory_rows(traj: OpinionTrajectory, layout: str = "wide") -> tuple:
    """
    Header and rows of a trajectory table.

    Args:
        traj: Trajectory
        layout: "long" (t,i,u with 1-based i) or "wide" (t,u_1..u_n)
    """
    if layout == "long":
        rows = [
            (float(t), i + 1, float(u))
            for t, state in zip(traj.times, traj.states)
            for i, u in enumerate(state)
        ]
        return ("t", "i", "u"), rows
    if layout == "wide":
        header = ("t",) + tuple(f"u_{i}" for i in range(1, traj.n + 1))
        rows = [(float(t),) + tuple(float(u) for u in state) for t, state in zip(traj.times, traj.states)]
        return header, rows
    raise ParameterError(f"Unknown trajectory layout '{layout}', expected long or wide")


def save_trajectory(
    traj: OpinionTrajectory,
    path: Path,
    config_hash: str,
    layout: str = "wide",
    alpha_override: Optional[float] = None
) -> Result[Path, ProcessingError]:
    """Write a trajectory CSV with a comment line naming its model, source and alpha."""
    header, rows = trajectory_rows(traj, layout)
    comment = f"# model={traj.model.value} source={traj.source} alpha={format_float(traj.alpha)}"
    return save_csv(path, header, rows, config_hash, alpha_override, extra_comments=[comment])


def trajectory_to_dict(traj: OpinionTrajectory) -> Dict[str, Any]:
    return {
        'model': traj.model.value,
        'source': traj.source,
        'alpha': traj.alpha,
        'times': traj.times.tolist(),
        'states': traj.states.tolist(),
    }


# Graphs
def graph_line(adj: SignedAdjacency) -> str:
    seed = "none" if adj.seed is None else str(adj.seed)
    return f"# n={adj.n} eps={format_float(adj.eps)} seed={seed} scheme={_SCHEME_TAGS[adj.latents.scheme]}"


def adjacency_rows(adj: SignedAdjacency) -> List[tuple]:
    """Upper-triangle edges as 1-based (i, j, sign) with i < j, row-major order."""
    upper = adj.entries.tocoo()
    mask = upper.row < upper.col
    order = np.lexsort((upper.col[mask], upper.row[mask]))
    rows = upper.row[mask][order]
    cols = upper.col[mask][order]
    signs = upper.data[mask][order]
    return [(int(i) + 1, int(j) + 1, int(s)) for i, j, s in zip(rows, cols, signs)]


def save_adjacency(adj: SignedAdjacency, path: Path, config_hash: str) -> Result[Path, ProcessingError]:
    return save_csv(path, ADJACENCY_HEADER, adjacency_rows(adj), config_hash, extra_comments=[graph_line(adj)])


def save_latents(lat: LatentVariables, path: Path, config_hash: str) -> Result[Path, ProcessingError]:
    return save_csv(path, ("x",), [(float(x),) for x in lat.points], config_hash)


def adjacency_to_dict(adj: SignedAdjacency) -> Dict[str, Any]:
    return {
        'n': adj.n,
        'eps': adj.eps,
        'seed': adj.seed,
        'scheme': adj.latents.scheme.value,
        'edges': [list(edge) for edge in adjacency_rows(adj)],
        'latents': adj.latents.points.tolist(),
    }


def read_latents_csv(path: Path, scheme: LatentScheme, seed: Optional[int] = None) -> LatentVariables:
    """Read a one-column latent CSV written by save_latents."""
    body = [line for line in Path(path).read_text(encoding="utf-8").splitlines() if line and not line.startswith("#")]
    values = np.array([float(line) for line in body[1:]], dtype=float)
    return LatentVariables(n=len(values), points=values, scheme=scheme, seed=seed)


def read_adjacency_csv(path: Path, latents_path: Optional[Path] = None) -> SignedAdjacency:
    """
    Rebuild a graph from an adjacency CSV written by save_adjacency.

    Latents come from ``latents_path`` when given; otherwise they are
    regenerated from the recorded scheme and seed.

    Raises:
        ParameterError: If the graph line is missing or an edge is malformed
    """
    text = Path(path).read_text(encoding="utf-8").splitlines()
    match = next((m for m in (_GRAPH_LINE.match(line) for line in text) if m), None)
    if match is None:
        raise ParameterError(f"Adjacency file {path} has no '# n=... eps=... seed=... scheme=...' line")

    n = int(match.group(1))
    eps = float(match.group(2))
    seed = None if match.group(3) == "none" else int(match.group(3))
    scheme = LatentScheme.DETERMINISTIC if match.group(4) == "det" else LatentScheme.STOCHASTIC

    edges = []
    body = [line for line in text if line and not line.startswith("#")]
    for row in csv.reader(body[1:]):
        i, j, s = (int(value) for value in row)
        edges.append((i - 1, j - 1, s))

    if latents_path is not None:
        latents = read_latents_csv(latents_path, scheme, seed)
        if latents.n != n:
            raise ParameterError(f"Latent file has {latents.n} points for a graph on {n} nodes")
    elif scheme is LatentScheme.STOCHASTIC and seed is None:
        raise ParameterError("Stochastic latents without a recorded seed need a latent file")
    else:
        latents = make_latents(n, scheme, seed or 0)

    return from_edges(n, edges, eps, latents, seed=seed)
