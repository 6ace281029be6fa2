"""Tests for deterministic CSV and JSON output."""

import json
import tempfile
from pathlib import Path

import numpy as np
import pytest

from src import __version__
from src.file_writer import (
    SWEEP_HEADER,
    adjacency_rows,
    format_float,
    provenance_lines,
    read_adjacency_csv,
    save_adjacency,
    save_csv,
    save_json,
    save_latents,
    save_trajectory,
    summary_to_dict,
    sweep_rows,
    trajectory_rows,
)
from src.models import (
    Err,
    ErrorReport,
    ErrorType,
    LatentScheme,
    Model,
    Ok,
    OpinionTrajectory,
    ParameterError,
    RunRecord,
    SweepSummary,
)
from src.registry import polarized_kernel
from src.sampler import from_edges, make_latents, sample_adjacency


def small_trajectory() -> OpinionTrajectory:
    return OpinionTrajectory(
        Model.REPELLING, np.array([0.0, 0.5]), np.array([[0.1, 0.2], [0.15, 0.25]]), 0.5, "graph(n=2)"
    )


class TestProvenance:
    """Tests for provenance comments and number formatting."""

    def test_first_line_names_tool_version_and_hash(self, tmp_path):
        """The provenance line comes first, then the header."""
        result = save_csv(tmp_path / "t.csv", ("a", "b"), [(1, 0.1)], "0123456789abcdef")
        assert isinstance(result, Ok)
        lines = result.value.read_text().split("\n")
        assert lines[0] == f"# graphon-opinions {__version__} config=0123456789abcdef"
        assert lines[1] == "a,b"
        assert lines[2] == "1,0.1"

    def test_alpha_override_taints_output(self):
        """An alpha override adds a warning line."""
        lines = provenance_lines("abc", alpha_override=0.25)
        assert len(lines) == 2
        assert lines[1].startswith("# WARNING alpha overridden to 0.25")

    def test_floats_round_trip(self):
        """Written floats read back exactly."""
        for value in (0.1, 1 / 3, 1e-300, 12345.678):
            assert float(format_float(value)) == value

    def test_unix_line_endings(self, tmp_path):
        """Files use LF line endings only."""
        path = save_csv(tmp_path / "t.csv", ("a",), [(1.0,)], "abc").value
        assert b"\r" not in path.read_bytes()


class TestWriteFailures:
    """Tests for write error handling."""

    def test_unwritable_path_returns_error(self):
        """Write failures become FILE_WRITE_ERROR results."""
        with tempfile.TemporaryDirectory() as tmpdir:
            blocker = Path(tmpdir) / "blocker"
            blocker.write_text("file, not a directory")
            result = save_json(blocker / "summary.json", {'a': 1})
            assert isinstance(result, Err)
            assert result.error.error_type == ErrorType.FILE_WRITE_ERROR
            assert "summary.json" in result.error.message


class TestJson:
    """Tests for JSON output."""

    def test_identical_payloads_give_identical_bytes(self, tmp_path):
        """Key order in the payload does not change the bytes."""
        first = save_json(tmp_path / "a.json", {'b': 1, 'a': [1.5, 2]}).value
        second = save_json(tmp_path / "b.json", {'a': [1.5, 2], 'b': 1}).value
        assert first.read_bytes() == second.read_bytes()

    def test_alpha_override_adds_warning_field(self, tmp_path):
        """The JSON warning carries the same text as the CSV warning line."""
        payload = {'a': 1}
        path = save_json(tmp_path / "a.json", payload, alpha_override=0.25).value
        written = json.loads(path.read_text())
        assert written['alpha_override_warning'] == provenance_lines("abc", 0.25)[1][len("# WARNING "):]
        assert written['alpha_override_warning'].startswith("alpha overridden to 0.25")
        assert payload == {'a': 1}

    def test_no_warning_field_without_override(self, tmp_path):
        """Plain payloads are written as given."""
        path = save_json(tmp_path / "a.json", {'a': 1}).value
        assert json.loads(path.read_text()) == {'a': 1}

    def test_summary_payload(self):
        """Runs, failures, margins and the solver gap are serialized."""
        report = ErrorReport(
            times=np.array([0.0, 1.0]), l2_errors=np.array([0.0, 0.1]), sup_error=0.1, c_u_T=1.0,
            op_norm_diff=0.2, deg_sup=0.5, g_error=0.0, bound_values=np.array([0.4, 1.0]),
        )
        summary = SweepSummary("abc", runs=[
            RunRecord(Model.REPELLING, 10, 1.0, 0.1, 1, "ok", report=report),
            RunRecord(Model.REPELLING, 20, 1.0, 0.05, 1, "failed", message="schedule"),
        ])
        payload = json.loads(json.dumps(summary_to_dict(summary)))
        assert payload['config_hash'] == "abc"
        assert payload['failed'] == 1
        assert payload['global_min_margin'] == pytest.approx(0.4)
        assert payload['runs'][0]['op_norm_diff'] == 0.2
        assert payload['runs'][1]['message'] == "schedule"
        assert payload['solver_gap'] is None


class TestSweepRows:
    """Tests for sweep tables."""

    def test_one_row_per_time(self):
        """Each successful run gives one row per recorded time."""
        report = ErrorReport(
            times=np.array([0.0, 1.0]), l2_errors=np.array([0.0, 0.1]), sup_error=0.1, c_u_T=1.0,
            bound_values=np.array([0.4, 1.0]),
        )
        rows = sweep_rows([
            RunRecord(Model.OPPOSING, 10, 0.5, 0.2, 3, "ok", report=report),
            RunRecord(Model.OPPOSING, 20, 0.5, 0.1, 3, "failed"),
        ])
        assert rows == [
            ("opposing", 10, 0.5, 3, 0.0, 0.0, 0.4),
            ("opposing", 10, 0.5, 3, 1.0, 0.1, 1.0),
        ]
        assert len(SWEEP_HEADER) == len(rows[0])


class TestTrajectories:
    """Tests for trajectory tables."""

    def test_wide_layout(self):
        """Wide rows hold t then one column per node."""
        header, rows = trajectory_rows(small_trajectory(), "wide")
        assert header == ("t", "u_1", "u_2")
        assert rows[1] == (0.5, 0.15, 0.25)

    def test_long_layout(self):
        """Long rows hold t, a 1-based node index and its opinion."""
        header, rows = trajectory_rows(small_trajectory(), "long")
        assert header == ("t", "i", "u")
        assert rows[:2] == [(0.0, 1, 0.1), (0.0, 2, 0.2)]
        assert len(rows) == 4

    def test_unknown_layout(self):
        """Unknown layouts are rejected."""
        with pytest.raises(ParameterError):
            trajectory_rows(small_trajectory(), "tall")

    def test_saved_trajectory_records_source(self, tmp_path):
        """The trajectory file names its model, source and alpha."""
        path = save_trajectory(small_trajectory(), tmp_path / "traj.csv", "abc").value
        lines = path.read_text().splitlines()
        assert lines[1] == "# model=repelling source=graph(n=2) alpha=0.5"
        assert lines[2] == "t,u_1,u_2"


class TestAdjacency:
    """Tests for adjacency output and input."""

    def test_rows_are_sorted_upper_triangle(self):
        """Edges are written once, 1-based, in row-major order."""
        adj = from_edges(4, [(2, 3, 1), (0, 2, -1), (1, 0, 1)], 0.5, make_latents(4), seed=7)
        assert adjacency_rows(adj) == [(1, 2, 1), (1, 3, -1), (3, 4, 1)]

    def test_written_graph_reads_back(self, tmp_path):
        """A graph sampled with deterministic latents is rebuilt from the CSV alone."""
        adj = sample_adjacency(polarized_kernel(0.9), make_latents(30), 0.6, 11)
        path = save_adjacency(adj, tmp_path / "adj.csv", "abc").value
        assert path.read_text().splitlines()[1] == "# n=30 eps=0.6 seed=11 scheme=det"
        rebuilt = read_adjacency_csv(path)
        assert (rebuilt.entries != adj.entries).nnz == 0
        assert rebuilt.eps == 0.6
        assert np.array_equal(rebuilt.latents.points, adj.latents.points)

    def test_stochastic_latents_read_from_file(self, tmp_path):
        """Stochastic latents are read back from their own file."""
        lat = make_latents(25, LatentScheme.STOCHASTIC, 4)
        adj = sample_adjacency(polarized_kernel(0.9), lat, 1.0, 4)
        adj_path = save_adjacency(adj, tmp_path / "adj.csv", "abc").value
        lat_path = save_latents(lat, tmp_path / "lat.csv", "abc").value
        rebuilt = read_adjacency_csv(adj_path, lat_path)
        assert np.array_equal(rebuilt.latents.points, lat.points)
        assert (rebuilt.entries != adj.entries).nnz == 0

    def test_missing_graph_line(self, tmp_path):
        """A file without its graph line is rejected."""
        path = tmp_path / "bare.csv"
        path.write_text("i,j,sign\n1,2,1\n")
        with pytest.raises(ParameterError):
            read_adjacency_csv(path)
