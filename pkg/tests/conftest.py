"""Pytest configuration and fixtures."""

from pathlib import Path
from typing import Any, Callable, Dict

import numpy as np
import pytest
import yaml

from src.kernel import grid_kernel
from src.models import Kernel

SIGNED_BLOCKS = [[0.8, -0.6], [-0.6, 0.8]]


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: full-size sweeps taking minutes; deselect with -m \"not slow\"")


@pytest.fixture
def signed_block() -> Kernel:
    """Two communities, friendly inside and antagonistic across."""
    return grid_kernel(np.array(SIGNED_BLOCKS), name="signed_block")


@pytest.fixture
def base_config() -> Dict[str, Any]:
    """Small but complete experiment config."""
    return {
        'kernel': {'name': 'block', 'params': {'values': SIGNED_BLOCKS}},
        'initial': {'name': 'sine', 'params': {'k': 1}},
        'model': 'repelling',
        'n_list': [10, 20],
        'seeds': [1, 2],
        'latent_scheme': 'deterministic',
        'sparsity': {'family': 'constant', 'c': 1.0},
        'T': 0.5,
        'h': 0.05,
        'ref_multiplier': 2,
    }


@pytest.fixture
def write_config(tmp_path: Path) -> Callable[..., Path]:
    """Write a config mapping to YAML; output_dir defaults to a temporary folder."""
    def write(raw: Dict[str, Any], name: str = "config.yaml") -> Path:
        raw = dict(raw)
        raw.setdefault('output_dir', str(tmp_path / "out"))
        path = tmp_path / name
        path.write_text(yaml.safe_dump(raw), encoding="utf-8")
        return path
    return write
