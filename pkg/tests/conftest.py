"""Shared pytest fixtures."""
from __future__ import annotations

import numpy as np
import pytest

import mlembed as ml


@pytest.fixture
def write_edges(tmp_path):
    """Return a helper that writes pairs to a temp edge-list file."""
    def _write(pairs, name="graph.txt", header=""):
        path = tmp_path / name
        lines = [header] if header else []
        lines += [f"{u}\t{v}" for u, v in pairs]
        path.write_text("\n".join(lines) + "\n")
        return str(path)
    return _write


@pytest.fixture
def small_graph() -> ml.Graph:
    """Two triangles joined by one bridge edge: 0-1-2-0 and 3-4-5-3, 2-3."""
    pairs = [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5), (2, 3)]
    return ml.from_edges(np.asarray(pairs), num_vertices=6)
