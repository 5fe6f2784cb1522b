import sys
from pathlib import Path

import numpy as np
import pytest

# Make tests/oracles importable as a plain package.
sys.path.insert(0, str(Path(__file__).parent))

from topoforge.core import DensityField, LoadPoint, ProblemSpec, SupportPoint


def mbb_spec(nelx: int = 60, nely: int = 20, volfrac: float = 0.5) -> ProblemSpec:
    """Half-beam benchmark: symmetry rollers on the left edge, vertical roller
    at the bottom-right corner, unit down load at the top-left corner."""
    supports = [SupportPoint(x=0.0, y=j / nely, fix_x=True, fix_y=False) for j in range(nely + 1)]
    supports.append(SupportPoint(x=1.0, y=1.0, fix_x=False, fix_y=True))
    loads = [LoadPoint(x=0.0, y=0.0, fx=0.0, fy=-1.0)]
    return ProblemSpec(
        supports=tuple(supports),
        loads=tuple(loads),
        volume_fraction=volfrac,
        aspect=(float(nelx) / nely, 1.0),
        cell_size=1.0 / nely,
    )


def cantilever_spec(nelx: int = 8, nely: int = 6, volfrac: float = 0.4) -> ProblemSpec:
    """Left edge fully clamped, down load at middle of the right edge."""
    supports = [SupportPoint(x=0.0, y=j / nely, fix_x=True, fix_y=True) for j in range(nely + 1)]
    loads = [LoadPoint(x=1.0, y=0.5, fx=0.0, fy=-1.0)]
    return ProblemSpec(
        supports=tuple(supports),
        loads=tuple(loads),
        volume_fraction=volfrac,
        aspect=(float(nelx) / nely, 1.0),
        cell_size=1.0 / nely,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(np.random.Philox(1234))


@pytest.fixture(scope="session")
def checker_field():
    v = np.indices((8, 8)).sum(axis=0) % 2
    return DensityField(width=8, height=8, values=v.astype(float))
