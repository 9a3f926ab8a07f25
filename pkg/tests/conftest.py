from __future__ import annotations
from typing import Any, Dict

import numpy as np
import pytest
import structlog

from core.config import RunConfig, parse_config
from fem.levelset import LevelSetField
from fem.mesh import BackgroundMesh, build_structured

UNIT = (0.0, 1.0, 0.0, 1.0)


@pytest.fixture(autouse=True)
def _reset_logging():
    """The CLI binds the log stream to whatever stderr is current; undo it after every test."""
    yield
    structlog.reset_defaults()


@pytest.fixture
def unit_mesh() -> BackgroundMesh:
    return build_structured(UNIT, 10, 10)


@pytest.fixture
def fine_mesh() -> BackgroundMesh:
    return build_structured(UNIT, 20, 20)


@pytest.fixture
def flat_phi(unit_mesh: BackgroundMesh) -> LevelSetField:
    """Material below y = 0.55, halfway through a cell row."""
    return LevelSetField.from_function(unit_mesh, lambda x: x[:, 1] - 0.55)


@pytest.fixture
def circle_phi(fine_mesh: BackgroundMesh) -> LevelSetField:
    """Disc of radius 0.3 around the centre of the unit square."""
    return LevelSetField.from_function(fine_mesh, lambda x: np.hypot(x[:, 0] - 0.5, x[:, 1] - 0.5) - 0.3)


def quiet_block(tmp_path, **changes: Any) -> Dict[str, Any]:
    """Beam-free block below y = 0.55 cooled from the bottom."""
    data: Dict[str, Any] = {
        "scenario": "custom",
        "name": "block",
        "domain": {"bounds": [0.0, 1.0, 0.0, 1.0], "h": 0.1},
        "time": {"t0": 0.0, "tf": 0.03, "dt": 0.01},
        "material": {"T_m": 0.0},
        "levelset": {"kind": "plane", "point": [0.0, 0.55], "normal": [0.0, 1.0]},
        "boundary": {"dirichlet": ["bottom"], "temperature": "-1"},
        "initial_temperature": "-0.5 + 0.1*x",
        "output": {"directory": str(tmp_path), "every": 1, "vtk": True, "snapshot": True},
    }
    for key, value in changes.items():
        if isinstance(value, dict):
            data.setdefault(key, {}).update(value)
        else:
            data[key] = value
    return data


@pytest.fixture
def block_config(tmp_path) -> RunConfig:
    return parse_config(quiet_block(tmp_path))
