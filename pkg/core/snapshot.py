"""JSON state snapshots for restarting a run."""
from __future__ import annotations
import json
import os
from typing import Any, Dict

import numpy as np

from core.exceptions import ConfigError
from fem.levelset import LevelSetField
from fem.mesh import BackgroundMesh
from fem.spaces import FeField, p1_active, p1_background
from physics.interface_velocity import VelocityField
from .state import StefanState

FORMAT = "stefan-snapshot/1"


def state_to_dict(state: StefanState) -> Dict[str, Any]:
    out: Dict[str, Any] = {
        "format": FORMAT,
        "t": state.t,
        "step": state.step,
        "n_vertices": state.phi.mesh.n_vertices,
        "phi": state.phi.coefficients.tolist(),
        "T": {"active_cells": state.T.space.cells.tolist(), "values": state.T.coefficients.tolist()},
        "v_ext": None,
    }
    v = state.v_ext
    if v is not None:
        out["v_ext"] = {
            "speed": v.speed.coefficients.tolist(),
            "distance": v.distance.tolist(),
            "reached": v.reached.astype(int).tolist(),
            "vector": None if v.vector is None else v.vector.coefficients.tolist(),
        }
    return out


def state_from_dict(data: Dict[str, Any], mesh: BackgroundMesh) -> StefanState:
    if data.get("format") != FORMAT:
        raise ConfigError([f"snapshot.format: expected '{FORMAT}', got '{data.get('format')}'"])
    if data["n_vertices"] != mesh.n_vertices:
        raise ConfigError([f"snapshot.n_vertices: {data['n_vertices']} does not match the mesh ({mesh.n_vertices})"])
    phi = LevelSetField(mesh, np.asarray(data["phi"], dtype=float))
    space = p1_active(mesh, np.asarray(data["T"]["active_cells"], dtype=np.int64))
    T = FeField(space, np.asarray(data["T"]["values"], dtype=float))
    v_ext = None
    if data.get("v_ext") is not None:
        v = data["v_ext"]
        background = p1_background(mesh)
        v_ext = VelocityField(
            speed=FeField(background, np.asarray(v["speed"], dtype=float)),
            distance=np.asarray(v["distance"], dtype=float),
            reached=np.asarray(v["reached"], dtype=bool),
            vector=None if v["vector"] is None else FeField(background.vector(), np.asarray(v["vector"], dtype=float)),
        )
    return StefanState(t=float(data["t"]), step=int(data["step"]), T=T, phi=phi, v_ext=v_ext)


def save_snapshot(state: StefanState, path: str) -> str:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(state_to_dict(state), f)
    return path


def load_snapshot(path: str, mesh: BackgroundMesh) -> StefanState:
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError([f"{path}: cannot read snapshot ({exc})"]) from exc
    return state_from_dict(data, mesh)
