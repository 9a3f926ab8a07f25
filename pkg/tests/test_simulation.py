import json
import os

import numpy as np
import pandas as pd
import pytest

from conftest import quiet_block
from core.config import parse_config
from core.exceptions import GeometryError, SolverError, StepError
from core.scenarios import build_problem
from core.simulation import Simulation
from core.snapshot import load_snapshot


def _mean_temperature(state):
    return float(np.mean(state.T.coefficients))


def test_cold_block_cools_without_moving(block_config, tmp_path):
    problem = build_problem(block_config)
    seen = []
    sim = Simulation(problem, observers=[seen.append])
    start = sim.initial_state()
    result = sim.run()

    final = result.final
    assert final.step == 3
    assert final.t == pytest.approx(0.03)
    assert len(seen) == 3
    np.testing.assert_allclose(final.phi.coefficients, problem.phi0.coefficients, atol=1e-12)
    assert _mean_temperature(final) < _mean_temperature(start)
    assert np.all(final.T.coefficients < 0.0)
    assert final.v_ext is not None
    np.testing.assert_allclose(final.v_ext.speed.coefficients, 0.0, atol=1e-14)

    steps = result.steps
    assert list(steps["step"]) == [1, 2, 3]
    assert np.all(steps["active_points"] == 0)
    assert not steps["redistanced"].any()
    np.testing.assert_allclose(steps["dt"], 0.01)
    np.testing.assert_allclose(steps["v_avg"], 0.0, atol=1e-14)

    out = os.path.join(str(tmp_path), "block")
    assert sim.output_dir == out
    assert len(result.outputs) == 12
    for step in range(4):
        for name in (f"domain_{step:06d}.vtk", f"domain_{step:06d}_gamma.vtk", f"state_{step:06d}.json"):
            assert os.path.exists(os.path.join(out, name))
    assert pd.read_csv(os.path.join(out, "steps.csv")).shape[0] == 3


def test_output_cadence(tmp_path):
    config = parse_config(quiet_block(tmp_path, output={"every": 2, "vtk": False}))
    result = Simulation(build_problem(config)).run()
    names = sorted(os.path.basename(p) for p in result.outputs)
    # initial state, every second step and the final one
    assert names == ["state_000000.json", "state_000002.json", "state_000003.json"]


def test_empty_interval_writes_only_the_initial_state(tmp_path):
    config = parse_config(quiet_block(tmp_path, time={"tf": 0.0}))
    result = Simulation(build_problem(config)).run()
    assert result.final.step == 0
    assert result.steps.empty
    assert result.last_step is None
    assert len(result.outputs) == 3


def test_outputs_can_be_switched_off(block_config, tmp_path):
    sim = Simulation(build_problem(block_config), output_dir=str(tmp_path / "none"), write_outputs=False)
    result = sim.run()
    assert result.outputs == []
    assert not os.path.exists(tmp_path / "none")


def test_restart_matches_an_uninterrupted_run(tmp_path):
    problem = build_problem(parse_config(quiet_block(tmp_path)))
    full = Simulation(problem, output_dir=str(tmp_path / "full")).run()

    restarted = Simulation(problem, output_dir=str(tmp_path / "restart"))
    state = load_snapshot(str(tmp_path / "full" / "state_000001.json"), problem.mesh)
    assert state.step == 1 and state.v_ext is not None
    result = restarted.run(state)

    assert result.final.step == full.final.step
    assert result.steps.shape[0] == 2
    np.testing.assert_allclose(result.final.T.coefficients, full.final.T.coefficients, atol=1e-12)
    np.testing.assert_allclose(result.final.phi.coefficients, full.final.phi.coefficients, atol=1e-12)
    assert not os.path.exists(tmp_path / "restart" / "state_000000.json")


def test_failing_stage_aborts_and_keeps_the_last_state(block_config, monkeypatch):
    sim = Simulation(build_problem(block_config))

    def broken(**_):
        raise GeometryError("walk limit exceeded")

    monkeypatch.setattr(sim.orchestrator.cut, "run", broken)
    with pytest.raises(StepError) as info:
        sim.run()
    assert info.value.stage == "geometry"
    assert info.value.step == 1
    assert isinstance(info.value.inner, GeometryError)

    last_good = os.path.join(sim.output_dir, "state_last_good.json")
    with open(last_good, encoding="utf-8") as f:
        assert json.load(f)["step"] == 0
    assert os.path.exists(os.path.join(sim.output_dir, "steps.csv"))


def test_stage_missing_an_output_fails_the_step(block_config, monkeypatch):
    sim = Simulation(build_problem(block_config), write_outputs=False)
    assert sim.orchestrator.gradient.outputs == ("gradient",)
    assert repr(sim.orchestrator.gradient) == "GradientStage(name='gradient')"
    monkeypatch.setattr(sim.orchestrator.gradient, "run", lambda **_: {"grad": None})
    with pytest.raises(StepError) as info:
        sim.run()
    assert info.value.stage == "gradient"
    assert isinstance(info.value.inner, ValueError)
    assert "gradient" in str(info.value.inner)


def test_failed_step_is_retried_with_half_steps(block_config, monkeypatch):
    sim = Simulation(build_problem(block_config), write_outputs=False)
    run = sim.orchestrator.run
    attempts = []

    def flaky(state, dt):
        attempts.append(dt)
        if dt > 0.0075:
            raise StepError("temperature", state.step + 1, SolverError("singular"))
        return run(state, dt)

    monkeypatch.setattr(sim.orchestrator, "run", flaky)
    result = sim.run()
    assert result.final.step == 6
    assert result.final.t == pytest.approx(0.03)
    assert result.steps.shape[0] == 3
    np.testing.assert_allclose(result.steps["dt"], 0.005)
    assert len(attempts) == 9


def test_step_graph_lists_every_stage(block_config):
    sim = Simulation(build_problem(block_config), write_outputs=False)
    diagram = sim.orchestrator.mermaid()
    for node in ("geometry", "normal", "temperature", "gradient", "velocity", "extension", "advection",
                 "redistance", "clock"):
        assert node in diagram
