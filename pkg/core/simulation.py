from __future__ import annotations
import os
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence

import pandas as pd

from benchmark.errors import interface_averages
from core.exceptions import StepError
from core.scenarios import Problem
from core.snapshot import save_snapshot
from fem.geometry import CutGeometry, build_cut_geometry
from physics.stefan_nitsche import initial_temperature
from utils.log import get_logger
from utils.vtk import write_vtk
from .state import StefanState, StepState

logger = get_logger("simulation")

Observer = Callable[[StepState], None]


@dataclass
class RunResult:
    final: StefanState
    steps: pd.DataFrame
    outputs: List[str] = field(default_factory=list)
    last_step: Optional[StepState] = None


def step_record(step: StepState) -> Dict[str, Any]:
    nxt, geometry, report = step["next_state"], step["geometry"], step["newton"]
    row: Dict[str, Any] = {
        "step": nxt.step,
        "t": nxt.t,
        "dt": step["dt"],
        "newton_iterations": report.iterations,
        "newton_residual": report.residual_history[-1],
        "active_points": report.active_counts[-1],
        "max_violation": report.max_violation,
        "area": geometry.area,
        "interface_length": geometry.interface_length,
        "redistanced": bool(step.get("redistanced", False)),
    }
    if not geometry.is_empty_interface():
        row["v_avg"], row["r_avg"] = interface_averages(geometry, step["normal_speed"])
    return row


class Simulation:
    """Time loop over the per-step graph with output cadence, one retry per step and snapshots."""

    def __init__(
            self,
            problem: Problem,
            output_dir: Optional[str] = None,
            observers: Sequence[Observer] = (),
            write_outputs: bool = True,
    ) -> None:
        self.problem = problem
        self.config = problem.config
        self.output_dir = output_dir or os.path.join(self.config.output.directory, problem.name)
        self.observers = list(observers)
        self.write_outputs = write_outputs
        self.orchestrator = problem.orchestrator()
        self._initial_geometry: Optional[CutGeometry] = None

    def initial_state(self) -> StefanState:
        p = self.problem
        geometry = build_cut_geometry(p.phi0, dirichlet=p.dirichlet, max_walk=self.config.levelset.max_walk)
        self._initial_geometry = geometry
        return StefanState(t=p.spec.t0, step=0, T=initial_temperature(geometry, p.spec), phi=p.phi0)

    def _path(self, kind: str, step: int, ext: str) -> str:
        return os.path.join(self.output_dir, f"{kind}_{step:06d}.{ext}")

    def _write(self, state: StefanState, geometry: CutGeometry) -> List[str]:
        if not self.write_outputs:
            return []
        written: List[str] = []
        out = self.config.output
        if out.vtk:
            written.extend(write_vtk(geometry, self._path("domain", state.step, "vtk"),
                                     T=state.T, phi=state.phi, v_ext=state.v_ext))
        if out.snapshot:
            written.append(save_snapshot(state, self._path("state", state.step, "json")))
        logger.debug("output_written", step=state.step, files=len(written))
        return written

    def advance(self, state: StefanState, dt: float) -> StepState:
        """One step; on failure retried once as two half steps."""
        try:
            return self.orchestrator.run(state, dt)
        except StepError as exc:
            logger.warning("step_retry", step=state.step + 1, stage=exc.stage, dt=dt, error=str(exc.inner))
        half = self.orchestrator.run(state, 0.5 * dt)
        return self.orchestrator.run(half["next_state"], 0.5 * dt)

    def _dump_steps(self, rows: List[Dict[str, Any]]) -> pd.DataFrame:
        frame = pd.DataFrame(rows)
        if self.write_outputs:
            os.makedirs(self.output_dir, exist_ok=True)
            frame.to_csv(os.path.join(self.output_dir, "steps.csv"), index=False)
        return frame

    def run(self, state: Optional[StefanState] = None) -> RunResult:
        spec = self.problem.spec
        every = self.config.output.every
        if state is None:
            state = self.initial_state()
        outputs: List[str] = []
        if state.step == 0 and self._initial_geometry is not None:
            outputs.extend(self._write(state, self._initial_geometry))

        logger.info("run_started", name=self.problem.name, t=state.t, tf=spec.tf, dt=spec.dt)
        rows: List[Dict[str, Any]] = []
        last: Optional[StepState] = None
        eps = 1e-9 * spec.dt
        while state.t < spec.tf - eps:
            dt = min(spec.dt, spec.tf - state.t)
            try:
                last = self.advance(state, dt)
            except StepError as exc:
                logger.error("run_aborted", step=exc.step, stage=exc.stage, t=state.t, error=str(exc.inner))
                if self.write_outputs:
                    save_snapshot(state, os.path.join(self.output_dir, "state_last_good.json"))
                self._dump_steps(rows)
                raise
            state = last["next_state"]
            rows.append(step_record(last))
            for observer in self.observers:
                observer(last)
            final = state.t >= spec.tf - eps
            if final or state.step % every == 0:
                outputs.extend(self._write(state, last["geometry"]))

        frame = self._dump_steps(rows)
        logger.info("run_finished", name=self.problem.name, steps=len(rows), t=state.t)
        return RunResult(final=state, steps=frame, outputs=outputs, last_step=last)
