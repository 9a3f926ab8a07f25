from __future__ import annotations
from langgraph.graph import StateGraph, END

from core.orchestrator import Orchestrator
from utils.log import get_logger
from .state import StefanState, StepState

logger = get_logger("orchestrator")


class StefanOrchestrator(Orchestrator):
    """One time step: cut, normal, temperature, gradient, speed, extension, advection, redistance, clock."""

    def _node_geometry(self, state: StepState) -> StepState:
        return self._call(self.cut, state, phi=state["state"].phi)

    def _node_normal(self, state: StepState) -> StepState:
        return self._call(self.normal, state, phi=state["state"].phi)

    def _node_temperature(self, state: StepState) -> StepState:
        return self._call(
            self.temperature,
            state,
            geometry=state["geometry"],
            normal=state["normal"],
            T_prev=state["state"].T,
            t_next=state["t_next"],
            dt=state["dt"],
        )

    def _node_gradient(self, state: StepState) -> StepState:
        return self._call(self.gradient, state, temperature=state["temperature"], geometry=state["geometry"])

    def _node_velocity(self, state: StepState) -> StepState:
        return self._call(
            self.velocity,
            state,
            temperature=state["temperature"],
            gradient=state["gradient"],
            normal=state["normal"],
            geometry=state["geometry"],
            t_next=state["t_next"],
        )

    def _node_extension(self, state: StepState) -> StepState:
        return self._call(
            self.extension,
            state,
            normal_speed=state["normal_speed"],
            geometry=state["geometry"],
            normal=state["normal"],
        )

    def _node_advection(self, state: StepState) -> StepState:
        return self._call(
            self.advection,
            state,
            phi=state["state"].phi,
            velocity=state["velocity"],
            previous=state["state"].v_ext,
            dt=state["dt"],
        )

    def _node_redistance(self, state: StepState) -> StepState:
        return self._call(self.redistance, state, phi=state["phi_next"])

    def _node_clock(self, state: StepState) -> StepState:
        current = state["state"]
        nxt = current.advanced(
            state["dt"],
            T=state["temperature"],
            phi=state["phi_next"],
            v_ext=state["velocity"],
        )
        report = state["newton"]
        logger.info(
            "step_done",
            step=nxt.step,
            t=nxt.t,
            newton_iterations=report.iterations,
            interface_length=state["geometry"].interface_length,
            redistanced=state.get("redistanced", False),
        )
        return {"next_state": nxt, "stage": "clock"}

    def _route_after_advection(self, state: StepState) -> str:
        if self.redistance.needed(state["phi_next"]):
            return "redistance"
        return "clock"

    def run(self, state: StefanState, dt: float) -> StepState:
        initial: StepState = {"state": state, "dt": dt, "t_next": state.t + dt}
        return self._app.invoke(initial)

    def _build(self):
        wf = StateGraph(StepState)
        wf.add_node("geometry", self._node_geometry)
        wf.add_node("normal", self._node_normal)
        wf.add_node("temperature", self._node_temperature)
        wf.add_node("gradient", self._node_gradient)
        wf.add_node("velocity", self._node_velocity)
        wf.add_node("extension", self._node_extension)
        wf.add_node("advection", self._node_advection)
        wf.add_node("redistance", self._node_redistance)
        wf.add_node("clock", self._node_clock)
        wf.set_entry_point("geometry")
        wf.add_edge("geometry", "normal")
        wf.add_edge("normal", "temperature")
        wf.add_edge("temperature", "gradient")
        wf.add_edge("gradient", "velocity")
        wf.add_edge("velocity", "extension")
        wf.add_edge("extension", "advection")
        wf.add_conditional_edges(
            "advection",
            self._route_after_advection,
            {
                "redistance": "redistance",
                "clock": "clock",
            },
        )
        wf.add_edge("redistance", "clock")
        wf.add_edge("clock", END)
        return wf.compile()
