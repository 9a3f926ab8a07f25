"""Convergence, variant and cut-position studies on top of the time loop."""
from __future__ import annotations
import os
from dataclasses import dataclass, field
from datetime import datetime
from itertools import combinations
from typing import Any, Dict, List, Optional, Sequence, Tuple

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd
import scipy.sparse as sp
from joblib import Parallel, delayed

from benchmark.errors import (
    ErrorReport,
    error_norms,
    field_at,
    field_difference,
    interface_averages,
    interface_error,
)
from benchmark.manufactured import ManufacturedCase, alpha, radius
from core.config import RunConfig, with_overrides
from core.exceptions import ConfigError, SolverError, StefanError
from core.scenarios import build_problem
from core.simulation import Simulation
from core.state import StepState
from fem.assembly import (
    BulkKernel,
    assemble_bulk,
    assemble_ghost_penalty,
    assemble_interface,
    condition_estimate,
    interface_traces,
)
from fem.geometry import build_cut_geometry
from fem.levelset import LevelSetField
from fem.mesh import build_structured
from fem.spaces import p1_active
from physics.stefan_nitsche import VARIANTS
from utils.log import get_logger
from utils.report_utils import convert_markdown_to_html, render_template

logger = get_logger("study")

NORMS = ("temperature_l2", "temperature_h1", "temperature_gamma", "velocity_gamma", "radius_gamma")
CUT_OFFSETS = (0.0, 0.1, 0.25, 0.49)


class ManufacturedObserver:
    """Per-step errors against the exact solution.

    The temperature at ``t_{n+1}`` and the speed are compared on the geometry
    of ``t_n`` they were computed on; the interface radius is compared with
    ``R(t_n)``.
    """

    def __init__(self, case: ManufacturedCase) -> None:
        self.case = case
        self.report = ErrorReport()
        self.series: List[Dict[str, float]] = []

    def __call__(self, step: StepState) -> None:
        case = self.case
        geometry, v_n = step["geometry"], step["normal_speed"]
        t_n, t1 = step["state"].t, step["next_state"].t
        norms = error_norms(
            step["temperature"],
            lambda x: case.temperature(x, t1),
            lambda x: case.temperature_gradient(x, t1),
            geometry,
        )
        v_exact, r_exact = case.normal_speed(t1), float(radius(t_n))
        velocity = interface_error(geometry, lambda p, c: field_at(v_n, c, p), lambda p: np.full(p.shape[0], v_exact))
        rad = interface_error(geometry, lambda p, c: np.hypot(p[:, 0], p[:, 1]), lambda p: np.full(p.shape[0], r_exact))
        self.report.add(
            step["next_state"].step,
            t1,
            temperature_l2=norms["l2_omega"],
            temperature_h1=norms["h1_omega"],
            temperature_gamma=norms["l2_gamma"],
            velocity_gamma=velocity,
            radius_gamma=rad,
        )
        v_avg, r_avg = interface_averages(geometry, v_n)
        self.series.append({"t_n": t_n, "t": t1, "v_avg": v_avg, "v_exact": v_exact, "r_avg": r_avg, "r_exact": r_exact})


def manufactured_config(base: RunConfig, h: float, dt: float, **overrides: Any) -> RunConfig:
    if base.scenario != "manufactured":
        raise ConfigError([f"scenario: convergence studies need 'manufactured', got '{base.scenario}'"])
    return with_overrides(base, h=h, dt=dt, **overrides)


def run_manufactured(base: RunConfig, h: float, dt: float, **overrides: Any) -> Tuple[Dict[str, Any], pd.DataFrame]:
    """One manufactured run; failures come back as annotated rows instead of exceptions."""
    row: Dict[str, Any] = {"h": h, "dt": dt, "status": "ok"}
    config = manufactured_config(base, h, dt, **overrides)
    problem = build_problem(config)
    observer = ManufacturedObserver(problem.case)
    try:
        result = Simulation(problem, observers=[observer], write_outputs=False).run()
    except StefanError as exc:
        logger.error("study_run_failed", h=h, dt=dt, error=str(exc))
        row["status"] = f"failed: {exc}"
        return row, pd.DataFrame(observer.series)
    row.update(observer.report.aggregate())
    row["steps"] = int(result.steps.shape[0])
    series = pd.DataFrame(observer.series)
    if not series.empty:
        row["max_radius_error"] = float(np.max(np.abs(series["r_avg"] - series["r_exact"])))
        row["max_velocity_error"] = float(np.max(np.abs(series["v_avg"] - series["v_exact"])))
    row["final_temperature"] = result.final.T
    row["final_geometry"] = result.last_step["geometry"] if result.last_step else None
    return row, series


def observed_order(x: Sequence[float], y: Sequence[float], last: int = 3) -> float:
    """Least-squares slope of log y against log x over the ``last`` finest points."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    ok = np.isfinite(x) & np.isfinite(y) & (x > 0) & (y > 0)
    x, y = x[ok], y[ok]
    if x.size < 2:
        return float("nan")
    order = np.argsort(x)[:last]
    return float(np.polyfit(np.log(x[order]), np.log(y[order]), 1)[0])


def fit_orders(table: pd.DataFrame) -> pd.DataFrame:
    rows: List[Dict[str, Any]] = []
    ok = table[table["status"] == "ok"]
    for axis, fixed in (("h", "dt"), ("dt", "h")):
        for value, group in ok.groupby(fixed):
            if group[axis].nunique() < 3:
                continue
            row = {"axis": axis, fixed: value, "points": int(group.shape[0])}
            for norm in NORMS:
                if norm in group:
                    row[norm] = observed_order(group[axis], group[norm])
            rows.append(row)
    return pd.DataFrame(rows)


@dataclass
class StudyResult:
    table: pd.DataFrame
    orders: pd.DataFrame
    series: Dict[Tuple[float, float], pd.DataFrame] = field(default_factory=dict)
    files: List[str] = field(default_factory=list)


def _plot_errors(table: pd.DataFrame, axis: str, out_dir: str) -> Optional[str]:
    ok = table[table["status"] == "ok"]
    if ok[axis].nunique() < 2:
        return None
    plt.figure()
    for norm in NORMS:
        if norm in ok:
            data = ok.sort_values(axis)
            plt.loglog(data[axis], data[norm], marker="o", label=norm)
    plt.xlabel(axis)
    plt.ylabel("relative error (l2 in time)")
    plt.title(f"Convergence in {axis}")
    plt.legend()
    out = os.path.join(out_dir, f"convergence_{axis}.png")
    plt.tight_layout()
    plt.savefig(out)
    plt.close()
    return out


def _plot_series(series: Dict[Tuple[float, float], pd.DataFrame], out_dir: str) -> Optional[str]:
    if not series:
        return None
    fig, (ax_v, ax_r) = plt.subplots(1, 2, figsize=(10, 4))
    for (h, dt), frame in sorted(series.items()):
        if frame.empty:
            continue
        ax_v.plot(frame["t"], frame["v_avg"], label=f"h={h:.4g}, dt={dt:.1e}")
        ax_r.plot(frame["t_n"], frame["r_avg"], label=f"h={h:.4g}, dt={dt:.1e}")
    t = np.linspace(*ax_v.get_xlim(), 50)
    t = t[t < 2.0 / 3.0]
    ax_v.plot(t, -alpha(t), "k--", label="exact")
    ax_r.plot(t, radius(t), "k--", label="exact")
    ax_v.set_xlabel("t")
    ax_v.set_ylabel("v_avg")
    ax_r.set_xlabel("t")
    ax_r.set_ylabel("r_avg")
    ax_v.legend(fontsize=7)
    out = os.path.join(out_dir, "interface_averages.png")
    fig.tight_layout()
    fig.savefig(out)
    plt.close(fig)
    return out


def write_report(result: StudyResult, out_dir: str, plots: List[str], html: bool = False) -> List[str]:
    table = result.table.drop(columns=["final_temperature", "final_geometry"], errors="ignore")
    md = render_template(
        "convergence_report.md.j2",
        {
            "title": "Manufactured solution convergence",
            "generated_at": datetime.now().isoformat(timespec="seconds"),
            "columns": list(table.columns),
            "rows": table.to_dict(orient="records"),
            "order_columns": list(result.orders.columns),
            "orders": result.orders.to_dict(orient="records"),
            "plots": [os.path.basename(p) for p in plots],
        },
    )
    md_path = os.path.join(out_dir, "report.md")
    with open(md_path, "w", encoding="utf-8") as f:
        f.write(md)
    files = [md_path]
    if html:
        files.append(convert_markdown_to_html(md_path, os.path.join(out_dir, "report.html"), "Convergence report"))
    return files


def convergence_study(
        base: RunConfig,
        h_values: Sequence[float],
        dt_values: Sequence[float],
        out_dir: Optional[str] = None,
        n_jobs: int = 1,
        html: bool = False,
        **overrides: Any,
) -> StudyResult:
    """Run every (h, dt) pair, aggregate errors in time and fit observed orders."""
    if len(h_values) < 3 and len(dt_values) < 3:
        raise ConfigError(["study: need at least three mesh sizes or three time steps to fit an order"])
    pairs = [(float(h), float(dt)) for h in h_values for dt in dt_values]
    logger.info("study_started", runs=len(pairs), n_jobs=n_jobs)
    outcomes = Parallel(n_jobs=n_jobs)(delayed(run_manufactured)(base, h, dt, **overrides) for h, dt in pairs)

    table = pd.DataFrame([row for row, _ in outcomes])
    result = StudyResult(table=table, orders=fit_orders(table), series={p: s for p, (_, s) in zip(pairs, outcomes)})
    logger.info("study_finished", failed=int((table["status"] != "ok").sum()),
                orders=result.orders.to_dict(orient="records"))
    if out_dir is None:
        return result

    os.makedirs(out_dir, exist_ok=True)
    csv_table = table.drop(columns=["final_temperature", "final_geometry"], errors="ignore")
    result.files.append(os.path.join(out_dir, "convergence.csv"))
    csv_table.to_csv(result.files[-1], index=False)
    result.files.append(os.path.join(out_dir, "orders.csv"))
    result.orders.to_csv(result.files[-1], index=False)
    for (h, dt), frame in result.series.items():
        path = os.path.join(out_dir, f"series_h{h:.6g}_dt{dt:.3g}.csv")
        frame.to_csv(path, index=False)
        result.files.append(path)
    plots = [p for p in (_plot_errors(table, "h", out_dir), _plot_errors(table, "dt", out_dir),
                         _plot_series(result.series, out_dir)) if p]
    result.files.extend(plots)
    result.files.extend(write_report(result, out_dir, plots, html=html))
    return result


def variant_cross_check(base: RunConfig, h: float, dt: float, n_jobs: int = 1) -> pd.DataFrame:
    """Pairwise relative L2 differences between the final temperatures of the four variants."""
    variants = sorted(VARIANTS)
    outcomes = Parallel(n_jobs=n_jobs)(
        delayed(run_manufactured)(base, h, dt, theta1=t1, theta2=t2) for t1, t2 in variants
    )
    rows: List[Dict[str, Any]] = []
    for (i, a), (j, b) in combinations(enumerate(variants), 2):
        ra, rb = outcomes[i][0], outcomes[j][0]
        row: Dict[str, Any] = {"variant_a": str(a), "variant_b": str(b)}
        if ra["status"] != "ok" or rb["status"] != "ok":
            row["difference"] = float("nan")
        else:
            row["difference"] = field_difference(
                ra["final_geometry"], ra["final_temperature"], rb["final_temperature"]
            ).value
        row["error_a"] = ra.get("temperature_l2", float("nan"))
        row["error_b"] = rb.get("temperature_l2", float("nan"))
        rows.append(row)
    return pd.DataFrame(rows)


def poisson_nitsche_matrix(h: float, offset: float, ghost: bool = True, gamma_T: float = 0.1,
                           gamma_b: float = 100.0) -> sp.csr_matrix:
    """Laplacian on the unit square below a flat interface with Nitsche Dirichlet data on it.

    The interface sits ``offset * h`` above a grid line near mid height.
    """
    n = int(round(1.0 / h))
    mesh = build_structured((0.0, 1.0, 0.0, 1.0), n, n)
    level = (n // 2) / n + offset / n
    phi = LevelSetField.from_function(mesh, lambda x: x[:, 1] - level)
    geometry = build_cut_geometry(phi)
    space = p1_active(mesh, geometry.active_cells)
    h_max = mesh.h_max
    tr = interface_traces(geometry, space)
    matrix = (
            assemble_bulk(geometry, space, BulkKernel(stiffness=1.0))
            - assemble_interface(tr, trial=(0.0, 1.0), test=(1.0, 0.0))
            - assemble_interface(tr, trial=(1.0, 0.0), test=(0.0, 1.0))
            + assemble_interface(tr, coefficient=gamma_b / h_max)
    )
    if ghost:
        matrix = matrix + assemble_ghost_penalty(geometry, space, gamma_T * h_max)
    return matrix.tocsr()


def conditioning_spread(frame: pd.DataFrame, column: str) -> float:
    """Ratio of the largest to the smallest condition estimate in ``column``."""
    values = frame[column].to_numpy(dtype=float)
    return float(values.max() / values.min())


def cut_position_study(h: float, offsets: Sequence[float] = CUT_OFFSETS) -> pd.DataFrame:
    """Condition estimates with and without the ghost penalty as the interface slides through a cell row."""
    rows = []
    for offset in offsets:
        row: Dict[str, Any] = {"h": h, "offset": offset}
        for ghost in (True, False):
            try:
                kappa = condition_estimate(poisson_nitsche_matrix(h, offset, ghost=ghost))
            except SolverError:
                kappa = float("inf")
            row["kappa_ghost" if ghost else "kappa_plain"] = kappa
        rows.append(row)
    frame = pd.DataFrame(rows)
    logger.info("cut_position_study", h=h, spread_ghost=conditioning_spread(frame, "kappa_ghost"),
                spread_plain=conditioning_spread(frame, "kappa_plain"))
    return frame
