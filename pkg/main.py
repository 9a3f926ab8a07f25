from __future__ import annotations

import argparse
import os
import sys
from typing import Any, Dict, List, Optional, Tuple

from dotenv import load_dotenv
from threadpoolctl import threadpool_limits

from benchmark.ablation import CavityMetrics, analyse_cavity, write_comparison
from benchmark.study import convergence_study, cut_position_study, variant_cross_check
from core.config import RunConfig, load_config, with_overrides
from core.exceptions import ConfigError, StefanError, StepError
from core.scenarios import build_problem
from core.simulation import Simulation
from core.snapshot import load_snapshot
from fem.geometry import build_cut_geometry
from utils.log import configure_logging, get_logger
from utils.utils import ensure_dirs, parse_number_list

load_dotenv()

CONFIG_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "configs")

logger = get_logger("cli")


def _add_overrides(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=str, help="YAML run configuration")
    p.add_argument("--tf", type=float, help="Final time")
    p.add_argument("--output-dir", type=str, help="Output directory (default: config or STEFAN_OUTPUT_DIR)")
    p.add_argument("--theta1", type=int, help="Nitsche variant, first index")
    p.add_argument("--theta2", type=int, help="Nitsche variant, second index")
    p.add_argument("--gamma-hat", type=float, help="Interface penalty scale (gamma = gamma_hat * h)")
    p.add_argument("--gamma-T", dest="gamma_T", type=float, help="Ghost penalty for the temperature")
    p.add_argument("--gamma-b", dest="gamma_b", type=float, help="Outer Dirichlet Nitsche penalty")
    p.add_argument("--gamma-GT", dest="gamma_GT", type=float, help="Ghost penalty for the gradient projection")


def _overrides(args: argparse.Namespace, **extra: Any) -> Dict[str, Any]:
    return {
        "tf": args.tf,
        "output_dir": args.output_dir,
        "theta1": args.theta1,
        "theta2": args.theta2,
        "gamma_hat": args.gamma_hat,
        "gamma_T": args.gamma_T,
        "gamma_b": args.gamma_b,
        "gamma_GT": args.gamma_GT,
        **extra,
    }


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="CutFEM Stefan-Signorini laser ablation solver")
    parser.add_argument("--log-level", type=str, default=None, help="DEBUG, INFO, WARNING or ERROR")
    sub = parser.add_subparsers(dest="command", required=True)

    bench = sub.add_parser("bench-manufactured", help="Convergence study on the manufactured hole problem")
    _add_overrides(bench)
    bench.add_argument("--h", type=str, default="1/20,1/40,1/80", help="Comma separated mesh sizes")
    bench.add_argument("--dt", type=str, default="1e-4", help="Comma separated time steps")
    bench.add_argument("--jobs", type=int, default=1, help="Parallel runs")
    bench.add_argument("--html", action="store_true", help="Also write a standalone HTML report")
    bench.add_argument("--variants", action="store_true", help="Cross-check the four Nitsche variants on the first h")
    bench.add_argument("--cut-study", action="store_true", help="Condition numbers against the cut position")

    ablate = sub.add_parser("ablate2d", help="2D laser ablation run")
    _add_overrides(ablate)
    ablate.add_argument("--h", type=str, help="Mesh size")
    ablate.add_argument("--dt", type=str, help="Time step")
    ablate.add_argument("--every", type=int, help="Write outputs every N steps")
    ablate.add_argument("--restart", type=str, help="Resume from a JSON state snapshot")
    ablate.add_argument("--show-graph", action="store_true", help="Print the per-step stage graph before running")
    ablate.add_argument("--compare", type=str, help="Second config to run with the same overrides; writes comparison.csv")

    validate = sub.add_parser("validate-config", help="Validate configuration files without running")
    validate.add_argument("configs", nargs="+", help="YAML files")
    return parser


def _load(path: Optional[str], default: str) -> RunConfig:
    return load_config(path or os.path.join(CONFIG_DIR, default))


def _single(text: Optional[str]) -> Optional[float]:
    if text is None:
        return None
    values = parse_number_list(text)
    if len(values) != 1:
        raise ConfigError([f"expected one value, got '{text}'"])
    return values[0]


def cmd_bench(args: argparse.Namespace) -> int:
    base = with_overrides(_load(args.config, "manufactured.yaml"), **_overrides(args))
    h_values, dt_values = parse_number_list(args.h), parse_number_list(args.dt)
    out_dir = ensure_dirs(os.path.join(base.output.directory, base.name))["out_root"]
    result = convergence_study(base, h_values, dt_values, out_dir=out_dir, n_jobs=args.jobs, html=args.html)
    print(result.table.drop(columns=["final_temperature", "final_geometry"], errors="ignore").to_string(index=False))
    if not result.orders.empty:
        print("\nObserved orders:")
        print(result.orders.to_string(index=False))
    if args.variants:
        frame = variant_cross_check(base, h_values[0], dt_values[0], n_jobs=args.jobs)
        frame.to_csv(os.path.join(out_dir, "variants.csv"), index=False)
        print("\nVariant differences:")
        print(frame.to_string(index=False))
    if args.cut_study:
        frame = cut_position_study(min(h_values))
        frame.to_csv(os.path.join(out_dir, "cut_position.csv"), index=False)
        print("\nCondition estimates:")
        print(frame.to_string(index=False))
    print(f"\nResults written to: {out_dir}")
    return 0 if (result.table["status"] == "ok").all() else 1


def _ablate_once(
        config: RunConfig,
        show_graph: bool = False,
        restart: Optional[str] = None,
) -> Tuple[CavityMetrics, str]:
    """Run one ablation config to its final time; returns the cavity metrics and the output directory."""
    problem = build_problem(config)
    sim = Simulation(problem)
    if show_graph:
        sim.orchestrator.print_ascii()
    state = load_snapshot(restart, problem.mesh) if restart else None
    final = sim.run(state).final
    geometry = build_cut_geometry(final.phi, dirichlet=problem.dirichlet, max_walk=None)
    level = config.levelset.point[1] if config.levelset.kind == "plane" else float(problem.mesh.bounds[3])
    metrics, _ = analyse_cavity(geometry, level, out_dir=sim.output_dir)
    print(f"{problem.name}: finished at t={final.t:.6g} after {final.step} steps")
    print(f"Cavity depth {metrics.depth:.4g}, floor roughness {metrics.roughness:.4g}")
    print(f"Outputs written to: {sim.output_dir}")
    return metrics, sim.output_dir


def cmd_ablate(args: argparse.Namespace) -> int:
    overrides = _overrides(args, h=_single(args.h), dt=_single(args.dt), every=args.every)
    configs = [with_overrides(_load(args.config, "ablate2d_p0_1.yaml"), **overrides)]
    if args.compare:
        if args.restart:
            raise ConfigError(["--restart cannot be combined with --compare"])
        configs.append(with_overrides(load_config(args.compare), **overrides))
        if configs[0].name == configs[1].name:
            raise ConfigError([f"compared runs share the name '{configs[0].name}'"])
    runs: Dict[str, CavityMetrics] = {}
    for config in configs:
        try:
            runs[config.name], _ = _ablate_once(config, args.show_graph, args.restart)
        except StepError as exc:
            print(f"Run aborted: {exc}", file=sys.stderr)
            return 1
    if args.compare:
        frame = write_comparison(runs, configs[0].output.directory)
        row = frame.iloc[0]
        print(f"Depth mismatch {row['depth_mismatch']:.3g}, roughness ratio {row['roughness_ratio']:.3g}")
    return 0


def cmd_validate(args: argparse.Namespace) -> int:
    failed = False
    for path in args.configs:
        try:
            config = load_config(path)
            build_problem(config)
        except ConfigError as exc:
            failed = True
            print(f"{path}: INVALID")
            for message in exc.messages:
                print(f"  - {message}")
            continue
        print(f"{path}: OK ({config.scenario}, h={config.domain.h}, dt={config.time.dt})")
    return 1 if failed else 0


COMMANDS = {
    "bench-manufactured": cmd_bench,
    "ablate2d": cmd_ablate,
    "validate-config": cmd_validate,
}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    threads = os.getenv("STEFAN_NUM_THREADS")
    try:
        with threadpool_limits(limits=int(threads) if threads else None):
            return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    except StefanError as exc:
        logger.error("failed", command=args.command, error=str(exc))
        print(f"Error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
