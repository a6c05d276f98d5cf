"""Command-line entry point: ``cxsmc {propagate,optimize,simulate,verify}``.

Exit codes: 0 success, 2 validation error, 3 infeasible plan, 4 mission failure,
5 audit violation.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from importlib import metadata
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .dynamics import chaser_derivative, target_derivative, ZERO_CONTROL
from .errors import ConfigError, CxsmcError, InfeasiblePlanError, InvalidArgumentError, MissionFailure
from .guidance import EPS_FEAS, ImpulsePlan
from .integrator import IntegratorConfig, propagate
from .lyapunov import audit_trajectory
from .mission import MissionPhase, initial_states, plan_long_range, run_mission
from .missionlog import MissionLog

EXIT_OK, EXIT_VALIDATION, EXIT_INFEASIBLE, EXIT_MISSION, EXIT_AUDIT = 0, 2, 3, 4, 5

log = logging.getLogger("cxsmc")


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    """Provenance of one command. Timestamps make this the only non-reproducible file."""

    command: str
    config_hash: str = ""
    seed: int = 0
    toolkit_version: str = field(default_factory=_version)
    started: str = field(default_factory=_now)
    finished: str = ""
    outputs: list = field(default_factory=list)

    def write(self, directory: Path):
        self.finished = _now()
        path = Path(directory) / "manifest.json"
        path.write_text(json.dumps(asdict(self), indent=2) + "\n")
        return path


def _dump_json(obj, path: Path):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")
    return path


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    raise TypeError(type(o).__name__)


def _load(args):
    cfg = cfgmod.load_scenario(args.scenario)
    return cfgmod.apply_overrides(cfg, args.seed, args.step_override, args.disturbance)


# -- propagate -------------------------------------------------------------------

PROPAGATE_COLUMNS = (
    ["t"] + [f"p_{a}" for a in "xyz"] + [f"v_{a}" for a in "xyz"]
    + [f"B_{i}{j}" for i in range(3) for j in range(3)] + [f"omega_{a}" for a in "xyz"]
)


def cmd_propagate(args) -> int:
    cfg = _load(args)
    chaser, target = initial_states(cfg)
    if args.body == "chaser":
        s0, bp = chaser, cfg.chaser_params
        f = lambda t, s: chaser_derivative(s, bp, ZERO_CONTROL, cfg.env, t)
    else:
        s0, bp = target, cfg.target_params
        f = lambda t, s: target_derivative(s, bp, cfg.env, t)
    if args.duration < 0:
        raise ConfigError("duration must be non-negative", "--duration")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    step = cfg.long_range_step
    stride = max(1, int(round(args.sample / step)))
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PROPAGATE_COLUMNS)
        if args.duration > 0:
            traj = propagate(f, s0, 0.0, args.duration, IntegratorConfig(step, cfg.attitude_update), stride=stride)
            for t, s in zip(traj.times, traj.states):
                row = np.r_[t, s.p, s.v, np.asarray(s.B).ravel(), s.omega]
                w.writerow([format(float(x), ".17g") for x in row])
    return EXIT_OK


# -- optimize --------------------------------------------------------------------


def cmd_optimize(args) -> int:
    cfg = _load(args)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    try:
        plan = plan_long_range(cfg)
    except InfeasiblePlanError as e:
        if e.best_plan is not None:
            e.best_plan.to_json(out)
        print(f"infeasible: worst margins {json.dumps(e.worst_margins, default=_json_default)}", file=sys.stderr)
        return EXIT_INFEASIBLE
    plan.metadata["config_hash"] = cfg.config_hash()
    plan.to_json(out)
    print(f"total dv {plan.total_dv:.4f} m/s, J = {plan.objective:.4f} (m/s)^2")
    return EXIT_OK


# -- simulate --------------------------------------------------------------------

PLOT_SERIES = {
    # file: (description, columns taken from the log)
    "trajectory_chaser.dat": "t [s], chaser position x y z [km] (inertial)",
    "trajectory_target.dat": "t [s], target position x y z [km] (inertial)",
    "relative_position.dat": "t [s], chaser-minus-target position in target body axes [m]",
    "relative_velocity.dat": "t [s], chaser-minus-target velocity in target body axes [m/s]",
    "relative_speed.dat": "t [s], relative speed [m/s]",
    "euler_angles.dat": "t [s], relative attitude phi theta psi [rad] (Z-Y-X, unwrapped)",
    "relative_angular_velocity.dat": "t [s], relative angular velocity in chaser axes [rad/s]",
    "control_force.dat": "t [s], control force in chaser axes [N]",
    "control_torque.dat": "t [s], control torque in chaser axes [N m]",
}


def plot_data(mlog: MissionLog) -> dict:
    t = mlog.t
    Bt = mlog.target_B
    d_t = np.einsum("nji,nj->ni", Bt, mlog.d)
    w_t = np.einsum("nji,nj->ni", Bt, mlog.w)
    return {
        "trajectory_chaser.dat": np.column_stack([t, mlog.chaser_p / 1000.0]),
        "trajectory_target.dat": np.column_stack([t, mlog.target_p / 1000.0]),
        "relative_position.dat": np.column_stack([t, d_t]),
        "relative_velocity.dat": np.column_stack([t, w_t]),
        "relative_speed.dat": np.column_stack([t, np.linalg.norm(mlog.w, axis=1)]),
        "euler_angles.dat": np.column_stack([t, mlog.euler]),
        "relative_angular_velocity.dat": np.column_stack([t, mlog.rel_omega]),
        "control_force.dat": np.column_stack([t, mlog.force]),
        "control_torque.dat": np.column_stack([t, mlog.torque]),
    }


def write_outputs(outdir: Path, mlog: MissionLog, summary: dict, plan, strides, manifest: RunManifest):
    outdir.mkdir(parents=True, exist_ok=True)
    dec = mlog.decimate({i: s for i, s in enumerate(strides)})
    dec.to_csv(outdir / "mission_log.csv")
    manifest.outputs.append("mission_log.csv")
    _dump_json(summary, outdir / "summary.json")
    manifest.outputs.append("summary.json")
    if plan is not None:
        plan.to_json(outdir / "plan.json")
        manifest.outputs.append("plan.json")
    pdir = outdir / "plots"
    pdir.mkdir(exist_ok=True)
    for name, arr in plot_data(dec).items():
        np.savetxt(pdir / name, arr, fmt="%.17g", header=PLOT_SERIES[name])
        manifest.outputs.append(f"plots/{name}")


def _simulate_one(scenario, plan_path, outdir, seed, step, disturbance) -> int:
    cfg = cfgmod.apply_overrides(cfgmod.load_scenario(scenario), seed, step, disturbance)
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest("simulate", cfg.config_hash(), cfg.seed)
    plan = ImpulsePlan.from_json(plan_path) if plan_path else None
    try:
        res = run_mission(cfg, plan)
        code = EXIT_OK
        mlog, summary, plan = res.log, res.summary, res.plan
    except InfeasiblePlanError as e:
        print(f"infeasible: worst margins {e.worst_margins}", file=sys.stderr)
        manifest.write(outdir)
        return EXIT_INFEASIBLE
    except MissionFailure as e:
        print(f"mission failure: {e}", file=sys.stderr)
        mlog, summary, code = e.log, dict(e.summary or {}), EXIT_MISSION
        summary["failure"] = str(e)
    write_outputs(outdir, mlog, summary, plan, cfg.log_strides, manifest)
    manifest.write(outdir)
    return code


def cmd_simulate(args) -> int:
    if args.sweep:
        scenarios = [args.scenario] + list(args.sweep)
        out = Path(args.out)
        with ProcessPoolExecutor(max_workers=args.workers) as ex:
            futs = [ex.submit(_simulate_one, s, None, out / Path(s).stem, args.seed, args.step_override,
                              args.disturbance) for s in scenarios]
            codes = [f.result() for f in futs]
        return max(codes)
    cfgmod.load_scenario(args.scenario)  # validate before any work
    return _simulate_one(args.scenario, args.plan, args.out, args.seed, args.step_override, args.disturbance)


# -- verify ----------------------------------------------------------------------


def verify_log(mlog: MissionLog, gains, bp_c) -> dict:
    """Certificate audit plus constraint re-check over the closed-loop samples."""
    cl = mlog.closed_loop
    out = {"n_samples": len(mlog), "n_closed_loop": int(cl.sum())}
    violations = []
    if cl.sum() >= 2:
        rep = audit_trajectory(mlog.select(cl), gains, bp_c)
        out["certificates"] = rep.to_dict()
        if not rep.ok:
            violations.append("lyapunov")
        for name in ("cone_margin", "fov_margin"):
            m = getattr(mlog, name)[cl]
            bad = np.nonzero(m < -EPS_FEAS)[0]
            out[name] = {"min": float(m.min()), "n_violations": int(len(bad)),
                         "first_violation_t": float(mlog.t[cl][bad[0]]) if len(bad) else None}
            if len(bad):
                violations.append(name)
    lr = mlog.phase == int(MissionPhase.LongRangeRendezvous)
    if lr.any():
        m = mlog.keep_out_margin[lr]
        out["keep_out_margin"] = {"min": float(m.min()), "n_violations": int(np.sum(m < -EPS_FEAS))}
        if np.any(m < -EPS_FEAS):
            violations.append("keep_out_margin")
    out["violations"] = violations
    out["ok"] = not violations
    return out


def cmd_verify(args) -> int:
    logdir = Path(args.logdir)
    path = logdir / "mission_log.csv" if logdir.is_dir() else logdir
    if not path.is_file():
        raise ConfigError("no mission log found", str(path))
    mlog = MissionLog.from_csv(path)
    scen = args.scenario
    cfg = cfgmod.load_scenario(scen) if scen else cfgmod.scenario_from_document({})
    report = verify_log(mlog, cfg.gains, cfg.chaser_params)
    target = (logdir if logdir.is_dir() else logdir.parent) / "audit.json"
    _dump_json(report, target)
    if not report["ok"]:
        cert = report.get("certificates", {})
        for v in cert.get("reaching_violations", [])[:10]:
            print(f"V1 increase at step {v['index']} (t = {v['t']:.3f} s)", file=sys.stderr)
        print(f"audit violations: {', '.join(report['violations'])}", file=sys.stderr)
        return EXIT_AUDIT
    return EXIT_OK


# -- entry point -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    common.add_argument("--step-override", type=float, default=None, help="proximity-phase integration step [s]")
    common.add_argument("--disturbance", choices=["zero", "constant", "sinusoidal"], default=None)
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="cxsmc", description="Satellite rendezvous and docking toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("propagate", parents=[common], help="ballistic propagation of one body")
    sp.add_argument("scenario")
    sp.add_argument("--body", choices=["chaser", "target"], default="target")
    sp.add_argument("--duration", type=float, required=True, help="seconds")
    sp.add_argument("--sample", type=float, default=60.0, help="output spacing [s]")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_propagate)

    sp = sub.add_parser("optimize", parents=[common], help="optimize the long-range impulse plan")
    sp.add_argument("scenario")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_optimize)

    sp = sub.add_parser("simulate", parents=[common], help="run the full mission")
    sp.add_argument("scenario")
    sp.add_argument("--plan", default=None, help="use a stored plan instead of optimizing")
    sp.add_argument("--out", required=True, help="output directory")
    sp.add_argument("--sweep", nargs="*", default=None, help="additional scenarios run in parallel")
    sp.add_argument("--workers", type=int, default=None)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("verify", help="audit a stored mission log")
    sp.add_argument("logdir", help="simulate output directory or a mission_log.csv")
    sp.add_argument("--scenario", default=None, help="scenario used for the gains (default scenario otherwise)")
    sp.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING)
    for name in ("seed", "step_override", "disturbance"):
        if not hasattr(args, name):
            setattr(args, name, None)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except (InvalidArgumentError, CxsmcError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
