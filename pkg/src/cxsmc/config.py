"""Scenario files: JSON documents validated against the shipped schema.

Angles in scenario files are degrees; :func:`deg` is the single place where they
become radians.
"""

from __future__ import annotations

import copy
import json
from dataclasses import replace
from importlib import resources

import jsonschema
import numpy as np

from . import astro
from .controller import GainSet, SaturationLimits
from .dynamics import BodyParams
from .errors import ConfigError, CxsmcError
from .guidance import ConstraintSet, OptimizerSettings
from .mission import ScenarioConfig

SCHEMA_ID = "cxsmc-scenario/1"


def deg(x):
    """Degrees to radians (scalar or sequence)."""
    return np.radians(np.asarray(x, dtype=float))


def load_schema() -> dict:
    return json.loads(resources.files("cxsmc.data").joinpath("scenario.schema.json").read_text())


def default_scenario_document() -> dict:
    return json.loads(resources.files("cxsmc.data").joinpath("default_scenario.json").read_text())


def _key_path(err: jsonschema.ValidationError) -> str:
    path = ".".join(str(p) for p in err.absolute_path)
    if err.validator == "additionalProperties":
        extra = [k for k in err.instance if k not in err.schema.get("properties", {})]
        if extra:
            path = ".".join(filter(None, [path, extra[0]]))
    elif err.validator == "required":
        missing = [k for k in err.validator_value if k not in err.instance]
        if missing:
            path = ".".join(filter(None, [path, missing[0]]))
    return path or "<root>"


def validate_document(doc) -> None:
    if not isinstance(doc, dict):
        raise ConfigError("scenario must be a JSON object", "<root>")
    v = jsonschema.Draft202012Validator(load_schema())
    errors = sorted(v.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        raise ConfigError(e.message, _key_path(e))


def parse_text(text: str) -> dict:
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON at line {e.lineno}, column {e.colno}: {e.msg}", "<file>") from e


def load_document(path) -> dict:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as e:
        raise ConfigError(str(e), "<file>") from e
    return parse_text(text)


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _elements(d) -> astro.OrbitalElements:
    return astro.OrbitalElements(
        d["semi_major_axis_km"], d["eccentricity"],
        *deg([d["inclination_deg"], d["raan_deg"], d["arg_periapsis_deg"], d["true_anomaly_deg"]]),
    )


def _disturbance(d) -> astro.DisturbanceModel:
    return astro.DisturbanceModel(d["kind"], tuple(d["amplitude"]), tuple(d["period_s"]))


def _unit(v, key):
    v = np.asarray(v, float)
    n = np.linalg.norm(v)
    if n == 0:
        raise ConfigError("docking axis must be non-zero", key)
    return tuple(v / n)


def scenario_from_document(doc: dict) -> ScenarioConfig:
    """Validate ``doc`` (defaults filled in) and build a :class:`ScenarioConfig`."""
    validate_document(doc)
    d = _merge(default_scenario_document(), doc)
    validate_document(d)
    try:
        return _build(d)
    except ConfigError:
        raise
    except (CxsmcError, ValueError) as e:
        raise ConfigError(str(e), _guess_section(str(e))) from e


def _guess_section(msg: str) -> str:
    for section in ("chaser", "target", "controller", "constraints", "environment", "integrator", "optimizer",
                    "mission"):
        if section in msg:
            return section
    return "<scenario>"


def _build(d: dict) -> ScenarioConfig:
    ch, tg = d["chaser"], d["target"]
    bodies = []
    for name, b in (("chaser", ch), ("target", tg)):
        try:
            bodies.append(BodyParams(b["mass_kg"], np.array(b["inertia_kgm2"], float)))
        except CxsmcError as e:
            raise ConfigError(str(e), f"{name}.inertia_kgm2") from e
    ctl = d["controller"]
    sat = ctl["saturation"]
    con = d["constraints"]
    constraints = ConstraintSet(
        r_min=con["r_min_m"], alpha_cone=float(deg(con["cone_half_angle_deg"])),
        alpha_fov=float(deg(con["fov_half_angle_deg"])),
        docking_axis_target=_unit(con["docking_axis_target"], "constraints.docking_axis_target"),
        docking_axis_chaser=_unit(con["docking_axis_chaser"], "constraints.docking_axis_chaser"),
        v_mid=con["v_mid_mps"], v_final=con["v_final_mps"], mid_range_outer=con["mid_range_outer_m"],
        mid_range_inner=con["mid_range_inner_m"], dv_bound=con["dv_bound_mps"],
        per_axis_bound=con["per_axis_bound"], tol_v_fraction=con["velocity_tolerance_fraction"],
    )
    e = d["environment"]
    env = astro.EnvironmentParams(
        e["mu_km3s2"], e["j2"], e["earth_radius_km"],
        _disturbance(e["disturbance_force"]), _disturbance(e["disturbance_torque"]),
    )
    it = d["integrator"]
    o = d["optimizer"]
    opt = OptimizerSettings(
        n_impulses=o["n_impulses"], times=tuple(o["times_s"]) if o.get("times_s") else None,
        initial_guess=o["initial_guess"], grid_quantum=o["grid_quantum_s"], max_iter=o["max_iter"],
        trust_radius=o["trust_radius_mps"], max_thrust=o["max_thrust_n"], seed=d["seed"],
    )
    m = d["mission"]
    return ScenarioConfig(
        chaser_elements=_elements(ch["elements"]), target_elements=_elements(tg["elements"]),
        chaser_params=bodies[0], target_params=bodies[1],
        gains=GainSet(*(ctl[k] for k in ("lambda_p", "lambda_r", "mu_p", "mu_r", "k_p", "k_r"))),
        limits=SaturationLimits(sat["max_force_n"], sat["max_torque_nm"], sat["enabled"]),
        log_rate=ctl["log_rate"], cross_term=ctl["cross_term"],
        constraints=constraints, env=env,
        long_range_step=it["long_range_step_s"], proximity_step=it["proximity_step_s"],
        attitude_update=it["attitude_update"], optimizer=opt,
        goal_position_tolerance=o["terminal_position_tolerance_m"],
        goal_velocity_tolerance=o["terminal_velocity_tolerance_mps"],
        transfer_time=m["transfer_time_s"], aim_range=m["aim_range_m"], port_offset=m["port_offset_m"],
        rendezvous_range=m["rendezvous_range_m"], terminal_range=m["terminal_range_m"],
        terminal_orientation=tuple(float(a) for a in deg(m["terminal_orientation_deg"])),
        reorientation_duration=m["reorientation_duration_s"], reorientation_lead=m["reorientation_lead_s"],
        speed_blend_duration=m["speed_blend_duration_s"], dock_velocity_factor=m["dock_velocity_factor"],
        dock_attitude_tol=m["dock_attitude_tolerance_rad"], phase_timeouts=tuple(m["phase_timeouts_s"]),
        log_strides=tuple(m["log_strides_s"]), seed=d["seed"],
    )


def load_scenario(path) -> ScenarioConfig:
    return scenario_from_document(load_document(path))


def canonical_text(doc: dict) -> str:
    """Canonical serialization of a fully defaulted scenario document."""
    return json.dumps(_merge(default_scenario_document(), doc), sort_keys=True, separators=(",", ":"))


def apply_overrides(cfg: ScenarioConfig, seed=None, step=None, disturbance=None) -> ScenarioConfig:
    """Command-line overrides; ``step`` replaces the proximity step."""
    kw = {}
    if seed is not None:
        kw["seed"] = seed
        kw["optimizer"] = replace(cfg.optimizer, seed=seed)
    if step is not None:
        kw["proximity_step"] = step
    if disturbance is not None:
        env = cfg.env
        force = astro.DisturbanceModel(disturbance, (1e-3,) * 3, (600.0,) * 3) if disturbance != "zero" \
            else astro.DisturbanceModel()
        torque = astro.DisturbanceModel(disturbance, (1e-5,) * 3, (600.0,) * 3) if disturbance != "zero" \
            else astro.DisturbanceModel()
        kw["env"] = replace(env, disturbance_force_model=force, disturbance_torque_model=torque)
    return replace(cfg, **kw) if kw else cfg
