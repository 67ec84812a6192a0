"""Scenario files: flat ``key = value`` configs and reference trajectories.

A scenario file is plain text with one ``key = value`` per line and
``#`` comments. Vectors are comma-separated; matrices separate rows with
``;``. Every key has a default, so an empty file is a valid scenario.
Units are SI (m, s, rad, kg).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import arm as arm_model
from .arm import ArmParameters
from .controller import ControllerGains, DesiredMotion, default_theta_grid
from .lie import RigidPose, SlamElement, Twist, se3_exp, so3_exp
from .observer import LandmarkMap, ObserverGains
from .sim import SimulationConfig


class ConfigError(ValueError):
    pass


def _fmt_float(x):
    return repr(float(x))


def _parse_float(s):
    return float(s)


def _parse_vec(s):
    s = s.strip()
    if not s:
        return ()
    return tuple(float(x) for x in s.split(","))


def _fmt_vec(v):
    return ", ".join(_fmt_float(x) for x in v)


def _parse_mat(s):
    s = s.strip()
    if not s:
        return ()
    return tuple(_parse_vec(row) for row in s.split(";"))


def _fmt_mat(m):
    return "; ".join(_fmt_vec(row) for row in m)


def _parse_auto(s):
    s = s.strip()
    return "auto" if s == "auto" else float(s)


def _fmt_auto(v):
    return "auto" if v == "auto" else _fmt_float(v)


def _parse_bool(s):
    s = s.strip().lower()
    if s in ("true", "yes", "1", "on"):
        return True
    if s in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_list(s):
    return tuple(x.strip() for x in s.split(",") if x.strip())


KINDS = {
    "float": (_parse_float, _fmt_float),
    "int": (int, str),
    "str": (str.strip, str),
    "bool": (_parse_bool, lambda b: "true" if b else "false"),
    "vec": (_parse_vec, _fmt_vec),
    "mat": (_parse_mat, _fmt_mat),
    "auto": (_parse_auto, _fmt_auto),
    "list": (_parse_list, lambda v: ", ".join(v)),
}


def _arm_default(name):
    p = ArmParameters()
    if name == "inertia":
        return tuple(tuple(I.ravel()) for I in p.inertia)
    v = getattr(p, name)
    if v.ndim == 2:
        return tuple(tuple(r) for r in v)
    return tuple(v)


def _cube(center, side):
    c = np.asarray(center, dtype=float)
    h = 0.5 * side
    return np.array([c + h * np.array([sx, sy, sz]) for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)]).T


# key -> (kind, default, comment)
SCHEMA = {
    "sim.dt": ("float", 1e-3, "base RK4 step (s)"),
    "sim.duration": ("float", 40.0, "horizon (s)"),
    "sim.record_every": ("int", 10, "trace row every N steps"),
    "sim.seed": ("int", 0, "RNG seed for measurement noise"),
    "sim.event_tol": ("float", 1e-6, "jump-time bisection tolerance (s)"),
    "sim.max_jumps_per_step": ("int", 4, "Zeno guard"),
    "arm.q0": ("vec", (0.2, 0.8, 1.2, 0.3, 0.9, 0.1), "initial joint angles (rad)"),
    "arm.qdot0": ("vec", (0.0,) * 6, "initial joint rates (rad/s)"),
    "arm.dh": ("mat", _arm_default("dh"), "rows a (m), alpha (rad), d (m), theta offset (rad)"),
    "arm.masses": ("vec", _arm_default("masses"), "link masses (kg)"),
    "arm.com": ("mat", _arm_default("com"), "link COM in link frame (m)"),
    "arm.inertia": ("mat", _arm_default("inertia"), "row-major 3x3 COM inertia per link (kg m^2)"),
    "arm.viscous": ("vec", _arm_default("viscous"), "viscous friction (N m s/rad)"),
    "arm.coulomb": ("vec", _arm_default("coulomb"), "Coulomb friction (N m)"),
    "arm.coulomb_eps": ("float", 1e-3, "tanh smoothing rate (rad/s)"),
    "arm.gravity": ("vec", (0.0, 0.0, -9.81), "gravity (m/s^2)"),
    "map.center": ("vec", (0.85, 0.0, 1.4), "landmark cube centre (m)"),
    "map.side": ("float", 3.0, "landmark cube side (m)"),
    "map.positions": ("mat", (), "explicit landmarks, one x,y,z row each; overrides the cube"),
    "observer.k_o": ("float", 100.0, "observer gain"),
    "observer.k_i": ("vec", (), "landmark weights; empty means 1/n each"),
    "observer.delta": ("auto", "auto", "jump hysteresis, or auto"),
    "observer.theta": ("float", float(np.pi / 2), "reset angle (rad)"),
    "observer.ell": ("vec", (0.0, 0.0, 1.0), "reset axis"),
    "observer.q_max": ("int", 3, "largest reset index"),
    "observer.p0": ("vec", (3.6, 1.0, 0.0), "initial position estimate (m)"),
    "observer.att_offset": ("vec", (0.0, 0.0, 0.0), "initial attitude estimate exp(a) R0, rotation vector (rad)"),
    "observer.landmark_offset": ("vec", (0.0, 0.0, 0.0), "offset added to every initial landmark estimate (m)"),
    "noise.sigma_range": ("float", 0.0, "range noise std (m)"),
    "noise.sigma_bearing": ("float", 0.0, "bearing noise std (unit-vector components)"),
    "controller.G_w": ("mat", tuple(tuple(200.0 * r) for r in np.eye(4)), "4x4 SPD weight"),
    "controller.g_d": ("float", 5.0, "damping"),
    "controller.jmath": ("vec", (0.0, 0.0, 1.0), "switching axis"),
    "controller.theta_grid": ("vec", tuple(default_theta_grid()), "switch angles (rad)"),
    "controller.delta_c": ("auto", "auto", "switch hysteresis, or auto for 0.02 tr(G_w)"),
    "controller.feedback": ("str", "estimate", "estimate or truth"),
    "trajectory.kind": ("str", "square", "hold, square or segments"),
    "trajectory.start": ("vec", (), "square start corner (m); empty means FK(q0)"),
    "trajectory.side": ("float", 0.5, "square side (m)"),
    "trajectory.speed": ("float", 0.05, "traversal speed (m/s)"),
    "trajectory.normal": ("vec", (0.0, 0.0, 1.0), "square plane normal"),
    "trajectory.first_edge": ("vec", (-1.0, 0.0, 0.0), "direction of the first edge"),
    "trajectory.segments": ("mat", (), "rows x,y,z, rx,ry,rz, wx,wy,wz, vx,vy,vz, duration"),
    "output.trace": ("str", "trace.csv", "trace file name"),
    "output.report": ("str", "report.txt", "report file name"),
    "monitors": ("list", ("jump_decrease", "pose_consistency", "linearization", "torque_realizable"),
                 "checks that decide the exit code"),
}


def defaults():
    return {k: v[1] for k, v in SCHEMA.items()}


def parse_config(text, source="<config>"):
    """Parse scenario text into a dict with every schema key filled in."""
    cfg = defaults()
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in seen:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        seen.add(key)
        try:
            cfg[key] = KINDS[SCHEMA[key][0]][0](value)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key}: {exc}") from None
    return cfg


def serialize_config(cfg):
    lines = []
    section = None
    for key, (kind, _, comment) in SCHEMA.items():
        head = key.split(".", 1)[0]
        if head != section:
            if section is not None:
                lines.append("")
            section = head
        lines.append(f"# {comment}")
        lines.append(f"{key} = {KINDS[kind][1](cfg[key])}")
    return "\n".join(lines) + "\n"


def load_config(path):
    try:
        with open(path) as f:
            text = f.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    return parse_config(text, str(path))


@dataclass(frozen=True, eq=False)
class TrajectorySpec:
    kind: str
    start: RigidPose
    side: float = 0.5
    speed: float = 0.05
    normal: np.ndarray = None
    first_edge: np.ndarray = None
    segments: tuple = ()


def generate_square(spec):
    """Four constant-twist segments tracing a square at fixed attitude.

    The square starts at ``spec.start``; edges run along ``first_edge``
    and then ``normal x first_edge``.
    """
    if spec.side <= 0:
        raise ValueError("square side must be positive")
    if spec.speed <= 0:
        raise ValueError("traversal speed must be positive")
    nrm = np.asarray(spec.normal, dtype=float)
    nrm = nrm / np.linalg.norm(nrm)
    e1 = np.asarray(spec.first_edge, dtype=float)
    e1 = e1 - (e1 @ nrm) * nrm
    if np.linalg.norm(e1) < 1e-9:
        raise ValueError("first edge is parallel to the plane normal")
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(nrm, e1)
    R = spec.start.rot
    duration = spec.side / spec.speed
    out = []
    p = spec.start.pos.copy()
    for d in (e1, e2, -e1, -e2):
        v_body = R.T @ (spec.speed * d)
        out.append(DesiredMotion(RigidPose(R, p.copy()), Twist(np.zeros(3), v_body), duration))
        p = p + spec.side * d
    return out


def build_segments(spec):
    """Reference segments including a final hold at the end of the path."""
    if spec.kind == "hold":
        return [DesiredMotion(spec.start, Twist.zero())]
    if spec.kind == "square":
        segs = generate_square(spec)
    elif spec.kind == "segments":
        if not spec.segments:
            raise ValueError("segment list is empty")
        segs = []
        for row in spec.segments:
            if len(row) != 13:
                raise ValueError("each segment row needs 13 numbers")
            if row[12] <= 0:
                raise ValueError("segment duration must be positive")
            pose = RigidPose(so3_exp(row[3:6]), row[0:3])
            segs.append(DesiredMotion(pose, Twist(row[6:9], row[9:12]), row[12]))
    else:
        raise ValueError(f"unknown trajectory kind {spec.kind!r}")
    last = segs[-1]
    end = RigidPose.from_matrix(last.x_d.matrix() @ se3_exp(last.duration * last.w_d.vector()))
    return segs + [DesiredMotion(end, Twist.zero())]


def _vec3(v, name):
    a = np.asarray(v, dtype=float)
    if a.shape != (3,):
        raise ConfigError(f"{name} needs 3 components")
    return a


def build_simulation(cfg, seed=None, duration=None):
    """Turn a parsed config dict into a SimulationConfig."""
    try:
        inertia = np.asarray(cfg["arm.inertia"], dtype=float).reshape(6, 3, 3)
        params = ArmParameters(
            dh=np.asarray(cfg["arm.dh"], dtype=float),
            masses=np.asarray(cfg["arm.masses"], dtype=float),
            com=np.asarray(cfg["arm.com"], dtype=float),
            inertia=inertia,
            viscous=np.asarray(cfg["arm.viscous"], dtype=float),
            coulomb=np.asarray(cfg["arm.coulomb"], dtype=float),
            gravity=np.asarray(cfg["arm.gravity"], dtype=float),
            coulomb_eps=cfg["arm.coulomb_eps"],
        )
        q0 = np.asarray(cfg["arm.q0"], dtype=float).reshape(6)
        qdot0 = np.asarray(cfg["arm.qdot0"], dtype=float).reshape(6)
        if cfg["map.positions"]:
            lmap = LandmarkMap(np.asarray(cfg["map.positions"], dtype=float).T)
        else:
            lmap = LandmarkMap(_cube(_vec3(cfg["map.center"], "map.center"), cfg["map.side"]))
        n = lmap.n
        k_i = np.asarray(cfg["observer.k_i"], dtype=float) if cfg["observer.k_i"] else np.full(n, 1.0 / n)
        auto_delta = cfg["observer.delta"] == "auto"
        obs = ObserverGains(
            k_i=np.broadcast_to(k_i, (n,)).copy(),
            k_o=cfg["observer.k_o"],
            delta=1e-2 if auto_delta else cfg["observer.delta"],
            theta=cfg["observer.theta"],
            ell=_vec3(cfg["observer.ell"], "observer.ell"),
            q_max=cfg["observer.q_max"],
        )
        ctrl = ControllerGains(
            G_w=np.asarray(cfg["controller.G_w"], dtype=float),
            g_d=cfg["controller.g_d"],
            jmath=_vec3(cfg["controller.jmath"], "controller.jmath"),
            theta_grid=np.asarray(cfg["controller.theta_grid"], dtype=float),
            delta_c=None if cfg["controller.delta_c"] == "auto" else cfg["controller.delta_c"],
        )
        pose0 = arm_model.forward_kinematics(params, q0)
        start = pose0
        if cfg["trajectory.start"]:
            start = RigidPose(pose0.rot, _vec3(cfg["trajectory.start"], "trajectory.start"))
        spec = TrajectorySpec(
            kind=cfg["trajectory.kind"],
            start=start,
            side=cfg["trajectory.side"],
            speed=cfg["trajectory.speed"],
            normal=_vec3(cfg["trajectory.normal"], "trajectory.normal"),
            first_edge=_vec3(cfg["trajectory.first_edge"], "trajectory.first_edge"),
            segments=cfg["trajectory.segments"],
        )
        xhat0 = SlamElement(
            so3_exp(_vec3(cfg["observer.att_offset"], "observer.att_offset")) @ pose0.rot,
            _vec3(cfg["observer.p0"], "observer.p0"),
            lmap.positions + _vec3(cfg["observer.landmark_offset"], "observer.landmark_offset")[:, None],
        )
        return SimulationConfig(
            arm=params,
            lmap=lmap,
            observer=obs,
            controller=ctrl,
            segments=build_segments(spec),
            q0=q0,
            qdot0=qdot0,
            xhat0=xhat0,
            dt=cfg["sim.dt"],
            duration=cfg["sim.duration"] if duration is None else duration,
            record_every=cfg["sim.record_every"],
            seed=cfg["sim.seed"] if seed is None else seed,
            sigma_range=cfg["noise.sigma_range"],
            sigma_bearing=cfg["noise.sigma_bearing"],
            feedback=cfg["controller.feedback"],
            auto_delta=auto_delta,
            event_tol=cfg["sim.event_tol"],
            max_jumps_per_step=cfg["sim.max_jumps_per_step"],
        )
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None


def square_side(cfg):
    return cfg["trajectory.side"] if cfg["trajectory.kind"] == "square" else None
