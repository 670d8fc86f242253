"""Scenario files, trajectory CSV persistence, run reports, and the
independent safety re-checker used by the ``verify`` command.

Scenario format: UTF-8 text, INI-style sections, ``key = value`` pairs,
full-line ``#`` comments, SI units throughout (two-link segment lengths may
be given in millimeters via ``unit = mm`` in the ``[arm]`` section).
Unknown sections or keys are errors. Omitted optional keys take the
documented per-kind defaults. The grammar is documented in the README.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .arm import ActivationThresholds, KinematicChain, activation, baxter_left_arm_chain, link_barrier, two_link_chain
from .barriers import FirstOrderGains, SecondOrderGains, barrier_value
from .core import CircleObstacle, ControlBounds, JointState, PlanarState, Trajectory, Workspace
from .mpc import MpcConfig, RobotSpec
from .rrt import SteerConfig

KINDS = ("planar", "unicycle", "arm-two-link", "arm-baxter")

DEFAULT_COLORS = {
    "obstacle": "dimgray",
    "tree": "green",
    "cspace_tree": "red",
    "reference": "blue",
    "tracked": "red",
    "start": "green",
    "goal": "black",
}


class ScenarioError(ValueError):
    """Parse or semantic-validation failure, with file/line context."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        prefix = ""
        if path is not None:
            prefix = f"{path}: "
        if line is not None:
            prefix += f"line {line}: "
        super().__init__(prefix + message)
        self.line = line


@dataclass(eq=False)
class ArmSetup:
    theta_init: np.ndarray
    theta_goal: np.ndarray
    goal_radius: float
    link_radius: float
    lengths: tuple[float, float] | None
    thresholds: ActivationThresholds

    def build_chain(self, kind: str) -> KinematicChain:
        if kind == "arm-two-link":
            l1, l2 = self.lengths if self.lengths else (3.0, 3.0)
            return two_link_chain(l1, l2, self.link_radius)
        return baxter_left_arm_chain(self.link_radius)


@dataclass(eq=False)
class Scenario:
    kind: str
    seed: int
    max_iters: int
    workspace: Workspace
    obstacles: list[CircleObstacle]
    robots: list[RobotSpec]
    steer: SteerConfig
    mpc: MpcConfig | None
    gains: FirstOrderGains | SecondOrderGains
    control_limits: tuple[float, float]
    arm: ArmSetup | None
    colors: dict[str, str]
    name: str = "scenario"

    @property
    def is_arm(self) -> bool:
        return self.kind.startswith("arm-")

    def control_bounds(self, dim: int) -> ControlBounds:
        lo, hi = self.control_limits
        return ControlBounds(np.full(dim, lo), np.full(dim, hi))

    def to_mapping(self) -> dict:
        """Canonical nested-dict view, used for equality and round-trips."""
        m: dict = {
            "scenario": {"kind": self.kind, "seed": self.seed, "max_iters": self.max_iters},
            "workspace": {
                "lower": tuple(self.workspace.state_lower),
                "upper": tuple(self.workspace.state_upper),
                "goal_radius": self.workspace.goal_radius,
            },
            "steer": {
                "v_ref": self.steer.v_ref,
                "substeps": self.steer.substeps,
                "t_h": self.steer.t_h,
                "sigma2": self.steer.sigma2,
                "eta_vs": self.steer.eta_vs,
                "eta_ss": self.steer.eta_ss,
                "partial_commit": self.steer.partial_commit_fraction,
                "margin": self.steer.barrier_margin,
            },
            "bounds": {"limits": self.control_limits},
            "colors": dict(sorted(self.colors.items())),
        }
        if isinstance(self.gains, FirstOrderGains):
            m["cbf"] = {"k": self.gains.k}
        else:
            m["cbf"] = {"k1": self.gains.k1, "k2": self.gains.k2}
        if self.mpc is not None:
            m["mpc"] = {
                "horizon": self.mpc.horizon,
                "q": self.mpc.q_weight,
                "r": self.mpc.r_weight,
                "terminal": self.mpc.terminal_weight,
                "dt": self.mpc.dt,
                "sigma2": self.mpc.sigma2,
                "max_steps": self.mpc.max_steps,
            }
        m["obstacles"] = [
            (tuple(o.center0), o.radius, tuple(o.velocity)) for o in self.obstacles
        ]
        m["robots"] = [
            (r.id, tuple(r.start.position()), tuple(r.goal), r.radius, r.priority)
            for r in self.robots
        ]
        if self.arm is not None:
            m["arm"] = {
                "theta_init": tuple(self.arm.theta_init),
                "theta_goal": tuple(self.arm.theta_goal),
                "goal_radius": self.arm.goal_radius,
                "link_radius": self.arm.link_radius,
                "lengths": self.arm.lengths,
                "delta1": self.arm.thresholds.delta1,
                "delta2": self.arm.thresholds.delta2,
            }
        return m

    def __eq__(self, other) -> bool:
        return isinstance(other, Scenario) and self.to_mapping() == other.to_mapping()


_SECTION_KEYS = {
    "scenario": {"kind", "seed", "max_iters"},
    "workspace": {"lower", "upper", "goal_radius"},
    "cbf": {"k", "k1", "k2"},
    "steer": {"v_ref", "substeps", "t_h", "sigma2", "eta_vs", "eta_ss", "partial_commit", "margin"},
    "bounds": {"v", "omega", "rate"},
    "mpc": {"horizon", "q", "r", "terminal", "dt", "sigma2", "max_steps"},
    "arm": {"unit", "theta_init", "theta_goal", "goal_radius", "link_radius",
            "lengths", "delta1", "delta2"},
    "render": set(DEFAULT_COLORS),
}

_KIND_DEFAULTS = {
    "planar": {
        "cbf": {"k": 1.0},
        "steer": dict(v_ref=0.5, substeps=100, t_h=1.0, sigma2=0.2,
                      eta_vs=math.inf, eta_ss=0.0, partial_commit=None, margin=0.0),
        "limits": (-5.0, 5.0),
        "robot_radius": 0.1,
    },
    "unicycle": {
        "cbf": {"k1": 2.0, "k2": 4.0},
        "steer": dict(v_ref=1.5, substeps=100, t_h=1.0, sigma2=0.1,
                      eta_vs=math.inf, eta_ss=0.0, partial_commit=None, margin=0.005),
        "limits": (-2.0, 2.0),
        "robot_radius": 0.0,
    },
    "arm-two-link": {
        "cbf": {"k": 2.0},
        "steer": dict(v_ref=1.0, substeps=100, t_h=0.3, sigma2=0.4,
                      eta_vs=3.0, eta_ss=3.0, partial_commit=0.1, margin=0.01),
        "limits": (-2.0, 2.0),
        "arm": dict(goal_radius=0.1, link_radius=0.3, lengths=(3.0, 3.0),
                    delta1=5.0, delta2=0.5),
    },
    "arm-baxter": {
        "cbf": {"k": 2.0},
        "steer": dict(v_ref=1.0, substeps=100, t_h=0.3, sigma2=0.4,
                      eta_vs=2.0, eta_ss=1.0, partial_commit=0.1, margin=0.01),
        "limits": (-2.0, 2.0),
        "arm": dict(goal_radius=0.2, link_radius=0.5, lengths=None,
                    delta1=5.0, delta2=0.5),
    },
}


def _parse_sections(text: str, path: str) -> dict[str, tuple[int, dict[str, tuple[int, str]]]]:
    sections: dict[str, tuple[int, dict[str, tuple[int, str]]]] = {}
    current: str | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            if not current:
                raise ScenarioError("empty section name", path, lineno)
            if current in sections:
                raise ScenarioError(f"duplicate section [{current}]", path, lineno)
            sections[current] = (lineno, {})
            continue
        if "=" not in line:
            raise ScenarioError("expected 'key = value'", path, lineno)
        if current is None:
            raise ScenarioError("key outside of any section", path, lineno)
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not key:
            raise ScenarioError("empty key", path, lineno)
        body = sections[current][1]
        if key in body:
            raise ScenarioError(f"duplicate key {key!r} in [{current}]", path, lineno)
        body[key] = (lineno, value)
    return sections


def _known_section(name: str) -> str | None:
    if name in _SECTION_KEYS:
        return name
    base = name.split(".", 1)[0]
    if base in ("obstacle", "robot") and name.count(".") == 1:
        tail = name.split(".", 1)[1]
        if tail.isdigit():
            return base
    return None


class _SectionReader:
    def __init__(self, name: str, body: dict[str, tuple[int, str]], path: str):
        self.name = name
        self.body = body
        self.path = path
        self.used: set[str] = set()

    def _raw(self, key: str):
        self.used.add(key)
        return self.body.get(key)

    def value(self, key: str, kind: str, default=None):
        item = self._raw(key)
        if item is None:
            return default
        lineno, text = item
        try:
            if kind == "float":
                return float(text)
            if kind == "int":
                return int(text)
            if kind == "vector":
                return tuple(float(p.strip()) for p in text.split(","))
            if kind == "pair":
                parts = [float(p.strip()) for p in text.split(",")]
                if len(parts) != 2:
                    raise ValueError("expected two comma-separated numbers")
                return (parts[0], parts[1])
            if kind == "str":
                return text
            if kind == "fraction_or_none":
                if text.lower() in ("none", "off"):
                    return None
                return float(text)
        except ValueError as exc:
            raise ScenarioError(f"bad value for {key!r}: {exc}", self.path, lineno) from None
        raise AssertionError(kind)

    def finish(self, allowed: set[str]):
        for key, (lineno, _) in self.body.items():
            if key not in allowed:
                raise ScenarioError(f"unknown key {key!r} in [{self.name}]", self.path, lineno)


def load_scenario(path) -> Scenario:
    """Parse and validate a scenario file (strict: unknown keys are errors)."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario: {exc}", str(path)) from exc
    return parse_scenario(text, name=path.stem, path=str(path))


def parse_scenario(text: str, name: str = "scenario", path: str = "<string>") -> Scenario:
    sections = _parse_sections(text, path)
    for sec, (lineno, _) in sections.items():
        if _known_section(sec) is None:
            raise ScenarioError(f"unknown section [{sec}]", path, lineno)

    def reader(sec: str) -> _SectionReader:
        body = sections.get(sec, (0, {}))[1]
        return _SectionReader(sec, body, path)

    sc = reader("scenario")
    kind = sc.value("kind", "str")
    if kind not in KINDS:
        raise ScenarioError(f"kind must be one of {KINDS}, got {kind!r}", path,
                            sections.get("scenario", (1, {}))[0])
    seed = sc.value("seed", "int", 0)
    max_iters = sc.value("max_iters", "int", 5000)
    sc.finish(_SECTION_KEYS["scenario"])
    defaults = _KIND_DEFAULTS[kind]

    st = reader("steer")
    sd = defaults["steer"]
    steer = SteerConfig(
        v_ref=st.value("v_ref", "float", sd["v_ref"]),
        substeps=st.value("substeps", "int", sd["substeps"]),
        t_h=st.value("t_h", "float", sd["t_h"]),
        sigma2=st.value("sigma2", "float", sd["sigma2"]),
        eta_vs=st.value("eta_vs", "float", sd["eta_vs"]),
        eta_ss=st.value("eta_ss", "float", sd["eta_ss"]),
        partial_commit_fraction=st.value("partial_commit", "fraction_or_none", sd["partial_commit"]),
        barrier_margin=st.value("margin", "float", sd["margin"]),
    )
    st.finish(_SECTION_KEYS["steer"])

    cb = reader("cbf")
    try:
        if kind == "unicycle":
            gains: FirstOrderGains | SecondOrderGains = SecondOrderGains(
                k1=cb.value("k1", "float", defaults["cbf"]["k1"]),
                k2=cb.value("k2", "float", defaults["cbf"]["k2"]),
            )
            cb.finish({"k1", "k2"})
        else:
            gains = FirstOrderGains(k=cb.value("k", "float", defaults["cbf"]["k"]))
            cb.finish({"k"})
    except ValueError as exc:
        raise ScenarioError(str(exc), path, sections.get("cbf", (1, {}))[0]) from None

    bd = reader("bounds")
    limit_key = {"planar": "v", "unicycle": "omega"}.get(kind, "rate")
    limits = bd.value(limit_key, "pair", defaults["limits"])
    bd.finish({limit_key})
    if limits[0] >= limits[1]:
        raise ScenarioError("control bounds must satisfy lower < upper", path,
                            sections.get("bounds", (1, {}))[0])

    obstacles = []
    robots = []
    for sec in sections:
        base = _known_section(sec)
        if base == "obstacle":
            ob = reader(sec)
            center = ob.value("center", "vector")
            if center is None:
                raise ScenarioError(f"[{sec}] needs a center", path, sections[sec][0])
            radius = ob.value("radius", "float")
            if radius is None:
                raise ScenarioError(f"[{sec}] needs a radius", path, sections[sec][0])
            velocity = ob.value("velocity", "vector", tuple(0.0 for _ in center))
            ob.finish(_SECTION_KEYS_OBSTACLE)
            try:
                obstacles.append(CircleObstacle(np.array(center), radius, np.array(velocity)))
            except ValueError as exc:
                raise ScenarioError(f"[{sec}]: {exc}", path, sections[sec][0]) from None
        elif base == "robot":
            rb = reader(sec)
            start = rb.value("start", "pair")
            goal = rb.value("goal", "pair")
            if start is None or goal is None:
                raise ScenarioError(f"[{sec}] needs start and goal", path, sections[sec][0])
            radius = rb.value("radius", "float", defaults.get("robot_radius", 0.1))
            priority = rb.value("priority", "int", int(sec.split(".")[1]))
            rb.finish(_SECTION_KEYS_ROBOT)
            rid = sec.split(".", 1)[1]
            try:
                robots.append(RobotSpec(rid, radius if radius > 0 else 1e-9,
                                        PlanarState(*start), np.array(goal), priority))
            except ValueError as exc:
                raise ScenarioError(f"[{sec}]: {exc}", path, sections[sec][0]) from None
    robots.sort(key=lambda r: r.priority)

    rd = reader("render")
    colors = dict(DEFAULT_COLORS)
    for key in DEFAULT_COLORS:
        val = rd.value(key, "str")
        if val is not None:
            colors[key] = val
    rd.finish(_SECTION_KEYS["render"])

    arm_setup = None
    mpc = None
    ws_reader = reader("workspace")
    if kind.startswith("arm-"):
        if robots:
            raise ScenarioError("arm scenarios take no [robot.N] sections", path)
        if "mpc" in sections:
            raise ScenarioError("[mpc] applies only to planar scenarios", path, sections["mpc"][0])
        ar = reader("arm")
        ad = defaults["arm"]
        unit = ar.value("unit", "str", "m")
        if unit not in ("m", "mm"):
            raise ScenarioError("unit must be 'm' or 'mm'", path, sections.get("arm", (1, {}))[0])
        scale = 0.001 if unit == "mm" else 1.0
        theta_init = ar.value("theta_init", "vector")
        theta_goal = ar.value("theta_goal", "vector")
        if theta_init is None or theta_goal is None:
            raise ScenarioError("arm scenarios need theta_init and theta_goal", path,
                                sections.get("arm", (1, {}))[0])
        lengths = ar.value("lengths", "vector", ad["lengths"])
        if lengths is not None:
            lengths = tuple(v * scale for v in lengths)
        try:
            thresholds = ActivationThresholds(
                delta1=ar.value("delta1", "float", ad["delta1"]),
                delta2=ar.value("delta2", "float", ad["delta2"]),
            )
        except ValueError as exc:
            raise ScenarioError(str(exc), path, sections.get("arm", (1, {}))[0]) from None
        arm_setup = ArmSetup(
            theta_init=np.array(theta_init),
            theta_goal=np.array(theta_goal),
            goal_radius=ar.value("goal_radius", "float", ad["goal_radius"]),
            link_radius=ar.value("link_radius", "float", ad["link_radius"]),
            lengths=lengths,
            thresholds=thresholds,
        )
        ar.finish(_SECTION_KEYS["arm"])
        dof = 2 if kind == "arm-two-link" else 4
        if len(arm_setup.theta_init) != dof or len(arm_setup.theta_goal) != dof:
            raise ScenarioError(f"{kind} joint vectors must have length {dof}", path,
                                sections.get("arm", (1, {}))[0])
        lim = tuple(math.pi for _ in range(dof))
        lower = ws_reader.value("lower", "vector", tuple(-v for v in lim))
        upper = ws_reader.value("upper", "vector", lim)
        try:
            workspace = Workspace(np.array(lower), np.array(upper),
                                  arm_setup.theta_goal, arm_setup.goal_radius)
        except ValueError as exc:
            raise ScenarioError(str(exc), path) from None
        if not workspace.contains(arm_setup.theta_init):
            raise ScenarioError("theta_init lies outside the joint box", path)
        obstacles = [_lift_obstacle(o) for o in obstacles]
    else:
        if not robots:
            raise ScenarioError(f"{kind} scenarios need at least one [robot.N]", path)
        if kind == "unicycle" and len(robots) != 1:
            raise ScenarioError("unicycle scenarios take exactly one robot", path)
        if "arm" in sections:
            raise ScenarioError("[arm] applies only to arm scenarios", path, sections["arm"][0])
        lower = ws_reader.value("lower", "pair")
        upper = ws_reader.value("upper", "pair")
        goal_radius = ws_reader.value("goal_radius", "float", 0.3)
        if lower is None or upper is None:
            raise ScenarioError("workspace lower/upper are required", path)
        try:
            workspace = Workspace(np.array(lower), np.array(upper),
                                  np.asarray(robots[0].goal), goal_radius)
            for r in robots:
                workspace.with_goal(r.goal)  # every goal ball must meet the box
        except ValueError as exc:
            raise ScenarioError(str(exc), path) from None
        for o in obstacles:
            if o.center0.size != 2:
                raise ScenarioError("planar/unicycle obstacles must be 2D", path)
        if kind == "planar":
            mp = reader("mpc")
            mpc = MpcConfig(
                horizon=mp.value("horizon", "int", 3),
                q_weight=mp.value("q", "pair", (10.0, 10.0)),
                r_weight=mp.value("r", "float", 1.0),
                terminal_weight=mp.value("terminal", "pair", (10.0, 10.0)),
                dt=mp.value("dt", "float", steer.dt),
                sigma2=mp.value("sigma2", "float", steer.sigma2),
                max_steps=mp.value("max_steps", "int", 20000),
            )
            mp.finish(_SECTION_KEYS["mpc"])
        elif "mpc" in sections:
            raise ScenarioError("[mpc] applies only to planar scenarios", path, sections["mpc"][0])
    ws_reader.finish(_SECTION_KEYS["workspace"])

    return Scenario(kind=kind, seed=seed, max_iters=max_iters, workspace=workspace,
                    obstacles=obstacles, robots=robots, steer=steer, mpc=mpc, gains=gains,
                    control_limits=limits, arm=arm_setup, colors=colors, name=name)


_SECTION_KEYS_OBSTACLE = {"center", "radius", "velocity"}
_SECTION_KEYS_ROBOT = {"start", "goal", "radius", "priority"}


def _lift_obstacle(o: CircleObstacle) -> CircleObstacle:
    if o.center0.size == 3:
        return o
    return CircleObstacle(np.array([o.center0[0], o.center0[1], 0.0]), o.radius,
                          np.array([o.velocity[0], o.velocity[1], 0.0]))


def _fmt(value: float) -> str:
    if value is None:
        return "none"
    if isinstance(value, float) and math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return format(value, ".17g")


def _fmt_vec(values) -> str:
    return ", ".join(_fmt(float(v)) for v in values)


def dump_scenario(s: Scenario) -> str:
    """Serialize a scenario canonically; load(dump(s)) equals s."""
    lines = [
        "[scenario]",
        f"kind = {s.kind}",
        f"seed = {s.seed}",
        f"max_iters = {s.max_iters}",
        "",
        "[workspace]",
        f"lower = {_fmt_vec(s.workspace.state_lower)}",
        f"upper = {_fmt_vec(s.workspace.state_upper)}",
    ]
    if not s.is_arm:
        lines.append(f"goal_radius = {_fmt(s.workspace.goal_radius)}")
    lines.append("")
    lines.append("[cbf]")
    if isinstance(s.gains, FirstOrderGains):
        lines.append(f"k = {_fmt(s.gains.k)}")
    else:
        lines.append(f"k1 = {_fmt(s.gains.k1)}")
        lines.append(f"k2 = {_fmt(s.gains.k2)}")
    lines += [
        "",
        "[steer]",
        f"v_ref = {_fmt(s.steer.v_ref)}",
        f"substeps = {s.steer.substeps}",
        f"t_h = {_fmt(s.steer.t_h)}",
        f"sigma2 = {_fmt(s.steer.sigma2)}",
        f"eta_vs = {_fmt(s.steer.eta_vs)}",
        f"eta_ss = {_fmt(s.steer.eta_ss)}",
        f"partial_commit = {_fmt(s.steer.partial_commit_fraction) if s.steer.partial_commit_fraction is not None else 'none'}",
        f"margin = {_fmt(s.steer.barrier_margin)}",
        "",
        "[bounds]",
    ]
    limit_key = {"planar": "v", "unicycle": "omega"}.get(s.kind, "rate")
    lines.append(f"{limit_key} = {_fmt_vec(s.control_limits)}")
    if s.mpc is not None:
        lines += [
            "",
            "[mpc]",
            f"horizon = {s.mpc.horizon}",
            f"q = {_fmt_vec(s.mpc.q_weight)}",
            f"r = {_fmt(s.mpc.r_weight)}",
            f"terminal = {_fmt_vec(s.mpc.terminal_weight)}",
            f"dt = {_fmt(s.mpc.dt)}",
            f"sigma2 = {_fmt(s.mpc.sigma2)}",
            f"max_steps = {s.mpc.max_steps}",
        ]
    if s.arm is not None:
        lines += [
            "",
            "[arm]",
            f"theta_init = {_fmt_vec(s.arm.theta_init)}",
            f"theta_goal = {_fmt_vec(s.arm.theta_goal)}",
            f"goal_radius = {_fmt(s.arm.goal_radius)}",
            f"link_radius = {_fmt(s.arm.link_radius)}",
        ]
        if s.arm.lengths is not None:
            lines.append(f"lengths = {_fmt_vec(s.arm.lengths)}")
        lines.append(f"delta1 = {_fmt(s.arm.thresholds.delta1)}")
        lines.append(f"delta2 = {_fmt(s.arm.thresholds.delta2)}")
    for i, o in enumerate(s.obstacles, start=1):
        lines += [
            "",
            f"[obstacle.{i}]",
            f"center = {_fmt_vec(o.center0)}",
            f"radius = {_fmt(o.radius)}",
            f"velocity = {_fmt_vec(o.velocity)}",
        ]
    for r in s.robots:
        lines += [
            "",
            f"[robot.{r.id}]",
            f"start = {_fmt_vec(r.start.position())}",
            f"goal = {_fmt_vec(r.goal)}",
            f"radius = {_fmt(r.radius)}",
            f"priority = {r.priority}",
        ]
    overridden = {k: v for k, v in s.colors.items() if DEFAULT_COLORS.get(k) != v}
    if overridden:
        lines += ["", "[render]"]
        lines += [f"{k} = {v}" for k, v in sorted(overridden.items())]
    return "\n".join(lines) + "\n"


def write_trajectory_csv(traj: Trajectory, path) -> None:
    """Persist a trajectory: header then one row per sample, 17-significant-
    digit decimals (bit-exact round trip), LF line endings."""
    state_cols, control_cols = traj.column_names()
    header = ",".join(("t",) + state_cols + control_cols)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        for t, state, control in traj.samples():
            row = [format(t, ".17g")]
            row += [format(v, ".17g") for v in state]
            row += [format(v, ".17g") for v in control]
            fh.write(",".join(row) + "\n")


def read_trajectory_csv(path) -> Trajectory:
    """Read a trajectory CSV; the model kind is inferred from the header."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: empty trajectory file")
    header = lines[0].split(",")
    if header[:3] == ["t", "x1", "x2"]:
        if header[3:] == ["u1", "u2"]:
            model, n_state, n_ctrl = "planar", 2, 2
        elif header[3:] == ["theta", "omega"]:
            model, n_state, n_ctrl = "unicycle", 3, 1
        else:
            raise ValueError(f"{path}: unrecognized column layout {header}")
    elif len(header) >= 3 and header[0] == "t" and header[1].startswith("theta"):
        dof = (len(header) - 1) // 2
        expect = ["t"] + [f"theta{i+1}" for i in range(dof)] + [f"u{i+1}" for i in range(dof)]
        if header != expect:
            raise ValueError(f"{path}: unrecognized column layout {header}")
        model, n_state, n_ctrl = "joints", dof, dof
    else:
        raise ValueError(f"{path}: unrecognized column layout {header}")
    times, states, controls = [], [], []
    for ln in lines[1:]:
        parts = [float(p) for p in ln.split(",")]
        if len(parts) != 1 + n_state + n_ctrl:
            raise ValueError(f"{path}: row with {len(parts)} fields, expected {1 + n_state + n_ctrl}")
        times.append(parts[0])
        states.append(parts[1:1 + n_state])
        controls.append(parts[1 + n_state:])
    return Trajectory(np.array(times), np.array(states), np.array(controls), model)


@dataclass
class RobotReport:
    robot_id: str
    outcome: str
    plan_iterations: int = 0
    track_steps: int = 0


@dataclass
class RunReport:
    """Summary of one CLI invocation. Wall-clock is reported on stdout only,
    so the persisted artifacts stay byte-reproducible per seed."""

    scenario: str
    kind: str
    seed: int
    robots: list[RobotReport] = field(default_factory=list)
    min_barrier: float | None = None
    min_pair_distance: float | None = None
    wall_clock_s: float | None = None

    def outcome_ok(self) -> bool:
        return all(r.outcome == "reached" for r in self.robots)


def format_report(report: RunReport, include_timing: bool = False) -> str:
    lines = [
        "[report]",
        f"scenario = {report.scenario}",
        f"kind = {report.kind}",
        f"seed = {report.seed}",
    ]
    if report.min_barrier is not None:
        lines.append(f"min_barrier = {format(report.min_barrier, '.17g')}")
    if report.min_pair_distance is not None:
        lines.append(f"min_pair_distance = {format(report.min_pair_distance, '.17g')}")
    if include_timing and report.wall_clock_s is not None:
        lines.append(f"wall_clock_s = {report.wall_clock_s:.3f}")
    for r in report.robots:
        lines += [
            "",
            f"[robot.{r.robot_id}]",
            f"outcome = {r.outcome}",
            f"plan_iterations = {r.plan_iterations}",
            f"track_steps = {r.track_steps}",
        ]
    return "\n".join(lines) + "\n"


def min_circle_barrier(traj: Trajectory, obstacles, inflation: float) -> float:
    """Smallest barrier value over every sample and obstacle (inf if none)."""
    if not obstacles:
        return math.inf
    times = traj.times
    pos = traj.positions()
    best = math.inf
    for obs in obstacles:
        centers = obs.position_at(0.0)[None, :2] + np.outer(times, obs.velocity_at(0.0)[:2])
        delta = pos[:, :2] - centers
        r = obs.radius + inflation
        h = np.einsum("ij,ij->i", delta, delta) - r * r
        best = min(best, float(h.min()))
    return best


def _positions_on_grid(traj: Trajectory, grid: np.ndarray) -> np.ndarray:
    pos = traj.positions()
    out = np.empty((grid.size, pos.shape[1]))
    for k in range(pos.shape[1]):
        out[:, k] = np.interp(grid, traj.times, pos[:, k])
    return out


def min_pairwise_distance(trajectories: list[Trajectory]) -> float:
    """Smallest center distance between any two trajectories over the union
    of their sample grids (shorter trajectories hold their final state)."""
    best = math.inf
    for i in range(len(trajectories)):
        for j in range(i + 1, len(trajectories)):
            a, b = trajectories[i], trajectories[j]
            grid = np.union1d(a.times, b.times)
            delta = _positions_on_grid(a, grid) - _positions_on_grid(b, grid)
            d = np.sqrt(np.einsum("ij,ij->i", delta, delta))
            best = min(best, float(d.min()))
    return best


def arm_active_barrier_records(traj: Trajectory, chain: KinematicChain, obstacles,
                               thresholds: ActivationThresholds):
    """(t, obstacle index, link index, h) for every active pair along a path."""
    records = []
    for t, state, _ in traj.samples():
        theta = JointState(state)
        for i, obs in enumerate(obstacles):
            for j in range(1, chain.dof + 1):
                if activation(chain, j, theta, obs, t, thresholds):
                    records.append((t, i + 1, j, link_barrier(chain, j, theta, obs, t)))
    return records


def write_barrier_records_csv(records, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("t,obstacle,link,h\n")
        for t, i, j, h in records:
            fh.write(f"{format(t, '.17g')},{i},{j},{format(h, '.17g')}\n")


def verify_trajectory(scenario: Scenario, traj: Trajectory, tol: float = 1e-3,
                      robot_index: int = 0) -> list[str]:
    """Recompute every barrier along a stored trajectory from scratch.

    Returns a list of human-readable violations (empty means safe). This
    path shares no state with the planners: it rebuilds barrier values from
    the scenario description and the raw samples.
    """
    violations = []
    if scenario.is_arm:
        if traj.model != "joints":
            return [f"scenario kind {scenario.kind} expects a joint trajectory, got {traj.model}"]
        chain = scenario.arm.build_chain(scenario.kind)
        if traj.states.shape[1] != chain.dof:
            return [f"trajectory has {traj.states.shape[1]} joints, chain has {chain.dof}"]
        for t, i, j, h in arm_active_barrier_records(traj, chain, scenario.obstacles,
                                                     scenario.arm.thresholds):
            if h < -tol:
                violations.append(f"t={t:.6g}: active barrier obstacle {i} link {j} h={h:.6g}")
    else:
        expected = "planar" if scenario.kind == "planar" else "unicycle"
        if traj.model != expected:
            return [f"scenario kind {scenario.kind} expects a {expected} trajectory, got {traj.model}"]
        if not scenario.robots:
            return ["scenario has no robots"]
        robot = scenario.robots[min(robot_index, len(scenario.robots) - 1)]
        inflation = robot.radius if scenario.kind == "planar" else 0.0
        for t, state, _ in traj.samples():
            pos = state[:2]
            for k, obs in enumerate(scenario.obstacles):
                h = barrier_value(pos, obs, t, inflation)
                if h < -tol:
                    violations.append(f"t={t:.6g}: obstacle {k + 1} barrier h={h:.6g}")
    return violations
