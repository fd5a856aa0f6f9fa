"""Floating-base kinematic chain description and generalized state.

A model is a tree of links rooted at the floating base (link 0). Every
non-base link is attached to its parent by a single revolute or prismatic
joint, so the model has n = len(links) - 1 actuated joints and 6 + n
generalized velocities laid out as

    v = [base linear velocity (world, m/s),
         base angular velocity (world, rad/s),
         joint rates]

The configuration is q = [base position (3), base quaternion (w, x, y, z),
joint positions (n)].
"""

import hashlib
from dataclasses import dataclass, field

import numpy as np
import yaml

from .rotations import quat_exp, quat_multiply, quat_normalize, rpy_to_matrix

FLOATING = "floating"
REVOLUTE = "revolute"
PRISMATIC = "prismatic"

GRAVITY_DEFAULT = (0.0, 0.0, -9.81)


@dataclass
class Link:
    """One rigid body and the joint connecting it to its parent.

    com and inertia (3x3, about the com) are expressed in the link's own
    frame. origin_pos/origin_rot place the joint frame in the parent frame.
    For the base link the joint is 'floating' and the origin is unused.
    """

    name: str
    parent: int
    joint_type: str
    mass: float
    com: np.ndarray
    inertia: np.ndarray
    axis: np.ndarray | None = None
    origin_pos: np.ndarray = field(default_factory=lambda: np.zeros(3))
    origin_rot: np.ndarray = field(default_factory=lambda: np.eye(3))
    actuated: bool = True

    def __post_init__(self):
        self.com = np.asarray(self.com, dtype=float).reshape(3)
        self.inertia = np.asarray(self.inertia, dtype=float).reshape(3, 3)
        self.origin_pos = np.asarray(self.origin_pos, dtype=float).reshape(3)
        self.origin_rot = np.asarray(self.origin_rot, dtype=float).reshape(3, 3)
        if self.axis is not None:
            a = np.asarray(self.axis, dtype=float).reshape(3)
            self.axis = a / np.linalg.norm(a)


@dataclass
class PointFrame:
    """A named point rigidly attached to a link (feet, tool)."""

    link: int
    point: np.ndarray

    def __post_init__(self):
        self.point = np.asarray(self.point, dtype=float).reshape(3)


class RobotModel:
    """Validated floating-base chain with feet, body partition and selector."""

    def __init__(self, links, feet, base_links, arm_links, tool=None,
                 gravity=GRAVITY_DEFAULT, name="robot"):
        self.name = name
        self.links = list(links)
        self.feet = dict(feet)
        self.tool = tool
        self.base_links = sorted(base_links)
        self.arm_links = sorted(arm_links)
        self.gravity = np.asarray(gravity, dtype=float).reshape(3)
        self._validate()

    # --- structure -------------------------------------------------------

    @property
    def n_links(self):
        return len(self.links)

    @property
    def n_joints(self):
        """Number of actuated joints n."""
        return sum(1 for l in self.links[1:] if l.actuated)

    @property
    def nv(self):
        """Dimension of the generalized velocity, 6 + n_moving_joints."""
        return 6 + len(self.links) - 1

    def joint_index(self, link_index):
        """Velocity index of the joint driving a non-base link."""
        return 6 + link_index - 1

    def selector(self):
        """Actuation selector S (n x nv) with Sᵀ mapping τ_m into the nv space."""
        rows = [self.joint_index(i) for i, l in enumerate(self.links) if i > 0 and l.actuated]
        S = np.zeros((len(rows), self.nv))
        for r, c in enumerate(rows):
            S[r, c] = 1.0
        return S

    def link_names(self):
        return [l.name for l in self.links]

    def link_index(self, name):
        for i, l in enumerate(self.links):
            if l.name == name:
                return i
        raise KeyError(f"unknown link {name!r}")

    def ancestors(self, link_index):
        """Indices of moving joints (as link indices) on the path root -> link."""
        path = []
        i = link_index
        while i > 0:
            path.append(i)
            i = self.links[i].parent
        return path[::-1]

    def body_of_link(self, link_index):
        if link_index in self.arm_links:
            return "arm"
        return "base"

    # --- validation ------------------------------------------------------

    def _validate(self):
        if not self.links or self.links[0].joint_type != FLOATING:
            raise ValueError("link 0 must be the floating base")
        seen = set()
        for i, l in enumerate(self.links):
            if i == 0:
                if l.parent != -1:
                    raise ValueError("base link parent must be -1")
            else:
                if not (0 <= l.parent < i):
                    raise ValueError(f"link {l.name}: parent {l.parent} does not precede it")
                if l.joint_type not in (REVOLUTE, PRISMATIC):
                    raise ValueError(f"link {l.name}: bad joint type {l.joint_type}")
                if l.axis is None:
                    raise ValueError(f"link {l.name}: joint axis required")
            if l.name in seen:
                raise ValueError(f"duplicate link name {l.name}")
            seen.add(l.name)
            if not l.mass > 0:
                raise ValueError(f"link {l.name}: mass must be > 0")
            if not np.allclose(l.inertia, l.inertia.T, atol=1e-12):
                raise ValueError(f"link {l.name}: inertia not symmetric")
            if np.linalg.eigvalsh(l.inertia)[0] <= 0:
                raise ValueError(f"link {l.name}: inertia not positive definite")
        for name, f in self.feet.items():
            if not (0 <= f.link < self.n_links):
                raise ValueError(f"foot {name}: bad link index")
        for idx in self.base_links + self.arm_links:
            if not (0 <= idx < self.n_links):
                raise ValueError(f"body partition: bad link index {idx}")
        if set(self.base_links) & set(self.arm_links):
            raise ValueError("base/arm partitions overlap")

    # --- serialization ---------------------------------------------------

    def to_dict(self):
        names = self.link_names()
        d = {
            "format": "colev-model-v1",
            "name": self.name,
            "gravity": [float(x) for x in self.gravity],
            "links": [],
            "feet": {
                k: {"link": names[f.link], "point": [float(x) for x in f.point]}
                for k, f in sorted(self.feet.items())
            },
            "body_parts": {
                "base": [names[i] for i in self.base_links],
                "arm": [names[i] for i in self.arm_links],
            },
        }
        if self.tool is not None:
            d["tool"] = {"link": names[self.tool.link],
                         "point": [float(x) for x in self.tool.point]}
        for i, l in enumerate(self.links):
            e = {
                "name": l.name,
                "parent": names[l.parent] if l.parent >= 0 else None,
                "joint": {"type": l.joint_type},
                "mass": float(l.mass),
                "com": [float(x) for x in l.com],
                "inertia": [[float(x) for x in row] for row in l.inertia],
            }
            if i > 0:
                e["joint"]["axis"] = [float(x) for x in l.axis]
                e["joint"]["origin"] = {
                    "xyz": [float(x) for x in l.origin_pos],
                    "rot": [[float(x) for x in row] for row in l.origin_rot],
                }
                e["joint"]["actuated"] = bool(l.actuated)
            d["links"].append(e)
        return d

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != "colev-model-v1":
            raise ValueError("not a colev-model-v1 document")
        name_to_idx = {e["name"]: i for i, e in enumerate(d["links"])}
        links = []
        for i, e in enumerate(d["links"]):
            joint = e["joint"]
            origin = joint.get("origin", {})
            if "rot" in origin:
                rot = np.asarray(origin["rot"], dtype=float)
            elif "rpy" in origin:
                rot = rpy_to_matrix(origin["rpy"])
            else:
                rot = np.eye(3)
            links.append(Link(
                name=e["name"],
                parent=-1 if e["parent"] is None else name_to_idx[e["parent"]],
                joint_type=joint["type"],
                mass=e["mass"],
                com=e["com"],
                inertia=e["inertia"],
                axis=joint.get("axis"),
                origin_pos=origin.get("xyz", np.zeros(3)),
                origin_rot=rot,
                actuated=joint.get("actuated", True),
            ))
        feet = {k: PointFrame(name_to_idx[f["link"]], f["point"])
                for k, f in d.get("feet", {}).items()}
        tool = None
        if "tool" in d:
            tool = PointFrame(name_to_idx[d["tool"]["link"]], d["tool"]["point"])
        parts = d.get("body_parts", {"base": [], "arm": []})
        return cls(
            links=links,
            feet=feet,
            base_links=[name_to_idx[n] for n in parts.get("base", [])],
            arm_links=[name_to_idx[n] for n in parts.get("arm", [])],
            tool=tool,
            gravity=d.get("gravity", GRAVITY_DEFAULT),
            name=d.get("name", "robot"),
        )

    def save(self, path):
        with open(path, "w") as f:
            yaml.safe_dump(self.to_dict(), f, sort_keys=False)

    @classmethod
    def load(cls, path):
        with open(path) as f:
            return cls.from_dict(yaml.safe_load(f))

    def hash(self):
        """Short content hash used to stamp logs."""
        blob = yaml.safe_dump(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha1(blob).hexdigest()[:12]

    def with_point_mass(self, link_index, mass, offset):
        """Copy of the model with a point mass rigidly added to one link.

        Used to build 'true' models carrying payloads the nominal model does
        not know about. Combines masses, shifts the com and applies the
        parallel axis theorem for both the old body and the added mass.
        """
        d = self.to_dict()
        new = RobotModel.from_dict(d)
        l = new.links[link_index]
        offset = np.asarray(offset, dtype=float).reshape(3)
        m0, m1 = l.mass, float(mass)
        c_new = (m0 * l.com + m1 * offset) / (m0 + m1)
        d0 = l.com - c_new
        d1 = offset - c_new

        def shift(m, d):
            return m * (np.dot(d, d) * np.eye(3) - np.outer(d, d))

        tiny = 1e-9 * m1 * np.eye(3)  # keep the added point mass SPD-safe
        l.inertia = l.inertia + shift(m0, d0) + shift(m1, d1) + tiny
        l.com = c_new
        l.mass = m0 + m1
        return new


@dataclass
class GeneralizedState:
    """Configuration and generalized velocity of a floating-base chain."""

    base_pos: np.ndarray
    base_quat: np.ndarray
    joint_pos: np.ndarray
    vel: np.ndarray

    def __post_init__(self):
        self.base_pos = np.asarray(self.base_pos, dtype=float).reshape(3)
        self.base_quat = np.asarray(self.base_quat, dtype=float).reshape(4)
        self.joint_pos = np.asarray(self.joint_pos, dtype=float).reshape(-1)
        self.vel = np.asarray(self.vel, dtype=float).reshape(-1)

    def validate(self, model: RobotModel):
        n = model.n_links - 1
        if self.joint_pos.shape != (n,):
            raise ValueError(f"expected {n} joint positions, got {self.joint_pos.shape}")
        if self.vel.shape != (model.nv,):
            raise ValueError(f"expected velocity dim {model.nv}, got {self.vel.shape}")
        if abs(np.linalg.norm(self.base_quat) - 1.0) > 1e-9:
            raise ValueError("base quaternion is not unit norm")
        if not (np.all(np.isfinite(self.q)) and np.all(np.isfinite(self.vel))):
            raise ValueError("state contains non-finite entries")

    @property
    def q(self):
        """Packed configuration [pos(3), quat(4), joints(n)]."""
        return np.concatenate([self.base_pos, self.base_quat, self.joint_pos])

    @classmethod
    def from_q(cls, q, vel):
        q = np.asarray(q, dtype=float)
        return cls(q[0:3], q[3:7], q[7:], vel)

    @classmethod
    def neutral(cls, model: RobotModel):
        n = model.n_links - 1
        return cls(np.zeros(3), np.array([1.0, 0, 0, 0]), np.zeros(n), np.zeros(model.nv))


def integrate_q(q, vel, dt):
    """Integrate packed configurations along velocities for dt seconds.

    Positions and joints move linearly; the base quaternion moves along the
    exponential map of the world-frame angular velocity. Works on single
    vectors or on (T, ...) batches.
    """
    q = np.asarray(q, dtype=float)
    vel = np.asarray(vel, dtype=float)
    out = q.copy()
    out[..., 0:3] += dt * vel[..., 0:3]
    dq = quat_exp(dt * vel[..., 3:6])
    out[..., 3:7] = quat_normalize(quat_multiply(dq, q[..., 3:7]))
    out[..., 7:] += dt * vel[..., 6:]
    return out


# --- default desk-scale model ---------------------------------------------


def _rod_inertia(mass, length, axis=2, floor=1e-5):
    """Slender rod about its com; `axis` is the rod direction."""
    i = mass * length**2 / 12.0
    d = [i, i, i]
    d[axis] = floor
    return np.diag(np.maximum(d, floor))


def default_model():
    """Desk-scale quadruped with a 6-joint serial arm on top.

    Each leg has an abduction hip block plus two pitch links (thigh, shank);
    the abduction joint keeps lateral foot forces observable from the leg
    torques so the stacked contact Jacobian has full column rank. With the
    6-DoF arm this gives n = 18 actuated joints, nv = 24. Numbers are
    representative, not tied to any particular robot.
    """
    links = [Link("base", -1, FLOATING, 18.0, np.zeros(3),
                  np.diag([0.20, 0.60, 0.68]))]
    feet = {}
    for name, sx, sy in (("lf", 1, 1), ("rf", 1, -1), ("lh", -1, 1), ("rh", -1, -1)):
        hip = Link(f"{name}_hip", 0, REVOLUTE, 0.3, [0, 0.03 * sy, 0],
                   1e-3 * np.eye(3), axis=[1, 0, 0],
                   origin_pos=[0.30 * sx, 0.17 * sy, -0.05])
        links.append(hip)
        thigh = Link(f"{name}_upper", len(links) - 1, REVOLUTE, 1.2, [0, 0, -0.11],
                     _rod_inertia(1.2, 0.22), axis=[0, 1, 0],
                     origin_pos=[0.0, 0.06 * sy, 0.0])
        links.append(thigh)
        shank = Link(f"{name}_lower", len(links) - 1, REVOLUTE, 0.6, [0, 0, -0.11],
                     _rod_inertia(0.6, 0.22), axis=[0, 1, 0],
                     origin_pos=[0.0, 0.0, -0.22])
        links.append(shank)
        feet[name] = PointFrame(len(links) - 1, np.array([0.0, 0.0, -0.22]))

    arm_geom = [
        # axis, origin xyz, mass, length (com at half length along z)
        ([0, 0, 1], [0.25, 0.0, 0.08], 2.0, 0.12),
        ([0, 1, 0], [0.0, 0.0, 0.12], 1.6, 0.28),
        ([0, 1, 0], [0.0, 0.0, 0.28], 1.2, 0.26),
        ([0, 0, 1], [0.0, 0.0, 0.26], 0.8, 0.12),
        ([0, 1, 0], [0.0, 0.0, 0.12], 0.5, 0.10),
        ([0, 0, 1], [0.0, 0.0, 0.10], 0.3, 0.08),
    ]
    arm_start = len(links)
    parent = 0
    for k, (axis, xyz, mass, length) in enumerate(arm_geom, start=1):
        links.append(Link(f"arm_{k}", parent, REVOLUTE, mass, [0, 0, length / 2],
                          _rod_inertia(mass, max(length, 0.08)), axis=axis,
                          origin_pos=xyz))
        parent = len(links) - 1

    arm_links = list(range(arm_start, len(links)))
    base_links = [i for i in range(len(links)) if i not in arm_links]
    tool = PointFrame(len(links) - 1, np.array([0.0, 0.0, 0.10]))
    return RobotModel(links, feet, base_links, arm_links, tool=tool,
                      name="desk_quadruped_arm")
