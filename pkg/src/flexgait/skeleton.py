"""Rigid skeleton: floating pelvis base plus revolute flexion-extension joints.

Bodies form a tree rooted at the pelvis.  All sagittal-plane conventions in
the bundled models use x forward, y up, z lateral, with joint axes along z.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels as _k
from .liegroup import Pose


class ModelError(ValueError):
    """Malformed skeleton or model description."""


@dataclass(frozen=True)
class BodySpec:
    name: str
    mass: float
    com: np.ndarray              # body frame, m
    inertia: np.ndarray          # 3x3 about the com, kg m^2
    parent_joint: str | None = None

    def __post_init__(self):
        if not (self.mass > 0):
            raise ModelError(f"body {self.name}: mass must be > 0")
        object.__setattr__(self, "com", np.asarray(self.com, float).reshape(3))
        I = np.asarray(self.inertia, float).reshape(3, 3)
        if np.abs(I - I.T).max() > 1e-9 * max(1.0, np.abs(I).max()):
            raise ModelError(f"body {self.name}: inertia must be symmetric")
        if np.linalg.eigvalsh(I).min() <= 0:
            raise ModelError(f"body {self.name}: inertia must be positive definite")
        object.__setattr__(self, "inertia", I)

    def spatial_inertia(self) -> np.ndarray:
        """6x6 inertia at the body frame origin, (angular, linear) twist order."""
        c = self.com
        cx = _k._skew(c)
        L = np.zeros((6, 6))
        L[:3, :3] = self.inertia + self.mass * (c @ c * np.eye(3) - np.outer(c, c))
        L[:3, 3:] = self.mass * cx
        L[3:, :3] = self.mass * cx.T
        L[3:, 3:] = self.mass * np.eye(3)
        return L


@dataclass(frozen=True)
class JointSpec:
    name: str
    axis: np.ndarray
    parent: str
    child: str
    mount: Pose
    limits: tuple = (-2.5, 2.5)   # rad
    torque_limit: float = 300.0   # N m

    def __post_init__(self):
        a = np.asarray(self.axis, float).reshape(3)
        n = np.linalg.norm(a)
        if abs(n - 1.0) > 1e-9:
            raise ModelError(f"joint {self.name}: axis must be unit length")
        object.__setattr__(self, "axis", a)
        lo, hi = self.limits
        if not lo < hi:
            raise ModelError(f"joint {self.name}: lower limit must be < upper")


@dataclass(frozen=True)
class SkeletonSpec:
    """Tree of bodies and revolute joints plus end-effector and socket frames."""

    bodies: tuple
    joints: tuple
    end_effectors: tuple = ()    # (name, body, local point) triples
    socket_body: str | None = None
    socket_pose: Pose = field(default_factory=Pose.identity)
    strict: bool = True          # enforce the full-model joint/end-effector counts

    def __post_init__(self):
        object.__setattr__(self, "bodies", tuple(self.bodies))
        object.__setattr__(self, "joints", tuple(self.joints))
        object.__setattr__(self, "end_effectors", tuple(self.end_effectors))
        self._validate()
        object.__setattr__(self, "_order", self._topo_order())

    # -- validation / indexing ------------------------------------------------

    def _validate(self):
        names = [b.name for b in self.bodies]
        if len(set(names)) != len(names):
            raise ModelError("duplicate body names")
        by_name = {b.name: b for b in self.bodies}
        roots = [b for b in self.bodies if b.parent_joint is None]
        if len(roots) != 1:
            raise ModelError(f"need exactly one root body, found {len(roots)}")
        jnames = [j.name for j in self.joints]
        if len(set(jnames)) != len(jnames):
            raise ModelError("duplicate joint names")
        jby_child = {}
        for j in self.joints:
            if j.parent not in by_name or j.child not in by_name:
                raise ModelError(f"joint {j.name} references unknown body")
            if j.child in jby_child:
                raise ModelError(f"body {j.child} has multiple parent joints")
            jby_child[j.child] = j
        for b in self.bodies:
            if b.parent_joint is None:
                continue
            j = jby_child.get(b.name)
            if j is None or j.name != b.parent_joint:
                raise ModelError(f"body {b.name} parent joint mismatch")
        # cycle check: walk each body to the root
        for b in self.bodies:
            seen = set()
            cur = b
            while cur.parent_joint is not None:
                if cur.name in seen:
                    raise ModelError(f"cycle detected at body {cur.name}")
                seen.add(cur.name)
                cur = by_name[jby_child[cur.name].parent]
        for name, body, _ in self.end_effectors:
            if body not in by_name:
                raise ModelError(f"end effector {name} on unknown body {body}")
        if self.socket_body is not None and self.socket_body not in by_name:
            raise ModelError(f"socket on unknown body {self.socket_body}")
        if self.strict:
            if len(self.joints) != 9:
                raise ModelError(f"full model needs 9 actuated joints, got {len(self.joints)}")
            if len(self.end_effectors) != 5:
                raise ModelError(f"full model needs 5 end effectors, got {len(self.end_effectors)}")

    def _topo_order(self):
        """Bodies sorted parents-first, root at index 0."""
        by_name = {b.name: b for b in self.bodies}
        jby_child = {j.child: j for j in self.joints}
        order, placed = [], set()
        root = next(b for b in self.bodies if b.parent_joint is None)
        order.append(root.name)
        placed.add(root.name)
        while len(order) < len(self.bodies):
            progressed = False
            for b in self.bodies:
                if b.name in placed:
                    continue
                if jby_child[b.name].parent in placed:
                    order.append(b.name)
                    placed.add(b.name)
                    progressed = True
            if not progressed:
                raise ModelError("disconnected bodies in skeleton tree")
        return order

    @property
    def n_joints(self) -> int:
        return len(self.joints)

    def body(self, name: str) -> BodySpec:
        for b in self.bodies:
            if b.name == name:
                return b
        raise ValueError(f"unknown body {name}")

    def joint_index(self, name: str) -> int:
        for i, j in enumerate(self.joints):
            if j.name == name:
                return i
        raise ValueError(f"unknown joint {name}")

    def joint_limits(self) -> tuple:
        lo = np.array([j.limits[0] for j in self.joints])
        hi = np.array([j.limits[1] for j in self.joints])
        return lo, hi

    def torque_limits(self) -> np.ndarray:
        return np.array([j.torque_limit for j in self.joints])

    # -- kernel packing --------------------------------------------------------

    def packed(self):
        """(parents, mounts, axes, jcols, inertias, body order) kernel arrays."""
        order = self._order
        idx = {n: i for i, n in enumerate(order)}
        nb = len(order)
        parents = np.full(nb, -1, np.int64)
        mounts = np.zeros((nb, 4, 4))
        axes = np.zeros((nb, 3))
        jcols = np.full(nb, -1, np.int64)
        inertias = np.zeros((nb, 6, 6))
        mounts[0] = np.eye(4)
        jby_child = {j.child: j for j in self.joints}
        for i, name in enumerate(order):
            b = self.body(name)
            inertias[i] = b.spatial_inertia()
            if i == 0:
                continue
            j = jby_child[name]
            parents[i] = idx[j.parent]
            mounts[i] = j.mount.matrix()
            axes[i] = j.axis
            jcols[i] = 6 + self.joint_index(j.name)
        return parents, mounts, axes, jcols, inertias, order

    def total_mass(self) -> float:
        return float(sum(b.mass for b in self.bodies))


@dataclass
class FKResult:
    body_poses: dict            # name -> Pose
    end_effectors: np.ndarray   # (n_ee, 3) world positions, spec order
    socket: Pose | None
    clamped: bool               # any joint angle clamped to its limits


def skeleton_fk(spec: SkeletonSpec, H0: Pose, qR) -> FKResult:
    """World poses of every body plus end-effector points and the socket frame.

    Joint angles outside their limits are clamped and flagged.
    """
    qR = np.asarray(qR, float).reshape(spec.n_joints)
    lo, hi = spec.joint_limits()
    qc = np.clip(qR, lo, hi)
    clamped = bool(np.any(qc != qR))
    parents, mounts, axes, jcols, _, order = spec.packed()
    Hb, _, _, _, _, _ = _k._fk_jac(
        parents, mounts, axes, jcols, spec.n_joints, 0,
        H0.matrix(), qc, np.zeros(0), -1, np.eye(4), np.zeros(0),
        np.zeros(0), 0)
    poses = {name: Pose.from_matrix(Hb[i]) for i, name in enumerate(order)}
    ee = np.array([poses[body].apply(np.asarray(pt, float))
                   for _, body, pt in spec.end_effectors]).reshape(-1, 3)
    socket = None
    if spec.socket_body is not None:
        socket = poses[spec.socket_body] @ spec.socket_pose
    return FKResult(poses, ee, socket, clamped)


def point_jacobian(spec: SkeletonSpec, H0: Pose, qR, body: str, local_point) -> np.ndarray:
    """Body-twist Jacobian of a frame at local_point on body, 6 x (6 + n_joints).

    Maps [base body twist; joint rates] to the body twist of the offset frame
    (orientation of the host body).
    """
    names = [b.name for b in spec.bodies]
    if body not in names:
        raise ValueError(f"unknown body {body}")
    qR = np.asarray(qR, float).reshape(spec.n_joints)
    parents, mounts, axes, jcols, _, order = spec.packed()
    _, Jb, _, _, _, _ = _k._fk_jac(
        parents, mounts, axes, jcols, spec.n_joints, 0,
        H0.matrix(), qR, np.zeros(0), -1, np.eye(4), np.zeros(0),
        np.zeros(0), 1)
    i = order.index(body)
    return np.asarray(_k._point_jacobian(Jb[i], np.asarray(local_point, float)))
