"""Complete simulation model: skeleton + prosthesis rod + contacts + control.

A Model owns the immutable specification and provides the packed array form
consumed by the numba kernels.  Variants (rigid prosthesis, scaled stiffness,
fixed base) are produced as copies; nothing here is mutated after creation.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ._kernels import PackedModel
from .liegroup import Pose
from .rod import GAUSS_POINTS, RodSpec, gauss_rule
from .skeleton import ModelError, SkeletonSpec


@dataclass(frozen=True)
class ContactParams:
    stiffness: float = 5.0e4      # N/m
    damping: float = 500.0        # N s/m
    friction: float = 0.8
    tangent_rate: float = 2.0e3   # N s/m, viscous pre-slip slope
    ground_height: float = 0.0    # m, plane y = ground_height


@dataclass(frozen=True)
class ControlParams:
    kp: np.ndarray                # per-joint PD gains
    kd: np.ndarray
    stabilizer_kp: float = 2000.0
    stabilizer_kd: float = 100.0

    def __post_init__(self):
        object.__setattr__(self, "kp", np.atleast_1d(np.asarray(self.kp, float)))
        object.__setattr__(self, "kd", np.atleast_1d(np.asarray(self.kd, float)))
        if np.any(self.kp < 0) or np.any(self.kd < 0):
            raise ModelError("PD gains must be non-negative")


@dataclass(frozen=True)
class Model:
    name: str
    skeleton: SkeletonSpec
    rod: RodSpec | None
    control: ControlParams
    contacts: ContactParams = field(default_factory=ContactParams)
    contact_points: tuple = ()          # (name, body, local point) on rigid bodies
    rod_contact_boundaries: tuple = ()  # rod boundary indices that may touch ground
    gravity: np.ndarray = field(default_factory=lambda: np.array([0.0, -9.81, 0.0]))
    base_fixed: bool = False
    rod_frozen: bool = False

    def __post_init__(self):
        object.__setattr__(self, "gravity", np.asarray(self.gravity, float).reshape(3))
        object.__setattr__(self, "contact_points", tuple(self.contact_points))
        object.__setattr__(self, "rod_contact_boundaries",
                           tuple(self.rod_contact_boundaries))
        if self.rod is not None and self.skeleton.socket_body is None:
            raise ModelError("model has a rod but the skeleton declares no socket")
        for bnd in self.rod_contact_boundaries:
            n = self.rod.n_segments if self.rod is not None else 0
            if not (0 <= bnd <= n):
                raise ModelError(f"rod contact boundary {bnd} out of range")
        nj = self.skeleton.n_joints
        if self.control.kp.size == 1:
            object.__setattr__(self, "control",
                               replace(self.control,
                                       kp=np.full(nj, float(self.control.kp)),
                                       kd=np.full(nj, float(self.control.kd))))
        if self.control.kp.size != nj or self.control.kd.size != nj:
            raise ModelError("PD gain vectors must match the joint count")
        if self.total_mass() <= 0:
            raise ModelError("model must carry mass")

    # -- dimensions -----------------------------------------------------------

    @property
    def n_joints(self) -> int:
        return self.skeleton.n_joints

    @property
    def n_segments(self) -> int:
        return self.rod.n_segments if self.rod is not None else 0

    @property
    def n_strain(self) -> int:
        return 6 * self.n_segments

    @property
    def nv(self) -> int:
        return 6 + self.n_joints + self.n_strain

    def total_mass(self) -> float:
        m = self.skeleton.total_mass()
        if self.rod is not None:
            m += self.rod.total_mass()
        return m

    # -- variants ---------------------------------------------------------------

    def make_rigid_variant(self) -> "Model":
        """Prosthesis frozen at rest strain: identical geometry and mass, the
        strain coordinates are removed from the dynamics."""
        if self.rod is None:
            return self
        return replace(self, name=self.name + "-rigid", rod_frozen=True)

    def with_stiffness_scale(self, scale: float, damping_scale: float = 1.0) -> "Model":
        if self.rod is None:
            raise ModelError("no rod to scale")
        return replace(self, name=f"{self.name}-K{scale:g}",
                       rod=self.rod.scaled(scale, damping_scale))

    def with_fixed_base(self, fixed: bool = True) -> "Model":
        return replace(self, base_fixed=fixed)

    # -- kernel packing -----------------------------------------------------------

    def packed(self) -> PackedModel:
        parents, mounts, axes, jcols, inertias, order = self.skeleton.packed()
        nj = self.n_joints
        ns = self.n_segments
        nv = self.nv

        if self.rod is not None:
            seg_len = self.rod.lengths()
            seg_lambda = np.stack([s.inertia_density() for s in self.rod.segments])
            rest = self.rod.rest_strains()
            Kmat = self.rod.stiffness_matrix()
            Dmat = self.rod.damping_matrix()
            rod_body = order.index(self.skeleton.socket_body)
            rod_offset = (self.skeleton.socket_pose @ self.rod.attachment).matrix()
        else:
            seg_len = np.zeros(0)
            seg_lambda = np.zeros((0, 6, 6))
            rest = np.zeros(0)
            Kmat = np.zeros((0, 0))
            Dmat = np.zeros((0, 0))
            rod_body = -1
            rod_offset = np.eye(4)

        qx, qw = gauss_rule(GAUSS_POINTS)

        body_index = {n: i for i, n in enumerate(order)}
        rc_body = np.array([body_index[b] for _, b, _ in self.contact_points],
                           np.int64)
        rc_point = np.array([np.asarray(p, float) for _, _, p in self.contact_points],
                            float).reshape(-1, 3)
        rod_cbnd = np.array(list(self.rod_contact_boundaries), np.int64)

        act = []
        if not self.base_fixed:
            act.extend(range(6))
        act.extend(range(6, 6 + nj))
        if not self.rod_frozen:
            act.extend(range(6 + nj, nv))
        act_idx = np.array(act, np.int64)

        Ddyn = np.zeros((nv, nv))
        if ns and not self.rod_frozen:
            Ddyn[6 + nj:, 6 + nj:] = Dmat

        return PackedModel(
            parents=parents, mounts=mounts, axes=axes, jcols=jcols,
            inertias=inertias, nj=nj,
            seg_len=seg_len, seg_lambda=seg_lambda, rest_strain=rest,
            Kmat=Kmat, Dmat=Dmat, rod_body=rod_body, rod_offset=rod_offset,
            quad_x=qx, quad_w=qw,
            rc_body=rc_body, rc_point=rc_point, rod_cbnd=rod_cbnd,
            kn=self.contacts.stiffness, dn=self.contacts.damping,
            mu=self.contacts.friction, kt=self.contacts.tangent_rate,
            ground_y=self.contacts.ground_height,
            grav=self.gravity, act_idx=act_idx, Ddyn=Ddyn,
            stab_kp=self.control.stabilizer_kp, stab_kd=self.control.stabilizer_kd,
            base_fixed=self.base_fixed, rod_frozen=self.rod_frozen,
        )

    def body_order(self) -> list:
        return list(self.skeleton.packed()[5])

    def rest_strains(self) -> np.ndarray:
        return self.rod.rest_strains() if self.rod is not None else np.zeros(0)

    def contact_names(self) -> list:
        names = [name for name, _, _ in self.contact_points]
        names += [f"rod_boundary_{b}" for b in self.rod_contact_boundaries]
        return names


def single_body_model(mass: float = 3.0, com=(0, 0, 0), inertia=None,
                      name: str = "single-body") -> Model:
    """Degenerate one-body model used by tests: a free rigid body, no rod."""
    from .skeleton import BodySpec

    inertia = np.asarray(inertia, float) if inertia is not None else 0.05 * np.eye(3)
    skel = SkeletonSpec((BodySpec("pelvis", mass, com, inertia),), (), (),
                        strict=False)
    ctrl = ControlParams(kp=np.zeros(0), kd=np.zeros(0))
    return Model(name, skel, None, ctrl)
