"""Piece-wise constant strain model of the leaf-spring prosthesis.

The rod is split into segments, each carrying a constant 6-D strain twist;
cross-section poses follow from chained SE(3) exponentials.  Internal forces
are linear viscoelastic about a rest strain, and distributed inertia is
integrated by per-segment Gauss-Legendre quadrature.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels as _k
from .liegroup import Pose, exp_se3

GAUSS_POINTS = 5


def gauss_rule(n: int = GAUSS_POINTS):
    """Gauss-Legendre nodes/weights mapped to (0, 1), weights summing to 1."""
    x, w = np.polynomial.legendre.leggauss(n)
    return (x + 1.0) / 2.0, w / 2.0


def _check_spd_ish(M: np.ndarray, name: str) -> np.ndarray:
    M = np.asarray(M, float)
    if M.shape != (6, 6):
        raise ValueError(f"{name} must be 6x6, got {M.shape}")
    if np.abs(M - M.T).max() > 1e-9 * max(1.0, np.abs(M).max()):
        raise ValueError(f"{name} must be symmetric")
    if np.linalg.eigvalsh(M).min() < -1e-9 * max(1.0, np.abs(M).max()):
        raise ValueError(f"{name} must be positive semidefinite")
    return M


@dataclass(frozen=True)
class SegmentSpec:
    """One constant-strain segment: geometry, inertia densities, viscoelasticity."""

    length: float
    linear_density: float                 # kg/m
    rotational_inertia_density: np.ndarray  # 3x3, kg*m per unit length
    rest_strain: np.ndarray               # 6-vector, unloaded strain
    stiffness: np.ndarray                 # 6x6 block of K
    damping: np.ndarray                   # 6x6 block of D

    def __post_init__(self):
        if not (self.length > 0):
            raise ValueError(f"segment length must be > 0, got {self.length}")
        object.__setattr__(self, "rotational_inertia_density",
                           np.asarray(self.rotational_inertia_density, float))
        rest = np.asarray(self.rest_strain, float).reshape(6)
        if rest[3] <= 0:
            raise ValueError("rest strain must have positive axial component")
        object.__setattr__(self, "rest_strain", rest)
        object.__setattr__(self, "stiffness", _check_spd_ish(self.stiffness, "stiffness"))
        object.__setattr__(self, "damping", _check_spd_ish(self.damping, "damping"))

    def inertia_density(self) -> np.ndarray:
        """6x6 spatial inertia per unit length at the cross-section frame."""
        lam = np.zeros((6, 6))
        lam[:3, :3] = self.rotational_inertia_density
        lam[3:, 3:] = self.linear_density * np.eye(3)
        return lam


@dataclass(frozen=True)
class RodSpec:
    """Ordered segments plus the pose of the rod root in the socket frame."""

    segments: tuple
    attachment: Pose = field(default_factory=Pose.identity)

    def __post_init__(self):
        segs = tuple(self.segments)
        if len(segs) < 1:
            raise ValueError("rod needs at least one segment")
        object.__setattr__(self, "segments", segs)

    @property
    def n_segments(self) -> int:
        return len(self.segments)

    def boundaries(self) -> np.ndarray:
        """Cumulative arclengths L_0..L_N."""
        return np.concatenate([[0.0], np.cumsum([s.length for s in self.segments])])

    def lengths(self) -> np.ndarray:
        return np.array([s.length for s in self.segments])

    def rest_strains(self) -> np.ndarray:
        return np.concatenate([s.rest_strain for s in self.segments])

    def stiffness_matrix(self) -> np.ndarray:
        K = np.zeros((6 * self.n_segments,) * 2)
        for i, s in enumerate(self.segments):
            K[6 * i:6 * i + 6, 6 * i:6 * i + 6] = s.stiffness
        return K

    def damping_matrix(self) -> np.ndarray:
        D = np.zeros((6 * self.n_segments,) * 2)
        for i, s in enumerate(self.segments):
            D[6 * i:6 * i + 6, 6 * i:6 * i + 6] = s.damping
        return D

    def total_mass(self) -> float:
        return float(sum(s.linear_density * s.length for s in self.segments))

    def scaled(self, stiffness_scale: float, damping_scale: float = 1.0) -> "RodSpec":
        """Copy with K (and optionally D) scaled, as in the stiffness sweep."""
        segs = tuple(
            SegmentSpec(s.length, s.linear_density, s.rotational_inertia_density,
                        s.rest_strain, stiffness_scale * s.stiffness,
                        damping_scale * s.damping)
            for s in self.segments)
        return RodSpec(segs, self.attachment)


@dataclass
class RodState:
    """Strains and strain rates, flat 6N vectors."""

    strains: np.ndarray
    strain_rates: np.ndarray

    def __post_init__(self):
        self.strains = np.asarray(self.strains, float).reshape(-1)
        self.strain_rates = np.asarray(self.strain_rates, float).reshape(-1)
        if self.strains.shape != self.strain_rates.shape:
            raise ValueError("strains and strain_rates must have equal length")
        if self.strains.size % 6 != 0:
            raise ValueError("strain vector length must be a multiple of 6")

    @staticmethod
    def rest(spec: RodSpec) -> "RodState":
        q = spec.rest_strains()
        return RodState(q, np.zeros_like(q))


def _check_state(spec: RodSpec, state: RodState):
    if state.strains.size != 6 * spec.n_segments:
        raise ValueError(
            f"state has {state.strains.size} strain coordinates, "
            f"spec needs {6 * spec.n_segments}")


class RodKinematics:
    """Boundary poses of the rod plus continuous arclength queries."""

    def __init__(self, spec: RodSpec, state: RodState, root: Pose):
        _check_state(spec, state)
        self.spec = spec
        self.boundaries = spec.boundaries()
        self._strains = state.strains.reshape(-1, 6)
        poses = [root @ spec.attachment]
        for i, seg in enumerate(spec.segments):
            poses.append(poses[-1] @ exp_se3(self._strains[i], seg.length))
        self.poses = poses

    def query(self, s: float) -> Pose:
        L = self.boundaries
        if s < -1e-12 or s > L[-1] + 1e-12:
            raise ValueError(f"arclength {s} outside [0, {L[-1]}]")
        s = min(max(s, 0.0), L[-1])
        i = min(int(np.searchsorted(L, s, side="right")) - 1, len(L) - 2)
        i = max(i, 0)
        return self.poses[i] @ exp_se3(self._strains[i], s - L[i])


def rod_forward_kinematics(spec: RodSpec, state: RodState, root: Pose) -> RodKinematics:
    """Chained per-segment exponentials from root compose attachment."""
    return RodKinematics(spec, state, root)


def rod_point_jacobian(spec: RodSpec, state: RodState, s: float,
                       root_jacobian: np.ndarray | None = None) -> np.ndarray:
    """Body-twist Jacobian of the cross-section at arclength s.

    Maps [root body twist (6); strain rates (6N)] to the section's body twist.
    root_jacobian replaces the leading identity block when the root itself
    moves in a larger velocity space.
    """
    _check_state(spec, state)
    L = spec.boundaries()
    if s < -1e-12 or s > L[-1] + 1e-12:
        raise ValueError(f"arclength {s} outside [0, {L[-1]}]")
    s = min(max(s, 0.0), float(L[-1]))
    N = spec.n_segments
    if root_jacobian is None:
        root_jacobian = np.hstack([np.eye(6), np.zeros((6, 6 * N))])
    root_jacobian = np.asarray(root_jacobian, float)
    nv = root_jacobian.shape[1]
    strain_col = nv - 6 * N

    J = _k._adjoint(_k._inv_pose(spec.attachment.matrix())) @ root_jacobian
    strains = state.strains.reshape(-1, 6)
    i = max(min(int(np.searchsorted(L, s, side="right")) - 1, N - 1), 0)
    for j in range(i + 1):
        xi = strains[j]
        sig = (s - L[j]) if j == i else spec.segments[j].length
        E = _k._exp_se3(xi, sig)
        J = _k._adjoint(_k._inv_pose(E)) @ J
        J[:, strain_col + 6 * j:strain_col + 6 * j + 6] += sig * _k._tangent(sig * xi)
    return J


def segment_inertia(seg: SegmentSpec, xi, n_points: int = GAUSS_POINTS) -> np.ndarray:
    """6x6 spatial inertia of one deformed segment about its start frame."""
    xi = np.asarray(xi, float).reshape(6)
    lam = seg.inertia_density()
    x, w = gauss_rule(n_points)
    M = np.zeros((6, 6))
    for m in range(n_points):
        sig = seg.length * x[m]
        Ai = _k._adjoint(_k._inv_pose(_k._exp_se3(xi, sig)))
        M += (seg.length * w[m]) * (Ai.T @ lam @ Ai)
    return 0.5 * (M + M.T)


def viscoelastic_force(spec: RodSpec, state: RodState) -> np.ndarray:
    """Internal generalized force K (q_eq - q_S) - D qdot_S."""
    _check_state(spec, state)
    return (spec.stiffness_matrix() @ (spec.rest_strains() - state.strains)
            - spec.damping_matrix() @ state.strain_rates)


def elastic_energy(spec: RodSpec, state: RodState) -> float:
    """Stored energy 1/2 (q_eq - q_S)^T K (q_eq - q_S), always >= 0."""
    _check_state(spec, state)
    d = spec.rest_strains() - state.strains
    return float(0.5 * d @ spec.stiffness_matrix() @ d)
