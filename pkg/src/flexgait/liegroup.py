"""SE(3)/se(3) primitives: poses, twists, exponential/log maps and adjoints.

Twists are plain 6-vectors ordered (angular, linear); this ordering is shared
by every module in the package.  Strain twists carry units (rad/m, stretch),
velocity twists carry (rad/s, m/s).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as _k

SERIES_EPS = _k.SERIES_EPS


class IllConditionedError(ValueError):
    """Raised when a map is evaluated too close to a singularity."""


def twist(angular, linear) -> np.ndarray:
    """Build a 6-vector twist from angular and linear parts."""
    return np.concatenate([np.asarray(angular, float), np.asarray(linear, float)])


@dataclass(frozen=True)
class Pose:
    """Rigid transform: orthonormal rotation plus position, body -> world."""

    rotation: np.ndarray
    position: np.ndarray

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.eye(3), np.zeros(3))

    @staticmethod
    def from_matrix(H: np.ndarray) -> "Pose":
        H = np.asarray(H, float)
        return Pose(H[:3, :3].copy(), H[:3, 3].copy())

    def matrix(self) -> np.ndarray:
        H = np.eye(4)
        H[:3, :3] = self.rotation
        H[:3, 3] = self.position
        return H

    def __matmul__(self, other: "Pose") -> "Pose":
        return Pose(self.rotation @ other.rotation,
                    self.rotation @ other.position + self.position)

    def inverse(self) -> "Pose":
        return Pose(self.rotation.T, -self.rotation.T @ self.position)

    def apply(self, point) -> np.ndarray:
        return self.rotation @ np.asarray(point, float) + self.position

    def is_valid(self, tol: float = 1e-10) -> bool:
        R = self.rotation
        return (np.linalg.norm(R.T @ R - np.eye(3)) < tol
                and abs(np.linalg.det(R) - 1.0) < tol
                and np.all(np.isfinite(self.position)))


def _check_finite(xi: np.ndarray) -> np.ndarray:
    xi = np.asarray(xi, float)
    if xi.shape != (6,):
        raise ValueError(f"twist must have shape (6,), got {xi.shape}")
    if not np.all(np.isfinite(xi)):
        raise ValueError("twist has non-finite entries")
    return xi


def exp_se3(xi, s: float = 1.0) -> Pose:
    """SE(3) exponential of s*xi, Rodrigues form with series fallback near 0."""
    xi = _check_finite(xi)
    if not np.isfinite(s) or s < 0.0:
        raise ValueError(f"arclength must be finite and >= 0, got {s}")
    return Pose.from_matrix(_k._exp_se3(xi, float(s)))


def log_se3(pose: Pose) -> np.ndarray:
    """Inverse of exp_se3(., 1).  Rejects rotations within 1e-3 of angle pi."""
    R = np.asarray(pose.rotation, float)
    p = np.asarray(pose.position, float)
    c = np.clip((np.trace(R) - 1.0) * 0.5, -1.0, 1.0)
    th = float(np.arccos(c))
    if th > np.pi - 1e-3:
        raise IllConditionedError(f"rotation angle {th:.6f} too close to pi")
    vee = 0.5 * np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    if th < 1e-7:
        w = vee * (1.0 + th * th / 6.0)
    else:
        w = vee * th / np.sin(th)
    W = _k._skew(w)
    th2 = th * th
    if th < 1e-5:
        d = 1.0 / 12.0 + th2 / 720.0
    else:
        d = (1.0 - 0.5 * th * np.sin(th) / (1.0 - np.cos(th))) / th2
    Vinv = np.eye(3) - 0.5 * W + d * (W @ W)
    return np.concatenate([w, Vinv @ p])


def log_so3(R: np.ndarray) -> np.ndarray:
    """Rotation vector of an orthonormal matrix (angle < pi - 1e-3)."""
    c = np.clip((np.trace(R) - 1.0) * 0.5, -1.0, 1.0)
    th = float(np.arccos(c))
    if th > np.pi - 1e-3:
        raise IllConditionedError(f"rotation angle {th:.6f} too close to pi")
    return np.asarray(_k._log_so3_vec(np.asarray(R, float)))


def adjoint(pose: Pose) -> np.ndarray:
    """6x6 Ad(H) mapping body twists to world twists."""
    if not pose.is_valid(1e-8):
        raise ValueError("adjoint of an invalid pose")
    return np.asarray(_k._adjoint(pose.matrix()))


def ad(xi) -> np.ndarray:
    """Little adjoint: ad(x) y = [x, y] on se(3)."""
    return np.asarray(_k._ad(_check_finite(xi)))


def tangent_body(xi) -> np.ndarray:
    """Right Jacobian J_r of the exponential: d exp(x)/dt = exp(x)[J_r xdot]."""
    return np.asarray(_k._tangent(_check_finite(xi)))
