"""Hybrid-link equations of motion: assembly, contact, integration.

The generalized velocity stacks [base body twist | joint rates | strain rates].
M and b are assembled by Jacobian aggregation over rigid bodies and rod
quadrature strips; the velocity-product part of b comes from a complex-step
derivative of the Jacobians, exact to machine precision.

The viscoelastic rod force K(q_eq - q_S) - D qdot_S is internal to the
dynamics: forward_dynamics/step add it, inverse_dynamics subtracts it.  The
GeneralizedForce argument carries only applied forces (PD torques, the pelvis
stabilizer wrench, optional external rod forcing).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels as _k
from .liegroup import Pose
from .model import Model
from .rod import RodState

STEP_DT = 1.0 / 1200.0        # inner integration step
SUBSTEPS_PER_TICK = 40        # 30 Hz control tick


class SimulationDivergedError(RuntimeError):
    """Raised when the state leaves the finite range during integration."""


@dataclass
class HybridState:
    """Full generalized state: base pose/velocity, joint and strain coordinates."""

    base: Pose
    base_velocity: np.ndarray   # body twist (angular, linear)
    qR: np.ndarray
    qdR: np.ndarray
    rod: RodState

    def __post_init__(self):
        self.base_velocity = np.asarray(self.base_velocity, float).reshape(6)
        self.qR = np.atleast_1d(np.asarray(self.qR, float))
        self.qdR = np.atleast_1d(np.asarray(self.qdR, float))

    @staticmethod
    def rest(model: Model, base: Pose | None = None) -> "HybridState":
        base = base if base is not None else Pose.identity()
        ns = model.n_strain
        return HybridState(base, np.zeros(6), np.zeros(model.n_joints),
                           np.zeros(model.n_joints),
                           RodState(model.rest_strains(), np.zeros(ns)))

    def velocity_vector(self) -> np.ndarray:
        return np.concatenate([self.base_velocity, self.qdR, self.rod.strain_rates])

    def arrays(self):
        """Mutable copies in kernel layout: (H0, qR, qS, v)."""
        return (self.base.matrix(), self.qR.copy(), self.rod.strains.copy(),
                self.velocity_vector())

    @staticmethod
    def from_arrays(model: Model, H0, qR, qS, v) -> "HybridState":
        nj = model.n_joints
        return HybridState(Pose.from_matrix(H0), v[:6].copy(), qR.copy(),
                           v[6:6 + nj].copy(), RodState(qS.copy(), v[6 + nj:].copy()))

    def copy(self) -> "HybridState":
        return HybridState(self.base, self.base_velocity.copy(), self.qR.copy(),
                           self.qdR.copy(),
                           RodState(self.rod.strains.copy(),
                                    self.rod.strain_rates.copy()))

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.base.matrix()))
                    and np.all(np.isfinite(self.velocity_vector()))
                    and np.all(np.isfinite(self.qR))
                    and np.all(np.isfinite(self.rod.strains)))


@dataclass
class GeneralizedForce:
    """Applied generalized force; base part is the stabilizer wrench only."""

    base: np.ndarray
    rigid: np.ndarray
    rod: np.ndarray

    def __post_init__(self):
        self.base = np.asarray(self.base, float).reshape(6)
        self.rigid = np.atleast_1d(np.asarray(self.rigid, float))
        self.rod = np.atleast_1d(np.asarray(self.rod, float)) if np.size(self.rod) \
            else np.zeros(0)

    @staticmethod
    def zero(model: Model) -> "GeneralizedForce":
        return GeneralizedForce(np.zeros(6), np.zeros(model.n_joints),
                                np.zeros(model.n_strain))

    def packed(self) -> np.ndarray:
        return np.concatenate([self.base, self.rigid, self.rod])


@dataclass
class ContactForce:
    name: str
    host_kind: str             # "body" or "rod"
    host: tuple                # (body name, local point) or (boundary index,)
    position: np.ndarray       # world
    force: np.ndarray          # world, full vector (tangential + normal)
    normal: float
    tangential: np.ndarray
    active: bool


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------

def _kernel_state(state: HybridState):
    return state.base.matrix(), state.qR, state.rod.strains, state.velocity_vector()


def mass_matrix(model: Model, state: HybridState) -> np.ndarray:
    """Symmetric positive definite (6+nj+6N) x (6+nj+6N) inertia matrix."""
    mdl = model.packed()
    H0, qR, qS, v = _kernel_state(state)
    _, Jb, _, _, _, Jrq = _k._fk_jac(
        mdl.parents, mdl.mounts, mdl.axes, mdl.jcols, mdl.nj, model.n_segments,
        H0, qR, qS, mdl.rod_body, mdl.rod_offset, mdl.seg_len, mdl.quad_x, 1)
    return np.asarray(_k._mass_matrix(mdl.inertias, Jb, mdl.seg_lambda,
                                      mdl.seg_len, mdl.quad_w, Jrq))


def bias_vector(model: Model, state: HybridState, gravity=None) -> np.ndarray:
    """Coriolis/centrifugal plus gravity generalized force b(q, qdot)."""
    mdl = model.packed()
    if gravity is not None:
        mdl = mdl._replace(grav=np.asarray(gravity, float).reshape(3))
    H0, qR, qS, v = _kernel_state(state)
    _, b, _, _, _, _ = _k._dynamics_matrices(mdl, H0, qR, qS, v)
    return np.asarray(b)


def contact_forces(model: Model, state: HybridState,
                   ground_height: float | None = None) -> list:
    """Penalty contact forces at the declared points (world frame)."""
    mdl = model.packed()
    if ground_height is not None:
        mdl = mdl._replace(ground_y=float(ground_height))
    H0, qR, qS, v = _kernel_state(state)
    Hb, Jb, Hrb, Jrb, _, _ = _k._fk_jac(
        mdl.parents, mdl.mounts, mdl.axes, mdl.jcols, mdl.nj, model.n_segments,
        H0, qR, qS, mdl.rod_body, mdl.rod_offset, mdl.seg_len, mdl.quad_x, 1)
    nc = len(mdl.rc_body) + len(mdl.rod_cbnd)
    f = np.zeros((nc, 3))
    p = np.zeros((nc, 3))
    on = np.zeros(nc, np.int64)
    tau_c = np.zeros(model.nv)
    _k._contact_forces(mdl, Hb, Jb, Hrb, Jrb, v, f, p, on, tau_c)
    out = []
    names = model.contact_names()
    nrc = len(mdl.rc_body)
    for c in range(nc):
        if c < nrc:
            kind, host = "body", (model.contact_points[c][1], model.contact_points[c][2])
        else:
            kind, host = "rod", (int(mdl.rod_cbnd[c - nrc]),)
        out.append(ContactForce(
            name=names[c], host_kind=kind, host=host,
            position=p[c].copy(), force=f[c].copy(),
            normal=float(f[c, 1]), tangential=np.array([f[c, 0], 0.0, f[c, 2]]),
            active=bool(on[c])))
    return out


def generalized_contact_force(model: Model, state: HybridState, contacts) -> np.ndarray:
    """Sum of J_c^T f_c over the supplied contact forces."""
    mdl = model.packed()
    H0, qR, qS, v = _kernel_state(state)
    Hb, Jb, Hrb, Jrb, _, _ = _k._fk_jac(
        mdl.parents, mdl.mounts, mdl.axes, mdl.jcols, mdl.nj, model.n_segments,
        H0, qR, qS, mdl.rod_body, mdl.rod_offset, mdl.seg_len, mdl.quad_x, 1)
    order = model.body_order()
    tau = np.zeros(model.nv)
    for c in contacts:
        if not c.active:
            continue
        if c.host_kind == "body":
            i = order.index(c.host[0])
            J = np.asarray(_k._point_jacobian(Jb[i], np.asarray(c.host[1], float)))
            R = Hb[i][:3, :3]
        else:
            bnd = int(c.host[0])
            J = np.asarray(Jrb[bnd])
            R = Hrb[bnd][:3, :3]
        wrench = np.concatenate([np.zeros(3), R.T @ np.asarray(c.force, float)])
        tau += J.T @ wrench
    return tau


def _viscoelastic_packed(model: Model, state: HybridState) -> np.ndarray:
    tau = np.zeros(model.nv)
    if model.n_strain and not model.rod_frozen:
        mdl = model.packed()
        tau[6 + model.n_joints:] = (mdl.Kmat @ (mdl.rest_strain - state.rod.strains)
                                    - mdl.Dmat @ state.rod.strain_rates)
    return tau


def forward_dynamics(model: Model, state: HybridState, tau: GeneralizedForce,
                     contacts=()) -> np.ndarray:
    """Generalized acceleration solving M qdd = tau + tau_visc + J^T f - b.

    Frozen coordinates (fixed base, rigid prosthesis variant) get zero
    acceleration.
    """
    mdl = model.packed()
    H0, qR, qS, v = _kernel_state(state)
    M, b, _, _, _, _ = _k._dynamics_matrices(mdl, H0, qR, qS, v)
    rhs = tau.packed() + _viscoelastic_packed(model, state) - np.asarray(b)
    if contacts:
        rhs = rhs + generalized_contact_force(model, state, contacts)
    act = mdl.act_idx
    qdd = np.zeros(model.nv)
    try:
        qdd[act] = np.linalg.solve(np.asarray(M)[np.ix_(act, act)], rhs[act])
    except np.linalg.LinAlgError as e:
        raise SimulationDivergedError(f"mass matrix solve failed: {e}") from e
    if not np.all(np.isfinite(qdd)):
        raise SimulationDivergedError("non-finite acceleration")
    return qdd


def inverse_dynamics(model: Model, state: HybridState, qdd) -> GeneralizedForce:
    """Applied generalized force that produces qdd (no contacts):
    tau = M qdd + b - tau_viscoelastic."""
    qdd = np.asarray(qdd, float).reshape(model.nv)
    mdl = model.packed()
    H0, qR, qS, v = _kernel_state(state)
    M, b, _, _, _, _ = _k._dynamics_matrices(mdl, H0, qR, qS, v)
    tau = np.asarray(M) @ qdd + np.asarray(b) - _viscoelastic_packed(model, state)
    nj = model.n_joints
    return GeneralizedForce(tau[:6], tau[6:6 + nj], tau[6 + nj:])


def step(model: Model, state: HybridState, tau: GeneralizedForce,
         dt: float = STEP_DT) -> HybridState:
    """One semi-implicit Euler step (velocity update, then positions with the
    new velocities; rod damping implicit in the velocity solve)."""
    if not (dt > 0):
        raise ValueError(f"dt must be > 0, got {dt}")
    mdl = model.packed()
    H0, qR, qS, v = state.arrays()
    nc = max(1, len(mdl.rc_body) + len(mdl.rod_cbnd))
    f = np.zeros((nc, 3))
    p = np.zeros((nc, 3))
    on = np.zeros(nc, np.int64)
    status = _k._substep(mdl, H0, qR, qS, v, tau.base, tau.rigid, tau.rod,
                         float(dt), f, p, on, 0)
    if status != 0:
        raise SimulationDivergedError("state became non-finite during step")
    return HybridState.from_arrays(model, H0, qR, qS, v)


# ---------------------------------------------------------------------------
# energy and momentum audits
# ---------------------------------------------------------------------------

def _entity_frames_and_jacobians(model: Model, state: HybridState):
    mdl = model.packed()
    H0, qR, qS, v = _kernel_state(state)
    Hb, Jb, Hrb, Jrb, Hrq, Jrq = _k._fk_jac(
        mdl.parents, mdl.mounts, mdl.axes, mdl.jcols, mdl.nj, model.n_segments,
        H0, qR, qS, mdl.rod_body, mdl.rod_offset, mdl.seg_len, mdl.quad_x, 1)
    entities = []
    for i in range(len(mdl.parents)):
        entities.append((np.asarray(Hb[i]), np.asarray(Jb[i]),
                         np.asarray(mdl.inertias[i])))
    nq = len(mdl.quad_x)
    for i in range(model.n_segments):
        for m in range(nq):
            w = mdl.seg_len[i] * mdl.quad_w[m]
            entities.append((np.asarray(Hrq[i * nq + m]),
                             np.asarray(Jrq[i * nq + m]),
                             w * np.asarray(mdl.seg_lambda[i])))
    return entities, v


def total_energy(model: Model, state: HybridState) -> float:
    """Kinetic + gravitational potential + rod elastic energy."""
    from .rod import elastic_energy

    entities, v = _entity_frames_and_jacobians(model, state)
    g = model.gravity
    e = 0.0
    for H, J, Lam in entities:
        eta = J @ v
        e += 0.5 * eta @ Lam @ eta
        # potential of the entity: -m g . r_com, with m c encoded in Lam
        m = Lam[3, 3]
        mc = np.array([Lam[2, 4], Lam[0, 5], Lam[1, 3]])  # m * com (skew upper part)
        r_com_world = H[:3, 3] + H[:3, :3] @ (mc / m if m > 0 else np.zeros(3))
        e -= m * g @ r_com_world
    if model.rod is not None and not model.rod_frozen:
        e += elastic_energy(model.rod, state.rod)
    elif model.rod is not None:
        e += elastic_energy(model.rod, RodState(state.rod.strains,
                                                np.zeros_like(state.rod.strain_rates)))
    return float(e)


def momentum(model: Model, state: HybridState) -> np.ndarray:
    """Spatial momentum about the world origin, (angular, linear)."""
    entities, v = _entity_frames_and_jacobians(model, state)
    h = np.zeros(6)
    for H, J, Lam in entities:
        hb = Lam @ (J @ v)
        h += np.asarray(_k._adjoint(_k._inv_pose(H))).T @ hb
    return h


# ---------------------------------------------------------------------------
# fast simulation path (control ticks of SUBSTEPS_PER_TICK kernel steps)
# ---------------------------------------------------------------------------

class Simulator:
    """Mutable simulation of one model: owns the packed state arrays and runs
    whole control ticks inside the kernels (zero-order-hold joint torques,
    stabilizer evaluated per substep)."""

    def __init__(self, model: Model, state: HybridState | None = None,
                 dt: float = STEP_DT, substeps: int = SUBSTEPS_PER_TICK,
                 use_stabilizer: bool = True):
        self.model = model
        self.mdl = model.packed()
        self.dt = float(dt)
        self.substeps = int(substeps)
        self.use_stabilizer = 1 if use_stabilizer else 0
        self.t = 0.0
        self.n_contacts = len(self.mdl.rc_body) + len(self.mdl.rod_cbnd)
        self._row_width = 12 + 2 * model.n_joints + 2 * model.n_strain
        self.reset(state if state is not None else HybridState.rest(model))

    def reset(self, state: HybridState):
        self.H0, self.qR, self.qS, self.v = state.arrays()
        self.t = 0.0

    def state(self) -> HybridState:
        return HybridState.from_arrays(self.model, self.H0, self.qR, self.qS, self.v)

    def tick(self, tau_rigid, tau_base=None, tau_rod=None, record: bool = False):
        """Advance one 30 Hz control tick.  Returns per-substep record arrays
        (state rows, contact positions/forces/flags) when record is True."""
        nj = self.model.n_joints
        tau_rigid = np.asarray(tau_rigid, float).reshape(nj)
        tau_base = np.zeros(6) if tau_base is None else np.asarray(tau_base, float)
        tau_rod = (np.zeros(self.model.n_strain) if tau_rod is None
                   else np.asarray(tau_rod, float))
        n = self.substeps if record else 1
        nc = max(1, self.n_contacts)
        rec_f = np.zeros((n, nc, 3))
        rec_p = np.zeros((n, nc, 3))
        rec_on = np.zeros((n, nc), np.int64)
        rec_q = np.zeros((n, self._row_width))
        status = _k._run_substeps(self.mdl, self.H0, self.qR, self.qS, self.v,
                                  tau_base, tau_rigid, tau_rod, self.dt,
                                  self.substeps, rec_f, rec_p, rec_on, rec_q,
                                  1 if record else 0, self.use_stabilizer)
        self.t += self.dt * self.substeps
        if status != 0:
            raise SimulationDivergedError(f"simulation diverged at t={self.t:.4f}")
        if record:
            return rec_q, rec_p, rec_f, rec_on
        return None
