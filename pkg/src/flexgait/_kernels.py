"""Numba-compiled numerical core shared by the kinematics and dynamics modules.

Everything here operates on plain ndarrays so the hot simulation loop stays
allocation-light and JIT-compilable.  Conventions used throughout:

* twists are 6-vectors ordered (angular, linear)
* poses are 4x4 homogeneous matrices, body frame -> world
* body twists: Hdot = H @ [eta x]
* generalized velocity layout: [base twist (6) | joint rates (nj) | strain rates (6N)]

Most kernels are dtype-generic (float64 or complex128).  The complex path is
used for complex-step differentiation of Jacobians along the velocity flow,
which gives the velocity-product (Coriolis) terms of the bias vector to
machine precision without hand-deriving Jdot.
"""

from collections import namedtuple

import numpy as np
from numba import njit

SERIES_EPS = 1e-6  # switch point between Rodrigues closed form and Taylor series


PackedModel = namedtuple(
    "PackedModel",
    [
        # rigid bodies (topologically sorted, 0 = floating base)
        "parents",      # int64[nb]
        "mounts",       # float64[nb,4,4] joint frame in parent body frame
        "axes",         # float64[nb,3]   rotation axis in child frame
        "jcols",        # int64[nb]       velocity column of driving joint, -1 for base
        "inertias",     # float64[nb,6,6] spatial inertia at body frame
        "nj",           # int
        # rod
        "seg_len",      # float64[N]
        "seg_lambda",   # float64[N,6,6]  inertia density per unit length
        "rest_strain",  # float64[6N]
        "Kmat",         # float64[6N,6N]
        "Dmat",         # float64[6N,6N]
        "rod_body",     # int, host body of the rod root (-1: no rod)
        "rod_offset",   # float64[4,4]    rod root pose in host body frame
        "quad_x",       # float64[nq]     Gauss nodes on (0,1)
        "quad_w",       # float64[nq]     Gauss weights summing to 1
        # contacts
        "rc_body",      # int64[nrc]
        "rc_point",     # float64[nrc,3]
        "rod_cbnd",     # int64[nrb]      rod boundary indices that may touch ground
        "kn", "dn", "mu", "kt", "ground_y",
        # misc
        "grav",         # float64[3]
        "act_idx",      # int64[nact]     active velocity indices
        "Ddyn",         # float64[nv,nv]  damping placed for implicit treatment
        "stab_kp", "stab_kd",
        "base_fixed",   # bool
        "rod_frozen",   # bool
    ],
)


# ---------------------------------------------------------------------------
# se(3) primitives
# ---------------------------------------------------------------------------

@njit(cache=True)
def _skew(v):
    S = np.zeros((3, 3), dtype=v.dtype)
    S[0, 1] = -v[2]
    S[0, 2] = v[1]
    S[1, 0] = v[2]
    S[1, 2] = -v[0]
    S[2, 0] = -v[1]
    S[2, 1] = v[0]
    return S


@njit(cache=True)
def _exp_se3(xi, s):
    """exp(s [xi x]) with Rodrigues form, 4th-order series below SERIES_EPS."""
    w = s * xi[:3]
    t = s * xi[3:]
    th2 = w[0] * w[0] + w[1] * w[1] + w[2] * w[2]
    if th2.real <= SERIES_EPS * SERIES_EPS:
        a = 1.0 - th2 / 6.0 + th2 * th2 / 120.0
        b = 0.5 - th2 / 24.0 + th2 * th2 / 720.0
        c = 1.0 / 6.0 - th2 / 120.0 + th2 * th2 / 5040.0
    else:
        th = np.sqrt(th2)
        a = np.sin(th) / th
        b = (1.0 - np.cos(th)) / th2
        c = (1.0 - a) / th2
    W = _skew(w)
    W2 = W @ W
    H = np.zeros((4, 4), dtype=xi.dtype)
    for i in range(3):
        H[i, i] = 1.0
        for j in range(3):
            H[i, j] += a * W[i, j] + b * W2[i, j]
    V = np.zeros((3, 3), dtype=xi.dtype)
    for i in range(3):
        V[i, i] = 1.0
        for j in range(3):
            V[i, j] += b * W[i, j] + c * W2[i, j]
    p = V @ t
    H[0, 3] = p[0]
    H[1, 3] = p[1]
    H[2, 3] = p[2]
    H[3, 3] = 1.0
    return H


@njit(cache=True)
def _inv_pose(H):
    out = np.zeros((4, 4), dtype=H.dtype)
    for i in range(3):
        for j in range(3):
            out[i, j] = H[j, i]
    p = H[:3, 3]
    for i in range(3):
        out[i, 3] = -(H[0, i] * p[0] + H[1, i] * p[1] + H[2, i] * p[2])
    out[3, 3] = 1.0
    return out


@njit(cache=True)
def _adjoint(H):
    """Ad(H) mapping body twists to world twists, (angular, linear) order."""
    A = np.zeros((6, 6), dtype=H.dtype)
    P = _skew(H[:3, 3].copy())
    for i in range(3):
        for j in range(3):
            A[i, j] = H[i, j]
            A[3 + i, 3 + j] = H[i, j]
            acc = H[0, j] * P[i, 0]
            acc += H[1, j] * P[i, 1]
            acc += H[2, j] * P[i, 2]
            A[3 + i, j] = acc
    return A


@njit(cache=True)
def _ad(xi):
    """Little adjoint ad(xi) with [xi1, xi2] = ad(xi1) xi2."""
    K = _skew(xi[:3])
    U = _skew(xi[3:])
    A = np.zeros((6, 6), dtype=xi.dtype)
    for i in range(3):
        for j in range(3):
            A[i, j] = K[i, j]
            A[3 + i, 3 + j] = K[i, j]
            A[3 + i, j] = U[i, j]
    return A


@njit(cache=True)
def _tangent(x):
    """Right (body) Jacobian of the SE(3) exponential, J_r(x) = sum (-ad)^n/(n+1)!.

    Satisfies d/dt exp(x(t)) = exp(x) [J_r(x) xdot x].  Series converges fast
    for the strain magnitudes the rod model sees (||x|| < ~3).
    """
    A = -_ad(x)
    T = np.zeros((6, 6), dtype=x.dtype)
    term = np.zeros((6, 6), dtype=x.dtype)
    for i in range(6):
        T[i, i] = 1.0
        term[i, i] = 1.0
    for n in range(1, 40):
        term = (term @ A) / (n + 1.0)
        m = 0.0
        for i in range(6):
            for j in range(6):
                T[i, j] += term[i, j]
                a = term[i, j].real
                if a < 0.0:
                    a = -a
                if a > m:
                    m = a
        if m < 1e-17:
            break
    return T


@njit(cache=True)
def _log_so3_vec(R):
    """Rotation vector of R; valid away from angle pi (clamped, no raise)."""
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    c = (tr - 1.0) * 0.5
    if c > 1.0:
        c = 1.0
    if c < -1.0:
        c = -1.0
    th = np.arccos(c)
    v = np.empty(3)
    v[0] = R[2, 1] - R[1, 2]
    v[1] = R[0, 2] - R[2, 0]
    v[2] = R[1, 0] - R[0, 1]
    if th < 1e-7:
        f = 0.5 + th * th / 12.0
    else:
        s = np.sin(th)
        if s < 1e-9:
            s = 1e-9
        f = 0.5 * th / s
    return f * v


# ---------------------------------------------------------------------------
# forward kinematics and Jacobians
# ---------------------------------------------------------------------------

@njit(cache=True)
def _fk_jac(parents, mounts, axes, jcols, nj, nseg, H0, qR, qS,
            rod_body, rod_offset, seg_len, quad_x, want_jac):
    """FK and body-twist Jacobians for bodies, rod boundaries and quad points.

    Returns (Hb, Jb, Hrb, Jrb, Hrq, Jrq).  With want_jac == 0 the J arrays are
    allocated but left zero (pose-only pass).
    """
    nb = parents.shape[0]
    nv = 6 + nj + 6 * nseg

    Hb = np.zeros((nb, 4, 4), dtype=H0.dtype)
    Jb = np.zeros((nb, 6, nv), dtype=H0.dtype)
    Hb[0] = H0
    for k in range(6):
        Jb[0, k, k] = 1.0
    for i in range(1, nb):
        ax6 = np.zeros(6, dtype=H0.dtype)
        ax6[0] = axes[i, 0]
        ax6[1] = axes[i, 1]
        ax6[2] = axes[i, 2]
        q = qR[jcols[i] - 6]
        X = mounts[i].astype(H0.dtype) @ _exp_se3(ax6, q)
        p = parents[i]
        Hb[i] = Hb[p] @ X
        if want_jac == 1:
            AdinvX = _adjoint(_inv_pose(X))
            Jb[i] = AdinvX @ Jb[p]
            for k in range(3):
                Jb[i, k, jcols[i]] += axes[i, k]

    nq = quad_x.shape[0]
    Hrb = np.zeros((nseg + 1, 4, 4), dtype=H0.dtype)
    Jrb = np.zeros((nseg + 1, 6, nv), dtype=H0.dtype)
    Hrq = np.zeros((nseg * nq, 4, 4), dtype=H0.dtype)
    Jrq = np.zeros((nseg * nq, 6, nv), dtype=H0.dtype)
    if nseg > 0 and rod_body >= 0:
        Hrb[0] = Hb[rod_body] @ rod_offset.astype(H0.dtype)
        if want_jac == 1:
            Jrb[0] = _adjoint(_inv_pose(rod_offset.astype(H0.dtype))) @ Jb[rod_body]
        for i in range(nseg):
            xi = qS[6 * i:6 * i + 6]
            col = 6 + nj + 6 * i
            li = seg_len[i]
            for m in range(nq):
                sig = li * quad_x[m]
                E = _exp_se3(xi, sig)
                idx = i * nq + m
                Hrq[idx] = Hrb[i] @ E
                if want_jac == 1:
                    Jq = _adjoint(_inv_pose(E)) @ Jrb[i]
                    xs = xi * sig
                    T = _tangent(xs) * sig
                    for r in range(6):
                        for cc in range(6):
                            Jq[r, col + cc] += T[r, cc]
                    Jrq[idx] = Jq
            E = _exp_se3(xi, li)
            Hrb[i + 1] = Hrb[i] @ E
            if want_jac == 1:
                Jn = _adjoint(_inv_pose(E)) @ Jrb[i]
                xs = xi * li
                T = _tangent(xs) * li
                for r in range(6):
                    for cc in range(6):
                        Jn[r, col + cc] += T[r, cc]
                Jrb[i + 1] = Jn
    return Hb, Jb, Hrb, Jrb, Hrq, Jrq


@njit(cache=True)
def _point_jacobian(J, r):
    """Translate a body Jacobian to a point at body-frame offset r."""
    out = J.copy()
    rx = _skew(r.astype(J.dtype))
    top = J[:3, :].copy()
    out[3:, :] = J[3:, :] - rx @ top
    return out


# ---------------------------------------------------------------------------
# mass matrix, bias vector
# ---------------------------------------------------------------------------

@njit(cache=True)
def _mass_matrix(inertias, Jb, seg_lambda, seg_len, quad_w, Jrq):
    nb = Jb.shape[0]
    nv = Jb.shape[2]
    nq = quad_w.shape[0]
    nseg = seg_len.shape[0]
    M = np.zeros((nv, nv))
    for i in range(nb):
        M += Jb[i].T @ (inertias[i] @ Jb[i])
    for i in range(nseg):
        for m in range(nq):
            w = seg_len[i] * quad_w[m]
            J = Jrq[i * nq + m]
            M += J.T @ ((w * seg_lambda[i]) @ J)
    return 0.5 * (M + M.T)


@njit(cache=True)
def _entity_bias(J, Jc, Lam, H, v, vc, hstep, grav):
    """J^T (Lam zeta_vp - ad_eta^T Lam eta - Lam (0, R^T g)) for one entity."""
    eta = J @ v
    zeta = (Jc @ vc).imag / hstep
    R = H[:3, :3]
    gb = np.zeros(6)
    gb[3] = R[0, 0] * grav[0] + R[1, 0] * grav[1] + R[2, 0] * grav[2]
    gb[4] = R[0, 1] * grav[0] + R[1, 1] * grav[1] + R[2, 1] * grav[2]
    gb[5] = R[0, 2] * grav[0] + R[1, 2] * grav[1] + R[2, 2] * grav[2]
    F = Lam @ zeta - _ad(eta).T @ (Lam @ eta) - Lam @ gb
    return J.T @ F


@njit(cache=True)
def _bias_vector(inertias, Hb, Jb, Jbc, seg_lambda, seg_len, quad_w, Hrq, Jrq, Jrqc,
                 v, hstep, grav):
    nb = Jb.shape[0]
    nv = Jb.shape[2]
    nq = quad_w.shape[0]
    nseg = seg_len.shape[0]
    vc = v.astype(np.complex128)
    b = np.zeros(nv)
    for i in range(nb):
        b += _entity_bias(Jb[i], Jbc[i], inertias[i], Hb[i], v, vc, hstep, grav)
    for i in range(nseg):
        for m in range(nq):
            w = seg_len[i] * quad_w[m]
            idx = i * nq + m
            b += _entity_bias(Jrq[idx], Jrqc[idx], w * seg_lambda[i], Hrq[idx],
                              v, vc, hstep, grav)
    return b


CSTEP = 1e-30


@njit(cache=True)
def _dynamics_matrices(mdl, H0, qR, qS, v):
    """Assemble M and b (Coriolis/centrifugal + gravity) at the given state."""
    Hb, Jb, Hrb, Jrb, Hrq, Jrq = _fk_jac(
        mdl.parents, mdl.mounts, mdl.axes, mdl.jcols, mdl.nj, mdl.seg_len.shape[0],
        H0, qR, qS, mdl.rod_body, mdl.rod_offset, mdl.seg_len, mdl.quad_x, 1)
    # complex-step along the velocity flow; body Jacobians do not depend on H0
    nj = mdl.nj
    qRc = qR.astype(np.complex128) + 1j * CSTEP * v[6:6 + nj]
    qSc = qS.astype(np.complex128) + 1j * CSTEP * v[6 + nj:]
    H0c = H0.astype(np.complex128)
    _, Jbc, _, _, _, Jrqc = _fk_jac(
        mdl.parents, mdl.mounts, mdl.axes, mdl.jcols, mdl.nj, mdl.seg_len.shape[0],
        H0c, qRc, qSc, mdl.rod_body, mdl.rod_offset, mdl.seg_len, mdl.quad_x, 1)
    M = _mass_matrix(mdl.inertias, Jb, mdl.seg_lambda, mdl.seg_len, mdl.quad_w, Jrq)
    b = _bias_vector(mdl.inertias, Hb, Jb, Jbc, mdl.seg_lambda, mdl.seg_len,
                     mdl.quad_w, Hrq, Jrq, Jrqc, v, CSTEP, mdl.grav)
    return M, b, Hb, Jb, Hrb, Jrb


# ---------------------------------------------------------------------------
# ground contact (penalty model, ground plane y = ground_y, up = +y)
# ---------------------------------------------------------------------------

@njit(cache=True)
def _contact_forces(mdl, Hb, Jb, Hrb, Jrb, v, out_f, out_p, out_on, tau_c):
    """Penalty contact at declared points.  Fills world forces/positions and
    accumulates generalized forces into tau_c.  Returns number of points."""
    nrc = mdl.rc_body.shape[0]
    nrb = mdl.rod_cbnd.shape[0]
    nc = nrc + nrb
    tau_c[:] = 0.0
    for c in range(nc):
        if c < nrc:
            bi = mdl.rc_body[c]
            Jp = _point_jacobian(Jb[bi], mdl.rc_point[c])
            H = Hb[bi]
            r = mdl.rc_point[c]
            pw = H[:3, :3] @ r + H[:3, 3]
        else:
            bnd = mdl.rod_cbnd[c - nrc]
            Jp = Jrb[bnd]
            H = Hrb[bnd]
            pw = H[:3, 3].copy()
        R = H[:3, :3]
        etap = Jp @ v
        vw = R @ etap[3:]
        out_p[c, 0] = pw[0]
        out_p[c, 1] = pw[1]
        out_p[c, 2] = pw[2]
        out_f[c, 0] = 0.0
        out_f[c, 1] = 0.0
        out_f[c, 2] = 0.0
        out_on[c] = 0
        delta = mdl.ground_y - pw[1]
        if delta <= 0.0:
            continue
        N = mdl.kn * delta - mdl.dn * vw[1]
        if N <= 0.0:
            continue
        out_on[c] = 1
        fx = -mdl.kt * vw[0]
        fz = -mdl.kt * vw[2]
        ft = np.sqrt(fx * fx + fz * fz)
        fmax = mdl.mu * N
        if ft > fmax:
            sc = fmax / ft
            fx *= sc
            fz *= sc
        out_f[c, 0] = fx
        out_f[c, 1] = N
        out_f[c, 2] = fz
        fb = np.zeros(6)
        fw = out_f[c]
        fb[3] = R[0, 0] * fw[0] + R[1, 0] * fw[1] + R[2, 0] * fw[2]
        fb[4] = R[0, 1] * fw[0] + R[1, 1] * fw[1] + R[2, 1] * fw[2]
        fb[5] = R[0, 2] * fw[0] + R[1, 2] * fw[1] + R[2, 2] * fw[2]
        tau_c += Jp.T @ fb
    return nc


# ---------------------------------------------------------------------------
# pelvis stabilizer: PD wrench on lateral translation, roll and yaw only
# ---------------------------------------------------------------------------

@njit(cache=True)
def _stabilizer_wrench(H0, v, kp, kd):
    R = H0[:3, :3]
    rv = _log_so3_vec(R)
    ww = R @ v[:3]
    vw = R @ v[3:6]
    Mw = np.zeros(3)
    Fw = np.zeros(3)
    Mw[0] = -kp * rv[0] - kd * ww[0]   # roll
    Mw[1] = -kp * rv[1] - kd * ww[1]   # yaw
    Fw[2] = -kp * H0[2, 3] - kd * vw[2]  # lateral translation
    tau = np.zeros(6)
    for i in range(3):
        tau[i] = R[0, i] * Mw[0] + R[1, i] * Mw[1] + R[2, i] * Mw[2]
        tau[3 + i] = R[0, i] * Fw[0] + R[1, i] * Fw[1] + R[2, i] * Fw[2]
    return tau


# ---------------------------------------------------------------------------
# time stepping
# ---------------------------------------------------------------------------

@njit(cache=True)
def _viscoelastic(Kmat, Dmat, rest_strain, qS, vS):
    return Kmat @ (rest_strain - qS) - Dmat @ vS


@njit(cache=True)
def _substep(mdl, H0, qR, qS, v, tau_base, tau_rigid, tau_rod, dt,
             out_f, out_p, out_on, use_stabilizer):
    """One semi-implicit Euler step: velocity from the EoM solve (rod damping
    treated implicitly), then positions from the new velocity.  Mutates
    H0, qR, qS, v in place.  Returns 0 on success, 1 on non-finite state."""
    nj = mdl.nj
    nv = v.shape[0]
    M, b, Hb, Jb, Hrb, Jrb = _dynamics_matrices(mdl, H0, qR, qS, v)

    tau = np.zeros(nv)
    tau[:6] = tau_base
    if use_stabilizer == 1 and not mdl.base_fixed:
        tau[:6] += _stabilizer_wrench(H0, v, mdl.stab_kp, mdl.stab_kd)
    tau[6:6 + nj] = tau_rigid
    # elastic part explicit, damping moved to the LHS (implicit in velocity)
    if mdl.rest_strain.shape[0] > 0:
        tau[6 + nj:] = tau_rod + mdl.Kmat @ (mdl.rest_strain - qS)

    tau_c = np.zeros(nv)
    _contact_forces(mdl, Hb, Jb, Hrb, Jrb, v, out_f, out_p, out_on, tau_c)

    rhs_full = tau + tau_c - b
    na = mdl.act_idx.shape[0]
    A = np.zeros((na, na))
    rhs = np.zeros(na)
    for i in range(na):
        ii = mdl.act_idx[i]
        acc = 0.0
        for j in range(na):
            jj = mdl.act_idx[j]
            A[i, j] = M[ii, jj] + dt * mdl.Ddyn[ii, jj]
            acc += M[ii, jj] * v[jj]
        rhs[i] = acc + dt * rhs_full[ii]
    vnew = np.linalg.solve(A, rhs)

    ok = 0
    for i in range(na):
        if not np.isfinite(vnew[i]):
            ok = 1
        v[mdl.act_idx[i]] = vnew[i]
    if ok == 1:
        return 1

    if not mdl.base_fixed:
        Hn = H0 @ _exp_se3(v[:6], dt)
        for i in range(4):
            for j in range(4):
                H0[i, j] = Hn[i, j]
    for i in range(nj):
        qR[i] += dt * v[6 + i]
    if not mdl.rod_frozen:
        for i in range(6 * mdl.seg_len.shape[0]):
            qS[i] += dt * v[6 + nj + i]
    if not np.isfinite(H0[0, 3] + H0[1, 3] + H0[2, 3]):
        return 1
    return 0


@njit(cache=True)
def _run_substeps(mdl, H0, qR, qS, v, tau_base, tau_rigid, tau_rod, dt, nsub,
                  rec_f, rec_p, rec_on, rec_q, record, use_stabilizer):
    """Run nsub substeps with zero-order-hold torques.  With record == 1 the
    per-substep contact data and state vectors are written to the rec arrays
    (shape checked by the caller).  Returns 0 ok / 1 diverged (at the substep
    where divergence was detected)."""
    nc = mdl.rc_body.shape[0] + mdl.rod_cbnd.shape[0]
    nj = mdl.nj
    ns = 6 * mdl.seg_len.shape[0]
    for k in range(nsub):
        st = _substep(mdl, H0, qR, qS, v, tau_base, tau_rigid, tau_rod, dt,
                      rec_f[k] if record == 1 else rec_f[0],
                      rec_p[k] if record == 1 else rec_p[0],
                      rec_on[k] if record == 1 else rec_on[0],
                      use_stabilizer)
        if record == 1:
            row = rec_q[k]
            row[0] = H0[0, 3]
            row[1] = H0[1, 3]
            row[2] = H0[2, 3]
            rv = _log_so3_vec(H0[:3, :3])
            row[3] = rv[0]
            row[4] = rv[1]
            row[5] = rv[2]
            for i in range(6):
                row[6 + i] = v[i]
            for i in range(nj):
                row[12 + i] = qR[i]
                row[12 + nj + i] = v[6 + i]
            for i in range(ns):
                row[12 + 2 * nj + i] = qS[i]
                row[12 + 2 * nj + ns + i] = v[6 + nj + i]
        if st != 0:
            return 1
    return 0
