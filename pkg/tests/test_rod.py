import numpy as np
import pytest

from flexgait import rod as rodm
from flexgait.liegroup import Pose, exp_se3, log_se3, twist


def straight_segment(length=0.2, rho=1.5, kdiag=200.0, ddiag=2.0):
    return rodm.SegmentSpec(
        length=length,
        linear_density=rho,
        rotational_inertia_density=1e-4 * np.eye(3),
        rest_strain=twist([0, 0, 0], [1, 0, 0]),
        stiffness=kdiag * np.eye(6),
        damping=ddiag * np.eye(6),
    )


def simple_rod(n=2, length=0.2):
    return rodm.RodSpec(tuple(straight_segment(length) for _ in range(n)))


def rk4_pose(xi, L, n=2000):
    X = np.zeros((4, 4))
    X[:3, :3] = np.array([[0, -xi[2], xi[1]], [xi[2], 0, -xi[0]], [-xi[1], xi[0], 0.0]])
    X[:3, 3] = xi[3:]
    h = L / n
    H = np.eye(4)
    for _ in range(n):
        k1 = H @ X
        k2 = (H + 0.5 * h * k1) @ X
        k3 = (H + 0.5 * h * k2) @ X
        k4 = (H + h * k3) @ X
        H = H + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return H


def test_fk_straight_rest_shape():
    spec = simple_rod(2, 0.2)
    fk = rodm.rod_forward_kinematics(spec, rodm.RodState.rest(spec), Pose.identity())
    assert np.allclose(fk.poses[-1].position, [0.4, 0, 0], atol=1e-12)
    assert np.allclose(fk.poses[-1].rotation, np.eye(3), atol=1e-12)
    # query is continuous across the boundary
    a = fk.query(0.2 - 1e-9).position
    b = fk.query(0.2 + 1e-9).position
    assert np.linalg.norm(a - b) < 1e-8


def test_fk_single_segment_arc_vs_ode():
    seg = straight_segment(length=0.5)
    spec = rodm.RodSpec((seg,))
    xi = twist([0, 0, 2.0], [1, 0, 0])
    st = rodm.RodState(xi, np.zeros(6))
    fk = rodm.rod_forward_kinematics(spec, st, Pose.identity())
    Ho = rk4_pose(xi, 0.5)
    assert np.abs(fk.poses[-1].matrix() - Ho).max() < 1e-10


def test_fk_refinement_consistency():
    # N=2 with equal strains equals N=1 of doubled length at the same s
    xi = twist([0, 0, 1.2], [1.0, 0.05, 0])
    one = rodm.RodSpec((straight_segment(0.4),))
    two = rodm.RodSpec((straight_segment(0.2), straight_segment(0.2)))
    st1 = rodm.RodState(xi, np.zeros(6))
    st2 = rodm.RodState(np.tile(xi, 2), np.zeros(12))
    fk1 = rodm.rod_forward_kinematics(one, st1, Pose.identity())
    fk2 = rodm.rod_forward_kinematics(two, st2, Pose.identity())
    for s in [0.0, 0.1, 0.2, 0.33, 0.4]:
        assert np.abs(fk1.query(s).matrix() - fk2.query(s).matrix()).max() < 1e-12


def test_fk_query_out_of_range():
    spec = simple_rod()
    fk = rodm.rod_forward_kinematics(spec, rodm.RodState.rest(spec), Pose.identity())
    with pytest.raises(ValueError):
        fk.query(1.0)
    with pytest.raises(ValueError):
        fk.query(-0.1)


def test_point_jacobian_zero_rates():
    spec = simple_rod()
    st = rodm.RodState.rest(spec)
    J = rodm.rod_point_jacobian(spec, st, 0.37)
    assert np.allclose(J @ np.zeros(18), 0)


def test_point_jacobian_axial_rate():
    # unit axial strain rate on segment 1 only: tip velocity is axial with
    # magnitude equal to segment-1 length
    spec = simple_rod(2, 0.2)
    st = rodm.RodState.rest(spec)
    J = rodm.rod_point_jacobian(spec, st, 0.4)
    qd = np.zeros(18)
    qd[6 + 3] = 1.0  # axial rate of segment 1
    v = J @ qd
    assert np.allclose(v, [0, 0, 0, 0.2, 0, 0], atol=1e-12)


def fd_body_twist(spec, state, root, s, droot, dstrain, eps=1e-7):
    H0 = rodm.rod_forward_kinematics(spec, state, root).query(s)
    root2 = root @ exp_se3(droot, eps)
    st2 = rodm.RodState(state.strains + eps * dstrain, state.strain_rates)
    H1 = rodm.rod_forward_kinematics(spec, st2, root2).query(s)
    return log_se3(H0.inverse() @ H1) / eps


def test_point_jacobian_vs_finite_difference():
    rng = np.random.default_rng(21)
    spec = simple_rod(3, 0.15)
    for _ in range(8):
        q = spec.rest_strains() + 0.4 * rng.normal(size=18)
        st = rodm.RodState(q, np.zeros(18))
        root = exp_se3(0.3 * rng.normal(size=6))
        s = rng.uniform(0.01, 0.44)
        Jroot = rodm.rod_point_jacobian(spec, st, s)
        qd = rng.normal(size=24)  # 6 root + 18 strain rates
        v = Jroot @ qd
        vfd = fd_body_twist(spec, st, root, s, qd[:6], qd[6:])
        assert np.linalg.norm(v - vfd) < 1e-5 * max(1.0, np.linalg.norm(v))


def test_segment_inertia_zero_length_limit():
    seg = rodm.SegmentSpec(1e-9, 1.5, 1e-4 * np.eye(3), twist([0, 0, 0], [1, 0, 0]),
                           np.eye(6), np.eye(6))
    M = rodm.segment_inertia(seg, seg.rest_strain)
    assert np.linalg.norm(M) < 1e-6


def test_segment_inertia_straight_closed_form():
    # slender uniform rod about its root: mass rho*L, transverse moments
    # rho*L^3/3, cross terms rho*L^2/2
    rho, L = 2.0, 0.5
    seg = rodm.SegmentSpec(L, rho, np.zeros((3, 3)), twist([0, 0, 0], [1, 0, 0]),
                           np.eye(6), np.eye(6))
    M = rodm.segment_inertia(seg, seg.rest_strain)
    m = rho * L
    assert np.allclose(np.diag(M[3:, 3:]), m, atol=1e-10)
    assert abs(M[1, 1] - rho * L**3 / 3) < 1e-10
    assert abs(M[2, 2] - rho * L**3 / 3) < 1e-10
    assert abs(M[0, 0]) < 1e-12  # no rotational inertia about the axis
    # static moment couples rotation about z with velocity along y (and sign flip)
    assert abs(M[2, 4] - rho * L**2 / 2) < 1e-10
    assert abs(M[1, 5] + rho * L**2 / 2) < 1e-10


def test_segment_inertia_mass_conserved_under_bending():
    seg = straight_segment(0.3)
    Ms = rodm.segment_inertia(seg, seg.rest_strain)
    Mc = rodm.segment_inertia(seg, twist([0, 0, 3.0], [1, 0, 0]))
    assert abs(np.trace(Ms[3:, 3:]) / 3 - np.trace(Mc[3:, 3:]) / 3) < 1e-12


def test_segment_inertia_quadrature_converged():
    rng = np.random.default_rng(4)
    seg = straight_segment(0.3)
    for _ in range(10):
        xi = twist(rng.uniform(-1, 1, 3) * 3.0 / 0.3 * rng.uniform(0, 0.3),
                   [1, 0, 0] + 0.2 * rng.normal(size=3))
        xi[3] = abs(xi[3]) + 0.5
        M5 = rodm.segment_inertia(seg, xi, 5)
        M9 = rodm.segment_inertia(seg, xi, 9)
        assert np.abs(M5 - M9).max() < 1e-8 * max(1.0, np.abs(M9).max())
        assert np.linalg.eigvalsh(M5).min() > -1e-12


def test_viscoelastic_zero_at_rest():
    spec = simple_rod()
    tau = rodm.viscoelastic_force(spec, rodm.RodState.rest(spec))
    assert np.allclose(tau, 0)


def test_viscoelastic_componentwise():
    spec = rodm.RodSpec((straight_segment(0.2, kdiag=80.0),))
    q = spec.rest_strains().copy()
    q[2] += 0.1
    tau = rodm.viscoelastic_force(spec, rodm.RodState(q, np.zeros(6)))
    expect = np.zeros(6)
    expect[2] = -80.0 * 0.1
    assert np.allclose(tau, expect, atol=1e-12)


def test_viscoelastic_matrix_oracle():
    rng = np.random.default_rng(17)
    segs = []
    for _ in range(3):
        A = rng.normal(size=(6, 6))
        B = rng.normal(size=(6, 6))
        segs.append(rodm.SegmentSpec(0.2, 1.0, 1e-4 * np.eye(3),
                                     twist([0, 0, 0], [1, 0, 0]),
                                     A @ A.T, B @ B.T))
    spec = rodm.RodSpec(tuple(segs))
    q = spec.rest_strains() + rng.normal(size=18)
    qd = rng.normal(size=18)
    tau = rodm.viscoelastic_force(spec, rodm.RodState(q, qd))
    # independent per-segment evaluation
    ref = np.zeros(18)
    for i, s in enumerate(segs):
        sl = slice(6 * i, 6 * i + 6)
        ref[sl] = s.stiffness @ (s.rest_strain - q[sl]) - s.damping @ qd[sl]
    assert np.allclose(tau, ref, atol=1e-12)


def test_viscoelastic_dim_mismatch():
    spec = simple_rod(2)
    with pytest.raises(ValueError):
        rodm.viscoelastic_force(spec, rodm.RodState(np.zeros(6), np.zeros(6)))


def test_elastic_energy_basics():
    spec = simple_rod()
    assert rodm.elastic_energy(spec, rodm.RodState.rest(spec)) == 0.0
    one = rodm.RodSpec((straight_segment(0.2, kdiag=100.0),))
    q = one.rest_strains().copy()
    q[2] += 0.1
    e = rodm.elastic_energy(one, rodm.RodState(q, np.zeros(6)))
    assert abs(e - 0.5) < 1e-12  # 1/2 * 100 * 0.1^2


def test_elastic_energy_equals_work_integral():
    # E_el(final) = -int tau_S . dq along a quasi-static path from rest
    rng = np.random.default_rng(2)
    spec = simple_rod(2)
    q0 = spec.rest_strains()
    dq = 0.3 * rng.normal(size=12)
    n = 4000
    work = 0.0
    prev = None
    for k in range(n + 1):
        q = q0 + dq * (k / n)
        tau = rodm.viscoelastic_force(spec, rodm.RodState(q, np.zeros(12)))
        if prev is not None:
            work += 0.5 * (tau + prev) @ (dq / n)
        prev = tau
    e = rodm.elastic_energy(spec, rodm.RodState(q0 + dq, np.zeros(12)))
    assert abs(e + work) < 1e-6


def test_stiffness_scaling_monotonicity():
    # same quasi-static tip wrench: stiffer rod deflects less
    spec = simple_rod(2)
    w = np.array([0, 0, 4.0, 0, 6.0, 0])  # bending moment + transverse force
    defl = {}
    for scale in (0.9, 1.1):
        sc = spec.scaled(scale)
        st = rodm.RodState.rest(sc)
        # fixed-point iteration on K dq = J^T w (geometric nonlinearity is mild)
        for _ in range(60):
            J = rodm.rod_point_jacobian(sc, st, sc.boundaries()[-1])[:, 6:]
            dq = np.linalg.solve(sc.stiffness_matrix(), J.T @ w)
            st = rodm.RodState(sc.rest_strains() + dq, np.zeros(12))
        defl[scale] = np.abs(st.strains - sc.rest_strains())
    assert np.all(defl[1.1] <= defl[0.9] + 1e-12)
    assert np.linalg.norm(defl[1.1]) < np.linalg.norm(defl[0.9])


def test_damping_passivity():
    rng = np.random.default_rng(6)
    spec = simple_rod(3)
    D = spec.damping_matrix()
    for _ in range(100):
        qd = rng.normal(size=18)
        assert -qd @ D @ qd <= 1e-12


def test_refinement_invariance():
    # splitting a segment (halving stiffness blocks) leaves boundary poses and
    # total elastic energy unchanged
    xi = twist([0.2, -0.1, 1.5], [1.02, 0.03, -0.01])
    whole = rodm.RodSpec((straight_segment(0.4, kdiag=120.0),))
    half = straight_segment(0.2, kdiag=60.0)
    split = rodm.RodSpec((half, half))
    st_w = rodm.RodState(xi, np.zeros(6))
    st_s = rodm.RodState(np.tile(xi, 2), np.zeros(12))
    fkw = rodm.rod_forward_kinematics(whole, st_w, Pose.identity())
    fks = rodm.rod_forward_kinematics(split, st_s, Pose.identity())
    assert np.abs(fkw.poses[-1].matrix() - fks.poses[-1].matrix()).max() < 1e-10
    ew = rodm.elastic_energy(whole, st_w)
    es = rodm.elastic_energy(split, st_s)
    assert abs(ew - es) < 1e-10
