import numpy as np
import pytest

from flexgait import liegroup as lg


def rk4_exp_oracle(xi, L, ds=1e-5):
    """Integrate dH/ds = H [xi x] from identity with RK4: independent check
    of the closed-form exponential."""
    X = np.zeros((4, 4))
    X[:3, :3] = lg.ad(xi)[:3, :3]
    X[:3, 3] = xi[3:]

    def f(H):
        return H @ X

    n = max(1, int(round(L / ds)))
    h = L / n
    H = np.eye(4)
    for _ in range(n):
        k1 = f(H)
        k2 = f(H + 0.5 * h * k1)
        k3 = f(H + 0.5 * h * k2)
        k4 = f(H + h * k3)
        H = H + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return H


def test_exp_identity():
    P = lg.exp_se3(np.zeros(6), 0.7)
    assert np.allclose(P.matrix(), np.eye(4), atol=1e-15)


def test_exp_pure_translation():
    P = lg.exp_se3(lg.twist([0, 0, 0], [1, 0, 0]), 0.3)
    assert np.allclose(P.rotation, np.eye(3), atol=1e-15)
    assert np.allclose(P.position, [0.3, 0, 0], atol=1e-15)


def test_exp_planar_arc():
    kappa, L = 2.0, 0.5
    P = lg.exp_se3(lg.twist([0, 0, kappa], [1, 0, 0]), L)
    th = kappa * L
    assert np.allclose(P.position, [np.sin(th) / kappa, (1 - np.cos(th)) / kappa, 0],
                       atol=1e-12)
    Rz = np.array([[np.cos(th), -np.sin(th), 0], [np.sin(th), np.cos(th), 0], [0, 0, 1]])
    assert np.allclose(P.rotation, Rz, atol=1e-12)


def test_exp_vs_rk4_oracle():
    rng = np.random.default_rng(7)
    for _ in range(5):
        xi = rng.normal(size=6)
        L = rng.uniform(0.1, 0.6)
        # keep ||k||*L < 3 as in the rod operating range
        xi[:3] *= min(1.0, 2.5 / (np.linalg.norm(xi[:3]) * L))
        H = lg.exp_se3(xi, L).matrix()
        Ho = rk4_exp_oracle(xi, L, ds=2e-4)
        assert np.abs(H - Ho).max() < 1e-10


def test_exp_orthonormality():
    rng = np.random.default_rng(3)
    for _ in range(50):
        P = lg.exp_se3(rng.normal(size=6), rng.uniform(0, 2.0))
        assert P.is_valid(1e-10)


def test_exp_branch_continuity():
    # closed form just above the series threshold vs series just below
    k = np.array([1.0, 0.0, 0.0])
    u = np.array([0.3, -0.2, 0.5])
    lo = lg.exp_se3(lg.twist(k * (lg.SERIES_EPS * (1 - 1e-12)), u)).matrix()
    hi = lg.exp_se3(lg.twist(k * (lg.SERIES_EPS * (1 + 1e-12)), u)).matrix()
    assert np.abs(lo - hi).max() < 1e-9


def test_exp_rejects_bad_input():
    with pytest.raises(ValueError):
        lg.exp_se3(np.array([np.nan, 0, 0, 0, 0, 0]))
    with pytest.raises(ValueError):
        lg.exp_se3(np.zeros(6), -1.0)


def test_log_identity():
    assert np.allclose(lg.log_se3(Pose_id()), np.zeros(6), atol=1e-15)


def Pose_id():
    return lg.Pose.identity()


def test_log_pure_translation():
    P = lg.Pose(np.eye(3), np.array([0, 0, 0.5]))
    assert np.allclose(lg.log_se3(P), [0, 0, 0, 0, 0, 0.5], atol=1e-15)


def test_log_exp_roundtrip():
    rng = np.random.default_rng(11)
    for _ in range(200):
        xi = rng.normal(size=6)
        n = np.linalg.norm(xi[:3])
        if n > np.pi - 1e-2:
            xi[:3] *= (np.pi - 1e-2) / n
        back = lg.log_se3(lg.exp_se3(xi))
        assert np.linalg.norm(back - xi) < 1e-9


def test_log_near_pi_raises():
    R = np.array([[1, 0, 0], [0, -1, 0], [0, 0, -1.0]])  # angle pi about x
    with pytest.raises(lg.IllConditionedError):
        lg.log_se3(lg.Pose(R, np.zeros(3)))


def test_adjoint_identity():
    assert np.allclose(lg.adjoint(lg.Pose.identity()), np.eye(6))


def test_adjoint_pure_rotation_blocks():
    th = np.pi / 2
    Rz = np.array([[0, -1, 0], [1, 0, 0], [0, 0, 1.0]])
    A = lg.adjoint(lg.Pose(Rz, np.zeros(3)))
    assert np.allclose(A[:3, :3], Rz)
    assert np.allclose(A[3:, 3:], Rz)
    assert np.allclose(A[:3, 3:], 0)
    assert np.allclose(A[3:, :3], 0)
    _ = th


def test_adjoint_composition():
    rng = np.random.default_rng(5)
    for _ in range(50):
        P1 = lg.exp_se3(rng.normal(size=6))
        P2 = lg.exp_se3(rng.normal(size=6))
        A = lg.adjoint(P1 @ P2)
        B = lg.adjoint(P1) @ lg.adjoint(P2)
        assert np.abs(A - B).max() < 1e-10


def test_ad_is_bracket():
    rng = np.random.default_rng(9)
    x, y = rng.normal(size=6), rng.normal(size=6)
    kx, ux = x[:3], x[3:]
    ky, uy = y[:3], y[3:]
    bracket = np.concatenate([np.cross(kx, ky), np.cross(kx, uy) + np.cross(ux, ky)])
    assert np.allclose(lg.ad(x) @ y, bracket, atol=1e-14)


def test_tangent_matches_directional_derivative():
    rng = np.random.default_rng(13)
    for _ in range(20):
        x = rng.normal(size=6)
        y = rng.normal(size=6)
        eps = 1e-7
        H1 = lg.exp_se3(x + eps * y).matrix()
        H2 = (lg.exp_se3(x) @ lg.exp_se3(eps * (lg.tangent_body(x) @ y))).matrix()
        assert np.abs(H1 - H2).max() < 1e-9
