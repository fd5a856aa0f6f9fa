import numpy as np
import pytest

from colev.dynamics import (
    BatchKinematics,
    batch_terms,
    dynamics_terms,
    inverse_dynamics,
    kinetic_energy,
    mass_matrix_batch,
    point_jacobian,
    spatial_jacobian,
)
from colev.model import (
    FLOATING,
    GeneralizedState,
    Link,
    PRISMATIC,
    REVOLUTE,
    RobotModel,
    default_model,
    integrate_q,
)
from colev.rotations import matrix_log_rotvec

TINY_INERTIA = 1e-12 * np.eye(3)


def pendulum_model(gravity=(0.0, 0.0, 0.0)):
    """Planar 2-link pendulum in the x-y plane: unit point masses at the tips."""
    links = [
        Link("base", -1, FLOATING, 1.0, np.zeros(3), 1e-3 * np.eye(3)),
        Link("l1", 0, REVOLUTE, 1.0, [1.0, 0, 0], TINY_INERTIA, axis=[0, 0, 1]),
        Link("l2", 1, REVOLUTE, 1.0, [1.0, 0, 0], TINY_INERTIA, axis=[0, 0, 1],
             origin_pos=[1.0, 0, 0]),
    ]
    return RobotModel(links, feet={}, base_links=[0], arm_links=[1, 2],
                      gravity=gravity)


def pendulum_kinetic_energy(q, qd):
    """Independent oracle: tip-point kinematics written out by hand."""
    q1, q2 = q
    qd1, qd2 = qd
    v1 = np.array([-np.sin(q1), np.cos(q1)]) * qd1
    v2 = v1 + np.array([-np.sin(q1 + q2), np.cos(q1 + q2)]) * (qd1 + qd2)
    return 0.5 * (v1 @ v1) + 0.5 * (v2 @ v2)


def lagrangian_mass_oracle(q):
    """M_ij = d²T/dq̇i dq̇j by central differencing of the energy oracle."""
    eps = 1e-4
    M = np.zeros((2, 2))
    for i in range(2):
        for j in range(2):
            M[i, j] = sum(
                si * sj * pendulum_kinetic_energy(
                    q, eps * np.array([si * (i == 0), si * (i == 1)])
                    + eps * np.array([sj * (j == 0), sj * (j == 1)]))
                for si in (1, -1) for sj in (1, -1)
            ) / (4 * eps * eps)
    return M


def random_state(model, rng, vel_scale=1.0):
    n = model.n_links - 1
    quat = rng.normal(size=4)
    quat /= np.linalg.norm(quat)
    return GeneralizedState(
        base_pos=rng.normal(scale=0.3, size=3),
        base_quat=quat,
        joint_pos=rng.normal(scale=0.6, size=n),
        vel=rng.normal(scale=vel_scale, size=model.nv),
    )


class TestMassMatrix:
    def test_two_link_pendulum_matches_closed_form(self):
        model = pendulum_model()
        st = GeneralizedState.neutral(model)
        M = dynamics_terms(model, st)["M"]
        joint_block = M[6:, 6:]
        np.testing.assert_allclose(joint_block, [[5.0, 2.0], [2.0, 1.0]], atol=1e-9)

    def test_two_link_pendulum_matches_energy_oracle(self):
        model = pendulum_model()
        rng = np.random.default_rng(3)
        for _ in range(4):
            q = rng.uniform(-np.pi, np.pi, size=2)
            st = GeneralizedState(np.zeros(3), [1, 0, 0, 0], q, np.zeros(model.nv))
            M = dynamics_terms(model, st)["M"][6:, 6:]
            np.testing.assert_allclose(M, lagrangian_mass_oracle(q), atol=1e-6)

    def test_symmetric_positive_definite(self):
        model = default_model()
        rng = np.random.default_rng(11)
        for _ in range(6):
            st = random_state(model, rng)
            M = dynamics_terms(model, st)["M"]
            np.testing.assert_allclose(M, M.T, atol=1e-10)
            assert np.linalg.eigvalsh(M)[0] > 0

    def test_kinetic_energy_is_quadratic_form(self):
        model = default_model()
        rng = np.random.default_rng(4)
        st = random_state(model, rng)
        M = dynamics_terms(model, st)["M"]
        assert kinetic_energy(model, st) == pytest.approx(0.5 * st.vel @ M @ st.vel)


class TestBiasTerms:
    def test_nhat_equals_gravity_at_rest(self):
        model = default_model()
        rng = np.random.default_rng(5)
        st = random_state(model, rng, vel_scale=0.0)
        terms = dynamics_terms(model, st)
        np.testing.assert_allclose(terms["nhat"], terms["g"], atol=1e-9)

    def test_nhat_zero_at_rest_without_gravity(self):
        model = pendulum_model(gravity=(0, 0, 0))
        st = GeneralizedState.neutral(model)
        terms = dynamics_terms(model, st)
        np.testing.assert_allclose(terms["nhat"], 0.0, atol=1e-12)
        np.testing.assert_allclose(terms["g"], 0.0, atol=1e-12)

    def test_g_matches_potential_energy_gradient(self):
        # -gᵀ delta ≈ change in -Σ m g·c under a joint-space perturbation
        model = default_model()
        rng = np.random.default_rng(6)
        st = random_state(model, rng, vel_scale=0.0)
        g = dynamics_terms(model, st)["g"]

        def potential(q):
            kin = BatchKinematics(model, q[None, :])
            return -sum(
                l.mass * model.gravity @ kin.point_world(i, l.com)[0]
                for i, l in enumerate(model.links))

        eps = 1e-6
        for col in [1, 4, 8, 13, 19]:
            dv = np.zeros(model.nv)
            dv[col] = 1.0
            dV = (potential(integrate_q(st.q, dv, eps))
                  - potential(integrate_q(st.q, dv, -eps))) / (2 * eps)
            assert g[col] == pytest.approx(dV, rel=1e-5, abs=1e-7)

    def test_momentum_identity_along_trajectory(self):
        # d/dt (M v) computed by time differencing must equal
        # applied generalized force minus nhat.
        model = default_model()
        rng = np.random.default_rng(7)
        amp = rng.uniform(0.1, 0.4, size=model.nv)
        freq = rng.uniform(0.5, 1.5, size=model.nv)

        def vel(t):
            return amp * np.sin(2 * np.pi * freq * t)

        def acc(t):
            return amp * 2 * np.pi * freq * np.cos(2 * np.pi * freq * t)

        dt = 1e-4
        ts = np.arange(0.2, 0.2 + 40 * dt, dt)
        q = GeneralizedState.neutral(model).q
        for t in np.arange(0.0, 0.2, dt):
            q = integrate_q(q, vel(t), dt)
        qs = []
        for t in ts:
            qs.append(q)
            q = integrate_q(q, vel(t), dt)
        terms = batch_terms(model, np.array(qs), np.array([vel(t) for t in ts]))
        k = len(ts) // 2
        st = GeneralizedState.from_q(qs[k], vel(ts[k]))
        tau_app = inverse_dynamics(model, st, acc(ts[k]))
        pdot = (terms.p[k + 1] - terms.p[k - 1]) / (2 * dt)
        np.testing.assert_allclose(pdot, tau_app - terms.nhat[k], rtol=0, atol=5e-3)

    def test_energy_conservation_in_free_motion(self):
        # gravity off, no applied force: kinetic energy is conserved by RK4
        from colev.rotations import quat_multiply

        model = RobotModel.from_dict(default_model().to_dict())
        model.gravity = np.zeros(3)
        rng = np.random.default_rng(8)
        st = random_state(model, rng, vel_scale=0.4)
        x = np.concatenate([st.q, st.vel])
        nq = 7 + model.n_links - 1

        def xdot(x):
            q, v = x[:nq].copy(), x[nq:]
            q[3:7] /= np.linalg.norm(q[3:7])
            t = batch_terms(model, q[None, :], v[None, :])
            wq = np.concatenate([[0.0], v[3:6]])
            qdot = np.concatenate([v[0:3], 0.5 * quat_multiply(wq, q[3:7]), v[6:]])
            return np.concatenate([qdot, np.linalg.solve(t.M[0], -t.h[0])])

        def energy(x):
            q, v = x[:nq].copy(), x[nq:]
            q[3:7] /= np.linalg.norm(q[3:7])
            return 0.5 * v @ batch_terms(model, q[None, :], v[None, :]).M[0] @ v

        e0 = energy(x)
        dt = 1e-3
        for _ in range(1000):
            k1 = xdot(x)
            k2 = xdot(x + dt / 2 * k1)
            k3 = xdot(x + dt / 2 * k2)
            k4 = xdot(x + dt * k3)
            x = x + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            x[3:7] /= np.linalg.norm(x[3:7])
        assert abs(energy(x) - e0) / e0 < 1e-5


class TestJacobians:
    def test_base_point_identity(self):
        model = default_model()
        st = GeneralizedState.neutral(model)
        J = point_jacobian(model, st, 0)
        np.testing.assert_allclose(J[:, 0:3], np.eye(3), atol=1e-12)
        np.testing.assert_allclose(J[:, 6:], 0.0, atol=1e-12)

    def test_base_spatial_identity(self):
        model = default_model()
        st = GeneralizedState.neutral(model)
        J = spatial_jacobian(model, st, 0)
        np.testing.assert_allclose(J[:, 0:6], np.eye(6), atol=1e-12)
        np.testing.assert_allclose(J[:, 6:], 0.0, atol=1e-12)

    def test_revolute_own_column_linear_part_zero(self):
        model = default_model()
        rng = np.random.default_rng(9)
        st = random_state(model, rng)
        link = model.link_index("rf_lower")  # link origin sits on its joint axis
        J = spatial_jacobian(model, st, link)
        col = 6 + link - 1
        np.testing.assert_allclose(J[0:3, col], 0.0, atol=1e-12)

    def test_prismatic_column_is_world_axis(self):
        links = [
            Link("base", -1, FLOATING, 2.0, np.zeros(3), 0.01 * np.eye(3)),
            Link("slider", 0, PRISMATIC, 1.0, np.zeros(3), TINY_INERTIA,
                 axis=[0, 0, 1.0], origin_pos=[0.2, 0, 0]),
        ]
        model = RobotModel(links, {}, [0], [1])
        rng = np.random.default_rng(10)
        st = random_state(model, rng)
        from colev.rotations import quat_to_matrix
        w = quat_to_matrix(st.base_quat) @ np.array([0.0, 0, 1.0])
        J = point_jacobian(model, st, 1, point_local=[0.1, 0.2, 0.3])
        np.testing.assert_allclose(J[:, 6], w, atol=1e-12)
        Js = spatial_jacobian(model, st, 1)
        np.testing.assert_allclose(Js[3:6, 6], 0.0, atol=1e-12)

    def test_point_jacobian_matches_finite_differences(self):
        model = default_model()
        rng = np.random.default_rng(12)
        st = random_state(model, rng)
        link, point = 12, np.array([0.05, -0.02, 0.1])
        J = point_jacobian(model, st, link, point)
        eps = 1e-6
        for col in range(model.nv):
            dv = np.zeros(model.nv)
            dv[col] = 1.0
            kp = BatchKinematics(model, integrate_q(st.q, dv, eps)[None, :])
            km = BatchKinematics(model, integrate_q(st.q, dv, -eps)[None, :])
            fd = (kp.point_world(link, point)[0] - km.point_world(link, point)[0]) / (2 * eps)
            np.testing.assert_allclose(J[:, col], fd, atol=2e-6 * max(1, np.abs(fd).max()))

    def test_spatial_jacobian_matches_finite_differences(self):
        model = default_model()
        rng = np.random.default_rng(13)
        st = random_state(model, rng)
        link = model.n_links - 1
        J = spatial_jacobian(model, st, link)
        eps = 1e-6
        kin0 = BatchKinematics(model, st.q[None, :])
        for col in range(model.nv):
            dv = np.zeros(model.nv)
            dv[col] = 1.0
            kp = BatchKinematics(model, integrate_q(st.q, dv, eps)[None, :])
            km = BatchKinematics(model, integrate_q(st.q, dv, -eps)[None, :])
            fd_lin = (kp.o[link][0] - km.o[link][0]) / (2 * eps)
            dR = kp.R[link][0] @ km.R[link][0].T
            fd_ang = matrix_log_rotvec(dR) / (2 * eps)
            np.testing.assert_allclose(J[0:3, col], fd_lin, atol=2e-6 * max(1, np.abs(fd_lin).max()))
            np.testing.assert_allclose(J[3:6, col], fd_ang, atol=2e-6)
        # jacobian * velocity reproduces link twist against kin self-consistency
        omega, _, vo, _ = kin0.link_velocities(st.vel[None, :])
        np.testing.assert_allclose(J @ st.vel, np.concatenate([vo[link][0], omega[link][0]]),
                                   atol=1e-10)

    def test_point_rows_equal_spatial_top_rows(self):
        model = default_model()
        rng = np.random.default_rng(14)
        st = random_state(model, rng)
        for link in (0, 5, model.n_links - 1):
            Jp = point_jacobian(model, st, link)  # link origin
            Js = spatial_jacobian(model, st, link)
            np.testing.assert_allclose(Jp, Js[0:3], atol=1e-12)

    def test_invalid_link_rejected(self):
        model = default_model()
        st = GeneralizedState.neutral(model)
        with pytest.raises(ValueError):
            point_jacobian(model, st, 99)
        with pytest.raises(ValueError):
            spatial_jacobian(model, st, -1)


class TestStateAndModel:
    def test_dimension_mismatch_rejected(self):
        model = default_model()
        st = GeneralizedState(np.zeros(3), [1, 0, 0, 0], np.zeros(3), np.zeros(model.nv))
        with pytest.raises(ValueError):
            dynamics_terms(model, st)

    def test_non_finite_state_rejected(self):
        model = default_model()
        st = GeneralizedState.neutral(model)
        st.vel[2] = np.nan
        with pytest.raises(ValueError):
            dynamics_terms(model, st)

    def test_non_unit_quaternion_rejected(self):
        model = default_model()
        st = GeneralizedState.neutral(model)
        st.base_quat = np.array([1.0, 0, 0, 1e-3])
        with pytest.raises(ValueError):
            dynamics_terms(model, st)

    def test_bad_models_rejected(self):
        good = default_model().to_dict()
        bad = dict(good)
        bad["links"] = [dict(e) for e in good["links"]]
        bad["links"][2]["mass"] = 0.0
        with pytest.raises(ValueError):
            RobotModel.from_dict(bad)

    def test_yaml_round_trip(self, tmp_path):
        model = default_model()
        path = tmp_path / "model.yaml"
        model.save(path)
        loaded = RobotModel.load(path)
        assert loaded.hash() == model.hash()
        assert loaded.link_names() == model.link_names()
        st = GeneralizedState.neutral(model)
        np.testing.assert_allclose(dynamics_terms(loaded, st)["M"],
                                   dynamics_terms(model, st)["M"])

    def test_selector_shape_and_content(self):
        model = default_model()
        S = model.selector()
        n = model.n_joints
        assert S.shape == (n, model.nv)
        np.testing.assert_allclose(S[:, 0:6], 0.0)
        np.testing.assert_allclose(S[:, 6:], np.eye(n))

    def test_with_point_mass_preserves_totals(self):
        model = default_model()
        heavier = model.with_point_mass(0, 2.0, [0.1, 0.0, 0.05])
        l0, l1 = model.links[0], heavier.links[0]
        assert l1.mass == pytest.approx(l0.mass + 2.0)
        np.testing.assert_allclose(
            l1.mass * l1.com, l0.mass * l0.com + 2.0 * np.array([0.1, 0.0, 0.05]))
        # the composite inertia stays symmetric positive definite
        assert np.linalg.eigvalsh(l1.inertia)[0] > 0

    def test_mass_matrix_batch_matches_single(self):
        model = default_model()
        rng = np.random.default_rng(15)
        states = [random_state(model, rng) for _ in range(3)]
        Q = np.array([s.q for s in states])
        Mb = mass_matrix_batch(model, Q)
        for k, s in enumerate(states):
            np.testing.assert_allclose(Mb[k], dynamics_terms(model, s)["M"], atol=1e-12)
