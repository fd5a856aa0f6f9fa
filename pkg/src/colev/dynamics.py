"""Rigid-body quantities for a floating-base chain.

Everything is expressed in the world frame. The generalized velocity is
v = [base linear (world), base angular (world), joint rates], so for any
point p fixed to link i the world-frame point velocity is

    ṗ = v[0:3] + v[3:6] × (p - r_base)  +  Σ_j (joint columns) q̇_j

which is what the Jacobians here return. The mass matrix comes from summing
per-link kinetic-energy contributions through the com Jacobians; the bias
force h(q, v) = C v + g comes from the same sums with the link Newton-Euler
terms evaluated at zero generalized acceleration.

The momentum-form bias used by the observers is

    nhat(q, v) = h(q, v) - Ṁ(q) v,    so that  d/dt(M v) = Sᵀτ_m + τ_ext + τ_ft - nhat

with Ṁ v obtained by one-sided directional differencing of M along v.
"""

from dataclasses import dataclass

import numpy as np

from .model import GeneralizedState, PRISMATIC, REVOLUTE, RobotModel, integrate_q
from .rotations import axis_rotation, quat_to_matrix, skew

MDOT_FD_STEP = 1e-6


class BatchKinematics:
    """World poses of every link for a batch of configurations.

    Q has shape (T, 7 + n). Arrays: R (L, T, 3, 3), o (L, T, 3) and, for
    moving links, the world joint axis w (L, T, 3).
    """

    def __init__(self, model: RobotModel, Q):
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        T = Q.shape[0]
        L = model.n_links
        self.model = model
        self.Q = Q
        self.R = np.empty((L, T, 3, 3))
        self.o = np.empty((L, T, 3))
        self.w = np.zeros((L, T, 3))
        self.R[0] = quat_to_matrix(Q[:, 3:7])
        self.o[0] = Q[:, 0:3]
        for i in range(1, L):
            link = model.links[i]
            par = link.parent
            Rj = self.R[par] @ link.origin_rot
            self.o[i] = self.o[par] + np.einsum("tij,j->ti", self.R[par], link.origin_pos)
            self.w[i] = Rj @ link.axis
            theta = Q[:, 7 + i - 1]
            if link.joint_type == REVOLUTE:
                self.R[i] = Rj @ axis_rotation(link.axis, theta)
            else:
                self.R[i] = Rj
                self.o[i] = self.o[i] + theta[:, None] * self.w[i]

    def point_world(self, link_index, point_local):
        """World coordinates of a point given in the link frame, (T, 3)."""
        return self.o[link_index] + np.einsum(
            "tij,j->ti", self.R[link_index], np.asarray(point_local, dtype=float))

    def point_jacobian(self, link_index, point_world):
        """Translational Jacobian (T, 3, nv) of a world-frame point on a link."""
        model = self.model
        T = self.Q.shape[0]
        J = np.zeros((T, 3, model.nv))
        J[:, :, 0:3] = np.eye(3)
        J[:, :, 3:6] = -skew(point_world - self.o[0])
        for a in model.ancestors(link_index):
            col = 6 + a - 1
            if model.links[a].joint_type == REVOLUTE:
                J[:, :, col] = np.cross(self.w[a], point_world - self.o[a])
            else:
                J[:, :, col] = self.w[a]
        return J

    def angular_jacobian(self, link_index):
        """Angular-velocity Jacobian (T, 3, nv) of a link."""
        model = self.model
        T = self.Q.shape[0]
        J = np.zeros((T, 3, model.nv))
        J[:, :, 3:6] = np.eye(3)
        for a in model.ancestors(link_index):
            if model.links[a].joint_type == REVOLUTE:
                J[:, :, 6 + a - 1] = self.w[a]
        return J

    def spatial_jacobian(self, link_index):
        """Spatial Jacobian (T, 6, nv), rows = (linear at link origin; angular)."""
        return np.concatenate(
            [self.point_jacobian(link_index, self.o[link_index]),
             self.angular_jacobian(link_index)], axis=1)

    def link_velocities(self, V):
        """Propagate ω, link-origin velocity, and their v̇ = 0 bias accelerations.

        Returns (omega, alpha, vo, ao), each (L, T, 3). alpha and ao are the
        accelerations obtained with zero generalized acceleration, i.e. the
        velocity-product terms only.
        """
        model = self.model
        V = np.atleast_2d(np.asarray(V, dtype=float))
        T, L = V.shape[0], model.n_links
        omega = np.zeros((L, T, 3))
        alpha = np.zeros((L, T, 3))
        vo = np.zeros((L, T, 3))
        ao = np.zeros((L, T, 3))
        omega[0] = V[:, 3:6]
        vo[0] = V[:, 0:3]
        for i in range(1, L):
            link = model.links[i]
            par = link.parent
            qd = V[:, 6 + i - 1][:, None]
            d = self.o[i] - self.o[par]
            wpar = omega[par]
            vo[i] = vo[par] + np.cross(wpar, d)
            ao[i] = ao[par] + np.cross(alpha[par], d) + np.cross(wpar, np.cross(wpar, d))
            if link.joint_type == REVOLUTE:
                omega[i] = wpar + qd * self.w[i]
                alpha[i] = alpha[par] + np.cross(wpar, qd * self.w[i])
            else:
                omega[i] = wpar
                alpha[i] = alpha[par]
                # axis direction rides on the parent frame
                vo[i] = vo[i] + qd * self.w[i]
                ao[i] = ao[i] + 2.0 * np.cross(wpar, qd * self.w[i])
        return omega, alpha, vo, ao


def mass_matrix_batch(model: RobotModel, Q, kin=None):
    """Joint-space inertia M(q), shape (T, nv, nv)."""
    kin = kin or BatchKinematics(model, Q)
    T = kin.Q.shape[0]
    M = np.zeros((T, model.nv, model.nv))
    for i, link in enumerate(model.links):
        com_w = kin.point_world(i, link.com)
        Jc = kin.point_jacobian(i, com_w)
        Jw = kin.angular_jacobian(i)
        Iw = kin.R[i] @ link.inertia @ kin.R[i].transpose(0, 2, 1)
        M += link.mass * (Jc.transpose(0, 2, 1) @ Jc)
        M += Jw.transpose(0, 2, 1) @ (Iw @ Jw)
    return M


@dataclass
class BatchTerms:
    """Per-sample dynamic quantities for a trajectory."""

    M: np.ndarray        # (T, nv, nv)
    g: np.ndarray        # (T, nv) gravity vector
    h: np.ndarray        # (T, nv) full bias C v + g
    nhat: np.ndarray     # (T, nv) momentum-form bias h - Ṁ v
    p: np.ndarray        # (T, nv) generalized momentum M v
    kin: BatchKinematics


def batch_terms(model: RobotModel, Q, V, fd_step=MDOT_FD_STEP) -> BatchTerms:
    """All dynamic terms the pipeline consumes, batched over a trajectory."""
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    V = np.atleast_2d(np.asarray(V, dtype=float))
    kin = BatchKinematics(model, Q)
    T = Q.shape[0]
    nv = model.nv
    M = np.zeros((T, nv, nv))
    g = np.zeros((T, nv))
    h = np.zeros((T, nv))
    omega, alpha, vo, ao = kin.link_velocities(V)
    grav = model.gravity
    for i, link in enumerate(model.links):
        com_w = kin.point_world(i, link.com)
        Jc = kin.point_jacobian(i, com_w)
        Jw = kin.angular_jacobian(i)
        Iw = kin.R[i] @ link.inertia @ kin.R[i].transpose(0, 2, 1)
        M += link.mass * (Jc.transpose(0, 2, 1) @ Jc)
        M += Jw.transpose(0, 2, 1) @ (Iw @ Jw)
        g += link.mass * np.einsum("tai,a->ti", Jc, -grav)
        dc = com_w - kin.o[i]
        w_i = omega[i]
        a_c = ao[i] + np.cross(alpha[i], dc) + np.cross(w_i, np.cross(w_i, dc))
        f = link.mass * (a_c - grav)
        Iww = np.einsum("tab,tb->ta", Iw, w_i)
        n = np.einsum("tab,tb->ta", Iw, alpha[i]) + np.cross(w_i, Iww)
        h += np.einsum("tai,ta->ti", Jc, f) + np.einsum("tai,ta->ti", Jw, n)
    Q2 = integrate_q(Q, V, fd_step)
    M2 = mass_matrix_batch(model, Q2)
    mdot_v = np.einsum("tij,tj->ti", (M2 - M) / fd_step, V)
    nhat = h - mdot_v
    p = np.einsum("tij,tj->ti", M, V)
    return BatchTerms(M=M, g=g, h=h, nhat=nhat, p=p, kin=kin)


# --- single-sample API -----------------------------------------------------


def _check_state(model, state):
    if not isinstance(state, GeneralizedState):
        raise TypeError("expected a GeneralizedState")
    state.validate(model)


def dynamics_terms(model: RobotModel, state: GeneralizedState):
    """Inertia matrix and bias terms at one state.

    Returns a dict with M ((nv, nv), symmetric positive definite), nhat,
    g and h (each (nv,)). g equals nhat at zero velocity; nhat satisfies
    d/dt(M v) = Sᵀτ_m + τ_ext + τ_ft - nhat along solutions of the dynamics.
    """
    _check_state(model, state)
    t = batch_terms(model, state.q[None, :], state.vel[None, :])
    return {"M": t.M[0], "nhat": t.nhat[0], "g": t.g[0], "h": t.h[0]}


def point_jacobian(model: RobotModel, state: GeneralizedState, link_index,
                   point_local=(0.0, 0.0, 0.0)):
    """Translational Jacobian (3, nv) of a link-frame point; J v = world ṗ."""
    _check_state(model, state)
    if not (0 <= link_index < model.n_links):
        raise ValueError(f"invalid link index {link_index}")
    kin = BatchKinematics(model, state.q[None, :])
    pw = kin.point_world(link_index, point_local)
    return kin.point_jacobian(link_index, pw)[0]


def spatial_jacobian(model: RobotModel, state: GeneralizedState, link_index):
    """Spatial Jacobian (6, nv) at the link origin; rows (linear; angular)."""
    _check_state(model, state)
    if not (0 <= link_index < model.n_links):
        raise ValueError(f"invalid link index {link_index}")
    kin = BatchKinematics(model, state.q[None, :])
    return kin.spatial_jacobian(link_index)[0]


def inverse_dynamics(model: RobotModel, state: GeneralizedState, vdot):
    """Generalized force M v̇ + C v + g for a prescribed acceleration."""
    terms = dynamics_terms(model, state)
    return terms["M"] @ np.asarray(vdot, dtype=float) + terms["h"]


def kinetic_energy(model: RobotModel, state: GeneralizedState):
    terms = dynamics_terms(model, state)
    return 0.5 * state.vel @ terms["M"] @ state.vel
