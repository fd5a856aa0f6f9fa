"""Foot forces and collision wrench from the estimated external torque.

The external generalized torque is explained by stacking the translational
Jacobians of the contact feet and the spatial Jacobian of a candidate
colliding link,

    τ̂_ext ≈ [J_f,1ᵀ ... J_f,kᵀ  J_iᵀ] · [F_f,1; ...; F_f,k; F_ext; m_ext]

and solving by Moore-Penrose pseudoinverse: the minimum-norm least-squares
split of τ̂_ext into foot forces and the candidate link's wrench. Feet are
point contacts (3 force components each); the candidate link gets a full
6-wrench because the contact point along the link is unknown, so the force
translated to the link origin drags a moment with it.
"""

from dataclasses import dataclass

import numpy as np

from .dynamics import BatchKinematics
from .model import GeneralizedState, RobotModel

SVD_CUTOFF_DEFAULT = 1e-8


class DegenerateGeometryError(ValueError):
    """All stacked singular values below the cutoff: isolation geometry unusable."""


@dataclass
class ExternalWrenchEstimate:
    """Solved foot forces and candidate-link wrench for one sample."""

    foot_forces: dict
    force: np.ndarray | None
    moment: np.ndarray | None
    link: int | None
    min_singular_value: float


def stacked_contact_jacobian(model: RobotModel, state: GeneralizedState,
                             contact_feet, link=None):
    """Stack [J_f,1ᵀ ... J_f,kᵀ Jᵢᵀ], shape (nv, 3k + 6).

    contact_feet is an iterable of foot names from the model; link is the
    candidate colliding link index (omit for a feet-only stack). Columns are
    ordered feet first (in the given order), candidate link last.
    """
    state.validate(model)
    contact_feet = list(contact_feet)
    if not contact_feet and link is None:
        raise ValueError("need at least one contact foot or a candidate link")
    kin = BatchKinematics(model, state.q[None, :])
    blocks = []
    for name in contact_feet:
        if name not in model.feet:
            raise ValueError(f"unknown foot {name!r}")
        foot = model.feet[name]
        pw = kin.point_world(foot.link, foot.point)
        blocks.append(kin.point_jacobian(foot.link, pw)[0].T)
    if link is not None:
        if not (0 <= link < model.n_links):
            raise ValueError(f"invalid link index {link}")
        blocks.append(kin.spatial_jacobian(link)[0].T)
    return np.hstack(blocks)


def pinv_cutoff(A, cutoff=SVD_CUTOFF_DEFAULT):
    """SVD pseudoinverse with a relative singular-value cutoff.

    Returns (pinv, smallest retained singular value). Raises
    DegenerateGeometryError when nothing survives the cutoff.
    """
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    if s[0] <= 0 or not np.isfinite(s[0]):
        raise DegenerateGeometryError("stacked Jacobian has no usable directions")
    keep = s > cutoff * s[0]
    if not np.any(keep):
        raise DegenerateGeometryError("all singular values below cutoff")
    s_inv = np.where(keep, 1.0 / np.where(keep, s, 1.0), 0.0)
    return (Vt.T * s_inv) @ U.T, float(s[keep].min())


def estimate_wrenches(Jstack, tau_ext, cutoff=SVD_CUTOFF_DEFAULT,
                      feet=(), link=None):
    """Minimum-norm least-squares wrench split of τ̂_ext.

    Jstack comes from :func:`stacked_contact_jacobian`; feet/link describe its
    column layout for labeling the result.
    """
    Jstack = np.asarray(Jstack, dtype=float)
    tau_ext = np.asarray(tau_ext, dtype=float)
    if not np.all(np.isfinite(Jstack)):
        raise ValueError("non-finite stacked Jacobian")
    if not np.all(np.isfinite(tau_ext)):
        raise ValueError("non-finite torque estimate")
    feet = list(feet)
    expected = 3 * len(feet) + (6 if link is not None else 0)
    if Jstack.shape[1] != expected:
        raise ValueError(f"stack has {Jstack.shape[1]} columns, layout implies {expected}")
    pinv, smin = pinv_cutoff(Jstack, cutoff)
    x = pinv @ tau_ext
    foot_forces = {name: x[3 * i:3 * i + 3] for i, name in enumerate(feet)}
    force = moment = None
    if link is not None:
        force = x[3 * len(feet):3 * len(feet) + 3]
        moment = x[3 * len(feet) + 3:3 * len(feet) + 6]
    return ExternalWrenchEstimate(foot_forces=foot_forces, force=force,
                                  moment=moment, link=link,
                                  min_singular_value=smin)


# --- batch path ------------------------------------------------------------


def stacked_jacobian_batch(kin: BatchKinematics, model: RobotModel,
                           contact_feet, link=None):
    """Batched version of stacked_contact_jacobian, shape (T, nv, 3k + 6)."""
    blocks = []
    for name in contact_feet:
        foot = model.feet[name]
        pw = kin.point_world(foot.link, foot.point)
        blocks.append(kin.point_jacobian(foot.link, pw).transpose(0, 2, 1))
    if link is not None:
        blocks.append(kin.spatial_jacobian(link).transpose(0, 2, 1))
    return np.concatenate(blocks, axis=2)


def solve_stack_batch(Jstack, tau, cutoff=SVD_CUTOFF_DEFAULT, sigma_stride=32):
    """Solve the stacked system for a whole series.

    Jstack: (T, nv, c); tau: (T, nv). Returns (x, sigma_min) where x is
    (T, c) and sigma_min holds the smallest singular value evaluated every
    `sigma_stride` samples (repeated in between, as a conditioning trace).

    Uses full-rank normal equations and falls back to the SVD pseudoinverse
    if the stack is rank deficient anywhere.
    """
    T, nv, c = Jstack.shape
    Jt = Jstack.transpose(0, 2, 1)
    rhs = np.einsum("tcv,tv->tc", Jt, tau)
    sigma_min = np.empty(T)
    idx = np.arange(0, T, sigma_stride)
    if c <= nv:
        G = Jt @ Jstack
        eig = np.linalg.eigvalsh(G[idx])
        good = eig[:, 0] > (cutoff * np.sqrt(np.maximum(eig[:, -1], 0.0))) ** 2
        if np.all(good) and eig[:, 0].min() > 0:
            x = np.linalg.solve(G, rhs[..., None])[..., 0]
            sig = np.sqrt(eig[:, 0])
            sigma_min[:] = np.repeat(sig, sigma_stride)[:T]
            return x, sigma_min
    # rank-deficient or wide stack: per-sample pseudoinverse
    x = np.empty((T, c))
    for k in range(T):
        pinv, smin = pinv_cutoff(Jstack[k], cutoff)
        x[k] = pinv @ tau[k]
        sigma_min[k] = smin
    return x, sigma_min
