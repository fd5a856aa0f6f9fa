import numpy as np
import pytest

from colev.dynamics import batch_terms
from colev.model import GeneralizedState, default_model, integrate_q


@pytest.fixture(scope="session")
def desk_model():
    return default_model()


def consistent_stream(model, duration=2.0, ts=0.0025, seed=0, moving=True,
                      amp_scale=0.2):
    """Trajectory plus torques satisfying the discrete momentum identity.

    The applied generalized force is split so the joint rows go to tau_m and
    the base rows to tau_ft; the true external torque is identically zero, so
    a perfect-model observer must report (numerically) zero.
    """
    rng = np.random.default_rng(seed)
    n = model.n_links - 1
    T = int(round(duration / ts))
    times = np.arange(T) * ts
    if moving:
        amp = rng.uniform(0.05, amp_scale, size=n)
        freq = rng.uniform(0.2, 0.8, size=n)
        phase = rng.uniform(0, 2 * np.pi, size=n)
        joint_rates = amp[None, :] * np.sin(
            2 * np.pi * freq[None, :] * times[:, None] + phase[None, :])
    else:
        joint_rates = np.zeros((T, n))
    V = np.zeros((T, model.nv))
    V[:, 6:] = joint_rates
    Q = np.empty((T, 7 + n))
    q = GeneralizedState.neutral(model).q
    q[7:] = 0.3 * np.sin(np.arange(n) + 1.0)  # bent posture, nonzero gravity load
    for k in range(T):
        Q[k] = q
        q = integrate_q(q, V[k], ts)
    terms = batch_terms(model, Q, V)
    applied = np.empty_like(terms.nhat)
    applied[0] = terms.nhat[0]
    applied[1:] = (terms.p[1:] - terms.p[:-1]) / ts + terms.nhat[1:]
    tau_m = applied[:, 6:]
    tau_ft = applied.copy()
    tau_ft[:, 6:] = 0.0
    return Q, V, tau_m, tau_ft, terms
