"""External generalized-torque estimation.

All observers consume the per-sample dynamic terms and the measured torques
and produce an estimate of the external generalized torque τ̂_ext (nv,).
The momentum-based family works on the raw momentum residual

    ρ(k) = (p(k) - p(k-1)) / T_s + nhat(k) - Sᵀτ_m(k) - τ_ft(k)

which equals the true external torque when the model is exact, and applies a
per-coordinate low-pass with unit DC gain:

- ``mbo_first_order`` / ``continuous_euler``: explicit Euler discretization of
  the continuous observer, one pole per coordinate at gain K_O (time constant
  1/K_O).
- ``mbo_first_order`` / ``discrete_momentum_difference``: same structure with
  the exact exponential coefficient 1 - exp(-K_O T_s).
- ``mbo_third_order``: three cascaded first-order stages whose common pole is
  placed so the cascade's -3 dB point matches the first-order observer's.
- ``mbko``: per-coordinate two-state (momentum, torque) Kalman observer with
  steady-state gains derived from configured noise levels.

The direct variants instead evaluate the equations of motion:

- ``direct``: τ̂ = M v̇_f + h - Sᵀτ_m - τ_ft with v̇_f a low-pass filtered
  finite difference of the generalized velocity.
- ``static_direct``: neglects acceleration and velocity terms, τ̂ = g - Sᵀτ_m - τ_ft.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter

VARIANTS = ("direct", "static_direct", "mbo_first_order", "mbo_third_order", "mbko")
SCHEMES = ("continuous_euler", "discrete_momentum_difference")

# selectable names for the comparison harness
NAMED_VARIANTS = {
    "direct": {"variant": "direct"},
    "static_direct": {"variant": "static_direct"},
    "mbo_continuous": {"variant": "mbo_first_order", "scheme": "continuous_euler"},
    "mbo_discrete": {"variant": "mbo_first_order", "scheme": "discrete_momentum_difference"},
    "mbo_third_order": {"variant": "mbo_third_order"},
    "mbko": {"variant": "mbko"},
}

# third-order cascade: -3 dB of (1 + (w/a)^2)^(-3/2) at w = a sqrt(2^(1/3) - 1)
_THIRD_ORDER_POLE_SCALE = 1.0 / np.sqrt(2.0 ** (1.0 / 3.0) - 1.0)


@dataclass
class ObserverConfig:
    """Gains, sampling time and variant-specific parameters."""

    variant: str = "mbo_first_order"
    gain: float | np.ndarray = 20.0       # K_O diagonal entries, 1/s
    sample_time: float = 0.0025
    scheme: str = "continuous_euler"
    accel_cutoff_hz: float = 10.0         # acceleration LPF for direct variants
    mbko_torque_noise: float = 0.018      # random-walk std of τ_ext per step
    mbko_momentum_noise: float = 7.5e-4   # process noise std on momentum per step
    mbko_measurement_noise: float = 2e-3  # momentum measurement noise std

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown observer variant {self.variant!r}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown first-order scheme {self.scheme!r}")
        if self.sample_time <= 0:
            raise ValueError("sample_time must be > 0")
        if np.any(np.asarray(self.gain) <= 0):
            raise ValueError("observer gains must be > 0")

    def gain_vector(self, nv):
        return np.broadcast_to(np.asarray(self.gain, dtype=float), (nv,)).copy()

    def first_order_coeff(self, nv):
        k = self.gain_vector(nv) * self.sample_time
        if self.scheme == "discrete_momentum_difference":
            return 1.0 - np.exp(-k)
        if np.any(k >= 1.0):
            raise ValueError("explicit Euler unstable: K_O * T_s must be < 1")
        return k

    def third_order_coeff(self, nv):
        return self.gain_vector(nv) * _THIRD_ORDER_POLE_SCALE * self.sample_time

    def accel_coeff(self):
        return 1.0 - np.exp(-2.0 * np.pi * self.accel_cutoff_hz * self.sample_time)

    def mbko_gains(self):
        """Steady-state Kalman gains (k1, k2) from the configured noise levels."""
        key = (self.sample_time, self.mbko_momentum_noise,
               self.mbko_torque_noise, self.mbko_measurement_noise)
        cached = self.__dict__.get("_mbko_gain_cache")
        if cached is not None and cached[0] == key:
            return cached[1]
        ts = self.sample_time
        A = np.array([[1.0, ts], [0.0, 1.0]])
        Q = np.diag([self.mbko_momentum_noise**2, self.mbko_torque_noise**2])
        r = self.mbko_measurement_noise**2
        P = Q.copy()
        K = np.zeros(2)
        for _ in range(200000):
            Pp = A @ P @ A.T + Q
            K_new = Pp[:, 0] / (Pp[0, 0] + r)
            P_new = Pp - np.outer(K_new, Pp[0, :])
            if np.allclose(K_new, K, rtol=1e-14, atol=1e-18):
                K = K_new
                break
            P, K = P_new, K_new
        gains = (float(K[0]), float(K[1]))
        self.__dict__["_mbko_gain_cache"] = (key, gains)
        return gains

    @classmethod
    def named(cls, name, **overrides):
        """Config for one of the six comparison-harness variant names."""
        if name not in NAMED_VARIANTS:
            raise ValueError(f"unknown observer name {name!r}; "
                             f"choose from {sorted(NAMED_VARIANTS)}")
        kw = dict(NAMED_VARIANTS[name])
        kw.update(overrides)
        return cls(**kw)


@dataclass
class ObserverState:
    """Per-stream observer memory; apply steps in sample order."""

    nv: int
    variant: str
    tau_ext: np.ndarray = field(init=False)
    integral: np.ndarray = field(init=False)
    p_prev: np.ndarray | None = field(init=False, default=None)
    v_prev: np.ndarray | None = field(init=False, default=None)
    stages: np.ndarray = field(init=False)
    accel_filt: np.ndarray = field(init=False)
    p_hat: np.ndarray | None = field(init=False, default=None)

    def __post_init__(self):
        self.reset()

    def reset(self):
        self.tau_ext = np.zeros(self.nv)
        self.integral = np.zeros(self.nv)
        self.p_prev = None
        self.v_prev = None
        self.stages = np.zeros((3, self.nv))
        self.accel_filt = np.zeros(self.nv)
        self.p_hat = None


def make_state(cfg: ObserverConfig, nv: int) -> ObserverState:
    return ObserverState(nv=nv, variant=cfg.variant)


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise ValueError("non-finite input sample rejected")


def observer_step(cfg: ObserverConfig, st: ObserverState, terms, state,
                  tau_m, tau_ft, S, vdot=None):
    """Advance the observer by one sample and return τ̂_ext.

    terms is the dict from :func:`colev.dynamics.dynamics_terms`; state is the
    GeneralizedState at this sample. The state object is updated in place;
    inputs containing non-finite values are rejected without touching it.
    """
    if st.variant != cfg.variant:
        raise ValueError(f"state built for {st.variant!r}, config is {cfg.variant!r}")
    nv = st.nv
    tau_m = np.asarray(tau_m, dtype=float)
    tau_ft = np.asarray(tau_ft, dtype=float)
    v = np.asarray(state.vel, dtype=float)
    M, nhat = terms["M"], terms["nhat"]
    if tau_ft.shape != (nv,) or v.shape != (nv,) or M.shape != (nv, nv):
        raise ValueError("dimension mismatch in observer inputs")
    _check_finite(tau_m, tau_ft, v, M, nhat)
    ts = cfg.sample_time
    applied = S.T @ tau_m + tau_ft

    if cfg.variant == "static_direct":
        st.tau_ext = terms["g"] - applied
        return st.tau_ext.copy()

    if cfg.variant == "direct":
        if vdot is None:
            vdot = np.zeros(nv) if st.v_prev is None else (v - st.v_prev) / ts
        else:
            vdot = np.asarray(vdot, dtype=float)
            _check_finite(vdot)
        if st.v_prev is None:
            st.accel_filt = np.zeros(nv)
        c = cfg.accel_coeff()
        st.accel_filt = st.accel_filt + c * (vdot - st.accel_filt)
        st.v_prev = v.copy()
        st.tau_ext = M @ st.accel_filt + terms["h"] - applied
        return st.tau_ext.copy()

    p = M @ v
    if st.p_prev is None:
        # first sample initializes the momentum bookkeeping; by convention
        # no collision is active at k = 0 and the estimate starts at zero
        st.p_prev = p.copy()
        st.integral = p.copy()
        if cfg.variant == "mbko":
            st.p_hat = p.copy()
        return st.tau_ext.copy()
    u = applied - nhat
    rho = (p - st.p_prev) / ts + nhat - applied
    st.p_prev = p.copy()

    if cfg.variant == "mbo_first_order":
        a = cfg.first_order_coeff(nv)
        st.integral = st.integral + ts * (u + st.tau_ext)
        st.tau_ext = st.tau_ext + a * (rho - st.tau_ext)
    elif cfg.variant == "mbo_third_order":
        a = cfg.third_order_coeff(nv)
        st.stages[0] += a * (rho - st.stages[0])
        st.stages[1] += a * (st.stages[0] - st.stages[1])
        st.stages[2] += a * (st.stages[1] - st.stages[2])
        st.tau_ext = st.stages[2].copy()
    elif cfg.variant == "mbko":
        k1, k2 = cfg.mbko_gains()
        p_pred = st.p_hat + ts * (u + st.tau_ext)
        innov = p - p_pred
        st.p_hat = p_pred + k1 * innov
        st.tau_ext = st.tau_ext + k2 * innov
    else:  # pragma: no cover
        raise ValueError(cfg.variant)
    return st.tau_ext.copy()


# --- batch runners ---------------------------------------------------------


def raw_residual(p, nhat, tau_m, tau_ft, S, sample_time):
    """Momentum residual ρ(k) over a whole log; ρ(0) = 0 by convention."""
    dp = np.zeros_like(p)
    dp[1:] = (p[1:] - p[:-1]) / sample_time
    rho = dp + nhat - tau_m @ S - tau_ft
    rho[0] = 0.0
    return rho


def _one_pole(coeff, x):
    """y(k) = y(k-1) + coeff * (x(k) - y(k-1)), columnwise, zero initial state."""
    if np.ndim(coeff) == 0:
        return lfilter([coeff], [1.0, coeff - 1.0], x, axis=0)
    out = np.empty_like(x)
    for j in range(x.shape[1]):
        out[:, j] = lfilter([coeff[j]], [1.0, coeff[j] - 1.0], x[:, j])
    return out


def run_observer(cfg: ObserverConfig, S, terms, V, tau_m, tau_ft):
    """Whole-log observer output (T, nv); matches repeated observer_step calls.

    terms is a :class:`colev.dynamics.BatchTerms`.
    """
    nv = terms.p.shape[1]
    ts = cfg.sample_time
    applied = tau_m @ S + tau_ft

    if cfg.variant == "static_direct":
        return terms.g - applied

    if cfg.variant == "direct":
        vdot = np.zeros_like(V)
        vdot[1:] = (V[1:] - V[:-1]) / ts
        vdot_f = _one_pole(cfg.accel_coeff(), vdot)
        return np.einsum("tij,tj->ti", terms.M, vdot_f) + terms.h - applied

    rho = raw_residual(terms.p, terms.nhat, tau_m, tau_ft, S, ts)
    if cfg.variant == "mbo_first_order":
        return _one_pole(cfg.first_order_coeff(nv), rho)
    if cfg.variant == "mbo_third_order":
        a = cfg.third_order_coeff(nv)
        return _one_pole(a, _one_pole(a, _one_pole(a, rho)))
    if cfg.variant == "mbko":
        k1, k2 = cfg.mbko_gains()
        u = applied - terms.nhat
        T = terms.p.shape[0]
        tau = np.zeros((T, nv))
        p_hat = terms.p[0].copy()
        t_hat = np.zeros(nv)
        for k in range(1, T):
            p_pred = p_hat + ts * (u[k] + t_hat)
            innov = terms.p[k] - p_pred
            p_hat = p_pred + k1 * innov
            t_hat = t_hat + k2 * innov
            tau[k] = t_hat
        return tau
    raise ValueError(cfg.variant)  # pragma: no cover
