"""Arm/base isolation and disturbance-compensated collision-force identification.

Isolation: after a detection, the band-pass filtered arm-joint torques are
inspected over a short window; if any of them crosses the isolation threshold
the collision is attributed to the arm, otherwise to the base.

Identification: the slowly varying part of the estimated external force
(model errors, unmodeled payloads, sensor bias) is tracked by a first-order
low-pass that is frozen while a collision is active,

    F̂_dis(k) = α F̂_dis(k-1) + (1-α) F̂_ext(k)   if ε = 0
    F̂_dis(k) = F̂_dis(k-1)                        if ε = 1

with α = exp(-ω T_s). The identified collision force is the difference
F̂_c = F̂_ext - F̂_dis. A config switch restores the alternative coefficient
placement (new sample weighted by α) for comparison; with α ≈ 0.992 that
variant barely filters, so the conventional form is the default.

Because detection lags the true contact onset, the filter would otherwise
leak a little of the rising collision force into the disturbance before the
freeze lands. A short rewind buffer restores the estimate from `freeze_guard`
seconds before the detection instant, freezing a genuinely pre-collision
value.
"""

from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter


@dataclass
class IsolationConfig:
    threshold: float = 1.0   # N·m on the filtered arm-joint torques
    window: float = 0.05     # s after the detected start

    def __post_init__(self):
        if self.threshold <= 0:
            raise ValueError("isolation threshold must be > 0")
        if self.window <= 0:
            raise ValueError("isolation window must be > 0")


def isolate_body(filtered_arm_torques, threshold):
    """'arm' if any filtered arm-joint torque magnitude crosses the threshold.

    filtered_arm_torques holds the samples inside the decision window,
    shape (samples, arm joints) or (samples,).
    """
    arr = np.asarray(filtered_arm_torques, dtype=float)
    return "arm" if arr.size and np.any(np.abs(arr) > threshold) else "base"


class DisturbanceEstimator:
    """Low-pass disturbance tracker with freeze-on-collision.

    Stateful and order-dependent; one instance per force channel group.
    """

    def __init__(self, channels, cutoff_hz=0.5, sample_time=0.0025,
                 literal_blend=False, freeze_guard=0.15):
        if cutoff_hz <= 0 or sample_time <= 0:
            raise ValueError("cutoff and sample time must be > 0")
        if freeze_guard < 0:
            raise ValueError("freeze_guard must be >= 0")
        self.channels = channels
        self.omega = 2.0 * np.pi * cutoff_hz
        self.sample_time = sample_time
        self.alpha = float(np.exp(-self.omega * sample_time))
        self.literal_blend = literal_blend
        self.guard_samples = int(round(freeze_guard / sample_time))
        self.reset()

    def reset(self):
        self.value = None
        self.prev_eps = 0
        self._history = deque(maxlen=self.guard_samples + 1)

    def seed(self, value):
        """Set the current estimate directly (e.g. to a known offset)."""
        self.value = np.array(value, dtype=float).reshape(self.channels)
        self._history.clear()
        self._history.append(self.value.copy())


def disturbance_step(de: DisturbanceEstimator, f_ext, eps):
    """Advance the disturbance estimate one sample and return it.

    eps is the fused collision flag (0 or 1). On the first sample the
    estimate is initialized to f_ext. While eps = 1 the value is held; at the
    0 -> 1 transition it is first rewound to the buffered value from
    freeze_guard seconds earlier.
    """
    f = np.atleast_1d(np.asarray(f_ext, dtype=float))
    if f.shape != (de.channels,):
        raise ValueError(f"expected {de.channels} channels, got {f.shape}")
    if not np.all(np.isfinite(f)):
        raise ValueError("non-finite input rejected")
    if eps not in (0, 1):
        raise ValueError("eps must be 0 or 1")
    if de.value is None:
        de.value = f.copy()
        de._history.append(de.value.copy())
        de.prev_eps = eps
        return de.value.copy()
    if eps == 1:
        if de.prev_eps == 0 and de.guard_samples > 0 and de._history:
            de.value = de._history[0].copy()  # rewind to pre-collision value
    else:
        a = de.alpha
        if de.literal_blend:
            de.value = (1.0 - a) * de.value + a * f
        else:
            de.value = a * de.value + (1.0 - a) * f
    # history tracks the estimate in raw sample time so the rewind target is
    # always the value freeze_guard seconds back, frozen stretches included
    de._history.append(de.value.copy())
    de.prev_eps = eps
    return de.value.copy()


def collision_force(f_ext, f_dis):
    """Identified collision force F̂_c = F̂_ext - F̂_dis (componentwise)."""
    return np.asarray(f_ext, dtype=float) - np.asarray(f_dis, dtype=float)


def run_disturbance(F_ext, eps, cutoff_hz=0.5, sample_time=0.0025,
                    literal_blend=False, freeze_guard=0.15):
    """Whole-series disturbance estimate, identical to stepping.

    F_ext: (T, C); eps: (T,) collision flags as consumed (any latency shift
    applied by the caller). Returns (T, C).
    """
    F = np.asarray(F_ext, dtype=float)
    squeeze = F.ndim == 1
    if squeeze:
        F = F[:, None]
    T, C = F.shape
    eps = np.asarray(eps, dtype=int)
    if eps.shape != (T,):
        raise ValueError("eps length must match the series")
    alpha = float(np.exp(-2.0 * np.pi * cutoff_hz * sample_time))
    a = (1.0 - alpha) if literal_blend else alpha
    blend = 1.0 - a  # weight of the new sample
    guard = int(round(freeze_guard / sample_time))
    out = np.empty_like(F)
    out[0] = F[0]
    bounds = np.concatenate([[1], np.flatnonzero(np.diff(eps[1:])) + 2, [T]])
    for k, j in zip(bounds[:-1], bounds[1:]):
        if j <= k:
            continue
        if eps[k] == 1:
            held_from = max(k - 1 - guard, 0) if guard > 0 else k - 1
            out[k:j] = out[held_from]
        else:
            out[k:j] = lfilter([blend], [1.0, -a], F[k:j], axis=0,
                               zi=a * out[k - 1][None, :])[0]
    return out[:, 0] if squeeze else out
