"""Band-pass filtering and two-peak collision detection.

A first-order high-pass at f_lo cascaded with a first-order low-pass at f_hi
rejects both the quasi-static content of the estimated forces (model errors,
payloads) and high-frequency noise. A sustained contact then shows up as two
opposite-signed transients: one at force onset, one at release.

The detector uses that structure: a channel enters collision when the
filtered force crosses the threshold on either half-plane, and leaves it when
the signal crosses the threshold on the *opposite* half (the second peak), or
after a timeout. A conventional exceed-only detector would report two
separate events for one sustained contact; this one reports a single event
whose duration estimates the collision time span.

After an end event the channel stays disarmed until the filter output has
come back inside the threshold band and a short refractory time has passed,
so the tail of the second peak cannot retrigger.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter


# --- band-pass filter -------------------------------------------------------


class BandPassState:
    """First-order high-pass/low-pass cascade state for a set of channels.

    The filter is primed on the first sample so a standing offset at start-up
    produces no spurious transient.
    """

    def __init__(self, f_lo_hz, f_hi_hz, sample_time, channels=1):
        if not 0 < f_lo_hz < f_hi_hz:
            raise ValueError("cutoffs must satisfy 0 < f_lo < f_hi")
        if sample_time <= 0:
            raise ValueError("sample_time must be > 0")
        self.f_lo = f_lo_hz
        self.f_hi = f_hi_hz
        self.sample_time = sample_time
        self.channels = channels
        self.a_hp = float(np.exp(-2.0 * np.pi * f_lo_hz * sample_time))
        self.a_lp = float(1.0 - np.exp(-2.0 * np.pi * f_hi_hz * sample_time))
        self.reset()

    def reset(self):
        self.x_prev = None
        self.hp = np.zeros(self.channels)
        self.lp = np.zeros(self.channels)


def bandpass_step(st: BandPassState, x):
    """Advance the cascade one sample and return the filtered values."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (st.channels,):
        raise ValueError(f"expected {st.channels} channels, got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite filter input rejected")
    if st.x_prev is None:
        st.x_prev = x.copy()
    st.hp = st.a_hp * (st.hp + x - st.x_prev)
    st.x_prev = x.copy()
    st.lp = st.lp + st.a_lp * (st.hp - st.lp)
    return st.lp.copy()


def bandpass_batch(X, f_lo_hz, f_hi_hz, sample_time):
    """Whole-series band-pass, identical to repeated bandpass_step calls."""
    X = np.asarray(X, dtype=float)
    squeeze = X.ndim == 1
    X = X[:, None] if squeeze else X
    st = BandPassState(f_lo_hz, f_hi_hz, sample_time, channels=X.shape[1])
    x0 = X[0]
    hp = lfilter([st.a_hp, -st.a_hp], [1.0, -st.a_hp], X - x0, axis=0)
    lp = lfilter([st.a_lp], [1.0, st.a_lp - 1.0], hp, axis=0)
    return lp[:, 0] if squeeze else lp


def lowpass_batch(X, cutoff_hz, sample_time):
    """One-pole low-pass primed on the first sample (zero start transient)."""
    X = np.asarray(X, dtype=float)
    a = 1.0 - np.exp(-2.0 * np.pi * cutoff_hz * sample_time)
    return X[0] + lfilter([a], [1.0, a - 1.0], X - X[0], axis=0)


# --- two-peak detector ------------------------------------------------------


@dataclass
class ChannelEvent:
    """One detected collision interval on a single filtered channel."""

    channel: int
    start_index: int
    end_index: int
    start_time: float
    end_time: float
    sign: int
    reason: str  # 'opposite' or 'timeout'


@dataclass
class DetectorConfig:
    t_max: float = 8.0
    refractory: float | None = None  # default 3 / (2π f_hi)
    warmup: float = 0.0

    def refractory_for(self, f_hi_hz):
        if self.refractory is not None:
            return self.refractory
        return 3.0 / (2.0 * np.pi * f_hi_hz)


@dataclass
class DetectionState:
    """Streaming detector state across channels; ε = 1 while any channel is in collision."""

    channels: int
    t_max: float = 8.0
    refractory: float = 0.16
    warmup: float = 0.0
    phase: np.ndarray = field(init=False)       # 0 idle, 1 in collision
    sign: np.ndarray = field(init=False)
    start_time: np.ndarray = field(init=False)
    start_index: np.ndarray = field(init=False)
    armed: np.ndarray = field(init=False)
    rearm_after: np.ndarray = field(init=False)
    index: int = field(init=False, default=0)
    events: list = field(init=False)

    def __post_init__(self):
        self.phase = np.zeros(self.channels, dtype=int)
        self.sign = np.zeros(self.channels, dtype=int)
        self.start_time = np.zeros(self.channels)
        self.start_index = np.zeros(self.channels, dtype=int)
        self.armed = np.ones(self.channels, dtype=bool)
        self.rearm_after = np.full(self.channels, -np.inf)
        self.events = []

    @property
    def epsilon(self):
        return int(np.any(self.phase == 1))


def detect_step(ds: DetectionState, f_filtered, t, threshold):
    """Advance the detector one sample.

    f_filtered: band-pass filtered force components (channels,); threshold
    may be a scalar or per-channel array. Returns (epsilon, new_events) where
    new_events lists the ChannelEvents finalized at this sample.
    """
    f = np.atleast_1d(np.asarray(f_filtered, dtype=float))
    b = np.broadcast_to(np.asarray(threshold, dtype=float), f.shape)
    new_events = []
    k = ds.index
    for c in range(ds.channels):
        v = f[c]
        if ds.phase[c] == 1:
            opposite = np.sign(v) == -ds.sign[c] and abs(v) > b[c]
            timeout = t - ds.start_time[c] > ds.t_max + 1e-9
            if opposite or timeout:
                ev = ChannelEvent(
                    channel=c, start_index=ds.start_index[c], end_index=k,
                    start_time=ds.start_time[c], end_time=t, sign=int(ds.sign[c]),
                    reason="opposite" if opposite else "timeout")
                ds.events.append(ev)
                new_events.append(ev)
                ds.phase[c] = 0
                ds.armed[c] = False
                ds.rearm_after[c] = t + ds.refractory
        else:
            if not ds.armed[c]:
                if t >= ds.rearm_after[c] - 1e-9 and abs(v) <= b[c]:
                    ds.armed[c] = True
            elif t >= ds.warmup and abs(v) > b[c]:
                ds.phase[c] = 1
                ds.sign[c] = 1 if v > 0 else -1
                ds.start_time[c] = t
                ds.start_index[c] = k
    ds.index = k + 1
    return ds.epsilon, new_events


def detect_batch(F, threshold, sample_time, t_max=8.0, refractory=0.16,
                 warmup=0.0, t0=0.0):
    """Whole-series detection, identical to repeated detect_step calls.

    F: (T, C) filtered forces; threshold: scalar, (C,), or (T, C). Returns
    (epsilon (T,), events) with events sorted by start time. Works on sparse
    crossing indices, so cost scales with the number of crossings.
    """
    F = np.asarray(F, dtype=float)
    if F.ndim == 1:
        F = F[:, None]
    T, C = F.shape
    b = np.asarray(threshold, dtype=float)
    if b.ndim == 0:
        b = np.full((T, C), float(b))
    elif b.shape == (C,):
        b = np.broadcast_to(b, (T, C))
    elif b.shape == (T,):
        b = np.broadcast_to(b[:, None], (T, C))
    elif b.shape != (T, C):
        raise ValueError(f"threshold shape {b.shape} incompatible with {(T, C)}")
    times = t0 + sample_time * np.arange(T)
    events = []
    epsilon = np.zeros(T, dtype=int)
    k_warm = int(np.searchsorted(times, warmup))
    n_max = int(np.floor(t_max / sample_time + 1e-9))
    n_refr = refractory / sample_time
    for c in range(C):
        v = F[:, c]
        bc = b[:, c]
        pos = np.flatnonzero(v > bc)
        neg = np.flatnonzero(v < -bc)
        inside = np.abs(v) <= bc
        inside_idx = np.flatnonzero(inside)
        k = k_warm
        while True:
            ip = pos[np.searchsorted(pos, k)] if np.searchsorted(pos, k) < len(pos) else T
            im = neg[np.searchsorted(neg, k)] if np.searchsorted(neg, k) < len(neg) else T
            start = min(ip, im)
            if start >= T:
                break
            sign = 1 if start == ip else -1
            opp = neg if sign == 1 else pos
            j = np.searchsorted(opp, start + 1)
            end = opp[j] if j < len(opp) else T
            # timeout fires at the first sample strictly beyond t_max; an
            # opposite crossing at that same sample takes precedence
            timeout_at = start + n_max + 1
            reason = "opposite"
            if end > timeout_at:
                end = timeout_at
                reason = "timeout"
            if end >= T:
                # unfinished at end of log: channel stays in collision, no event
                epsilon[start:T] += 1
                break
            events.append(ChannelEvent(
                channel=c, start_index=int(start), end_index=int(end),
                start_time=float(times[start]), end_time=float(times[end]),
                sign=sign, reason=reason))
            epsilon[start:end] += 1
            # re-arm: first sample at/after the refractory with |v| <= b
            i0 = end + int(np.ceil(n_refr - 1e-9))
            j = np.searchsorted(inside_idx, i0)
            if j >= len(inside_idx):
                break
            k = inside_idx[j] + 1
    events.sort(key=lambda e: (e.start_index, e.channel))
    return (epsilon > 0).astype(int), events


def fuse_events(events, times=None):
    """Merge overlapping channel events into fused collision intervals.

    Returns a list of dicts with start/end indices and times (earliest channel
    start, latest channel end) and the contributing channels.
    """
    if not events:
        return []
    evs = sorted(events, key=lambda e: e.start_index)
    fused = []
    cur = {
        "start_index": evs[0].start_index, "end_index": evs[0].end_index,
        "start_time": evs[0].start_time, "end_time": evs[0].end_time,
        "channels": {evs[0].channel},
    }
    for e in evs[1:]:
        if e.start_index <= cur["end_index"]:
            cur["end_index"] = max(cur["end_index"], e.end_index)
            cur["end_time"] = max(cur["end_time"], e.end_time)
            cur["channels"].add(e.channel)
        else:
            fused.append(cur)
            cur = {
                "start_index": e.start_index, "end_index": e.end_index,
                "start_time": e.start_time, "end_time": e.end_time,
                "channels": {e.channel},
            }
    fused.append(cur)
    return fused


def conventional_detect_batch(F, threshold):
    """Exceed-only detector: one event per maximal run of |F| > b, per channel.

    The baseline behavior a sustained contact defeats: the onset and release
    transients of the band-passed force produce two separate detections.
    """
    F = np.asarray(F, dtype=float)
    if F.ndim == 1:
        F = F[:, None]
    T, C = F.shape
    b = np.broadcast_to(np.asarray(threshold, dtype=float), (T, C))
    out = []
    for c in range(C):
        above = np.abs(F[:, c]) > b[:, c]
        d = np.diff(above.astype(int), prepend=0, append=0)
        starts = np.flatnonzero(d == 1)
        ends = np.flatnonzero(d == -1)
        out.extend((int(s), int(e), c) for s, e in zip(starts, ends))
    out.sort()
    return out


# --- dynamic thresholds -----------------------------------------------------


def velocity_threshold(joint_speed_norm, c0, c1):
    """b = c0 + c1 * |q̇_d| per sample."""
    return c0 + c1 * np.abs(np.asarray(joint_speed_norm, dtype=float))


def force_std_threshold(F, window_s, sample_time, c0, c1):
    """b = c0 + c1 * rolling std of the filtered force.

    The window covers the preceding `window_s` seconds, excluding the current
    sample; while the window is empty the threshold is c0.
    """
    F = np.asarray(F, dtype=float)
    squeeze = F.ndim == 1
    X = F[:, None] if squeeze else F
    n = int(round(window_s / sample_time))
    T = X.shape[0]
    out = np.full(X.shape, float(c0))
    if n >= 1 and T > 1:
        csum = np.concatenate([np.zeros((1, X.shape[1])), np.cumsum(X, axis=0)])
        csq = np.concatenate([np.zeros((1, X.shape[1])), np.cumsum(X * X, axis=0)])
        for k in range(1, T):
            lo = max(0, k - n)
            m = k - lo
            mean = (csum[k] - csum[lo]) / m
            var = np.maximum((csq[k] - csq[lo]) / m - mean**2, 0.0)
            out[k] = c0 + c1 * np.sqrt(var)
    return out[:, 0] if squeeze else out


def dynamic_threshold(mode, signals, params):
    """Dispatch on the threshold mode; see velocity_threshold / force_std_threshold.

    signals: dict with 'joint_speed_norm' (velocity mode) or 'filtered_force'
    plus 'sample_time' (force_std mode). params: dict with c0, c1 and, for
    force_std, window_s.
    """
    if mode == "velocity":
        return velocity_threshold(signals["joint_speed_norm"], params["c0"], params["c1"])
    if mode == "force_std":
        return force_std_threshold(signals["filtered_force"], params["window_s"],
                                   signals["sample_time"], params["c0"], params["c1"])
    raise ValueError(f"unknown threshold mode {mode!r}")
