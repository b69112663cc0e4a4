"""Causal signal conditioning: differentiation, EMG envelope, resampling.

The differentiator is a fixed-lag polynomial-fit (Savitzky-Golay) filter:
at each new sample it fits a polynomial over the trailing window and
evaluates value/slope/curvature at the window center, so the output is
delayed by half a window.  That lag is the operator's reported latency.

Muscle activity goes through band-pass filtering, full-wave rectification,
a moving-RMS envelope and normalization by the per-channel maximum
voluntary contraction.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy.signal import butter, savgol_coeffs, sosfilt, sosfilt_zi

DEFAULT_WINDOW = 11
DEFAULT_ORDER = 3
EMG_BAND = (2.0, 500.0)
EMG_FILTER_ORDER = 4
ENVELOPE_WINDOW_S = 0.25


class SignalError(ValueError):
    """Raised for invalid filter specifications or stream shapes."""


@dataclass(frozen=True)
class FilterSpec:
    """Frequency-domain description of a causal filter."""

    kind: str  # "low-pass" | "band-pass"
    corners: tuple[float, ...]
    order: int
    fs: float

    def __post_init__(self):
        if self.kind not in ("low-pass", "band-pass"):
            raise SignalError(f"unknown filter kind {self.kind!r}")
        c = tuple(float(v) for v in self.corners)
        object.__setattr__(self, "corners", c)
        if self.fs <= 0:
            raise SignalError("sample rate must be positive")
        if self.kind == "band-pass":
            if len(c) != 2 or not (0.0 < c[0] < c[1] < self.fs / 2):
                raise SignalError(
                    f"band-pass corners must satisfy 0 < low < high < fs/2, "
                    f"got {c} at fs={self.fs}"
                )
        else:
            if len(c) != 1 or not (0.0 < c[0] < self.fs / 2):
                raise SignalError(f"low-pass corner must be in (0, fs/2), got {c}")
        if self.order < 1:
            raise SignalError("filter order must be >= 1")


def design_filter(spec: FilterSpec) -> np.ndarray:
    """Butterworth second-order sections for a FilterSpec."""
    btype = "bandpass" if spec.kind == "band-pass" else "lowpass"
    corners = spec.corners if len(spec.corners) > 1 else spec.corners[0]
    return butter(spec.order, corners, btype=btype, fs=spec.fs, output="sos")


class CausalDifferentiator:
    """Fixed-lag smoothing differentiator for one uniformly-sampled channel.

    ``push`` returns ``None`` until the window fills, then (smoothed value,
    first derivative, second derivative) for the sample ``lag`` steps ago.
    """

    def __init__(self, fs: float, window: int = DEFAULT_WINDOW, order: int = DEFAULT_ORDER):
        if fs <= 0:
            raise SignalError("sample rate must be positive")
        if window < 3 or window % 2 == 0:
            raise SignalError(f"window must be odd and >= 3, got {window}")
        if not (0 < order < window):
            raise SignalError(f"order must satisfy 0 < order < window, got {order}")
        self.fs = float(fs)
        self.window = int(window)
        self.order = int(order)
        self.lag = (window - 1) // 2
        pos = self.lag
        self._c0 = tuple(savgol_coeffs(window, order, deriv=0, pos=pos, use="dot"))
        self._c1 = tuple(savgol_coeffs(window, order, deriv=1, delta=1.0 / fs, pos=pos, use="dot"))
        self._c2 = tuple(savgol_coeffs(window, order, deriv=2, delta=1.0 / fs, pos=pos, use="dot"))
        self._buf: deque[float] = deque(maxlen=window)

    @property
    def latency(self) -> float:
        """Output delay in seconds."""
        return self.lag / self.fs

    def push(self, x: float):
        self._buf.append(float(x))
        if len(self._buf) < self.window:
            return None
        buf = self._buf
        s0 = s1 = s2 = 0.0
        for v, a, b, c in zip(buf, self._c0, self._c1, self._c2):
            s0 += v * a
            s1 += v * b
            s2 += v * c
        return (s0, s1, s2)

    def reset(self) -> None:
        self._buf.clear()


def differentiate(x, fs: float, window: int = DEFAULT_WINDOW, order: int = DEFAULT_ORDER):
    """Smoothed signal and first/second derivatives of a uniform batch stream.

    Returns arrays aligned with the input; the first and last ``lag``
    samples are the filter warm-up and are NaN.  Raises if the stream is
    shorter than the window.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise SignalError("differentiate expects a 1-D stream")
    if len(x) < window:
        raise SignalError(f"stream of {len(x)} samples shorter than window {window}")
    diff = CausalDifferentiator(fs, window, order)
    n = len(x)
    out0 = np.full(n, np.nan)
    out1 = np.full(n, np.nan)
    out2 = np.full(n, np.nan)
    for i in range(n):
        res = diff.push(x[i])
        if res is not None:
            j = i - diff.lag
            out0[j], out1[j], out2[j] = res
    return out0, out1, out2


# ---------------------------------------------------------------------------
# EMG conditioning
# ---------------------------------------------------------------------------

class MovingRms:
    """Causal moving-RMS over a trailing window of fixed sample count."""

    def __init__(self, n: int):
        if n < 1:
            raise SignalError("window must hold at least one sample")
        self.n = int(n)
        self._buf: deque[float] = deque(maxlen=self.n)

    def push(self, x: float) -> float:
        self._buf.append(float(x) * float(x))
        return math.sqrt(math.fsum(self._buf) / len(self._buf))


class EmgProcessor:
    """Streaming envelope extraction for one muscle channel.

    band-pass -> full-wave rectification -> moving RMS -> divide by the
    maximum-voluntary-contraction reference.
    """

    def __init__(self, fs: float, mvc: float, band: tuple[float, float] = EMG_BAND,
                 order: int = EMG_FILTER_ORDER, envelope_window: float = ENVELOPE_WINDOW_S):
        if not (mvc > 0 and math.isfinite(mvc)):
            raise SignalError(f"MVC must be positive, got {mvc}")
        if fs < 2.0 * band[1]:
            raise SignalError(
                f"sample rate {fs} Hz too low for a {band[1]} Hz band edge "
                f"(needs fs >= {2.0 * band[1]})"
            )
        spec = FilterSpec("band-pass", band, order, fs)
        self.fs = float(fs)
        self.mvc = float(mvc)
        self._sos = design_filter(spec)
        self._zi = sosfilt_zi(self._sos) * 0.0
        self._rms = MovingRms(max(1, int(round(envelope_window * fs))))

    def push(self, x: float) -> float:
        y, self._zi = sosfilt(self._sos, [float(x)], zi=self._zi)
        return self._rms.push(abs(y[0])) / self.mvc

    def push_block(self, x: np.ndarray) -> np.ndarray:
        y, self._zi = sosfilt(self._sos, np.asarray(x, dtype=float), zi=self._zi)
        return np.array([self._rms.push(abs(v)) for v in y]) / self.mvc


def process_emg(raw, fs: float, mvc, band: tuple[float, float] = EMG_BAND,
                order: int = EMG_FILTER_ORDER,
                envelope_window: float = ENVELOPE_WINDOW_S) -> np.ndarray:
    """Normalized activation envelope of raw EMG.

    ``raw`` is (N,) or (N, n_channels); ``mvc`` scalar or per-channel.
    Output is nonnegative and approaches |activation|/MVC in steady state.
    """
    raw = np.asarray(raw, dtype=float)
    squeeze = raw.ndim == 1
    if squeeze:
        raw = raw[:, None]
    mvc_arr = np.broadcast_to(np.asarray(mvc, dtype=float), (raw.shape[1],))
    out = np.empty_like(raw)
    for ch in range(raw.shape[1]):
        proc = EmgProcessor(fs, float(mvc_arr[ch]), band, order, envelope_window)
        out[:, ch] = proc.push_block(raw[:, ch])
    return out[:, 0] if squeeze else out


# ---------------------------------------------------------------------------
# Resampling
# ---------------------------------------------------------------------------

class OnlineResampler:
    """Linear-interpolating resampler to a fixed output rate.

    Input samples are (t, values) with per-entry NaN allowed for dropouts;
    interpolation bridges dropouts using the nearest valid samples and the
    gap report counts bridged runs longer than ``gap_limit`` input samples
    per channel.
    """

    def __init__(self, rate: float, n_channels: int, gap_limit: int = 5):
        if rate <= 0:
            raise SignalError("output rate must be positive")
        self.rate = float(rate)
        self.period = 1.0 / float(rate)
        self.n_channels = int(n_channels)
        self.gap_limit = int(gap_limit)
        self._t0: float | None = None
        self._k = 0  # index of the next output tick: t0 + k*period
        self._last_valid: list[tuple[float, float] | None] = [None] * n_channels
        self._nan_run: list[int] = [0] * n_channels
        self._pending: deque[tuple[float, list[float]]] = deque()
        self.gap_events: list[int] = [0] * n_channels

    @property
    def _next_tick(self) -> float | None:
        if self._t0 is None:
            return None
        return self._t0 + self._k * self.period

    def push(self, t: float, values) -> list[tuple[float, list[float]]]:
        """Feed one input sample; return the output ticks it completes."""
        vals = [float(v) for v in values]
        if len(vals) != self.n_channels:
            raise SignalError(f"expected {self.n_channels} channels, got {len(vals)}")
        for ch, v in enumerate(vals):
            if math.isnan(v):
                self._nan_run[ch] += 1
            else:
                if self._nan_run[ch] > self.gap_limit:
                    self.gap_events[ch] += 1
                self._nan_run[ch] = 0
        if self._t0 is None:
            self._t0 = t
        self._pending.append((t, vals))
        out = []
        while True:
            tick = self._next_tick
            if tick is None or tick > t + 1e-12:
                break
            row = self._interpolate(tick)
            if row is None:
                break  # a channel still lacks a bracketing valid sample
            out.append((tick, row))
            self._k += 1
        self._trim()
        return out

    def _interpolate(self, tick: float):
        row = []
        for ch in range(self.n_channels):
            before = None
            after = None
            for t, vals in self._pending:
                v = vals[ch]
                if math.isnan(v):
                    continue
                if t <= tick + 1e-12:
                    before = (t, v)
                elif after is None:
                    after = (t, v)
                    break
            if before is None:
                before = self._last_valid[ch]
            if before is None:
                return None
            if abs(before[0] - tick) <= 1e-12:
                row.append(before[1])
            elif after is None:
                return None
            else:
                t0, v0 = before
                t1, v1 = after
                row.append(v0 + (v1 - v0) * (tick - t0) / (t1 - t0))
        return row

    def _trim(self) -> None:
        # drop fully-consumed samples, keeping the last valid value per channel
        if self._t0 is None or not self._pending:
            return
        while len(self._pending) > 1 and self._pending[1][0] <= self._next_tick - self.period:
            t, vals = self._pending.popleft()
            for ch, v in enumerate(vals):
                if not math.isnan(v):
                    self._last_valid[ch] = (t, v)
        # keep _last_valid fresh for samples at the queue head as well
        t, vals = self._pending[0]
        for ch, v in enumerate(vals):
            if not math.isnan(v):
                if self._last_valid[ch] is None or t >= self._last_valid[ch][0]:
                    self._last_valid[ch] = (t, v)
