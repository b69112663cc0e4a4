"""Session orchestration: ingestion, per-frame evaluation, reports.

Data arrives as columnar text (header row of channel names, one sample
per line, comma-separated; see DATA_FORMATS.md).  File and live-stream
ingestion share one code path, so identical bytes yield identical frame
sequences.  Frames are validated, resampled to the pipeline rate and
consumed strictly in timestamp order by a stateful per-session engine
that emits one index vector per tick, aggregates action windows, and
renders a deterministic report: identical inputs, configuration and
profile produce byte-identical output files.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np

from . import __version__
from .calibration import EMG_CHANNELS, SubjectProfile, load_profile
from .dynamics import ExternalWrench, compressive_forces
from .indexes import (
    INDEX_NAMES,
    ActionAggregate,
    Category,
    FatigueState,
    IndexVector,
    RiskThresholds,
    SATURATION_MARGIN,
    WindowAccumulator,
)
from .model import (
    GRAVITY,
    JOINT_NAMES,
    JointConfiguration,
    N_JOINTS,
    N_SEGMENTS,
    chain_kinematics,
    sesc_com_kinematics,
)
from .signal import CausalDifferentiator, EmgProcessor, OnlineResampler

MODES = ("load-estimation", "measured-wrench", "light-tool")

TIME_CHANNEL = "time"
Q_CHANNELS = tuple(f"q_{j}" for j in JOINT_NAMES)
BASE_CHANNELS = ("base_x", "base_z", "base_pitch")
COP_CHANNEL = "cop_x"
GRF_CHANNELS = ("grf_x", "grf_y", "grf_z")
GRM_CHANNEL = "grm_y"
FT_CHANNELS = ("ft_fx", "ft_fy", "ft_fz", "ft_tx", "ft_ty", "ft_tz")
EMG_COLUMNS = tuple(f"emg_{c.lower()}" for c in EMG_CHANNELS)

KNOWN_CHANNELS = (
    (TIME_CHANNEL,) + Q_CHANNELS + BASE_CHANNELS + (COP_CHANNEL,)
    + GRF_CHANNELS + (GRM_CHANNEL,) + FT_CHANNELS + EMG_COLUMNS
)


class ValidationError(ValueError):
    """Bad input data, schema, configuration or profile (CLI exit code 1)."""


class PipelineError(RuntimeError):
    """Runtime failure during session processing (CLI exit code 2)."""


@dataclass
class KinodynamicFrame:
    """One resampled sample of every synchronized channel.

    Channel groups that a recording does not provide are ``None``.  EMG
    values are normalized activation envelopes when the session processed
    them, raw channel values otherwise.
    """

    t: float
    q: tuple
    base_pos: tuple = (0.0, 0.0)
    base_angle: float = 0.0
    cop_x: float | None = None
    grf: tuple | None = None
    grm_y: float | None = None
    wrench: tuple | None = None
    emg: tuple | None = None


@dataclass
class IngestResult:
    frames: list
    gap_events: dict
    n_rows: int
    n_skipped: int
    aborted: bool = False


# ---------------------------------------------------------------------------
# Columnar ingestion (shared by file and stream)
# ---------------------------------------------------------------------------

class _RowParser:
    """Header-driven row decoder with schema validation."""

    def __init__(self, header_line: str):
        names = [c.strip() for c in header_line.strip().split(",")]
        unknown = [n for n in names if n not in KNOWN_CHANNELS]
        if unknown:
            raise ValidationError(f"unknown channel(s) in header: {', '.join(unknown)}")
        if len(set(names)) != len(names):
            raise ValidationError("duplicate channel in header")
        missing = [c for c in (TIME_CHANNEL,) + Q_CHANNELS if c not in names]
        if missing:
            raise ValidationError(f"header lacks required channel(s): {', '.join(missing)}")
        self.names = names
        self.index = {n: i for i, n in enumerate(names)}
        self.n_cols = len(names)
        self.has_base = all(c in self.index for c in BASE_CHANNELS)
        self.has_cop = COP_CHANNEL in self.index
        self.has_grf = all(c in self.index for c in GRF_CHANNELS)
        self.has_grm = GRM_CHANNEL in self.index
        self.has_ft = all(c in self.index for c in FT_CHANNELS)
        self.has_emg = all(c in self.index for c in EMG_COLUMNS)
        # data channels, in header order, minus time
        self.data_names = [n for n in names if n != TIME_CHANNEL]

    def parse(self, line: str, lineno: int):
        parts = line.split(",")
        if len(parts) != self.n_cols:
            raise ValidationError(
                f"line {lineno}: expected {self.n_cols} fields, got {len(parts)}"
            )
        try:
            values = [float(p) for p in parts]
        except ValueError as exc:
            raise ValidationError(f"line {lineno}: {exc}") from None
        t = values[self.index[TIME_CHANNEL]]
        if math.isnan(t):
            raise ValidationError(f"line {lineno}: timestamp is NaN")
        data = [values[self.index[n]] for n in self.data_names]
        return t, data


def _iter_lines(source) -> Iterator[str]:
    if hasattr(source, "read"):
        yield from source
    elif isinstance(source, (str, os.PathLike)):
        with open(source, "r") as fh:
            yield from fh
    else:  # any iterable of lines (live stream)
        yield from source


def _ingest(lines: Iterable[str], rate: float, strict: bool,
            emg_transform=None, gap_limit: int = 5) -> IngestResult:
    """Shared ingestion core: parse, validate order, resample, frame up."""
    parser = None
    resampler = None
    frames: list[KinodynamicFrame] = []
    n_rows = 0
    n_skipped = 0
    aborted = False
    last_t = None
    col = {}

    def build_frame(tick_t, row):
        q = tuple(row[col[c]] for c in Q_CHANNELS)
        kw = {}
        if parser.has_base:
            kw["base_pos"] = (row[col["base_x"]], row[col["base_z"]])
            kw["base_angle"] = row[col["base_pitch"]]
        if parser.has_cop:
            kw["cop_x"] = row[col[COP_CHANNEL]]
        if parser.has_grf:
            kw["grf"] = tuple(row[col[c]] for c in GRF_CHANNELS)
        if parser.has_grm:
            kw["grm_y"] = row[col[GRM_CHANNEL]]
        if parser.has_ft:
            kw["wrench"] = tuple(row[col[c]] for c in FT_CHANNELS)
        if parser.has_emg:
            kw["emg"] = tuple(row[col[c]] for c in EMG_COLUMNS)
        return KinodynamicFrame(t=tick_t, q=q, **kw)

    for lineno, raw in enumerate(_iter_lines(lines), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if parser is None:
            parser = _RowParser(line)
            col = {n: i for i, n in enumerate(parser.data_names)}
            resampler = OnlineResampler(rate, len(parser.data_names), gap_limit)
            continue
        try:
            t, data = parser.parse(line, lineno)
        except ValidationError:
            if strict:
                raise
            n_skipped += 1
            continue
        if last_t is not None and t <= last_t:
            if strict:
                raise ValidationError(
                    f"line {lineno}: non-monotone timestamp {t!r} after {last_t!r}"
                )
            aborted = True  # stream reset: abort with what we have
            break
        last_t = t
        n_rows += 1
        if emg_transform is not None and parser.has_emg:
            env = emg_transform(t, [data[col[c]] for c in EMG_COLUMNS])
            for c, v in zip(EMG_COLUMNS, env):
                data[col[c]] = v
        for tick_t, row in resampler.push(t, data):
            frames.append(build_frame(tick_t, row))

    if parser is None:
        raise ValidationError("no header row found (empty input)")
    if n_rows == 0:
        raise ValidationError("no data rows found")
    gaps = {
        name: count
        for name, count in zip(parser.data_names, resampler.gap_events)
        if count
    }
    return IngestResult(frames, gaps, n_rows, n_skipped, aborted)


def ingest_file(path, rate: float = 60.0, gap_limit: int = 5) -> IngestResult:
    """Parse and resample a recording; strict validation with line numbers."""
    return _ingest(_iter_lines(path), rate, strict=True, gap_limit=gap_limit)


def ingest_stream(lines: Iterable[str], rate: float = 60.0,
                  gap_limit: int = 5) -> IngestResult:
    """Parse a live record stream: malformed records are skipped and
    counted, a timestamp reset aborts the session with partial output."""
    return _ingest(lines, rate, strict=False, gap_limit=gap_limit)


# ---------------------------------------------------------------------------
# Session configuration
# ---------------------------------------------------------------------------

@dataclass
class SessionConfig:
    """Processing instructions for one session (see DATA_FORMATS.md)."""

    profile_path: str
    trials: list
    mode: str = "load-estimation"
    rate: float = 60.0
    windows: list = field(default_factory=list)  # [label, t_start, t_end]
    thresholds: tuple = (1.0 / 3.0, 2.0 / 3.0)
    out_dir: str | None = None
    tool_mass: float = 0.0
    plate_offset_x: float = 0.0
    diff_window: int = 11
    diff_order: int = 3
    emg_band: tuple = (2.0, 500.0)
    emg_envelope: float = 0.25
    gap_limit: int = 5

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValidationError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.rate <= 0:
            raise ValidationError("rate must be positive")
        self.trials = [str(t) for t in self.trials]
        if not self.trials:
            raise ValidationError("config lists no trial files")
        wins = [(str(w[0]), float(w[1]), float(w[2])) for w in self.windows]
        for label, a, b in wins:
            if b <= a:
                raise ValidationError(f"window {label!r} has non-positive length")
        wins_sorted = sorted(wins, key=lambda w: w[1])
        for (la, _, a1), (lb, b0, _) in zip(wins_sorted, wins_sorted[1:]):
            if b0 < a1:
                raise ValidationError(f"windows {la!r} and {lb!r} overlap")
        self.windows = wins
        y, r = float(self.thresholds[0]), float(self.thresholds[1])
        RiskThresholds(y, r)  # validates ordering
        self.thresholds = (y, r)
        if self.mode == "light-tool" and self.tool_mass <= 0:
            raise ValidationError("light-tool mode needs a positive tool_mass")

    def canonical(self) -> dict:
        return {
            "mode": self.mode,
            "rate": self.rate,
            "windows": [list(w) for w in self.windows],
            "thresholds": list(self.thresholds),
            "tool_mass": self.tool_mass,
            "plate_offset_x": self.plate_offset_x,
            "diff_window": self.diff_window,
            "diff_order": self.diff_order,
            "emg_band": list(self.emg_band),
            "emg_envelope": self.emg_envelope,
            "gap_limit": self.gap_limit,
            "trials": [os.path.basename(t) for t in self.trials],
        }


def load_config(path) -> SessionConfig:
    try:
        with open(path, "r") as fh:
            payload = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read config {path}: {exc}") from None
    base = os.path.dirname(os.path.abspath(path))

    def resolve(p):
        return p if os.path.isabs(p) else os.path.join(base, p)

    payload["profile_path"] = resolve(payload["profile_path"])
    payload["trials"] = [resolve(t) for t in payload.get("trials", [])]
    if payload.get("out_dir"):
        payload["out_dir"] = resolve(payload["out_dir"])
    known = {f.name for f in SessionConfig.__dataclass_fields__.values()}
    unknown = set(payload) - known
    if unknown:
        raise ValidationError(f"unknown config keys: {sorted(unknown)}")
    payload["thresholds"] = tuple(payload.get("thresholds", (1.0 / 3.0, 2.0 / 3.0)))
    payload["emg_band"] = tuple(payload.get("emg_band", (2.0, 500.0)))
    return SessionConfig(**payload)


# ---------------------------------------------------------------------------
# Online per-frame engine
# ---------------------------------------------------------------------------

class OnlineSession:
    """Stateful per-session evaluator: one ordered consumer per session.

    Raw frames are delayed by the differentiator lag so smoothed joint
    state and measured channels line up; each aligned tick yields one
    IndexVector.
    """

    def __init__(self, profile: SubjectProfile, config: SessionConfig):
        missing = profile.missing_fields(config.mode)
        if missing:
            raise ValidationError(
                f"profile {profile.subject_id!r} incomplete for mode "
                f"{config.mode!r}; missing: {', '.join(missing)}"
            )
        self.profile = profile
        self.config = config
        self.model = profile.model()
        self.sesc = profile.sesc()
        self.mass = profile.mass
        self.thresholds = RiskThresholds(*config.thresholds)
        self.dt = 1.0 / config.rate
        # per-joint constants, plain floats for the frame-rate loop
        self._q_range = tuple(hi - lo for lo, hi in zip(profile.q_min, profile.q_max))
        self._qd_max = profile.qd_max
        self._qdd_max = profile.qdd_max
        self._dtau_max = profile.delta_tau_max
        self._theta = profile.theta_f
        self._tauF_max = profile.tau_fatigue_max
        self._fc_max = profile.f_c_max
        # exact one-step integration factors of the fatigue dynamics
        self._decay_f = tuple(math.exp(-lf * self.dt) for lf in profile.lambda_f)
        self._decay_r = tuple(math.exp(-lr * self.dt) for lr in profile.lambda_r)
        self._fatigue = [0.0] * N_JOINTS
        self._phase = ["recovering"] * N_JOINTS
        self._neutral_z = profile.neutral_com_height
        self._shift_max = profile.com_shift_max
        self._diffs = [
            CausalDifferentiator(config.rate, config.diff_window, config.diff_order)
            for _ in range(N_JOINTS + 3)
        ]
        self.lag = self._diffs[0].lag
        self.latency = self._diffs[0].latency
        self._pending: deque[KinodynamicFrame] = deque()
        self.accumulators = [WindowAccumulator(*w) for w in config.windows]
        self.vectors_emitted = 0
        self.overshoot = {name: 0 for name in INDEX_NAMES}
        self.invalid_cop_samples = 0
        self.emg_series: list[tuple[float, tuple]] = []
        self._mode = config.mode
        self._tool_force = -config.tool_mass * GRAVITY

    @property
    def fatigue(self) -> FatigueState:
        return FatigueState(tuple(self._fatigue), tuple(self._phase),
                            self.vectors_emitted * self.dt)

    # -- per-frame processing ---------------------------------------------

    def push(self, frame: KinodynamicFrame) -> IndexVector | None:
        self._pending.append(frame)
        outs = [d.push(v) for d, v in zip(self._diffs, frame.q)]
        base_out = [
            d.push(v)
            for d, v in zip(
                self._diffs[N_JOINTS:],
                (frame.base_pos[0], frame.base_pos[1], frame.base_angle),
            )
        ]
        if outs[0] is None:
            return None
        # first output: drop the warm-up frames that never become centers,
        # leaving the head of the deque at the window-center frame
        while len(self._pending) > self.lag + 1:
            self._pending.popleft()
        center = self._pending.popleft()
        (bx, bxd, bxdd), (bz, bzd, bzdd), (ba, bad, badd) = base_out
        cfg = JointConfiguration.unchecked(
            q=tuple(o[0] for o in outs),
            qd=tuple(o[1] for o in outs),
            qdd=tuple(o[2] for o in outs),
            base_pos=(bx, bz),
            base_angle=ba,
            base_vel=(bxd, bzd),
            base_angle_vel=bad,
            base_acc=(bxdd, bzdd),
            base_angle_acc=badd,
        )
        return self._evaluate(center, cfg)

    def _evaluate(self, frame: KinodynamicFrame, cfg: JointConfiguration) -> IndexVector:
        """Scalar per-frame evaluation.

        The index arithmetic here is an inlined, tuple-based copy of the
        public index functions (which stay numpy-facing); their agreement
        is pinned by the test suite.
        """
        state = chain_kinematics(self.model, cfg)
        cs = sesc_com_kinematics(self.sesc, cfg)
        com_z = float(cs.position[1])
        com_acc_z = float(cs.acceleration[1])

        if self._mode == "measured-wrench":
            if frame.wrench is None:
                raise ValidationError("measured-wrench mode needs ft_* channels")
            fx, fy, fz, tx, ty, tz = frame.wrench
            wrench = ExternalWrench(force=(fx, fz), torque=ty)
        elif self._mode == "light-tool":
            wrench = ExternalWrench(force=(0.0, self._tool_force))
        else:  # load-estimation from the force-plate discrepancy
            if frame.grf is None:
                raise ValidationError("load-estimation mode needs grf_* channels")
            denom = GRAVITY + com_acc_z
            fz_est = float(frame.grf[2]) - self.mass * denom
            if denom <= 0.1:
                self.invalid_cop_samples += 1
                fz_est = 0.0
            wrench = ExternalWrench(force=(0.0, -fz_est))

        # load-induced torque through the hand-point Jacobian transpose
        hand = self.model.segments[-1]
        pa, pb = wrench.point if wrench.point is not None else (0.0, 0.5 * hand.length)
        ang = state.angle[-1]
        s, c = math.sin(ang), math.cos(ang)
        ox, oz = state.origin[-1]
        wpx = ox + pa * c + pb * s
        wpz = oz - pa * s + pb * c
        wfx, wfz = wrench.force
        wtau = wrench.torque
        origins = state.origin
        dtau = tuple(
            -(((wpz - origins[k][1]) * wfx - (wpx - origins[k][0]) * wfz) + wtau)
            for k in range(1, N_SEGMENTS)
        )

        q, qd, qdd = cfg.q, cfg.qd, cfg.qdd
        w1 = tuple(abs(v) / r for v, r in zip(q, self._q_range))
        w2 = tuple(abs(v) / m for v, m in zip(qd, self._qd_max))
        w3 = tuple(abs(v) / m for v, m in zip(qdd, self._qdd_max))
        w4 = tuple(abs(v) / m for v, m in zip(dtau, self._dtau_max))
        fat = self._fatigue
        phase = self._phase
        for j in range(N_JOINTS):
            d = abs(dtau[j])
            if d >= self._theta[j]:
                fat[j] = d + (fat[j] - d) * self._decay_f[j]
                phase[j] = "fatiguing"
            else:
                fat[j] = fat[j] * self._decay_r[j]
                phase[j] = "recovering"
        w5 = tuple(v / m for v, m in zip(fat, self._tauF_max))
        w6 = tuple(a * b for a, b in zip(w2, w4))
        w7 = abs(com_z - self._neutral_z) / self._shift_max
        w8 = None
        if self._mode == "measured-wrench":
            fc = compressive_forces(self.model, cfg, wrench, state=state)
            w8 = tuple(v / m for v, m in zip(fc.values, self._fc_max))

        vec = IndexVector(
            timestamp=frame.t,
            displacement=w1, velocity=w2, acceleration=w3,
            overload_torque=w4, fatigue=w5, overload_power=w6,
            com_shift=w7, compression=w8,
        )
        limit = 1.0 + SATURATION_MARGIN
        over = self.overshoot
        if max(w1) > limit:
            over["displacement"] += 1
        if max(w2) > limit:
            over["velocity"] += 1
        if max(w3) > limit:
            over["acceleration"] += 1
        if max(w4) > limit:
            over["overload_torque"] += 1
        if max(w5) > limit:
            over["fatigue"] += 1
        if max(w6) > limit:
            over["overload_power"] += 1
        if w7 > limit:
            over["com_shift"] += 1
        if w8 is not None and max(w8) > limit:
            over["compression"] += 1
        for acc in self.accumulators:
            if acc.covers(frame.t):
                acc.add(vec)
                break
        if frame.emg is not None:
            self.emg_series.append((frame.t, frame.emg))
        self.vectors_emitted += 1
        return vec

    # -- results ------------------------------------------------------------

    def aggregates(self) -> list[ActionAggregate]:
        return [acc.result() for acc in self.accumulators]

    def emg_at(self, t: float) -> tuple | None:
        """Envelope sample nearest to t (the index-peak sampling rule)."""
        if not self.emg_series:
            return None
        import bisect
        times = [item[0] for item in self.emg_series]
        i = bisect.bisect_left(times, t)
        candidates = [j for j in (i - 1, i) if 0 <= j < len(times)]
        best = min(candidates, key=lambda j: abs(times[j] - t))
        return self.emg_series[best][1]

    def unavailable_indexes(self) -> list[str]:
        return ["compression"] if self._mode != "measured-wrench" else []


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

def _jsonify(obj):
    if isinstance(obj, np.ndarray):
        return [_jsonify(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, float) and math.isnan(obj):
        return None
    if isinstance(obj, dict):
        return {k: _jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonify(v) for v in obj]
    return obj


@dataclass
class SessionReport:
    """Deterministic session outcome: aggregates, risk, stats, provenance."""

    payload: dict

    def to_json_text(self) -> str:
        return json.dumps(self.payload, sort_keys=True, indent=2) + "\n"

    def aggregates_csv_text(self) -> str:
        lines = ["trial,condition,index,joint,max,rms"]
        for trial in self.payload["trials"]:
            tname = trial["name"]
            for win in trial["windows"]:
                for index_name, stats in sorted(win["indexes"].items()):
                    mx, rms = stats["max"], stats["rms"]
                    if isinstance(mx, list):
                        for j, joint in enumerate(JOINT_NAMES):
                            lines.append(
                                f"{tname},{win['label']},{index_name},{joint},{mx[j]!r},{rms[j]!r}"
                            )
                    else:
                        lines.append(
                            f"{tname},{win['label']},{index_name},whole_body,{mx!r},{rms!r}"
                        )
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        p = self.payload
        out = []
        prov = p["provenance"]
        out.append("ergonomic session report")
        out.append(f"  software {prov['software_version']}  config {prov['config_hash'][:12]}")
        out.append(f"  subject {prov['profile_id']}  mode {prov['mode']}  rate {prov['rate']} Hz")
        if p.get("unavailable_indexes"):
            out.append(f"  unavailable indexes: {', '.join(p['unavailable_indexes'])}")
        for trial in p["trials"]:
            out.append(f"trial {trial['name']}  frames {trial['n_frames']}"
                       + (f"  skipped {trial['skipped_rows']}" if trial.get("skipped_rows") else "")
                       + ("  ABORTED" if trial.get("aborted") else ""))
            if trial.get("gap_events"):
                out.append(f"  gaps: {trial['gap_events']}")
            for win in trial["windows"]:
                out.append(f"  window {win['label']}  [{win['t_start']:.3f}, {win['t_end']:.3f}] s"
                           f"  n={win['n_samples']}")
                for index_name in INDEX_NAMES:
                    if index_name not in win["indexes"]:
                        continue
                    stats = win["indexes"][index_name]
                    risk = win["risk_max"][index_name]
                    if isinstance(stats["max"], list):
                        peaks = "  ".join(
                            f"{j}:{v:.3f}({r[0].lower()})"
                            for j, v, r in zip(JOINT_NAMES, stats["max"], risk)
                        )
                    else:
                        peaks = f"whole_body:{stats['max']:.3f}({risk[0].lower()})"
                    out.append(f"    {index_name:>16}  {peaks}")
        stats_block = p.get("stats") or {}
        if stats_block:
            out.append("condition comparison (across trials)")
            for key in sorted(stats_block):
                a = stats_block[key]["anova"]
                star = " *" if a["significant"] else ""
                out.append(
                    f"  {key}: F({a['df'][0]:g},{a['df'][1]:g}) = {a['statistic']:.4g}, "
                    f"p = {a['p_value']:.4g}{star}"
                )
        return "\n".join(out) + "\n"


def _risk_of(stats_entry, thresholds: RiskThresholds):
    def name_of(v):
        return Category(
            2 if v >= thresholds.red else (1 if v >= thresholds.yellow else 0)
        ).name

    mx = stats_entry["max"]
    if isinstance(mx, np.ndarray):
        return [name_of(float(v)) for v in mx]
    return [name_of(float(mx))]


def run_session(config: SessionConfig | str, profile: SubjectProfile | None = None
                ) -> SessionReport:
    """Process every trial in the config and assemble the session report.

    Missing profile fields for the requested mode are enumerated before
    any data is read.  When the config names an output directory the
    report is rendered there as report.json, report.txt and
    aggregates.csv.
    """
    if isinstance(config, (str, os.PathLike)):
        config = load_config(config)
    if profile is None:
        try:
            profile = load_profile(config.profile_path)
        except OSError as exc:
            raise ValidationError(f"cannot read profile: {exc}") from None
    # preflight before touching data
    missing = profile.missing_fields(config.mode)
    if missing:
        raise ValidationError(
            f"profile {profile.subject_id!r} incomplete for mode {config.mode!r}; "
            f"missing: {', '.join(missing)}"
        )
    for path in config.trials:
        if not os.path.exists(path):
            raise ValidationError(f"trial file not found: {path}")

    trials_payload = []
    per_trial_window_max: list[dict] = []
    for path in config.trials:
        engine = OnlineSession(profile, config)
        mvc = profile.mvc
        emg_transform = _make_emg_transform(config, mvc)
        ingest = _ingest(
            path, config.rate, strict=True,
            emg_transform=emg_transform, gap_limit=config.gap_limit,
        )
        _check_mode_channels(config.mode, ingest.frames, path)
        for frame in ingest.frames:
            engine.push(frame)
        aggs = engine.aggregates()
        windows_payload = []
        window_max: dict = {}
        for agg in aggs:
            idx_payload = {}
            risk_payload = {}
            emg_payload = {}
            for name, stats in agg.stats.items():
                idx_payload[name] = {
                    "max": stats["max"], "rms": stats["rms"], "t_max": stats["t_max"],
                }
                risk_payload[name] = _risk_of(stats, engine.thresholds)
                if engine.emg_series:
                    tm = stats["t_max"]
                    if isinstance(tm, np.ndarray):
                        emg_payload[name] = {
                            joint: list(engine.emg_at(float(tm[j])))
                            for j, joint in enumerate(JOINT_NAMES)
                        }
                    else:
                        emg_payload[name] = {"whole_body": list(engine.emg_at(float(tm)))}
                window_max.setdefault(name, {})[agg.label] = stats["max"]
            win = {
                "label": agg.label,
                "t_start": agg.t_start,
                "t_end": agg.t_end,
                "n_samples": agg.n_samples,
                "indexes": idx_payload,
                "risk_max": risk_payload,
            }
            if emg_payload:
                win["emg_at_max"] = {
                    name: {k: v for k, v in sorted(chan.items())}
                    for name, chan in sorted(emg_payload.items())
                }
            windows_payload.append(win)
        trials_payload.append({
            "name": os.path.basename(path),
            "n_frames": engine.vectors_emitted,
            "skipped_rows": ingest.n_skipped,
            "aborted": ingest.aborted,
            "gap_events": ingest.gap_events,
            "overshoot": {k: v for k, v in engine.overshoot.items() if v},
            "invalid_cop_samples": engine.invalid_cop_samples,
            "latency_s": engine.latency,
            "windows": windows_payload,
        })
        per_trial_window_max.append(window_max)

    stats_payload = _cross_trial_stats(per_trial_window_max, config)

    profile_text = profile.to_json()
    config_text = json.dumps(config.canonical(), sort_keys=True)
    config_hash = hashlib.sha256(
        (config_text + profile_text).encode()
    ).hexdigest()

    payload = {
        "provenance": {
            "software_version": __version__,
            "config_hash": config_hash,
            "profile_id": profile.subject_id,
            "mode": config.mode,
            "rate": config.rate,
        },
        "unavailable_indexes": (
            ["compression"] if config.mode != "measured-wrench" else []
        ),
        "trials": trials_payload,
        "stats": stats_payload,
    }
    report = SessionReport(_jsonify(payload))
    if config.out_dir:
        write_report(report, config.out_dir)
    return report


def _check_mode_channels(mode: str, frames: list, path) -> None:
    if not frames:
        raise ValidationError(f"{path}: no frames after resampling")
    first = frames[0]
    if mode == "load-estimation" and first.grf is None:
        raise ValidationError(f"{path}: load-estimation mode needs grf_* channels")
    if mode == "measured-wrench" and first.wrench is None:
        raise ValidationError(f"{path}: measured-wrench mode needs ft_* channels")


def _make_emg_transform(config: SessionConfig, mvc):
    """Lazily build per-channel envelope processors at the native rate."""
    if mvc is None:
        return None
    state = {"procs": None, "t_prev": None}

    def transform(t, values):
        if state["procs"] is None:
            if state["t_prev"] is None:
                # native rate unknown until the second sample; emit a zero
                # warm-up envelope and buffer the raw value
                state["t_prev"] = (t, list(values))
                return [0.0] * len(values)
            fs = 1.0 / (t - state["t_prev"][0])
            state["procs"] = [
                EmgProcessor(fs, m, config.emg_band, envelope_window=config.emg_envelope)
                for m in mvc
            ]
            for p, v in zip(state["procs"], state["t_prev"][1]):
                p.push(v)
        return [p.push(v) for p, v in zip(state["procs"], values)]

    return transform


def _cross_trial_stats(per_trial_window_max: list[dict], config: SessionConfig):
    """Repeated-measures comparison across trials, per index per joint."""
    from .stats import posthoc_matrix, rm_anova

    if len(per_trial_window_max) < 2 or len(config.windows) < 2:
        return {}
    labels = [w[0] for w in config.windows]
    out = {}
    index_names = sorted(per_trial_window_max[0])
    for name in index_names:
        joint_iter = (
            [("whole_body", None)] if name == "com_shift"
            else [(j, k) for k, j in enumerate(JOINT_NAMES)]
        )
        for joint, j_idx in joint_iter:
            rows = []
            for trial_map in per_trial_window_max:
                if name not in trial_map or set(trial_map[name]) != set(labels):
                    rows = []
                    break
                vals = []
                for lab in labels:
                    v = trial_map[name][lab]
                    vals.append(float(v[j_idx]) if j_idx is not None else float(v))
                rows.append(vals)
            if len(rows) < 2:
                continue
            table = np.array(rows)
            try:
                anova = rm_anova(table)
                post = posthoc_matrix(
                    np.array(rows),
                    correction=None,
                )
            except Exception:
                continue
            post_payload = {}
            for (i, j), res in zip(
                [(a, b) for a in range(len(labels)) for b in range(a + 1, len(labels))],
                post.values(),
            ):
                post_payload[f"{labels[i]} vs {labels[j]}"] = {
                    "statistic": res.statistic,
                    "df": list(res.df),
                    "p_value": res.p_value,
                    "significant": res.significant,
                }
            out[f"{name}/{joint}"] = {
                "anova": {
                    "statistic": anova.statistic,
                    "df": list(anova.df),
                    "p_value": anova.p_value,
                    "significant": anova.significant,
                },
                "posthoc": post_payload,
            }
    return out


def write_report(report: SessionReport, out_dir) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "report.json"), "w") as fh:
        fh.write(report.to_json_text())
    with open(os.path.join(out_dir, "report.txt"), "w") as fh:
        fh.write(report.to_text())
    with open(os.path.join(out_dir, "aggregates.csv"), "w") as fh:
        fh.write(report.aggregates_csv_text())


def load_report(path) -> SessionReport:
    with open(path, "r") as fh:
        return SessionReport(json.load(fh))
