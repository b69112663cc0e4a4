"""Command-line interface.

Subcommands:
  calibrate  fit a subject profile from calibration recordings
  analyze    batch-process recorded trial files into a session report
  stream     process a live record stream from stdin (or a TCP port)
  stats      repeated-measures comparison of an aggregate table
  report     re-render report.txt / aggregates.csv from a stored report.json

Exit codes: 0 ok, 1 validation error (bad input/config), 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import __version__
from .calibration import (
    CalibrationError,
    EMG_CHANNELS,
    SubjectProfile,
    default_profile,
    embed_model,
    find_static_poses,
    fit_fatigue_params,
    fit_sesc,
    load_profile,
    resolve_torque_maxima,
    save_profile,
)
from .indexes import IndexError_
from .model import (
    JOINT_NAMES,
    JointConfiguration,
    ModelError,
    default_model,
    load_joint_defaults,
    sesc_com,
    whole_body_com,
)
from .pipeline import (
    SessionConfig,
    ValidationError,
    ingest_file,
    load_config,
    load_report,
    run_session,
    write_report,
)
from .signal import SignalError
from .stats import StatsError, posthoc_matrix, rm_anova

VALIDATION_ERRORS = (
    ValidationError, CalibrationError, ModelError, SignalError, StatsError,
    IndexError_, FileNotFoundError, json.JSONDecodeError,
)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", help="output directory or file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ergokit",
        description="streaming sagittal-plane ergonomics monitor",
    )
    parser.add_argument("--version", action="version", version=f"ergokit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    c = sub.add_parser("calibrate", help="fit a subject profile from recordings")
    c.add_argument("--subject", required=True,
                   help="subject JSON: id, mass, height, optional gender/mvc/"
                        "tau_max_experimental/exertion samples")
    c.add_argument("--static", help="static-poses recording (csv) for the CoM fit")
    c.add_argument("--dynamic", help="maximal-excursion recording (csv) for kinematic maxima")
    c.add_argument("--met", help="endurance observations (csv: joint,load,endurance_time)")
    c.add_argument("--exertion",
                   help="maximum-exertion recording with ft_* channels, for "
                        "the compressive-force maxima")
    c.add_argument("--rate", type=float, default=60.0, help="pipeline rate [Hz]")
    c.add_argument("--plate-offset", type=float, default=0.0,
                   help="force-plate x offset added to measured CoP [m]")
    _add_common(c)

    a = sub.add_parser("analyze", help="batch-process trial files into a report")
    a.add_argument("--config", required=True, help="session config JSON")
    a.add_argument("--profile", help="override profile path")
    a.add_argument("--mode", choices=("load-estimation", "measured-wrench", "light-tool"))
    a.add_argument("--rate", type=float)
    a.add_argument("--thresholds", help="yellow,red risk cut points, e.g. 0.33,0.67")
    _add_common(a)

    s = sub.add_parser("stream", help="process a live stream from stdin or TCP")
    s.add_argument("--config", required=True, help="session config JSON (trials ignored)")
    s.add_argument("--profile", help="override profile path")
    s.add_argument("--mode", choices=("load-estimation", "measured-wrench", "light-tool"))
    s.add_argument("--rate", type=float)
    s.add_argument("--thresholds", help="yellow,red risk cut points")
    s.add_argument("--listen", type=int, metavar="PORT",
                   help="accept one TCP connection instead of reading stdin")
    s.add_argument("--emit", action="store_true",
                   help="print one JSON line of index values per frame")
    _add_common(s)

    t = sub.add_parser("stats", help="ANOVA + post-hoc t-tests on a wide CSV table")
    t.add_argument("--table", required=True,
                   help="csv: header 'subject,<cond1>,<cond2>,...', one row per subject")
    t.add_argument("--alpha", type=float, default=0.05)
    t.add_argument("--correction", choices=("bonferroni", "holm"))
    t.add_argument("--sphericity", action="store_true",
                   help="apply the sphericity correction to the ANOVA")
    _add_common(t)

    r = sub.add_parser("report", help="re-render outputs from a stored report.json")
    r.add_argument("--from", dest="source", required=True, help="stored report.json")
    _add_common(r)

    v = sub.add_parser("validate", help="parse and validate a recording without processing")
    v.add_argument("--input", required=True)
    v.add_argument("--rate", type=float, default=60.0)

    return parser


# ---------------------------------------------------------------------------
# calibrate
# ---------------------------------------------------------------------------

def _read_met_csv(path):
    per_joint: dict[str, list] = {}
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if [h.strip() for h in header] != ["joint", "load", "endurance_time"]:
            raise ValidationError(f"{path}: header must be 'joint,load,endurance_time'")
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise ValidationError(f"{path} line {lineno}: expected 3 fields")
            joint = parts[0].strip()
            if joint not in JOINT_NAMES:
                raise ValidationError(f"{path} line {lineno}: unknown joint {joint!r}")
            per_joint.setdefault(joint, []).append((float(parts[1]), float(parts[2])))
    return per_joint


def _cmd_calibrate(args) -> int:
    with open(args.subject) as fh:
        meta = json.load(fh)
    for key in ("id", "mass", "height"):
        if key not in meta:
            raise ValidationError(f"subject file lacks {key!r}")
    profile = default_profile(
        str(meta["id"]), float(meta["mass"]), float(meta["height"]),
        str(meta.get("gender", "unspecified")),
    )
    model = profile.model()

    if meta.get("mvc"):
        mvc = meta["mvc"]
        if isinstance(mvc, dict):
            missing = [c for c in EMG_CHANNELS if c not in mvc]
            if missing:
                raise ValidationError(f"mvc table lacks channels: {missing}")
            profile.mvc = tuple(float(mvc[c]) for c in EMG_CHANNELS)
        else:
            profile.mvc = tuple(float(v) for v in mvc)

    if meta.get("tau_max_experimental"):
        exp = np.array([float(v) for v in meta["tau_max_experimental"]])
        lit = np.array(profile.delta_tau_max)
        profile.delta_tau_max = tuple(resolve_torque_maxima(exp, lit))

    if args.static:
        ingest = ingest_file(args.static, args.rate)
        frames = ingest.frames
        q = np.array([f.q for f in frames])
        mids = find_static_poses(None, q, args.rate)
        if not mids:
            raise ValidationError("static recording contains no held poses")
        poses = []
        for i in mids:
            f = frames[i]
            if f.cop_x is None:
                raise ValidationError("static recording lacks the cop_x channel")
            cfg = JointConfiguration(q=f.q, base_pos=f.base_pos, base_angle=f.base_angle)
            poses.append((cfg, f.cop_x + args.plate_offset))
        fit = fit_sesc(poses)
        profile.sesc_coeffs = fit.params.coeffs
        print(f"equivalent-chain fit: {fit.n_poses} poses, residual "
              f"{fit.residual_rms * 1000:.2f} mm, condition {fit.condition_number:.3g}")
        # register the neutral posture from the first held pose
        first = frames[mids[0]]
        neutral_cfg = JointConfiguration(q=first.q, base_pos=first.base_pos,
                                         base_angle=first.base_angle)
        profile.neutral_q = neutral_cfg.q
        profile.neutral_com_height = float(sesc_com(fit.params, neutral_cfg)[1])

    if args.dynamic:
        if profile.neutral_com_height is None:
            raise ValidationError("run the static fit first (neutral posture needed)")
        ingest = ingest_file(args.dynamic, args.rate)
        q = np.array([f.q for f in ingest.frames])
        sesc = profile.sesc()
        from .calibration import extract_kinematic_maxima
        maxima = extract_kinematic_maxima(
            q, args.rate, lambda cfg: sesc_com(sesc, cfg), profile.neutral_com_height,
        )
        profile.qd_max = tuple(maxima.qd_max)
        profile.qdd_max = tuple(maxima.qdd_max)
        profile.com_shift_max = maxima.com_shift_max
        if maxima.unexcited:
            print(f"warning: unexcited joints: {', '.join(maxima.unexcited)}")

    if args.met:
        per_joint = _read_met_csv(args.met)
        fits = fit_fatigue_params(per_joint, profile.delta_tau_max)
        profile.lambda_f = tuple(fits["lambda_f"])
        profile.lambda_r = tuple(fits["lambda_r"])
        profile.theta_f = tuple(fits["theta_f"])
        profile.tau_fatigue_max = tuple(fits["tau_fatigue_max"])

    if args.exertion:
        from .calibration import extract_force_maxima
        from .dynamics import ExternalWrench
        ingest = ingest_file(args.exertion, args.rate)
        samples = []
        for f in ingest.frames:
            if f.wrench is None:
                raise ValidationError("exertion recording lacks ft_* channels")
            fx, fy, fz, tx, ty, tz = f.wrench
            cfg = JointConfiguration(q=f.q, base_pos=f.base_pos, base_angle=f.base_angle)
            samples.append((cfg, ExternalWrench(force=(fx, fz), torque=ty)))
        profile.f_c_max = tuple(extract_force_maxima(model, samples))

    embed_model(profile, model)
    out = args.out or f"{profile.subject_id}_profile.json"
    save_profile(profile, out)
    print(f"profile written to {out}")
    return 0


# ---------------------------------------------------------------------------
# analyze / stream
# ---------------------------------------------------------------------------

def _apply_overrides(config: SessionConfig, args) -> SessionConfig:
    if getattr(args, "profile", None):
        config.profile_path = args.profile
    if getattr(args, "mode", None):
        config.mode = args.mode
    if getattr(args, "rate", None):
        config.rate = args.rate
    if getattr(args, "thresholds", None):
        parts = args.thresholds.split(",")
        if len(parts) != 2:
            raise ValidationError("--thresholds expects 'yellow,red'")
        config.thresholds = (float(parts[0]), float(parts[1]))
    if getattr(args, "out", None):
        config.out_dir = args.out
    return SessionConfig(**{
        f: getattr(config, f) for f in SessionConfig.__dataclass_fields__
    })


def _cmd_analyze(args) -> int:
    config = _apply_overrides(load_config(args.config), args)
    report = run_session(config)
    if config.out_dir:
        print(f"report written to {config.out_dir}")
    else:
        sys.stdout.write(report.to_text())
    return 0


def _cmd_stream(args) -> int:
    from .pipeline import OnlineSession, _ingest, _iter_lines
    config = _apply_overrides(load_config(args.config), args)
    profile = load_profile(config.profile_path)
    engine = OnlineSession(profile, config)

    if args.listen:
        import socket
        srv = socket.create_server(("127.0.0.1", args.listen))
        conn, _ = srv.accept()
        source = conn.makefile("r")
    else:
        source = sys.stdin

    emitted = 0
    ingest = None

    def frames():
        nonlocal ingest
        ingest = _ingest(source, config.rate, strict=False, gap_limit=config.gap_limit)
        yield from ingest.frames

    # stream mode still assembles through the shared ingestion path; the
    # engine sees frames in arrival order with the resampler's bounded lag
    for frame in frames():
        vec = engine.push(frame)
        if vec is not None and args.emit:
            record = {"t": vec.timestamp}
            for name, val in vec.values().items():
                if val is None:
                    continue
                record[name] = float(val) if name == "com_shift" else [float(v) for v in val]
            sys.stdout.write(json.dumps(record, sort_keys=True) + "\n")
            emitted += 1

    # aborted or short streams leave windows unpopulated: report partially
    aggs = [acc.result() for acc in engine.accumulators if acc.n > 0]
    summary = {
        "frames": engine.vectors_emitted,
        "skipped_records": ingest.n_skipped if ingest else 0,
        "aborted": bool(ingest.aborted) if ingest else False,
        "windows": [
            {"label": a.label, "n_samples": a.n_samples} for a in aggs
        ],
    }
    sys.stdout.write(json.dumps(summary, sort_keys=True) + "\n")
    if ingest is not None and ingest.aborted:
        print("stream reset detected: session aborted with partial results",
              file=sys.stderr)
        return 2
    return 0


# ---------------------------------------------------------------------------
# stats
# ---------------------------------------------------------------------------

def _cmd_stats(args) -> int:
    with open(args.table) as fh:
        header = [h.strip() for h in fh.readline().strip().split(",")]
        if len(header) < 3 or header[0] != "subject":
            raise ValidationError(
                "table header must be 'subject,<cond1>,<cond2>,...' with >= 2 conditions"
            )
        conditions = header[1:]
        subjects, rows = [], []
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != len(header):
                raise ValidationError(f"line {lineno}: expected {len(header)} fields")
            subjects.append(parts[0])
            rows.append([float(v) for v in parts[1:]])
    from .stats import RepeatedMeasuresTable
    table = RepeatedMeasuresTable(np.array(rows), tuple(subjects), tuple(conditions))
    anova = rm_anova(table, alpha=args.alpha, sphericity_correction=args.sphericity)
    post = posthoc_matrix(table, alpha=args.alpha, correction=args.correction)
    payload = {
        "anova": {
            "statistic": anova.statistic, "df": list(anova.df),
            "p_value": anova.p_value, "significant": anova.significant,
            "alpha": anova.alpha,
        },
        "posthoc": {
            f"{a} vs {b}": {
                "statistic": r.statistic, "df": list(r.df),
                "p_value": r.p_value, "significant": r.significant,
            }
            for (a, b), r in post.items()
        },
    }
    text = json.dumps(payload, sort_keys=True, indent=2) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def _cmd_report(args) -> int:
    report = load_report(args.source)
    out = args.out or os.path.dirname(os.path.abspath(args.source))
    write_report(report, out)
    print(f"report re-rendered to {out}")
    return 0


def _cmd_validate(args) -> int:
    result = ingest_file(args.input, args.rate)
    print(f"{args.input}: {result.n_rows} rows -> {len(result.frames)} frames "
          f"at {args.rate} Hz")
    if result.gap_events:
        print(f"gap events: {result.gap_events}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "calibrate": _cmd_calibrate,
        "analyze": _cmd_analyze,
        "stream": _cmd_stream,
        "stats": _cmd_stats,
        "report": _cmd_report,
        "validate": _cmd_validate,
    }
    try:
        return handlers[args.command](args)
    except VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
