#!/usr/bin/env python3
"""Generate a ready-to-run demo data set.

Writes, for one synthetic subject: the calibrated profile, the raw
calibration recordings, one recording per task family, and session
configs wired to them.  Everything the CLI needs for a full tour:

    python scripts/make_synthetic_data.py --out demo_data
    ergokit analyze --config demo_data/lifting_session.json --out demo_data/lifting_report
"""

import argparse
import json
import os

from ergokit.calibration import save_profile
from ergokit.synthetic import (
    drilling_session,
    excursion_recording,
    exertion_recording,
    lifting_session,
    met_observations_csv,
    painting_session,
    static_calibration_recording,
    synthetic_profile,
)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="demo_data")
    ap.add_argument("--mass", type=float, default=72.0)
    ap.add_argument("--height", type=float, default=1.78)
    args = ap.parse_args()

    os.makedirs(args.out, exist_ok=True)
    profile = synthetic_profile("demo-subject", args.mass, args.height)
    model = profile.model()

    def write(name, text):
        path = os.path.join(args.out, name)
        with open(path, "w") as fh:
            fh.write(text)
        print(f"wrote {path}")

    save_profile(profile, os.path.join(args.out, "profile.json"))
    print(f"wrote {os.path.join(args.out, 'profile.json')}")

    # raw calibration inputs (what `ergokit calibrate` consumes)
    write("calib_static.csv", static_calibration_recording(model))
    write("calib_dynamic.csv", excursion_recording())
    write("calib_met.csv", met_observations_csv())
    write("calib_exertion.csv", exertion_recording(model))
    write("subject.json", json.dumps({
        "id": "demo-subject", "mass": args.mass, "height": args.height,
        "gender": "unspecified",
        "mvc": {c: 1.0 for c in
                ("AD", "PD", "BC", "TC", "TR", "ES", "GM", "RF", "BF", "TA")},
    }, indent=2) + "\n")

    # one session per task family
    for name, sess in (
        ("lifting", lifting_session(profile)),
        ("drilling", drilling_session(profile)),
        ("painting", painting_session(profile)),
    ):
        write(f"{name}_trial.csv", sess.csv_text)
        config = {
            "profile_path": "profile.json",
            "trials": [f"{name}_trial.csv"],
            "mode": sess.mode,
            "rate": sess.rate,
            "windows": sess.windows,
        }
        if sess.mode == "light-tool":
            config["tool_mass"] = sess.meta["tool_mass"]
        write(f"{name}_session.json", json.dumps(config, indent=2) + "\n")


if __name__ == "__main__":
    main()
