"""JSONL readers/writers for raw IMU and flow streams (one record per line)."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .types import FlowStream, ImuStream, SignalError


def write_imu_jsonl(path, stream: ImuStream) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for i in range(len(stream)):
            rec = {
                "t": float(stream.t[i]),
                "acc": [float(v) for v in stream.accel[i]],
                "gyr": [float(v) for v in stream.gyro[i]],
                "mag": [float(v) for v in stream.mag[i]],
            }
            fh.write(json.dumps(rec) + "\n")


def read_imu_jsonl(path) -> ImuStream:
    t, acc, gyr, mag = [], [], [], []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            t.append(float(rec["t"]))
            acc.append([float(v) for v in rec["acc"]])
            gyr.append([float(v) for v in rec["gyr"]])
            mag.append([float(v) for v in rec.get("mag", [0.0, 0.0, 0.0])])
        except (KeyError, TypeError, ValueError) as exc:
            raise SignalError(f"{path}:{lineno}: bad IMU record ({exc})") from exc
    return ImuStream(
        np.array(t, dtype=float),
        np.array(acc, dtype=float).reshape(-1, 3),
        np.array(gyr, dtype=float).reshape(-1, 3),
        np.array(mag, dtype=float).reshape(-1, 3),
    )


def write_flow_jsonl(path, stream: FlowStream) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for i in range(len(stream)):
            rec = {"t": float(stream.t[i]), "v": [float(x) for x in stream.v[i]], "bw": float(stream.bw[i])}
            if stream.bg is not None:
                rec["bg"] = [float(x) for x in stream.bg[i]]
            fh.write(json.dumps(rec) + "\n")


def read_flow_jsonl(path) -> FlowStream:
    t, v, bw, bg = [], [], [], []
    any_bg = False
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            t.append(float(rec["t"]))
            v.append([float(x) for x in rec["v"]])
            bw.append(float(rec["bw"]))
            if "bg" in rec and rec["bg"] is not None:
                any_bg = True
                bg.append([float(x) for x in rec["bg"]])
            else:
                bg.append([0.0, 0.0])
        except (KeyError, TypeError, ValueError) as exc:
            raise SignalError(f"{path}:{lineno}: bad flow record ({exc})") from exc
    return FlowStream(
        np.array(t, dtype=float),
        np.array(v, dtype=float).reshape(-1, 2),
        np.array(bw, dtype=float),
        np.array(bg, dtype=float).reshape(-1, 2) if any_bg else None,
    )
