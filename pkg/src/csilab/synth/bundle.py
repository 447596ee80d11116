"""On-disk scene bundles: one directory per segment, plus ``split.json`` per dataset."""

from __future__ import annotations

import json
from pathlib import Path

from ..signal.io import read_flow_jsonl, read_imu_jsonl, write_flow_jsonl, write_imu_jsonl
from ..signal.types import SignalError
from .kinematics import GestureClass
from .scene import Dataset, NoiseTier, Segment

BUNDLE_VERSION = 1


def write_segment(path, seg: Segment) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    manifest = {
        "version": BUNDLE_VERSION,
        "target_index": seg.target_index,
        "distance_m": seg.distance_m,
        "gesture": seg.gesture.value,
        "seed": seg.seed,
        "n_candidates": seg.n_candidates,
        "candidate_gestures": [g.value for g in seg.candidate_gestures],
        "subject_ids": list(seg.subject_ids),
        "tier": seg.tier.value,
        "time_map": list(seg.time_map),
        "fps": seg.fps,
    }
    (path / "manifest.json").write_text(json.dumps(manifest, indent=1), encoding="utf-8")
    write_imu_jsonl(path / "imu.jsonl", seg.imu)
    for k, flow in enumerate(seg.flows):
        write_flow_jsonl(path / f"flow_{k}.jsonl", flow)
    return path


def read_segment(path) -> Segment:
    path = Path(path)
    try:
        m = json.loads((path / "manifest.json").read_text(encoding="utf-8"))
        flows = tuple(read_flow_jsonl(path / f"flow_{k}.jsonl") for k in range(int(m["n_candidates"])))
        return Segment(
            imu=read_imu_jsonl(path / "imu.jsonl"),
            flows=flows,
            target_index=int(m["target_index"]),
            distance_m=float(m["distance_m"]),
            gesture=GestureClass(m["gesture"]),
            seed=int(m["seed"]),
            candidate_gestures=tuple(GestureClass(g) for g in m.get("candidate_gestures", [])),
            subject_ids=tuple(int(i) for i in m.get("subject_ids", [])),
            tier=NoiseTier(m.get("tier", "Clean")),
            time_map=tuple(float(x) for x in m.get("time_map", (0.0, 1.0, 0.0))),
            fps=float(m.get("fps", 30.0)),
        )
    except (OSError, KeyError, ValueError, json.JSONDecodeError) as exc:
        if isinstance(exc, SignalError):
            raise
        raise SignalError(f"{path}: unreadable segment bundle ({exc})") from exc


def write_dataset(path, ds: Dataset) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    split = {"train_subjects": list(ds.train_subjects), "test_subjects": list(ds.test_subjects)}
    for name in ("train", "val", "test"):
        names = []
        for i, seg in enumerate(ds.split(name)):
            d = f"{name}_{i:05d}"
            write_segment(path / d, seg)
            names.append(d)
        split[name] = names
    (path / "split.json").write_text(json.dumps(split, indent=1), encoding="utf-8")
    return path


def read_dataset(path) -> Dataset:
    path = Path(path)
    try:
        split = json.loads((path / "split.json").read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise SignalError(f"{path}: missing or invalid split.json ({exc})") from exc
    parts = {name: [read_segment(path / d) for d in split.get(name, [])] for name in ("train", "val", "test")}
    return Dataset(parts["train"], parts["val"], parts["test"], {},
                   tuple(split.get("train_subjects", ())), tuple(split.get("test_subjects", ())))
