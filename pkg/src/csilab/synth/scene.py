"""Multi-candidate scenes, desynchronisation tiers and subject-disjoint datasets."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from ..signal.series import apply_time_map, magnitude
from ..signal.types import FlowStream, ImuStream
from .camera import DEFAULT_FOCAL_PX, project_to_image
from .imu import derive_imu
from .kinematics import GESTURES, GestureClass, SubjectProfile, generate_trajectory, random_profile

MIN_SEGMENT_FRAMES = 21
DISTANCE_BANDS = ((3.0, 5.0), (5.0, 10.0), (10.0, 15.0), (15.0, 20.0), (20.0, 25.0), (25.0, 34.0))
SAME_CLASS_PROB = 0.7


class NoiseTier(str, enum.Enum):
    CLEAN = "Clean"
    T1 = "T1"
    T2 = "T2"
    T3 = "T3"

    def draw(self, rng: np.random.Generator):
        """Returns ``(offset_s, drift, jitter_sigma_s)``."""
        if self is NoiseTier.CLEAN:
            return 0.0, 1.0, 0.0
        if self is NoiseTier.T1:
            return float(rng.uniform(-0.2, 0.2)), 1.0, 0.0
        offset = float(rng.uniform(-0.5, 0.5))
        drift = float(rng.uniform(0.98, 1.02))
        return offset, drift, (0.06 if self is NoiseTier.T3 else 0.0)


TIERS = tuple(NoiseTier)


@dataclass(frozen=True)
class SceneSpec:
    distance_m: float = 3.0
    fps: float = 30.0
    n_candidates: int = 3
    segment_frames: int = 90
    focal_px: float = DEFAULT_FOCAL_PX
    flow_noise_base: float = 0.15
    imu_accel_noise: float = 0.05
    seed: int = 0
    margin_s: float = 1.0
    same_class_prob: float = SAME_CLASS_PROB

    def __post_init__(self):
        if self.n_candidates < 2:
            raise ValueError("a scene needs at least two candidates")
        if self.segment_frames < MIN_SEGMENT_FRAMES:
            raise ValueError(f"segment_frames must be >= {MIN_SEGMENT_FRAMES}")
        if not self.distance_m > 0:
            raise ValueError("distance_m must be positive")


@dataclass(frozen=True)
class Segment:
    imu: ImuStream
    flows: tuple
    target_index: int
    distance_m: float
    gesture: GestureClass
    seed: int
    candidate_gestures: tuple = ()
    subject_ids: tuple = ()
    tier: NoiseTier = NoiseTier.CLEAN
    time_map: tuple = (0.0, 1.0, 0.0)
    fps: float = 30.0

    def __post_init__(self):
        if not 0 <= self.target_index < len(self.flows):
            raise ValueError("target_index out of range")
        spans = {(len(f), float(f.t[0]), float(f.t[-1])) for f in self.flows}
        if len(spans) != 1:
            raise ValueError("all flow streams must cover the same time span")

    @property
    def n_candidates(self) -> int:
        return len(self.flows)

    @property
    def n_frames(self) -> int:
        return len(self.flows[0])

    @property
    def target_subject(self) -> int:
        return self.subject_ids[self.target_index] if self.subject_ids else -1


def _seeds(seed: int, n: int) -> list:
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(n, dtype=np.uint64) & ((1 << 63) - 1)]


def make_segment(spec: SceneSpec, gesture: GestureClass, profiles) -> Segment:
    """Target is ``profiles[0]``; it lands at a random index among the candidates."""
    profiles = list(profiles)
    if len(profiles) != spec.n_candidates:
        raise ValueError(f"expected {spec.n_candidates} profiles, got {len(profiles)}")
    gesture = GestureClass(gesture)
    s = _seeds(spec.seed, 4 + 2 * spec.n_candidates)
    rng = np.random.default_rng(s[0])
    target = int(rng.integers(spec.n_candidates))
    order = list(range(1, spec.n_candidates))
    rng.shuffle(order)
    slot_profiles = []
    it = iter(order)
    for k in range(spec.n_candidates):
        slot_profiles.append(profiles[0] if k == target else profiles[next(it)])

    flows, classes = [], []
    imu = None
    for k, prof in enumerate(slot_profiles):
        if k == target:
            cls = gesture
        elif rng.random() < spec.same_class_prob:
            cls = gesture
        else:
            cls = GESTURES[int(rng.choice([i for i, g in enumerate(GESTURES) if g != gesture]))]
        traj = generate_trajectory(prof, cls, spec.segment_frames, s[4 + 2 * k], fps=spec.fps, margin_s=spec.margin_s)
        flows.append(project_to_image(traj, spec.distance_m, spec.focal_px, spec.flow_noise_base,
                                      seed=s[5 + 2 * k], frames=spec.segment_frames, fps=spec.fps))
        classes.append(cls)
        if k == target:
            imu = derive_imu(traj, prof, noise_sigma=spec.imu_accel_noise, seed=s[1])
    return Segment(
        imu=imu,
        flows=tuple(flows),
        target_index=target,
        distance_m=float(spec.distance_m),
        gesture=gesture,
        seed=spec.seed,
        candidate_gestures=tuple(classes),
        subject_ids=tuple(p.subject_id for p in slot_profiles),
        fps=spec.fps,
    )


def inject_desync(segment: Segment, tier, seed: int) -> Segment:
    """Corrupt the IMU receive timestamps; sample order stays in device order."""
    tier = NoiseTier(tier)
    if tier is NoiseTier.CLEAN:
        return segment
    rng = np.random.default_rng(seed)
    offset, drift, sigma = tier.draw(rng)
    t = segment.imu.t
    jitter = rng.normal(0.0, sigma, len(t)) if sigma > 0 else None
    mapped, order = apply_time_map(t, offset, drift, jitter)
    device_order = np.empty_like(mapped)
    device_order[order] = mapped
    imu = ImuStream(device_order, segment.imu.accel, segment.imu.gyro, segment.imu.mag)
    return replace(segment, imu=imu, tier=tier, time_map=(offset, drift, sigma))


def draw_distance(rng: np.random.Generator, bands=DISTANCE_BANDS) -> float:
    lo, hi = bands[int(rng.integers(len(bands)))]
    return float(rng.uniform(lo, hi))


def distance_band(d: float, bands=DISTANCE_BANDS) -> int:
    for i, (lo, hi) in enumerate(bands):
        if lo <= d < hi:
            return i
    return len(bands) - 1 if d >= bands[-1][1] else 0


@dataclass
class Dataset:
    train: list
    val: list
    test: list
    profiles: dict = field(repr=False, default_factory=dict)
    train_subjects: tuple = ()
    test_subjects: tuple = ()

    def split(self, name: str) -> list:
        return {"train": self.train, "val": self.val, "test": self.test}[name]

    def membership(self) -> dict:
        return {name: [s.seed for s in self.split(name)] for name in ("train", "val", "test")}


def _segments_for(subjects, profiles, n_per_subject, base: SceneSpec, rng, pool_seed) -> list:
    out = []
    idx = 0
    for sid in subjects:
        others = [o for o in subjects if o != sid]
        for _ in range(n_per_subject):
            seg_seed = int(np.random.SeedSequence([pool_seed, sid, idx]).generate_state(1, dtype=np.uint64)[0] >> 1)
            idx += 1
            picks = rng.choice(len(others), size=base.n_candidates - 1, replace=False)
            profs = [profiles[sid]] + [profiles[others[int(i)]] for i in picks]
            spec = replace(base, distance_m=draw_distance(rng), seed=seg_seed)
            gesture = GESTURES[int(rng.integers(len(GESTURES)))]
            out.append(make_segment(spec, gesture, profs))
    return out


def generate_dataset(
    n_subjects: int = 38,
    segments_per_subject: int = 53,
    base: SceneSpec | None = None,
    seed: int = 0,
    n_test_subjects: int | None = None,
    val_fraction: float = 0.2,
) -> Dataset:
    """Subject-disjoint train/val/test scenes.

    Distances are drawn band-stratified over ``DISTANCE_BANDS``. Distractors come
    from the same split's subjects, so no test identity leaks into training.
    """
    if n_subjects < 4:
        raise ValueError("need at least 4 subjects")
    base = base or SceneSpec()
    if n_test_subjects is None:
        n_test_subjects = max(base.n_candidates, round(n_subjects * 8 / 38))
    rng = np.random.default_rng(seed)
    profiles = {i: random_profile(rng, subject_id=i) for i in range(n_subjects)}
    perm = [int(i) for i in rng.permutation(n_subjects)]
    test_ids = tuple(sorted(perm[:n_test_subjects]))
    train_ids = tuple(sorted(perm[n_test_subjects:]))
    if min(len(test_ids), len(train_ids)) < base.n_candidates:
        raise ValueError("each split needs at least n_candidates subjects")
    pool = _segments_for(train_ids, profiles, segments_per_subject, base, rng, seed * 2 + 1)
    test = _segments_for(test_ids, profiles, segments_per_subject, base, rng, seed * 2 + 2)
    order = rng.permutation(len(pool))
    n_val = int(round(val_fraction * len(pool)))
    val = [pool[i] for i in sorted(order[:n_val])]
    train = [pool[i] for i in sorted(order[n_val:])]
    return Dataset(train, val, test, profiles, train_ids, test_ids)


def _speed_corr(traj, distance_m, frames, fps) -> float:
    flow = project_to_image(traj, distance_m, frames=frames, fps=fps)
    tf = flow.t
    vel3 = np.column_stack([np.interp(tf, traj.t, traj.vel[:, k]) for k in range(3)])
    a = magnitude(vel3)
    b = magnitude(flow.v)
    if np.std(a) == 0 or np.std(b) == 0:
        return 1.0
    return float(np.corrcoef(a, b)[0, 1])


def generator_fidelity(n_segments: int = 100, seed: int = 0, frames: int = 90, fps: float = 30.0) -> dict:
    """Mean per-segment speed correlation for each class over fresh subjects."""
    rng = np.random.default_rng(seed)
    out = {}
    for g in GESTURES:
        rs = []
        for i in range(n_segments):
            prof = random_profile(rng, subject_id=i)
            traj = generate_trajectory(prof, g, frames, int(rng.integers(2 ** 31)), fps=fps)
            rs.append(_speed_corr(traj, draw_distance(rng), frames, fps))
        out[g] = float(np.mean(rs))
    return out
