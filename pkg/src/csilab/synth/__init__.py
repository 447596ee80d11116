"""Synthetic multi-person gesture scenes with a paired wrist IMU."""

from .bundle import read_dataset, read_segment, write_dataset, write_segment
from .camera import DEFAULT_FOCAL_PX, bbox_width_ratio, project_to_image, tri_frame_velocity
from .imu import CAM_TO_WORLD, WORLD_MAG_UT, derive_imu
from .kinematics import (
    GESTURES,
    IMU_RATE,
    GestureClass,
    SubjectProfile,
    Trajectory,
    constant_trajectory,
    generate_trajectory,
    random_profile,
)
from .scene import (
    DISTANCE_BANDS,
    TIERS,
    Dataset,
    NoiseTier,
    SceneSpec,
    Segment,
    distance_band,
    generate_dataset,
    generator_fidelity,
    inject_desync,
    make_segment,
)
