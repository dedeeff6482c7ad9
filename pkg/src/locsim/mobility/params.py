from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Optional

# rows/cols: 0 stay, 1 previous direction (-1), 2 next direction (+1)
DEFAULT_PROB_MATRIX = (
    (0.0, 0.5, 0.5),
    (0.3, 0.7, 0.0),
    (0.3, 0.0, 0.7),
)


@dataclass
class MobilityState:
    x: float
    y: float
    speed: float = 0.0
    direction: float = 0.0
    memory: dict[str, Any] = field(default_factory=dict)

    def copy(self) -> "MobilityState":
        return MobilityState(self.x, self.y, self.speed, self.direction, dict(self.memory))


@dataclass
class ModelParams:
    width: float = 1000.0
    height: float = 800.0
    min_speed: float = 1.0
    max_speed: float = 10.0
    pause_time: float = 0.0
    step_time: float = 1.0
    # random walk leg: time-based by default, distance-based when set
    leg_time: float = 10.0
    leg_distance: Optional[float] = None
    gm_alpha: float = 0.75
    gm_mean_speed: float = 5.0
    gm_mean_direction: float = 0.0
    gm_speed_std: float = 1.0
    gm_direction_std: float = 0.5
    gm_edge_margin: float = 100.0
    max_accel: float = 1.0
    max_angular_change: float = math.pi / 8
    prob_matrix: tuple = DEFAULT_PROB_MATRIX
    prob_cell_step: float = 10.0
    street_blocks: tuple[int, int] = (4, 3)
    street_block_size: float = 200.0
    street_speeds: Optional[tuple[float, ...]] = None
    group_radius: float = 50.0
    advance_vector: tuple[float, float] = (5.0, 0.0)
    pursuit_gain: float = 0.5
    pursuit_noise: float = 1.0
    rpgm_deviation_max: float = 20.0
    ecr_tau: float = 10.0
    ecr_sigma: float = 100.0
    ecr_member_sigma: float = 10.0

    def problems(self) -> list[str]:
        """Offending keys with reasons; empty when the parameters are usable."""
        out = []
        if self.width <= 0 or self.height <= 0:
            out.append("area must have positive width and height")
        for key in (
            "min_speed", "max_speed", "pause_time", "max_accel", "max_angular_change",
            "gm_speed_std", "gm_direction_std", "group_radius", "pursuit_noise",
            "rpgm_deviation_max", "ecr_sigma", "ecr_member_sigma",
        ):
            if getattr(self, key) < 0:
                out.append(f"{key.replace('_', '-')} must be non-negative")
        if self.min_speed > self.max_speed:
            out.append("min-speed exceeds max-speed")
        if self.step_time <= 0:
            out.append("step-time must be positive")
        if self.leg_time <= 0:
            out.append("leg-time must be positive")
        if not 0.0 <= self.gm_alpha <= 1.0:
            out.append("gm-alpha out of range [0, 1]")
        if not 0.0 <= self.pursuit_gain <= 1.0:
            out.append("pursuit-gain out of range [0, 1]")
        if self.ecr_tau <= 0:
            out.append("ecr-tau must be positive")
        nbx, nby = self.street_blocks
        if nbx < 1 or nby < 1 or self.street_block_size <= 0:
            out.append("street-blocks must be positive")
        elif nbx * self.street_block_size >= self.width or nby * self.street_block_size >= self.height:
            out.append("street-blocks do not fit inside the area")
        m = self.prob_matrix
        if len(m) != 3 or any(len(r) != 3 for r in m):
            out.append("prob-matrix must be 3x3")
        elif any(p < 0 for r in m for p in r) or any(
            not math.isclose(sum(r), 1.0, abs_tol=1e-9) for r in m
        ):
            out.append("prob-matrix rows must be non-negative and sum to 1")
        return out

    def validate(self) -> "ModelParams":
        problems = self.problems()
        if problems:
            raise ValueError("; ".join(problems))
        return self
