"""Contact schedules and foot placement for quadruped gaits.

Legs are indexed FL=0, FR=1, HL=2, HR=3.  A gait is a periodic
stance/swing pattern per leg plus a phase offset; touchdown locations
follow a Raibert-style heuristic evaluated with a low-pass filtered
("planned") CoM velocity.  The ground is the plane z = 0.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .centroidal import NUM_LEGS, CentroidalState

LEG_NAMES = ("FL", "FR", "HL", "HR")

_EPS = 1e-9  # phase comparison guard against float drift at boundaries


def default_shoulders(
    x: float = 0.195, y: float = 0.147, z: float = -0.21
) -> np.ndarray:
    """Neutral endeffector offsets from the CoM, (4, 3), FL FR HL HR."""
    return np.array(
        [[x, y, z], [x, -y, z], [-x, y, z], [-x, -y, z]]
    )


@dataclass
class GaitConfig:
    kind: str                         # "trot" | "bound" | "stand"
    t_stance: float
    t_swing: float
    offsets: np.ndarray               # (4,) phase offsets in [0, 1)
    shoulders: np.ndarray = field(default_factory=default_shoulders)
    k_raibert: float = 0.03
    v_alpha: float = 0.02

    def __post_init__(self) -> None:
        if self.t_stance <= 0.0 or self.t_swing < 0.0:
            raise ValueError("phase durations must be positive")
        if self.k_raibert < 0.0:
            raise ValueError("k_raibert must be non-negative")
        if not 0.0 < self.v_alpha < 1.0:
            raise ValueError("v_alpha must lie in (0, 1)")
        self.offsets = np.asarray(self.offsets, dtype=float).reshape(NUM_LEGS)
        self.shoulders = np.asarray(self.shoulders, dtype=float).reshape(
            NUM_LEGS, 3
        )

    @property
    def cycle(self) -> float:
        """One full gait period per leg (stance + swing)."""
        return self.t_stance + self.t_swing

    @property
    def stance_fraction(self) -> float:
        return self.t_stance / self.cycle


def trot_config(
    t_stance: float = 0.16, t_swing: float = 0.16, **kw
) -> GaitConfig:
    # diagonal pairs (FL, HR) and (FR, HL) in anti-phase
    return GaitConfig(
        kind="trot",
        t_stance=t_stance,
        t_swing=t_swing,
        offsets=np.array([0.0, 0.5, 0.5, 0.0]),
        **kw,
    )


def bound_config(
    t_stance: float = 0.12, t_swing: float = 0.18, **kw
) -> GaitConfig:
    # front pair and hind pair in anti-phase
    return GaitConfig(
        kind="bound",
        t_stance=t_stance,
        t_swing=t_swing,
        offsets=np.array([0.0, 0.0, 0.5, 0.5]),
        **kw,
    )


def stand_config(t_stance: float = 0.16, **kw) -> GaitConfig:
    """All four feet permanently in contact (no stepping)."""
    return GaitConfig(
        kind="stand",
        t_stance=t_stance,
        t_swing=0.0,
        offsets=np.zeros(NUM_LEGS),
        **kw,
    )


def plan_velocity_update(
    c_dot_plan: np.ndarray, v_cmd: np.ndarray, v_alpha: float
) -> np.ndarray:
    """One step of the planned-velocity low-pass filter."""
    return (1.0 - v_alpha) * np.asarray(c_dot_plan, float) + v_alpha * np.asarray(
        v_cmd, float
    )


def touchdown_location(
    c: np.ndarray,
    c_dot: np.ndarray,
    v_cmd: np.ndarray,
    cfg: GaitConfig,
    leg: int,
) -> np.ndarray:
    """Raibert-style touchdown point for a leg entering contact.

    The z component is projected onto the ground plane z = 0.
    """
    r = (
        np.asarray(c, float)
        + cfg.shoulders[leg]
        + 0.5 * cfg.t_stance * np.asarray(c_dot, float)
        + cfg.k_raibert * (np.asarray(v_cmd, float) - np.asarray(c_dot, float))
    )
    r[2] = 0.0
    return r


def contact_flags(cfg: GaitConfig, t: float) -> np.ndarray:
    """Per-leg contact booleans at time t."""
    if cfg.kind == "stand":
        return np.ones(NUM_LEGS, dtype=bool)
    phase = (t / cfg.cycle + cfg.offsets) % 1.0
    return phase < cfg.stance_fraction - _EPS


def time_to_switch(cfg: GaitConfig, t: float) -> np.ndarray:
    """Per-leg time until the contact state next changes."""
    if cfg.kind == "stand":
        return np.full(NUM_LEGS, cfg.t_stance)
    phase = (t / cfg.cycle + cfg.offsets) % 1.0
    in_stance = phase < cfg.stance_fraction - _EPS
    remaining = np.where(
        in_stance, cfg.stance_fraction - phase, 1.0 - phase
    )
    return remaining * cfg.cycle


@dataclass
class GaitSchedule:
    """Precomputed contact timeline for a fixed duration.

    contacts (T, 4) bool, points (T, 4, 3) world-frame contact
    locations (swing legs keep their most recent touchdown; legs that
    start in swing carry their upcoming one), contact_time (T, 4)
    seconds until the contact state changes.
    """

    dt: float
    contacts: np.ndarray
    points: np.ndarray
    contact_time: np.ndarray

    @property
    def steps(self) -> int:
        return self.contacts.shape[0]


def build_schedule(
    x0: CentroidalState,
    v_cmd: np.ndarray,
    cfg: GaitConfig,
    duration: float,
    dt: float,
) -> GaitSchedule:
    """Simulate the planned-velocity filter forward and place feet.

    Contact points are set by the Raibert heuristic at every contact
    onset, evaluated on the planned (filtered) CoM state, and stay
    fixed while the leg remains in contact.
    """
    steps = int(round(duration / dt))
    if abs(steps * dt - duration) > 1e-9:
        raise ValueError("duration must be a multiple of dt")
    v_cmd = np.asarray(v_cmd, float)

    contacts = np.zeros((steps, NUM_LEGS), dtype=bool)
    points = np.zeros((steps, NUM_LEGS, 3))
    contact_time = np.zeros((steps, NUM_LEGS))

    c_plan = x0.c.copy()
    c_dot_plan = x0.c_dot.copy()
    r = np.full((NUM_LEGS, 3), np.nan)
    first_touch = np.full(NUM_LEGS, -1, dtype=int)
    prev = np.zeros(NUM_LEGS, dtype=bool)

    for k in range(steps):
        t = k * dt
        flags = contact_flags(cfg, t)
        for leg in range(NUM_LEGS):
            onset = flags[leg] and (not prev[leg] or k == 0)
            if onset:
                r[leg] = touchdown_location(c_plan, c_dot_plan, v_cmd, cfg, leg)
                if first_touch[leg] < 0:
                    first_touch[leg] = k
        contacts[k] = flags
        points[k] = r
        contact_time[k] = time_to_switch(cfg, t)
        prev = flags
        c_plan = c_plan + dt * c_dot_plan
        c_dot_plan = plan_velocity_update(c_dot_plan, v_cmd, cfg.v_alpha)

    # legs that start in swing get their upcoming touchdown backfilled
    for leg in range(NUM_LEGS):
        kf = first_touch[leg]
        if kf > 0:
            points[:kf, leg] = points[kf, leg]
        elif kf < 0:
            # never touches down within the horizon; use the neutral point
            points[:, leg] = touchdown_location(
                x0.c, x0.c_dot, v_cmd, cfg, leg
            )
    return GaitSchedule(
        dt=dt, contacts=contacts, points=points, contact_time=contact_time
    )


def dump_schedule_csv(schedule: GaitSchedule, path) -> None:
    header = ["step"]
    header += [f"contact_{n}" for n in LEG_NAMES]
    for n in LEG_NAMES:
        header += [f"r_{n}_{a}" for a in "xyz"]
    header += [f"t_contact_{n}" for n in LEG_NAMES]
    with open(path, "w", newline="") as f:
        f.write("# valueqp-schedule-v1\n")
        w = csv.writer(f)
        w.writerow(header)
        for k in range(schedule.steps):
            row = [k]
            row += [int(b) for b in schedule.contacts[k]]
            row += [f"{v:.17g}" for v in schedule.points[k].reshape(12)]
            row += [f"{v:.17g}" for v in schedule.contact_time[k]]
            w.writerow(row)
