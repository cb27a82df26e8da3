"""Central configuration: defaults, key=value file parsing, hashing.

The config file is plain text, one ``key = value`` pair per line,
``#`` starts a comment.  Vector values are comma separated.  Every
field of :class:`Config` is a valid key.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields

import numpy as np

from . import gait
from .centroidal import ModelParams


@dataclass
class Config:
    # model
    mass: float = 2.5
    inertia_diag: tuple = (0.016, 0.031, 0.041)
    dt: float = 0.004
    desired_height: float = 0.21

    # runtime QP
    mu: float = 0.6
    f_z_max: float = 30.0
    r_penalty: float = 1e-2
    eps_eig: float = 1e-4

    # iLQR tracking cost (diagonal state weights; zero horizontal weight)
    state_weights: tuple = (
        0.0, 0.0, 5000.0, 500.0, 500.0, 500.0, 10.0, 10.0, 100.0, 20.0, 20.0, 20.0
    )

    # gait timing
    trot_t_stance: float = 0.16
    trot_t_swing: float = 0.16
    bound_t_stance: float = 0.12
    bound_t_swing: float = 0.18
    k_raibert: float = 0.03
    v_alpha: float = 0.02
    shoulder_x: float = 0.195
    shoulder_y: float = 0.147
    shoulder_z: float = -0.21

    # data generation
    long_cycles: float = 4.0
    short_cycles: float = 2.5
    sample_cycles: float = 1.5
    v_cmd_max: float = 0.45
    sample_height_dev: float = 0.03
    sample_tilt: float = 0.1
    sample_lin_vel: float = 0.15
    sample_ang_vel: float = 0.5
    min_yield: float = 0.5
    ilqr_max_iters: int = 100
    ilqr_cost_tol: float = 1e-7
    ilqr_cost_tol_long: float = 1e-6

    # training
    epochs: int = 256
    batch: int = 128
    learning_rate: float = 3e-4
    val_fraction: float = 0.1

    # simulation
    control_rate: float = 500.0
    fall_z_min: float = 0.02
    fall_z_max: float = 1.0
    fall_attitude: float = 0.6

    def model_params(self, dt: float | None = None) -> ModelParams:
        return ModelParams(
            mass=self.mass,
            inertia=np.diag(self.inertia_diag),
            dt=self.dt if dt is None else dt,
        )

    def gait(self, kind: str) -> gait.GaitConfig:
        shoulders = gait.default_shoulders(
            self.shoulder_x, self.shoulder_y, self.shoulder_z
        )
        common = dict(
            shoulders=shoulders, k_raibert=self.k_raibert, v_alpha=self.v_alpha
        )
        if kind == "trot":
            return gait.trot_config(self.trot_t_stance, self.trot_t_swing, **common)
        if kind == "bound":
            return gait.bound_config(
                self.bound_t_stance, self.bound_t_swing, **common
            )
        if kind == "stand":
            return gait.stand_config(self.trot_t_stance, **common)
        raise ValueError(f"unknown gait kind {kind!r}")

    def desired_state(self, v_cmd: np.ndarray) -> np.ndarray:
        v_cmd = np.asarray(v_cmd, float).reshape(3)
        x_des = np.zeros(12)
        x_des[2] = self.desired_height
        x_des[6:8] = v_cmd[0:2]
        return x_des

    def canonical_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                s = ", ".join(f"{float(e):.17g}" for e in v)
            elif isinstance(v, int) and not isinstance(v, bool):
                s = str(v)
            else:
                s = f"{float(v):.17g}"
            lines.append(f"{f.name} = {s}")
        return "\n".join(lines) + "\n"

    def hash(self) -> str:
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()[:16]

    def save(self, path) -> None:
        with open(path, "w") as f:
            f.write(self.canonical_text())


def load_config(path) -> Config:
    cfg = Config()
    by_name = {f.name: f for f in fields(Config)}
    with open(path) as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, _, val = line.partition("=")
            key = key.strip()
            val = val.strip()
            if key not in by_name:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
            default = getattr(cfg, key)
            if isinstance(default, tuple):
                parsed: object = tuple(float(v) for v in val.split(","))
                if len(parsed) != len(default):
                    raise ValueError(
                        f"{path}:{lineno}: {key} expects {len(default)} values"
                    )
            elif isinstance(default, int) and not isinstance(default, bool):
                parsed = int(val)
            else:
                parsed = float(val)
            setattr(cfg, key, parsed)
    return cfg
