"""Closed-loop centroidal simulation under the one-step QP controller.

The plant is the same centroidal model used for planning (optionally
with observation noise on the controller side).  Per tick: advance the
gait phase and planned velocity, refresh the value prediction at the
configured rate, solve the QP, integrate one tick, apply scheduled
velocity impulses, and log.  The QP linearization keeps the training
timestep (``Config.dt``) while the plant integrates at the control
tick, so the controller solves exactly the one-step problem the value
model was trained on.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from . import gait as gait_mod
from . import qp
from .centroidal import NUM_LEGS, step_vec
from .config import Config
from .features import featurize
from .valuenet import MlpModel, Normalizer, predict_expansion

RUNLOG_SCHEMA = "valueqp-runlog-v1"

_STATUS_CODE = {qp.STATUS_OPTIMAL: 0, qp.STATUS_MAX_ITER: 1}

RUNLOG_COLUMNS = (
    ["time"]
    + ["cx", "cy", "cz", "ax", "ay", "az", "vx", "vy", "vz", "wx", "wy", "wz"]
    + [f"f{i}{a}" for i in range(4) for a in "xyz"]
    + [f"contact{i}" for i in range(4)]
    + ["vcmd_x", "vcmd_y", "vcmd_z"]
    + ["qp_status", "qp_us", "pred_age"]
)


@dataclass
class VcmdSegment:
    t_start: float
    v: np.ndarray

    def __post_init__(self) -> None:
        self.v = np.asarray(self.v, float).reshape(3)


@dataclass
class Impulse:
    t: float
    dv: np.ndarray   # 6-vector velocity impulse (c_dot, omega)

    def __post_init__(self) -> None:
        self.dv = np.asarray(self.dv, float).reshape(6)


@dataclass
class SimConfig:
    duration: float = 5.0
    control_rate: float = 500.0
    prediction_divisor: int = 1
    v_cmd_profile: list = field(default_factory=lambda: [VcmdSegment(0.0, np.zeros(3))])
    impulses: list = field(default_factory=list)
    ablate_constraints: bool = False
    seed: int = 0
    obs_noise_std: float = 0.0

    def __post_init__(self) -> None:
        if self.duration <= 0.0:
            raise ValueError("duration must be positive")
        if self.prediction_divisor < 1:
            raise ValueError("prediction divisor must be a positive integer")


@dataclass
class RunLog:
    dt: float
    t: np.ndarray
    x: np.ndarray              # (N, 12)
    forces: np.ndarray         # (N, 12)
    contacts: np.ndarray       # (N, 4)
    v_cmd: np.ndarray          # (N, 3)
    qp_status: np.ndarray      # (N,)
    qp_us: np.ndarray          # (N,)
    pred_age: np.ndarray       # (N,) ticks since last prediction refresh
    fell: bool
    fall_time: float | None

    @property
    def ticks(self) -> int:
        return self.t.shape[0]

    def to_csv(self, path, include_timings: bool = True) -> None:
        """Write the per-tick record.

        ``include_timings=False`` zeroes the qp_us column so repeated
        runs under the same seed produce identical bytes.
        """
        with open(path, "w", newline="") as f:
            f.write(f"# {RUNLOG_SCHEMA}\n")
            w = csv.writer(f)
            w.writerow(RUNLOG_COLUMNS)
            for i in range(self.ticks):
                us = self.qp_us[i] if include_timings else 0.0
                row = [f"{self.t[i]:.17g}"]
                row += [f"{v:.17g}" for v in self.x[i]]
                row += [f"{v:.17g}" for v in self.forces[i]]
                row += [str(int(v)) for v in self.contacts[i]]
                row += [f"{v:.17g}" for v in self.v_cmd[i]]
                row += [str(int(self.qp_status[i]))]
                row += [f"{us:.17g}", str(int(self.pred_age[i]))]
                w.writerow(row)


class ValueNetPredictor:
    """Adapts a trained regressor to the controller's predictor hook."""

    def __init__(self, model: MlpModel, normalizer: Normalizer, eps_eig: float = 1e-4):
        self.model = model
        self.normalizer = normalizer
        self.eps_eig = eps_eig

    def predict(self, phi: np.ndarray, s_next: np.ndarray):
        return predict_expansion(self.model, self.normalizer, phi, self.eps_eig)


class ExpansionPredictor:
    """Fixed value expansion (e.g. from a converged standing solve).

    Reduces the stored (V_x, V_xx, x_hat) against the caller's actual
    next-position part each tick.
    """

    def __init__(self, V_x, V_xx, x_hat, eps_eig: float = 1e-4):
        from .features import reduce_expansion
        from .valuenet import project_prediction

        self._V_x = np.asarray(V_x, float)
        self._V_xx = np.asarray(V_xx, float)
        self._x_hat = np.asarray(x_hat, float)
        self._eps = eps_eig
        self._reduce = reduce_expansion
        self._project = project_prediction

    def predict(self, phi: np.ndarray, s_next: np.ndarray):
        tv = self._reduce(self._V_x, self._V_xx, self._x_hat, s_next)
        return self._project(tv.to_vector(), self._eps)


def run(
    cfg: Config,
    gait_cfg: gait_mod.GaitConfig,
    predictor,
    sim: SimConfig,
    x0: np.ndarray | None = None,
) -> RunLog:
    """Simulate the closed loop and return the per-tick log."""
    tick = 1.0 / sim.control_rate
    n_ticks = int(round(sim.duration * sim.control_rate))
    plant_params = cfg.model_params(dt=tick)
    qp_params = cfg.model_params()          # training timestep for the QP
    rng = np.random.default_rng(sim.seed)
    solver = qp.ActiveSetSolver()

    if x0 is None:
        x = np.zeros(12)
        x[2] = cfg.desired_height
    else:
        x = np.asarray(x0, float).reshape(12).copy()

    profile = sorted(sim.v_cmd_profile, key=lambda s: s.t_start)
    impulses = sorted(sim.impulses, key=lambda im: im.t)
    next_impulse = 0

    r = np.zeros((NUM_LEGS, 3))
    prev_flags = np.zeros(NUM_LEGS, dtype=bool)
    prediction = None
    pred_age = 0

    log_t = np.zeros(n_ticks)
    log_x = np.zeros((n_ticks, 12))
    log_f = np.zeros((n_ticks, 12))
    log_c = np.zeros((n_ticks, NUM_LEGS), dtype=int)
    log_v = np.zeros((n_ticks, 3))
    log_status = np.zeros(n_ticks, dtype=int)
    log_us = np.zeros(n_ticks)
    log_age = np.zeros(n_ticks, dtype=int)
    fell = False
    fall_time = None
    ticks_done = 0

    for k in range(n_ticks):
        t = k * tick
        while next_impulse < len(impulses) and impulses[next_impulse].t <= t:
            x[6:12] += impulses[next_impulse].dv
            next_impulse += 1

        v_cmd = profile[0].v
        for seg in profile:
            if seg.t_start <= t + 1e-12:
                v_cmd = seg.v

        x_obs = x.copy()
        if sim.obs_noise_std > 0.0:
            x_obs += rng.normal(0.0, sim.obs_noise_std, size=12)

        flags = gait_mod.contact_flags(gait_cfg, t)
        for leg in range(NUM_LEGS):
            if flags[leg] and (not prev_flags[leg] or k == 0):
                # closed loop places feet from the measured state
                r[leg] = gait_mod.touchdown_location(
                    x_obs[0:3], x_obs[6:9], v_cmd, gait_cfg, leg
                )
            elif k == 0 and not flags[leg]:
                r[leg] = gait_mod.touchdown_location(
                    x_obs[0:3], x_obs[6:9], v_cmd, gait_cfg, leg
                )
        prev_flags = flags
        contact_times = gait_mod.time_to_switch(gait_cfg, t)

        if prediction is None or k % sim.prediction_divisor == 0:
            phi = featurize(x_obs, flags, r, contact_times, v_cmd)
            s_next = x_obs[0:6] + qp_params.dt * x_obs[6:12]
            prediction = predictor.predict(phi, s_next)
            pred_age = 0

        t_solve = time.perf_counter()
        forces, sol = qp.control_step(
            x_obs, flags, r, prediction, qp_params,
            mu=cfg.mu, f_z_max=cfg.f_z_max,
            R=cfg.r_penalty * np.eye(12),
            constrained=not sim.ablate_constraints,
            solver=solver,
        )
        solve_us = (time.perf_counter() - t_solve) * 1e6

        log_t[k] = t
        log_x[k] = x
        log_f[k] = forces.as_vector()
        log_c[k] = flags.astype(int)
        log_v[k] = v_cmd
        log_status[k] = _STATUS_CODE.get(sol.status, 2)
        log_us[k] = solve_us
        log_age[k] = pred_age
        ticks_done = k + 1
        pred_age += 1

        x = step_vec(x, forces.as_vector(), r, flags, plant_params)

        z_ok = cfg.fall_z_min <= x[2] <= cfg.fall_z_max
        att_ok = max(abs(x[3]), abs(x[4])) < cfg.fall_attitude
        if not (np.all(np.isfinite(x)) and z_ok and att_ok):
            fell = True
            fall_time = t + tick
            break

    sl = slice(0, ticks_done)
    return RunLog(
        dt=tick,
        t=log_t[sl],
        x=log_x[sl],
        forces=log_f[sl],
        contacts=log_c[sl],
        v_cmd=log_v[sl],
        qp_status=log_status[sl],
        qp_us=log_us[sl],
        pred_age=log_age[sl],
        fell=fell,
        fall_time=fall_time,
    )


# ---------------------------------------------------------------------------
# experiment drivers


def steady_mask(log: RunLog, settle: float = 1.0) -> np.ndarray:
    """Ticks at least ``settle`` seconds past the last v_cmd change."""
    changes = np.zeros(log.ticks, dtype=bool)
    changes[0] = True
    if log.ticks > 1:
        changes[1:] = np.any(np.diff(log.v_cmd, axis=0) != 0.0, axis=1)
    mask = np.zeros(log.ticks, dtype=bool)
    last_change_t = log.t[0]
    for i in range(log.ticks):
        if changes[i]:
            last_change_t = log.t[i]
        mask[i] = log.t[i] - last_change_t >= settle
    return mask


def tracking_error(log: RunLog, settle: float = 1.0) -> float:
    """Mean absolute horizontal velocity error on the steady segment."""
    mask = steady_mask(log, settle)
    if not mask.any():
        return float("nan")
    err = log.x[mask, 6:8] - log.v_cmd[mask, 0:2]
    return float(np.mean(np.abs(err)))


def _write_summary(path, schema: str, header: list, rows: list) -> None:
    with open(path, "w", newline="") as f:
        f.write(f"# {schema}\n")
        w = csv.writer(f)
        w.writerow(header)
        w.writerows(rows)


def experiment_velocity_tracking(
    cfg: Config,
    predictors: dict,
    out_dir,
    speeds=(-0.3, -0.15, 0.0, 0.15, 0.3),
    duration: float = 4.0,
    seed: int = 0,
) -> str:
    """Forward/backward sweep per gait; one run log per (gait, speed)."""
    from pathlib import Path

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for gait_kind, predictor in predictors.items():
        for v in speeds:
            sim = SimConfig(
                duration=duration,
                v_cmd_profile=[VcmdSegment(0.0, np.array([v, 0.0, 0.0]))],
                seed=seed,
            )
            log = run(cfg, cfg.gait(gait_kind), predictor, sim)
            name = f"tracking_{gait_kind}_{v:+.2f}.csv".replace("+", "p").replace("-", "m")
            log.to_csv(out / name)
            rows.append([gait_kind, f"{v:.17g}", f"{tracking_error(log):.17g}",
                         int(log.fell)])
    path = out / "tracking_summary.csv"
    _write_summary(
        path, "valueqp-tracking-summary-v1",
        ["gait", "v_cmd_x", "mean_abs_vel_err", "fell"], rows,
    )
    return str(path)


def experiment_frequency_sweep(
    cfg: Config,
    gait_kind: str,
    predictor,
    out_dir,
    rates=(500.0, 250.0, 125.0, 62.5, 31.25),
    v_x: float = 0.3,
    duration: float = 4.0,
    seed: int = 0,
) -> str:
    """Repeat a fixed run while thinning the value-prediction rate."""
    from pathlib import Path

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for rate in rates:
        divisor = int(round(cfg.control_rate / rate))
        sim = SimConfig(
            duration=duration,
            control_rate=cfg.control_rate,
            prediction_divisor=divisor,
            v_cmd_profile=[VcmdSegment(0.0, np.array([v_x, 0.0, 0.0]))],
            seed=seed,
        )
        log = run(cfg, cfg.gait(gait_kind), predictor, sim)
        log.to_csv(out / f"freq_{rate:g}hz.csv")
        rows.append([f"{rate:.17g}", int(log.fell), f"{tracking_error(log):.17g}"])
    path = out / "frequency_summary.csv"
    _write_summary(
        path, "valueqp-frequency-summary-v1",
        ["prediction_rate_hz", "fell", "mean_abs_vel_err"], rows,
    )
    return str(path)


def experiment_constraint_ablation(
    cfg: Config,
    gait_kind: str,
    predictor,
    out_dir,
    v_x: float = 0.3,
    duration: float = 3.0,
    seed: int = 0,
    push: float = 0.5,
) -> str:
    """Paired runs with and without the QP constraint set.

    Both runs receive the same forward velocity push mid-run; in
    recovering from it the unconstrained controller commands pulling
    (negative-normal) forces that the constrained one cannot.
    """
    from pathlib import Path

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for constrained in (True, False):
        sim = SimConfig(
            duration=duration,
            v_cmd_profile=[VcmdSegment(0.0, np.array([v_x, 0.0, 0.0]))],
            impulses=[Impulse(0.5 * duration, np.array([push, 0, 0, 0, 0, 0]))],
            ablate_constraints=not constrained,
            seed=seed,
        )
        log = run(cfg, cfg.gait(gait_kind), predictor, sim)
        tag = "constrained" if constrained else "unconstrained"
        log.to_csv(out / f"ablation_{gait_kind}_{tag}.csv")
        fz = log.forces[:, 2::3]
        min_fz = float(fz[log.contacts.astype(bool)].min()) if log.contacts.any() else 0.0
        rows.append([gait_kind, int(constrained), f"{min_fz:.17g}", int(log.fell)])
    path = out / "ablation_summary.csv"
    _write_summary(
        path, "valueqp-ablation-summary-v1",
        ["gait", "constrained", "min_fz", "fell"], rows,
    )
    return str(path)
