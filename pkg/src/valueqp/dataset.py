"""Training data generation and the on-disk dataset format.

Protocol: for each long run, sample a random initial state and a
velocity command, build a gait schedule, solve a long trajectory
(spanning ``long_cycles`` gait cycles) with iLQR, then for every
timestep inside the first ``sample_cycles`` cycles warm-start and
re-solve a shorter problem (``short_cycles`` cycles).  Each converged
short solve contributes one sample: the feature transform of its
initial state paired with the reduced value expansion of its second
timestep.  Short solves that fail to converge are dropped and counted.

File format: magic + version, a JSON text header (counts, dims,
normalization-statistics slots, gait kind, config hash), then
contiguous little-endian float64 records of 33 features followed by
42 targets.
"""

from __future__ import annotations

import json
import multiprocessing
import struct
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import gait as gait_mod
from . import ilqr
from .centroidal import (
    NU,
    NUM_LEGS,
    NX,
    CentroidalState,
    batch_jacobians,
    step_vec,
)
from .config import Config
from .features import FEATURE_DIM, TARGET_DIM, featurize, reduce_expansion

try:
    from . import fastpath
except ImportError:  # pragma: no cover - numba not installed
    fastpath = None

MAGIC = b"VQDS"
VERSION = 1


class DatasetFormatError(RuntimeError):
    """Magic/version/dimension mismatch or corrupt payload."""


@dataclass
class Dataset:
    features: np.ndarray          # (N, 33)
    targets: np.ndarray           # (N, 42)
    gait_kind: str = ""
    config_hash: str = ""
    dropped: int = 0
    stats: dict | None = None     # normalization statistics slots
    config_mismatch: bool = False

    def __post_init__(self) -> None:
        self.features = np.ascontiguousarray(self.features, dtype="<f8")
        self.targets = np.ascontiguousarray(self.targets, dtype="<f8")
        if self.features.ndim != 2 or self.features.shape[1] != FEATURE_DIM:
            raise DatasetFormatError("features must be (N, 33)")
        if self.targets.shape != (self.features.shape[0], TARGET_DIM):
            raise DatasetFormatError("targets must be (N, 42)")

    def __len__(self) -> int:
        return self.features.shape[0]

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Dataset)
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.targets, other.targets)
            and self.gait_kind == other.gait_kind
            and self.config_hash == other.config_hash
        )


def save(dataset: Dataset, path) -> None:
    header = {
        "count": len(dataset),
        "feature_dim": FEATURE_DIM,
        "target_dim": TARGET_DIM,
        "gait": dataset.gait_kind,
        "config_hash": dataset.config_hash,
        "dropped": dataset.dropped,
        "stats": dataset.stats,
    }
    blob = json.dumps(header, sort_keys=True).encode()
    payload = np.hstack([dataset.features, dataset.targets]).astype("<f8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", VERSION, len(blob)))
        f.write(blob)
        f.write(payload.tobytes())


def load(path, expected_config_hash: str | None = None) -> Dataset:
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != MAGIC:
        raise DatasetFormatError(f"{path}: bad magic {raw[:4]!r}")
    version, hlen = struct.unpack_from("<II", raw, 4)
    if version != VERSION:
        raise DatasetFormatError(f"{path}: unsupported version {version}")
    try:
        header = json.loads(raw[12 : 12 + hlen])
    except (ValueError, UnicodeDecodeError) as e:
        raise DatasetFormatError(f"{path}: corrupt header: {e}") from e
    if header["feature_dim"] != FEATURE_DIM or header["target_dim"] != TARGET_DIM:
        raise DatasetFormatError(
            f"{path}: dimension mismatch "
            f"({header['feature_dim']}, {header['target_dim']})"
        )
    count = header["count"]
    rec = FEATURE_DIM + TARGET_DIM
    payload = raw[12 + hlen :]
    if len(payload) != count * rec * 8:
        raise DatasetFormatError(
            f"{path}: payload holds {len(payload)} bytes, "
            f"expected {count * rec * 8} for {count} records"
        )
    data = np.frombuffer(payload, dtype="<f8").reshape(count, rec)
    mismatch = (
        expected_config_hash is not None
        and header["config_hash"] != expected_config_hash
    )
    return Dataset(
        features=data[:, :FEATURE_DIM].copy(),
        targets=data[:, FEATURE_DIM:].copy(),
        gait_kind=header["gait"],
        config_hash=header["config_hash"],
        dropped=header.get("dropped", 0),
        stats=header.get("stats"),
        config_mismatch=bool(mismatch),
    )


# ---------------------------------------------------------------------------
# iLQR problem construction


def ilqr_cost_for_tracking(v_cmd: np.ndarray, cfg: Config):
    """Quadratic tracking cost callbacks for the data-generation runs.

    l(x, u) = 0.5 (x - x_des)' W (x - x_des) + 0.5 u' R u with zero
    weight on the horizontal CoM position; the terminal cost reuses W.
    Returns (cost, cost_derivs, terminal_cost, terminal_derivs,
    cost_all, cost_derivs_all).
    """
    w = np.asarray(cfg.state_weights, float)
    r = cfg.r_penalty
    x_des = cfg.desired_state(v_cmd)
    W = np.diag(w)
    R = r * np.eye(NU)

    def cost(t, x, u):
        dx = x - x_des
        return 0.5 * (dx @ (w * dx) + r * (u @ u))

    def cost_derivs(t, x, u):
        dx = x - x_des
        return w * dx, r * u, W, R, np.zeros((NU, NX))

    def terminal_cost(x):
        dx = x - x_des
        return 0.5 * dx @ (w * dx)

    def terminal_derivs(x):
        return w * (x - x_des), W

    def cost_all(xs, us):
        dx = xs - x_des
        return 0.5 * (np.sum(dx * dx * w) + r * np.sum(us * us))

    def cost_derivs_all(xs, us):
        T = xs.shape[0]
        dx = xs - x_des
        return (
            dx * w,
            r * us,
            np.broadcast_to(W, (T, NX, NX)),
            np.broadcast_to(R, (T, NU, NU)),
            np.broadcast_to(np.zeros((NU, NX)), (T, NU, NX)),
        )

    return cost, cost_derivs, terminal_cost, terminal_derivs, cost_all, cost_derivs_all


def tracking_problem(
    schedule: gait_mod.GaitSchedule,
    start: int,
    horizon: int,
    v_cmd: np.ndarray,
    cfg: Config,
) -> ilqr.OcProblem:
    """iLQR problem over a window of a gait schedule.

    Active legs get z-force bounds [0, f_z_max]; inactive legs are
    pinned to zero force through equal bounds.
    """
    if start + horizon > schedule.steps:
        raise ValueError("schedule too short for the requested window")
    params = cfg.model_params(dt=schedule.dt)
    contacts = schedule.contacts[start : start + horizon]
    points = schedule.points[start : start + horizon]

    lo = np.zeros((horizon, NU))
    hi = np.zeros((horizon, NU))
    for i in range(NUM_LEGS):
        sl = slice(3 * i, 3 * i + 3)
        act = contacts[:, i]
        lo[act, sl] = [-np.inf, -np.inf, 0.0]
        hi[act, sl] = [np.inf, np.inf, cfg.f_z_max]

    def dynamics(t, x, u):
        return step_vec(x, u, points[t], contacts[t], params)

    def dynamics_jac(t, x, u):
        fx, fu = batch_jacobians(
            x[None], u[None], points[t][None], contacts[t][None], params
        )
        return fx[0], fu[0]

    def dynamics_jac_all(xs, us):
        return batch_jacobians(xs, us, points, contacts, params)

    (cost, cost_derivs, terminal_cost, terminal_derivs, cost_all,
     cost_derivs_all) = ilqr_cost_for_tracking(v_cmd, cfg)

    forward_all = None
    if fastpath is not None:
        w_vec = np.asarray(cfg.state_weights, float)
        x_des = cfg.desired_state(v_cmd)
        pts_c = np.ascontiguousarray(points, dtype=float)
        act_c = np.ascontiguousarray(contacts, dtype=bool)
        lo_c = np.ascontiguousarray(lo)
        hi_c = np.ascontiguousarray(hi)
        inertia_inv = np.ascontiguousarray(params.inertia_inv)

        def forward_all(xs, us, K, k, alpha):
            return fastpath.centroidal_forward_kernel(
                np.ascontiguousarray(xs),
                np.ascontiguousarray(us),
                np.ascontiguousarray(K),
                np.ascontiguousarray(k),
                float(alpha),
                lo_c,
                hi_c,
                pts_c,
                act_c,
                params.dt,
                params.mass,
                inertia_inv,
                w_vec,
                x_des,
                cfg.r_penalty,
            )

    return ilqr.OcProblem(
        horizon=horizon,
        n=NX,
        m=NU,
        dynamics=dynamics,
        dynamics_jac=dynamics_jac,
        cost=cost,
        cost_derivs=cost_derivs,
        terminal_cost=terminal_cost,
        terminal_derivs=terminal_derivs,
        u_lower=lo,
        u_upper=hi,
        dynamics_jac_all=dynamics_jac_all,
        cost_derivs_all=cost_derivs_all,
        cost_all=cost_all,
        forward_all=forward_all,
    )


def equilibrium_guess(
    schedule: gait_mod.GaitSchedule, start: int, horizon: int, cfg: Config
) -> np.ndarray:
    """Static force distribution: weight split over the active legs."""
    us = np.zeros((horizon, NU))
    weight = cfg.mass * 9.81
    for t in range(horizon):
        act = schedule.contacts[start + t]
        n_act = int(act.sum())
        if n_act == 0:
            continue
        fz = min(weight / n_act, cfg.f_z_max)
        for i in range(NUM_LEGS):
            if act[i]:
                us[t, 3 * i + 2] = fz
    return us


# ---------------------------------------------------------------------------
# generation


def sample_initial_state(rng: np.random.Generator, cfg: Config) -> CentroidalState:
    c = np.array(
        [0.0, 0.0, cfg.desired_height + rng.uniform(-1, 1) * cfg.sample_height_dev]
    )
    alpha = np.array(
        [
            rng.uniform(-1, 1) * cfg.sample_tilt,
            rng.uniform(-1, 1) * cfg.sample_tilt,
            0.0,
        ]
    )
    c_dot = rng.uniform(-1, 1, size=3) * cfg.sample_lin_vel
    omega = rng.uniform(-1, 1, size=3) * cfg.sample_ang_vel
    return CentroidalState(c=c, alpha=alpha, c_dot=c_dot, omega=omega)


def sample_v_cmd(rng: np.random.Generator, cfg: Config) -> np.ndarray:
    theta = rng.uniform(0.0, 2.0 * np.pi)
    speed = rng.uniform(0.0, cfg.v_cmd_max)
    return np.array([speed * np.cos(theta), speed * np.sin(theta), 0.0])


def _steps(cycles: float, cycle: float, dt: float) -> int:
    return int(round(cycles * cycle / dt))


def run_long_trajectory(
    index: int, gait_kind: str, cfg: Config, seed: int
) -> tuple[np.ndarray, np.ndarray, int]:
    """One long run: returns (features (k,33), targets (k,42), dropped)."""
    rng = np.random.default_rng(np.random.SeedSequence(entropy=(seed, index)))
    gcfg = cfg.gait(gait_kind)
    x0 = sample_initial_state(rng, cfg)
    v_cmd = sample_v_cmd(rng, cfg)

    n_long = _steps(cfg.long_cycles, gcfg.cycle, cfg.dt)
    n_short = _steps(cfg.short_cycles, gcfg.cycle, cfg.dt)
    n_sample = _steps(cfg.sample_cycles, gcfg.cycle, cfg.dt)
    schedule = gait_mod.build_schedule(
        x0, v_cmd, gcfg, n_long * cfg.dt, cfg.dt
    )

    long_opts = ilqr.IlqrOptions(
        max_iters=cfg.ilqr_max_iters, cost_tol=cfg.ilqr_cost_tol_long
    )
    short_opts = ilqr.IlqrOptions(
        max_iters=cfg.ilqr_max_iters, cost_tol=cfg.ilqr_cost_tol
    )

    long_problem = tracking_problem(schedule, 0, n_long, v_cmd, cfg)
    long_res = ilqr.solve(
        long_problem,
        x0.as_vector(),
        equilibrium_guess(schedule, 0, n_long, cfg),
        long_opts,
    )

    feats = []
    targs = []
    dropped = 0
    for k in range(n_sample):
        problem = tracking_problem(schedule, k, n_short, v_cmd, cfg)
        res = ilqr.solve(
            problem, long_res.xs[k], long_res.us[k : k + n_short], short_opts
        )
        if not res.converged:
            dropped += 1
            continue
        x_start = res.xs[0]
        s_next = x_start[0:6] + cfg.dt * x_start[6:12]
        tv = reduce_expansion(res.V_x[1], res.V_xx[1], res.xs[1], s_next)
        phi = featurize(
            x_start,
            schedule.contacts[k],
            schedule.points[k],
            schedule.contact_time[k],
            v_cmd,
        )
        feats.append(phi)
        targs.append(tv.to_vector())

    if feats:
        return np.array(feats), np.array(targs), dropped
    return (
        np.zeros((0, FEATURE_DIM)),
        np.zeros((0, TARGET_DIM)),
        dropped,
    )


def _worker(args):
    return run_long_trajectory(*args)


def generate(
    count_long: int,
    gait_kind: str,
    cfg: Config,
    seed: int = 0,
    workers: int = 1,
    progress: bool = False,
) -> Dataset:
    """Run the full long/short protocol for ``count_long`` trajectories.

    Worker processes split the long runs; results are merged in
    long-run order so the output is independent of ``workers``.
    """
    t0 = time.time()
    jobs = [(i, gait_kind, cfg, seed) for i in range(count_long)]
    if workers > 1:
        with multiprocessing.Pool(workers) as pool:
            results = []
            for i, res in enumerate(pool.imap(_worker, jobs)):
                results.append(res)
                if progress:
                    print(f"long run {i + 1}/{count_long}", file=sys.stderr)
    else:
        results = []
        for i, job in enumerate(jobs):
            results.append(_worker(job))
            if progress:
                print(f"long run {i + 1}/{count_long}", file=sys.stderr)

    feats = np.concatenate([r[0] for r in results], axis=0)
    targs = np.concatenate([r[1] for r in results], axis=0)
    dropped = sum(r[2] for r in results)

    gcfg = cfg.gait(gait_kind)
    expected = count_long * _steps(cfg.sample_cycles, gcfg.cycle, cfg.dt)
    if len(feats) < cfg.min_yield * expected:
        raise RuntimeError(
            f"data generation yield too low: {len(feats)} samples of "
            f"{expected} attempted ({dropped} short solves dropped)"
        )
    if progress:
        summary = {
            "samples": int(len(feats)),
            "dropped": int(dropped),
            "wall_time_s": round(time.time() - t0, 3),
        }
        print(json.dumps(summary), file=sys.stderr)
    return Dataset(
        features=feats,
        targets=targs,
        gait_kind=gait_kind,
        config_hash=cfg.hash(),
        dropped=dropped,
    )
