"""Discrete centroidal dynamics of a quadruped.

The robot is reduced to a single rigid body driven by ground reaction
forces at the four feet.  The 12-number state is ordered as

    x = (c, alpha, c_dot, omega)

with ``c`` the CoM position, ``alpha`` world-frame Euler angles, and
their velocities.  The position part is ``s = (c, alpha)`` and the
velocity part ``v = (c_dot, omega)``; every block convention elsewhere
in the package (V_ss, V_sv, V_vv) follows this split.

Torque about the CoM is computed as (r_i - c) x F_i.  Orientation is
integrated additively (alpha += dt * omega), which is adequate for the
small roll/pitch excursions of trot and bound gaits.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

NUM_LEGS = 4
NX = 12
NU = 12
NS = 6
NV = 6

GRAVITY = np.array([0.0, 0.0, 9.81])


class NonFiniteInputError(ValueError):
    """Raised when a dynamics input contains NaN or infinity."""


def _check_finite(name: str, a: np.ndarray) -> None:
    if not np.all(np.isfinite(a)):
        raise NonFiniteInputError(f"{name} contains non-finite values: {a!r}")


@dataclass(frozen=True)
class ModelParams:
    """Constant physical parameters of the centroidal model."""

    mass: float = 2.5
    inertia: np.ndarray = field(
        default_factory=lambda: np.diag([0.016, 0.031, 0.041])
    )
    dt: float = 0.004
    inertia_inv: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.mass <= 0.0:
            raise ValueError(f"mass must be positive, got {self.mass}")
        if self.dt <= 0.0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        inertia = np.asarray(self.inertia, dtype=float)
        if inertia.shape != (3, 3) or not np.allclose(inertia, inertia.T):
            raise ValueError("inertia must be a symmetric 3x3 matrix")
        if np.any(np.linalg.eigvalsh(inertia) <= 0.0):
            raise ValueError("inertia must be positive definite")
        object.__setattr__(self, "inertia", inertia)
        object.__setattr__(self, "inertia_inv", np.linalg.inv(inertia))

    def replace_dt(self, dt: float) -> "ModelParams":
        return ModelParams(mass=self.mass, inertia=self.inertia, dt=dt)


@dataclass
class CentroidalState:
    """CoM position/orientation and their velocities (world frame)."""

    c: np.ndarray
    alpha: np.ndarray
    c_dot: np.ndarray
    omega: np.ndarray

    def __post_init__(self) -> None:
        for name in ("c", "alpha", "c_dot", "omega"):
            a = np.asarray(getattr(self, name), dtype=float).reshape(3)
            _check_finite(name, a)
            setattr(self, name, a)

    @classmethod
    def from_vector(cls, x: np.ndarray) -> "CentroidalState":
        x = np.asarray(x, dtype=float).reshape(NX)
        return cls(c=x[0:3], alpha=x[3:6], c_dot=x[6:9], omega=x[9:12])

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.c, self.alpha, self.c_dot, self.omega])

    @property
    def s(self) -> np.ndarray:
        """Position part (c, alpha)."""
        return np.concatenate([self.c, self.alpha])

    @property
    def v(self) -> np.ndarray:
        """Velocity part (c_dot, omega)."""
        return np.concatenate([self.c_dot, self.omega])


@dataclass
class ContactForces:
    """Per-leg ground reaction forces; inactive legs carry zero force."""

    F: np.ndarray            # (4, 3) Newtons, world frame
    active: np.ndarray       # (4,) bool

    def __post_init__(self) -> None:
        self.F = np.asarray(self.F, dtype=float).reshape(NUM_LEGS, 3).copy()
        self.active = np.asarray(self.active, dtype=bool).reshape(NUM_LEGS)
        self.F[~self.active] = 0.0

    def as_vector(self) -> np.ndarray:
        return self.F.reshape(NU)


@dataclass
class VelocityLinearization:
    """Affine map of stacked forces to the velocity update.

    v_next = v + B_F @ vec(F) + B_0, exact for this model at fixed
    (x, r) because the velocity dynamics are affine in the forces.
    """

    B_F: np.ndarray   # (6, 12)
    B_0: np.ndarray   # (6,)


def _skew(a: np.ndarray) -> np.ndarray:
    return np.array(
        [[0.0, -a[2], a[1]], [a[2], 0.0, -a[0]], [-a[1], a[0], 0.0]]
    )


def step_vec(
    x: np.ndarray,
    u: np.ndarray,
    r: np.ndarray,
    active: np.ndarray,
    p: ModelParams,
) -> np.ndarray:
    """Explicit-Euler step on the flat 12-vector state.

    ``u`` is the stacked 12-vector of forces; inactive legs are masked
    to zero before use.  ``r`` is (4, 3) world-frame contact points.
    """
    _check_finite("state", x)
    _check_finite("forces", u)
    _check_finite("contact points", r)
    f = u.reshape(NUM_LEGS, 3) * active[:, None]
    xn = x.copy()
    xn[0:6] += p.dt * x[6:12]
    xn[6:9] += p.dt * (f.sum(axis=0) / p.mass - GRAVITY)
    tau = np.cross(r - x[0:3], f).sum(axis=0)
    xn[9:12] += p.dt * (p.inertia_inv @ tau)
    return xn


def step(
    x: CentroidalState, u: ContactForces, r: np.ndarray, p: ModelParams
) -> CentroidalState:
    """Advance the centroidal state one timestep."""
    xn = step_vec(x.as_vector(), u.as_vector(), np.asarray(r, float), u.active, p)
    return CentroidalState.from_vector(xn)


def linearize_velocity_vec(
    x: np.ndarray, r: np.ndarray, active: np.ndarray, p: ModelParams
) -> VelocityLinearization:
    _check_finite("state", x)
    _check_finite("contact points", r)
    B_F = np.zeros((NV, NU))
    c = x[0:3]
    lin = (p.dt / p.mass) * np.eye(3)
    for i in range(NUM_LEGS):
        if not active[i]:
            continue
        B_F[0:3, 3 * i : 3 * i + 3] = lin
        B_F[3:6, 3 * i : 3 * i + 3] = p.dt * (p.inertia_inv @ _skew(r[i] - c))
    B_0 = np.concatenate([-p.dt * GRAVITY, np.zeros(3)])
    return VelocityLinearization(B_F=B_F, B_0=B_0)


def linearize_velocity(
    x: CentroidalState, r: np.ndarray, active: np.ndarray, p: ModelParams
) -> VelocityLinearization:
    return linearize_velocity_vec(x.as_vector(), np.asarray(r, float), active, p)


def full_jacobians_vec(
    x: np.ndarray,
    u: np.ndarray,
    r: np.ndarray,
    active: np.ndarray,
    p: ModelParams,
) -> tuple[np.ndarray, np.ndarray]:
    """Analytic Jacobians of step_vec w.r.t. state and stacked forces.

    The torque's dependence on c through (r_i - c) contributes the
    dt * I^-1 * skew(sum F_i) block in f_x.
    """
    f = u.reshape(NUM_LEGS, 3) * active[:, None]
    f_x = np.eye(NX)
    f_x[0:3, 6:9] = p.dt * np.eye(3)
    f_x[3:6, 9:12] = p.dt * np.eye(3)
    f_x[9:12, 0:3] = p.dt * (p.inertia_inv @ _skew(f.sum(axis=0)))
    f_u = np.zeros((NX, NU))
    lin = linearize_velocity_vec(x, r, active, p)
    f_u[6:12, :] = lin.B_F
    return f_x, f_u


def full_jacobians(
    x: CentroidalState, u: ContactForces, r: np.ndarray, p: ModelParams
) -> tuple[np.ndarray, np.ndarray]:
    return full_jacobians_vec(
        x.as_vector(), u.as_vector(), np.asarray(r, float), u.active, p
    )


def batch_jacobians(
    xs: np.ndarray,
    us: np.ndarray,
    rs: np.ndarray,
    actives: np.ndarray,
    p: ModelParams,
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized Jacobians over a trajectory.

    xs (T, 12), us (T, 12), rs (T, 4, 3), actives (T, 4) -> f_x
    (T, 12, 12), f_u (T, 12, 12).  Used by the iLQR backward pass to
    avoid per-step Python overhead.
    """
    T = xs.shape[0]
    fs = us.reshape(T, NUM_LEGS, 3) * actives[:, :, None]

    f_x = np.tile(np.eye(NX), (T, 1, 1))
    f_x[:, 0:3, 6:9] = p.dt * np.eye(3)
    f_x[:, 3:6, 9:12] = p.dt * np.eye(3)
    ftot = fs.sum(axis=1)  # (T, 3)
    sk = np.zeros((T, 3, 3))
    sk[:, 0, 1] = -ftot[:, 2]
    sk[:, 0, 2] = ftot[:, 1]
    sk[:, 1, 0] = ftot[:, 2]
    sk[:, 1, 2] = -ftot[:, 0]
    sk[:, 2, 0] = -ftot[:, 1]
    sk[:, 2, 1] = ftot[:, 0]
    f_x[:, 9:12, 0:3] = p.dt * np.einsum("ij,tjk->tik", p.inertia_inv, sk)

    f_u = np.zeros((T, NX, NU))
    arm = rs - xs[:, None, 0:3]  # (T, 4, 3)
    skarm = np.zeros((T, NUM_LEGS, 3, 3))
    skarm[:, :, 0, 1] = -arm[:, :, 2]
    skarm[:, :, 0, 2] = arm[:, :, 1]
    skarm[:, :, 1, 0] = arm[:, :, 2]
    skarm[:, :, 1, 2] = -arm[:, :, 0]
    skarm[:, :, 2, 0] = -arm[:, :, 1]
    skarm[:, :, 2, 1] = arm[:, :, 0]
    blocks = p.dt * np.einsum("ij,tljk->tlik", p.inertia_inv, skarm)
    mask = actives.astype(float)
    lin = (p.dt / p.mass) * np.eye(3)
    for i in range(NUM_LEGS):
        cols = slice(3 * i, 3 * i + 3)
        f_u[:, 6:9, cols] = lin[None] * mask[:, i, None, None]
        f_u[:, 9:12, cols] = blocks[:, i] * mask[:, i, None, None]
    return f_x, f_u
