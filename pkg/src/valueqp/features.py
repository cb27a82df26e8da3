"""Feature transform and value-expansion reduction.

The regression input drops the horizontal CoM position so the learned
map is invariant to where the robot stands in the plane.  The target
is the reduced one-step data (g, V_vv) obtained by splitting the full
12x12 value Hessian into position/velocity blocks and substituting the
known next position s_next = s + dt * v.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .centroidal import NS, NUM_LEGS, NV, NX

FEATURE_DIM = 33   # c_z, alpha, c_dot, omega (10) + 4x(r_i - c) (12)
                   # + contact flags (4) + v_cmd (3) + contact times (4)
TARGET_DIM = 42    # g (6) + row-major flattened V_vv (36)


@dataclass
class TargetVector:
    """Reduced value gradient and velocity-block Hessian."""

    g: np.ndarray   # (6,)
    H: np.ndarray   # (6, 6)

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.g, self.H.reshape(NV * NV)])

    @classmethod
    def from_vector(cls, y: np.ndarray) -> "TargetVector":
        y = np.asarray(y, float).reshape(TARGET_DIM)
        return cls(g=y[:NV].copy(), H=y[NV:].reshape(NV, NV).copy())


def featurize(
    x: np.ndarray,
    contacts: np.ndarray,
    points: np.ndarray,
    contact_times: np.ndarray,
    v_cmd: np.ndarray,
) -> np.ndarray:
    """Build the 33-number feature vector for one state.

    x is the flat 12-vector state; points (4, 3) are world-frame
    contact locations (swing legs use their most recent or upcoming
    touchdown point, so all 12 relative-position slots are defined).
    """
    x = np.asarray(x, float).reshape(NX)
    points = np.asarray(points, float).reshape(NUM_LEGS, 3)
    rel = (points - x[0:3]).reshape(12)
    flags = np.asarray(contacts, bool).astype(float)
    phi = np.concatenate(
        [
            x[2:3],            # c_z
            x[3:12],           # alpha, c_dot, omega
            rel,
            flags,
            np.asarray(v_cmd, float).reshape(3),
            np.asarray(contact_times, float).reshape(NUM_LEGS),
        ]
    )
    assert phi.shape == (FEATURE_DIM,)
    return phi


def reduce_expansion(
    V_x: np.ndarray,
    V_xx: np.ndarray,
    x_next: np.ndarray,
    s_next: np.ndarray,
) -> TargetVector:
    """Reduce a full 12-dim value expansion to one-step QP data.

    ``x_next`` is the nominal next state the expansion is taken about;
    ``s_next`` the known next position part s + dt * v.  The offset
    gradient w = V_x - V_xx @ x_next is split into position and
    velocity blocks, then g = w_v + V_vs @ s_next.
    """
    V_x = np.asarray(V_x, float).reshape(NX)
    V_xx = np.asarray(V_xx, float).reshape(NX, NX)
    x_next = np.asarray(x_next, float).reshape(NX)
    s_next = np.asarray(s_next, float).reshape(NS)

    w = V_x - V_xx @ x_next
    V_vs = V_xx[NS:, :NS]
    V_vv = V_xx[NS:, NS:]
    g = w[NS:] + V_vs @ s_next
    return TargetVector(g=g, H=V_vv.copy())
