"""Integral tracking augmentation of one PWA mode.

The augmented state is x_bar = (y, v, r, theta): the plant state, a constant
reference r, and an integrating state theta with theta+ = theta + (y - r)
that provides zero tracking offset at any steady state.

The reference row is autonomous (r+ = r) and the input enters only the plant
rows.  A formulation that drives r from u, or the plant from r, would make
the reference input-dependent, which is meaningless for tracking; this
module deliberately keeps r exogenous.

Note on the reference mode: r is uncontrollable with eigenvalue one, so any
static feedback leaves one structural unit eigenvalue in the 4-state closed
loop.  Gain and cost design therefore operate on the controllable error
subsystem over e = (y - r, v, theta), exposed here as `error_A`/`error_B`,
and gains/costs are embedded back into 4-state form with `embed_gain` /
`embed_cost`.
"""

from dataclasses import dataclass

import numpy as np

from .plant import LinearDynamics

# error vector e = Z x_bar = (y - r, v, theta)
ERROR_MAP = np.array([
    [1.0, 0.0, -1.0, 0.0],
    [0.0, 1.0, 0.0, 0.0],
    [0.0, 0.0, 0.0, 1.0],
])


@dataclass(frozen=True)
class AugmentedModel:
    """Integral tracking model around one affine mode."""

    A_bar: np.ndarray        # 4x4
    B_bar: np.ndarray        # 4x1
    C_bar: np.ndarray        # 1x4 position output
    mode_index: int
    friction_offset: float   # carried as an input bias, not inside A_bar

    @property
    def error_A(self):
        """3x3 dynamics of the error subsystem (y, v, theta rows)."""
        idx = [0, 1, 3]
        return self.A_bar[np.ix_(idx, idx)]

    @property
    def error_B(self):
        return self.B_bar[[0, 1, 3], :]

    def embed_gain(self, K_err):
        """Lift a 1x3 error-feedback gain to the 4-state law
        u = k1*(y-r) + k2*v + k3*theta."""
        k = np.asarray(K_err, dtype=float).ravel()
        return np.array([[k[0], k[1], -k[0], k[2]]])

    def embed_cost(self, P_err):
        """Lift a 3x3 error-space cost to the rank-3 4x4 form Z'PZ."""
        P = np.atleast_2d(np.asarray(P_err, dtype=float))
        return ERROR_MAP.T @ P @ ERROR_MAP

    def reduce_gain(self, K_bar):
        """Inverse of embed_gain; checks the embedding consistency."""
        K = np.asarray(K_bar, dtype=float).ravel()
        if abs(K[2] + K[0]) > 1e-9 * (1.0 + abs(K[0])):
            raise ValueError("gain is not in embedded tracking form (K[2] != -K[0])")
        return np.array([[K[0], K[1], K[3]]])


def augment(mode: LinearDynamics, mode_index=0) -> AugmentedModel:
    """Build the integral tracking model around one mode.

    The friction offset travels alongside as an input bias: predictions use
    the effective input u - friction_offset.
    """
    A, B, C = mode.A, mode.B, mode.C
    A_bar = np.zeros((4, 4))
    A_bar[:2, :2] = A
    A_bar[2, 2] = 1.0
    A_bar[3, :2] = C[0]
    A_bar[3, 2] = -1.0
    A_bar[3, 3] = 1.0
    B_bar = np.zeros((4, 1))
    B_bar[:2, 0] = B[:, 0]
    C_bar = np.zeros((1, 4))
    C_bar[0, :2] = C[0]
    return AugmentedModel(A_bar, B_bar, C_bar, mode_index, mode.friction_offset)
