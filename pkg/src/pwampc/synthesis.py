"""Terminal-controller synthesis: gains, costs, invariant set, certificates.

Gains and costs are designed on the controllable error subsystem
(y - r, v, theta) and embedded into 4-state tracking form; see augment.py
for why the reference mode is excluded.  Stability statements ("Schur
stable", residual checks, frequency sweeps) therefore refer to the error
closed loop, which carries every eigenvalue of the 4-state loop except the
structural unit reference mode.
"""

from dataclasses import dataclass, field

import numpy as np

from .augment import AugmentedModel, augment
from .errors import EmptyTerminalSetError, SynthesisError
from .numerics import (DEFAULT_TOL, dlyap_residual, solve_dare, solve_dlyap,
                       solve_game_dare, spectral_radius)
from .plant import PwaModel
from .polytope import Polyhedron, chebyshev_center, is_empty, max_invariant_set

PAPER_Q = np.diag([1e4, 0.5, 1e4])
PAPER_R = 0.001


@dataclass(frozen=True)
class TerminalDesign:
    """Synthesized terminal triple for the two distinct dynamics.

    K1/P1 belong to the outer (sliding) mode, K2/P2 to the low-speed mode;
    X_f is the common terminal set computed from K2.  gamma is the achieved
    disturbance-rejection level of the low-speed loop and w_star the assumed
    friction-mismatch bound it is meant to cover.
    """

    K1: np.ndarray                 # 1x4
    K2: np.ndarray                 # 1x4
    P1: np.ndarray                 # 4x4, rank 3
    P2: np.ndarray                 # 4x4, rank 3
    X_f: Polyhedron
    gamma: float
    w_star: float
    kind: str = "mpc-robust"
    Q: np.ndarray = field(default_factory=lambda: PAPER_Q.copy())
    R: float = PAPER_R
    model_name: str = ""

    def gain_for_mode(self, mode_index):
        return self.K1 if mode_index == 1 else self.K2

    def cost_for_mode(self, mode_index):
        return self.P1 if mode_index == 1 else self.P2


def design_lqr_gain(aug: AugmentedModel, Q, R):
    """LQR gain and cost for the integral tracking model.

    Solves the DARE on the error subsystem with stage cost
    e'Qe + u'Ru, e = (y - r, v, theta), and embeds the result.

    Returns (K_bar 1x4, P_bar 4x4).
    """
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R2 = np.atleast_2d(np.asarray(R, dtype=float))
    P_err, K_err = solve_dare(aug.error_A, aug.error_B, Q, R2)
    return aug.embed_gain(K_err), aug.embed_cost(P_err)


# Stage output of the disturbance game: the position-error channel, with a
# small integrator weight so the unit integrator mode stays detectable (a
# pure position output leaves theta unobservable and the game Riccati
# equation has no stabilizing solution).  The velocity entry is a numerical
# regularizer only.
HINF_OUTPUT_WEIGHT = np.diag([1.0, 1e-6, 1.0])


def design_hinf_gain(aug: AugmentedModel, R=PAPER_R, gamma_range=(1e-3, 1e3),
                     iterations=40, disturbance=None, Q=None):
    """State-feedback gain bounding the matched-disturbance-to-position gain.

    Bisects the attenuation level over gamma_range: at each level the
    game-type Riccati equation (payoff z'z + R u^2 - gamma^2 w^2 with z the
    position-error channel, w entering through the input channel) either
    admits a stabilizing solution with the disturbance positivity condition
    or is declared infeasible.  Returns the embedded gain at the smallest
    feasible level and that level (within 1% of the infimum); the
    closed-loop transfer from w to the position error then has peak gain at
    most gamma.

    `disturbance` overrides the disturbance input matrix (default: the
    input channel itself); `Q` overrides the game output weight.
    """
    Q = HINF_OUTPUT_WEIGHT if Q is None else np.atleast_2d(np.asarray(Q, dtype=float))
    A, B = aug.error_A, aug.error_B
    E = B if disturbance is None else np.asarray(disturbance, dtype=float).reshape(B.shape[0], -1)
    lo, hi = gamma_range
    if lo <= 0 or hi <= lo:
        raise SynthesisError(f"invalid gamma range {gamma_range}")

    def attempt(gamma):
        try:
            P, Ku, _ = solve_game_dare(A, B, E, Q, np.atleast_2d(R), gamma)
        except Exception:
            return None
        if spectral_radius(A + B @ Ku) >= 1.0 - DEFAULT_TOL.spectral_margin:
            return None
        return Ku

    K_hi = attempt(hi)
    if K_hi is None:
        raise SynthesisError(f"no feasible attenuation level in {gamma_range}")
    K_lo = attempt(lo)
    if K_lo is not None:
        return aug.embed_gain(K_lo), lo

    best_K, best_gamma = K_hi, hi
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        K_mid = attempt(mid)
        if K_mid is not None:
            best_K, best_gamma, hi = K_mid, mid, mid
        else:
            lo = mid
        if (hi - lo) <= 5e-3 * hi:
            break
    return aug.embed_gain(best_K), best_gamma


def design_terminal_cost(aug: AugmentedModel, K_bar, Q, R):
    """Terminal cost from the Lyapunov equality
    Acl'P Acl - P = -(Q + K'RK) on the error loop, embedded to 4x4.

    For the LQR gain this coincides with the DARE solution; for any other
    stabilizing gain it is the exact closed-loop cost, so the decrease
    inequality holds with equality.
    """
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    K_err = aug.reduce_gain(K_bar)
    Acl = aug.error_A + aug.error_B @ K_err
    W = Q + K_err.T * float(R) @ K_err
    P_err = solve_dlyap(Acl, W)
    return aug.embed_cost(P_err)


def decrease_residual_eigs(aug: AugmentedModel, K_bar, P_bar, Q, R):
    """Eigenvalues of Acl'P Acl - P + Q + K'RK on the error loop.

    All of them must be <= the Lyapunov residual tolerance for the terminal
    cost decrease certificate to hold.
    """
    K_err = aug.reduce_gain(K_bar)
    P_err = _reduce_cost(P_bar)
    Acl = aug.error_A + aug.error_B @ K_err
    W = np.atleast_2d(np.asarray(Q, dtype=float)) + K_err.T * float(R) @ K_err
    return np.linalg.eigvalsh(dlyap_residual(Acl, W, P_err))


def _reduce_cost(P_bar):
    """Extract the 3x3 error-space cost from the embedded Z'PZ form."""
    idx = [0, 1, 3]
    return np.asarray(P_bar, dtype=float)[np.ix_(idx, idx)]


def tracking_closed_loop(aug: AugmentedModel, K_bar):
    """Error-subsystem closed loop A + B K (3x3)."""
    K_err = aug.reduce_gain(K_bar)
    return aug.error_A + aug.error_B @ K_err


def frequency_sweep_peak(aug: AugmentedModel, K_bar, n_grid=2000):
    """Peak gain of the matched-disturbance-to-position transfer on a
    frequency grid over [0, pi]."""
    Acl = tracking_closed_loop(aug, K_bar)
    B = aug.error_B
    C = np.array([[1.0, 0.0, 0.0]])
    n = Acl.shape[0]
    peak = 0.0
    for w in np.linspace(0.0, np.pi, n_grid):
        M = np.exp(1j * w) * np.eye(n) - Acl
        g = abs((C @ np.linalg.solve(M, B))[0, 0])
        peak = max(peak, float(g))
    return peak


def terminal_region_rows(K_bar, constraints, thresholds, offsets, theta_max=1e3):
    """Constraint rows of the seed set X0 for the terminal-set iteration.

    X0 = {x_bar : |y| <= y_max, v_n <= v <= v_p, |r| <= y_max,
          |theta| <= theta_max, |K x_bar + d| <= u_max for both offsets}.
    """
    v_n, v_p = thresholds
    K = np.asarray(K_bar, dtype=float).reshape(1, 4)
    rows = [
        (np.array([1.0, 0, 0, 0]), constraints.y_max, "travel range"),
        (np.array([-1.0, 0, 0, 0]), constraints.y_max, "travel range"),
        (np.array([0, 1.0, 0, 0]), v_p, "velocity band"),
        (np.array([0, -1.0, 0, 0]), -v_n, "velocity band"),
        (np.array([0, 0, 1.0, 0]), constraints.y_max, "reference range"),
        (np.array([0, 0, -1.0, 0]), constraints.y_max, "reference range"),
        (np.array([0, 0, 0, 1.0]), theta_max, "integrator box"),
        (np.array([0, 0, 0, -1.0]), theta_max, "integrator box"),
    ]
    for d in offsets:
        rows.append((K[0], constraints.u_max - d, f"input bound (offset {d:+g} V)"))
        rows.append((-K[0], constraints.u_max + d, f"input bound (offset {d:+g} V)"))
    return rows


def design_terminal_set(aug: AugmentedModel, K_bar, constraints, thresholds,
                        offsets, theta_max=1e3, max_iter=500):
    """Maximal positively invariant set for the low-speed terminal loop.

    The seed set intersects the state box, the low-speed velocity band, the
    reference/integrator boxes and the input constraint mapped through the
    terminal law for both friction offsets.  Emptiness is reported with the
    name of the violated constraint family.
    """
    rows = terminal_region_rows(K_bar, constraints, thresholds, offsets, theta_max)
    G = np.vstack([r[0] for r in rows])
    h = np.array([r[1] for r in rows])
    X0 = Polyhedron(G, h)
    if is_empty(X0):
        # identify the first family whose addition empties the set
        for upto in range(1, len(rows) + 1):
            part = Polyhedron(np.vstack([r[0] for r in rows[:upto]]),
                              np.array([r[1] for r in rows[:upto]]))
            if is_empty(part):
                raise EmptyTerminalSetError(
                    f"terminal seed set empty at constraint: {rows[upto - 1][2]}")
        raise EmptyTerminalSetError("terminal seed set empty")
    K_err = aug.reduce_gain(K_bar)
    Acl4 = aug.A_bar + aug.B_bar @ np.asarray(K_bar, dtype=float).reshape(1, 4)
    # guard: the error loop must be stable for the fixpoint to terminate
    rho = spectral_radius(aug.error_A + aug.error_B @ K_err)
    if rho >= 1.0:
        raise SynthesisError(f"terminal loop unstable (spectral radius {rho:.6g})")
    X_f = max_invariant_set(Acl4, X0, max_iter=max_iter)
    if is_empty(X_f):
        raise EmptyTerminalSetError("terminal set empty after invariance iteration")
    return X_f


def equilibrium_state(model: PwaModel, K_bar, r):
    """Closed-loop equilibrium (y, v, r, theta) for a constant reference.

    Solves the low-speed steady state with y = r, then backs the integrator
    value out of the control law.  The effective input at equilibrium is
    K x_eq (the friction offset cancels between law and plant).
    """
    A, B = model.A2, model.B2
    M = np.array([[A[0, 1], B[0, 0]],
                  [A[1, 1] - 1.0, B[1, 0]]])
    rhs = np.array([(1.0 - A[0, 0]) * r, -A[1, 0] * r])
    v_ss, u_eff = np.linalg.solve(M, rhs)
    K = np.asarray(K_bar, dtype=float).ravel()
    if abs(K[3]) < 1e-12:
        raise SynthesisError("law has no integral action; equilibrium undefined")
    theta_ss = (u_eff - K[0] * (r - r) - K[1] * v_ss) / K[3]
    return np.array([r, v_ss, r, theta_ss])


def design_controller(model: PwaModel, Q=None, R=PAPER_R, robust=True,
                      gamma_range=(1e-3, 1e3), w_star=0.4, theta_max=1e3,
                      max_iter=500):
    """Full synthesis pipeline for one controller variant.

    robust=True designs the low-speed gain by the attenuation-level
    bisection; robust=False uses plain LQR for both modes (the comparison
    arm).  In both cases the achieved gamma is reported: the bisection level
    for the robust design, the measured sweep peak for the LQR design.
    """
    Q = PAPER_Q.copy() if Q is None else np.atleast_2d(np.asarray(Q, dtype=float))
    aug1 = augment(model.mode(1), 1)
    aug2 = augment(model.mode(3), 2)
    K1, P1 = design_lqr_gain(aug1, Q, R)
    if robust:
        K2, gamma = design_hinf_gain(aug2, R, gamma_range)
        P2 = design_terminal_cost(aug2, K2, Q, R)
    else:
        K2, P2 = design_lqr_gain(aug2, Q, R)
        gamma = frequency_sweep_peak(aug2, K2)
    X_f = design_terminal_set(aug2, K2, model.constraints,
                              (model.v_n, model.v_p),
                              (model.f_cp, model.f_cn), theta_max, max_iter)
    return TerminalDesign(
        K1=K1, K2=K2, P1=P1, P2=P2, X_f=X_f, gamma=float(gamma),
        w_star=float(w_star), kind="mpc-robust" if robust else "mpc-lqr",
        Q=Q, R=float(R), model_name=model.name,
    )


def certificates(model: PwaModel, design: TerminalDesign, n_grid=2000):
    """Certificate report for a synthesized design.

    Returns a dict with the decrease-inequality residual eigenvalue maxima,
    error-loop spectral radii, sweep peak against gamma, terminal set size
    and interior radius.
    """
    aug1 = augment(model.mode(1), 1)
    aug2 = augment(model.mode(3), 2)
    res1 = decrease_residual_eigs(aug1, design.K1, design.P1, design.Q, design.R)
    res2 = decrease_residual_eigs(aug2, design.K2, design.P2, design.Q, design.R)
    rho1 = spectral_radius(tracking_closed_loop(aug1, design.K1))
    rho2 = spectral_radius(tracking_closed_loop(aug2, design.K2))
    peak = frequency_sweep_peak(aug2, design.K2, n_grid)
    _, radius = chebyshev_center(design.X_f)
    return {
        "decrease_residual_max_mode1": float(np.max(res1)),
        "decrease_residual_max_mode2": float(np.max(res2)),
        "spectral_radius_mode1": rho1,
        "spectral_radius_mode2": rho2,
        "sweep_peak": peak,
        "gamma": design.gamma,
        "sweep_within_gamma": bool(peak <= design.gamma * (1.0 + 1e-3)),
        "terminal_set_rows": design.X_f.num_rows,
        "terminal_set_radius": float(radius) if radius is not None else None,
    }
