"""Dense linear-algebra and optimization kernels: DARE, discrete Lyapunov, LP, QP.

All routines are pure functions on numpy arrays and safe to call from
concurrent batch runs.  Tolerances are centralized in :class:`Tolerances`.
"""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .errors import NumericError, SynthesisError


@dataclass(frozen=True)
class Tolerances:
    """Central numeric tolerance record shared by all solver kernels."""

    riccati_residual: float = 1e-8
    lyapunov_residual: float = 1e-8
    qp_kkt: float = 1e-7
    qp_feasibility: float = 1e-8
    lp_relative: float = 1e-9
    inclusion_slack: float = 1e-9
    psd_symmetry: float = 1e-9
    spectral_margin: float = 1e-6


DEFAULT_TOL = Tolerances()


@dataclass(frozen=True)
class LpProblem:
    """min c.z  subject to  G z <= h."""

    c: np.ndarray
    G: np.ndarray
    h: np.ndarray


@dataclass(frozen=True)
class QpProblem:
    """min 0.5 z'H z + g.z  subject to  G z <= h.

    H is symmetrized on construction; asymmetry beyond the tolerance is an
    input error.
    """

    H: np.ndarray
    g: np.ndarray
    G: np.ndarray
    h: np.ndarray

    def __post_init__(self):
        H = np.asarray(self.H, dtype=float)
        if H.shape[0] != H.shape[1]:
            raise ValueError("H must be square")
        asym = np.max(np.abs(H - H.T)) if H.size else 0.0
        if asym > DEFAULT_TOL.psd_symmetry * (1.0 + np.max(np.abs(H))):
            raise ValueError(f"H not symmetric (asymmetry {asym:.3e})")
        object.__setattr__(self, "H", 0.5 * (H + H.T))
        object.__setattr__(self, "g", np.asarray(self.g, dtype=float).ravel())
        object.__setattr__(self, "G", np.atleast_2d(np.asarray(self.G, dtype=float)))
        object.__setattr__(self, "h", np.asarray(self.h, dtype=float).ravel())
        if self.G.shape[1] != H.shape[0] or self.G.shape[0] != self.h.shape[0]:
            raise ValueError("inconsistent QP constraint dimensions")


def is_schur_stable(A, margin=0.0):
    """True if all eigenvalues of A lie strictly inside the unit circle."""
    return spectral_radius(A) < 1.0 - margin


def spectral_radius(A):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(A))))


def _check_stabilizable(A, B):
    """PBH test: every eigenvalue on or outside the unit circle must be
    controllable."""
    n = A.shape[0]
    for lam in np.linalg.eigvals(A):
        if abs(lam) < 1.0 - 1e-9:
            continue
        M = np.hstack([A - lam * np.eye(n), B])
        if np.linalg.matrix_rank(M, tol=1e-10) < n:
            raise SynthesisError(
                f"pair (A, B) not stabilizable: uncontrollable eigenvalue {lam:.6g}"
            )


def dare_residual(A, B, Q, R, P):
    """Residual of the discrete algebraic Riccati map at P."""
    BtPB = B.T @ P @ B
    K = -np.linalg.solve(R + BtPB, B.T @ P @ A)
    return A.T @ P @ A - P + Q + A.T @ P @ B @ K


def solve_dare(A, B, Q, R, tol=DEFAULT_TOL, max_iter=200):
    """Solve A'PA - P - A'PB(R + B'PB)^-1 B'PA + Q = 0 for the stabilizing P.

    Uses the structure-preserving doubling iteration, which converges
    quadratically for stabilizable/detectable data and is deterministic.

    Returns
    -------
    P : ndarray
        Stabilizing solution, symmetric positive semidefinite.
    K : ndarray
        Feedback gain with closed loop A + B K.

    Raises
    ------
    SynthesisError
        If (A, B) fails the PBH stabilizability test.
    NumericError
        If the doubling iteration diverges or stalls.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    _check_stabilizable(A, B)

    G = B @ np.linalg.solve(R, B.T)
    P = _sda(A, G, Q, max_iter)

    BtPB = B.T @ P @ B
    K = -np.linalg.solve(R + BtPB, B.T @ P @ A)
    res = np.linalg.norm(dare_residual(A, B, Q, R, P), 2)
    if not np.isfinite(res) or res > tol.riccati_residual * (1.0 + np.linalg.norm(P, 2)):
        raise NumericError(f"DARE residual {res:.3e} exceeds tolerance")
    return P, K


def _sda(A, G, H, max_iter):
    """Structure-preserving doubling on the symplectic pencil.

    Iterates (A, G, H) -> (A', G', H') with H -> P.  G may be indefinite
    (game-type equations); divergence is reported via NumericError.
    """
    n = A.shape[0]
    Ak, Gk, Hk = A.copy(), G.copy(), H.copy()
    I = np.eye(n)
    for _ in range(max_iter):
        M = I + Gk @ Hk
        try:
            W1 = np.linalg.solve(M, Ak)               # (I + G H)^-1 A
            W2 = np.linalg.solve(M, Gk @ Ak.T)        # (I + G H)^-1 G A'
        except np.linalg.LinAlgError as exc:
            raise NumericError("doubling iteration singular") from exc
        A_next = Ak @ W1
        G_next = Gk + Ak @ W2
        H_next = Hk + Ak.T @ (Hk @ W1)
        H_next = 0.5 * (H_next + H_next.T)
        G_next = 0.5 * (G_next + G_next.T)
        if not (np.all(np.isfinite(A_next)) and np.all(np.isfinite(H_next))):
            raise NumericError("doubling iteration diverged")
        delta = np.linalg.norm(H_next - Hk, 2)
        Ak, Gk, Hk = A_next, G_next, H_next
        if delta <= 1e-14 * (1.0 + np.linalg.norm(Hk, 2)):
            return Hk
    raise NumericError("doubling iteration did not converge")


def solve_game_dare(A, B, E, Q, R, gamma, tol=DEFAULT_TOL, max_iter=200):
    """Stabilizing solution of the soft-constrained (game-type) Riccati equation.

    Dynamics x+ = A x + B u + E w with payoff
    sum x'Qx + u'Ru - gamma^2 w'w.  Returns (P, Ku, Lw) where u = Ku x is the
    minimizing feedback and w = Lw x the worst-case disturbance.

    Raises NumericError when no stabilizing solution exists at this gamma
    (the caller treats that as "gamma infeasible").
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    B = np.asarray(B, dtype=float).reshape(n, -1)
    E = np.asarray(E, dtype=float).reshape(n, -1)
    nu, nw = B.shape[1], E.shape[1]
    Bx = np.hstack([B, E])
    Rx = np.zeros((nu + nw, nu + nw))
    Rx[:nu, :nu] = np.atleast_2d(R)
    Rx[nu:, nu:] = -(gamma ** 2) * np.eye(nw)

    G = Bx @ np.linalg.solve(Rx, Bx.T)
    P = _sda(A, G, np.atleast_2d(Q), max_iter)

    M = Rx + Bx.T @ P @ Bx
    if np.min(np.linalg.eigvalsh(M[:nu, :nu])) <= 0:
        raise NumericError("game Riccati: control block not positive definite")
    # positivity condition gamma^2 I - E'PE > 0: required for the static
    # feedback u = Ku x to certify the attenuation level
    if np.max(np.linalg.eigvalsh(M[nu:, nu:])) >= 0:
        raise NumericError("game Riccati: disturbance positivity condition fails")
    KL = -np.linalg.solve(M, Bx.T @ P @ A)
    Ku, Lw = KL[:nu, :], KL[nu:, :]
    if np.min(np.linalg.eigvalsh(0.5 * (P + P.T))) < -1e-8 * (1 + np.linalg.norm(P, 2)):
        raise NumericError("game Riccati: solution not positive semidefinite")
    return P, Ku, Lw


def dlyap_residual(Acl, W, P):
    return Acl.T @ P @ Acl - P + W


def solve_dlyap(Acl, W, tol=DEFAULT_TOL):
    """Solve Acl'P Acl - P = -W via the Kronecker linear system.

    Requires Acl Schur stable; W symmetric positive semidefinite.
    """
    Acl = np.atleast_2d(np.asarray(Acl, dtype=float))
    W = np.atleast_2d(np.asarray(W, dtype=float))
    rho = spectral_radius(Acl)
    if rho >= 1.0:
        raise SynthesisError(f"Lyapunov equation needs spectral radius < 1, got {rho:.6g}")
    n = Acl.shape[0]
    lhs = np.eye(n * n) - np.kron(Acl.T, Acl.T)
    P = np.linalg.solve(lhs, W.reshape(n * n)).reshape(n, n)
    P = 0.5 * (P + P.T)
    res = np.linalg.norm(dlyap_residual(Acl, W, P), 2)
    if res > tol.lyapunov_residual * (1.0 + np.linalg.norm(P, 2)):
        raise NumericError(f"Lyapunov residual {res:.3e} exceeds tolerance")
    return P


def solve_lp(p: LpProblem):
    """Solve min c.z s.t. G z <= h.

    Returns (status, z, value) with status in {"optimal", "infeasible",
    "unbounded"}.  Numerical failures raise NumericError instead of being
    conflated with infeasibility.
    """
    c = np.asarray(p.c, dtype=float).ravel()
    G = np.atleast_2d(np.asarray(p.G, dtype=float))
    h = np.asarray(p.h, dtype=float).ravel()
    res = linprog(c, A_ub=G, b_ub=h, bounds=[(None, None)] * c.size, method="highs")
    if res.status == 0:
        return "optimal", np.asarray(res.x, dtype=float), float(res.fun)
    if res.status == 2:
        return "infeasible", None, None
    if res.status == 3:
        return "unbounded", None, None
    raise NumericError(f"LP solver failure: {res.message}")


class _QpWork:
    """Mutable state of one Goldfarb-Idnani solve."""

    __slots__ = ("z", "active", "lam")

    def __init__(self, z):
        self.z = z
        self.active = []
        self.lam = np.zeros(0)


def solve_qp(q: QpProblem, tol=DEFAULT_TOL, max_iter=500, warm_active=None):
    """Dense dual active-set solve of min 0.5 z'Hz + g.z s.t. Gz <= h.

    Implements the Goldfarb-Idnani method; H must be positive definite.
    The exact optimal active set is returned so callers can reconstruct the
    parametric (explicit) solution.

    Returns
    -------
    status : str
        "optimal" or "infeasible".
    z : ndarray or None
    active : tuple of int
        Indices of rows active at the optimum (sorted).
    lam : ndarray
        Multipliers for the active rows, same order as `active`.

    Notes
    -----
    `warm_active` seeds the active set from a previous solve of a nearby
    problem; seeding is advisory and is dropped if inconsistent.
    """
    H, g, G, h = q.H, q.g, q.G, q.h
    n = H.shape[0]
    m = G.shape[0]
    try:
        z0 = -np.linalg.solve(H, g)
    except np.linalg.LinAlgError as exc:
        raise NumericError("QP Hessian singular; positive definite H required") from exc
    work = _QpWork(z0)

    if warm_active:
        seed = [i for i in warm_active if 0 <= i < m]
        if seed:
            _try_warm_start(work, H, g, G, h, seed)

    feas_tol = tol.qp_feasibility
    for _ in range(max_iter):
        viol = G @ work.z - h
        p = int(np.argmax(viol))
        if viol[p] <= feas_tol:
            _polish_active(work, H, g, G, h)
            order = np.argsort(work.active)
            active = tuple(int(work.active[i]) for i in order)
            lam = work.lam[order] if len(work.active) else np.zeros(0)
            return "optimal", work.z, active, lam
        if not _gi_add_constraint(work, H, g, G, h, p, max_iter):
            return "infeasible", None, tuple(sorted(work.active)), None
    raise NumericError("QP active-set iteration limit reached")


def _try_warm_start(work, H, g, G, h, seed):
    """Move to the equality-constrained optimum of the seeded set if its
    multipliers are dual feasible; otherwise keep the unconstrained start."""
    Ga = G[seed]
    try:
        z, lam = _eqp_solve(H, g, Ga, h[seed])
    except np.linalg.LinAlgError:
        return
    if np.all(lam >= 0):
        work.z = z
        work.active = list(seed)
        work.lam = lam


def _eqp_solve(H, g, Ga, ha):
    """Solve the equality-constrained QP (active rows as equalities)."""
    n = H.shape[0]
    k = Ga.shape[0]
    KKT = np.zeros((n + k, n + k))
    KKT[:n, :n] = H
    KKT[:n, n:] = Ga.T
    KKT[n:, :n] = Ga
    rhs = np.concatenate([-g, ha])
    sol = np.linalg.solve(KKT, rhs)
    return sol[:n], sol[n:]


def _gi_add_constraint(work, H, g, G, h, p, max_iter):
    """Goldfarb-Idnani primal/dual step loop to activate violated row p.

    Returns False when the QP is infeasible (dual ray with no blocking
    primal step).
    """
    gp = G[p]
    lam_p = 0.0
    for _ in range(max_iter):
        Ga = G[work.active] if work.active else np.zeros((0, H.shape[0]))
        # direction pair: primal step z-dot and active-multiplier rates r
        k = len(work.active)
        KKT = np.zeros((H.shape[0] + k, H.shape[0] + k))
        KKT[: H.shape[0], : H.shape[0]] = H
        if k:
            KKT[: H.shape[0], H.shape[0]:] = Ga.T
            KKT[H.shape[0]:, : H.shape[0]] = Ga
        rhs = np.concatenate([-gp, np.zeros(k)])
        try:
            sol = np.linalg.solve(KKT, rhs)
        except np.linalg.LinAlgError:
            # degenerate active set: drop the most recent row and retry
            if not work.active:
                raise NumericError("QP degenerate at empty active set")
            work.active.pop()
            work.lam = work.lam[:-1]
            continue
        zdot = sol[: H.shape[0]]
        r = -sol[H.shape[0]:]

        slope = gp @ zdot
        # dual step bound: first active multiplier driven to zero
        t1 = np.inf
        drop = -1
        for j in range(k):
            if r[j] > 1e-14:
                cand = work.lam[j] / r[j]
                if cand < t1:
                    t1, drop = cand, j
        # primal step to make row p active
        if slope < -1e-14:
            t2 = (G[p] @ work.z - h[p]) / (-slope)
        else:
            t2 = np.inf

        t = min(t1, t2)
        if not np.isfinite(t):
            return False  # infeasible: no step can restore row p
        if t2 <= t1:
            work.z = work.z + t2 * zdot
            work.lam = np.append(work.lam - t2 * r, lam_p + t2)
            work.active.append(p)
            return True
        # partial (dual) step: drop the blocking row, stay on row p
        work.z = work.z + t1 * zdot
        lam_p += t1
        work.lam = work.lam - t1 * r
        work.active.pop(drop)
        work.lam = np.delete(work.lam, drop)
    raise NumericError("QP inner iteration limit reached")


def _polish_active(work, H, g, G, h):
    """Resolve on the final active set and prune negative multipliers."""
    for _ in range(len(work.active) + 1):
        if not work.active:
            work.z = -np.linalg.solve(H, g)
            work.lam = np.zeros(0)
            return
        Ga = G[work.active]
        try:
            z, lam = _eqp_solve(H, g, Ga, h[work.active])
        except np.linalg.LinAlgError:
            work.active.pop()
            work.lam = work.lam[:-1]
            continue
        if np.min(lam) < -1e-10:
            j = int(np.argmin(lam))
            work.active.pop(j)
            continue
        work.z, work.lam = z, lam
        return


def qp_kkt_residual(q: QpProblem, z, active, lam):
    """Max of stationarity and primal feasibility violations at (z, active)."""
    grad = q.H @ z + q.g
    if len(active):
        grad = grad + q.G[list(active)].T @ lam
    stat = float(np.max(np.abs(grad))) if grad.size else 0.0
    feas = float(np.max(q.G @ z - q.h)) if q.h.size else 0.0
    return max(stat, feas)
