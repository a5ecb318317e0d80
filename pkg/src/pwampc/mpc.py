"""Receding-horizon controller: gain-scheduled prediction, condensed QP,
online solve with soft-constraint fallback, explicit-table export, deadband.

The prediction model is held fixed over the horizon at the current region's
dynamics and friction offset (gain scheduling).  Inside the terminal set the
terminal law u = K2 x_bar + d is applied directly; outside it the first
input of the condensed QP is applied.
"""

from dataclasses import dataclass, field

import numpy as np

from .augment import ERROR_MAP, augment
from .errors import NumericError, ValidationError
from .numerics import QpProblem, qp_kkt_residual, solve_qp
from .plant import PwaModel, region_of
from .polytope import Polyhedron
from .synthesis import TerminalDesign


@dataclass(frozen=True)
class MpcConfig:
    """Receding-horizon controller configuration."""

    model: PwaModel
    design: TerminalDesign
    N: int = 5
    Q: np.ndarray = None
    R: float = None
    epsilon: float = 0.5          # deadband velocity, mm/s
    dual_mode: bool = True        # terminal law applied inside X_f
    include_terminal: bool = True
    state_slack_weight: float = 1e6
    terminal_slack_weight: float = 1e6

    def __post_init__(self):
        if self.N < 1:
            raise ValidationError("horizon must be at least 1")
        if self.epsilon < 0:
            raise ValidationError("deadband must be nonnegative")
        Q = self.design.Q if self.Q is None else np.atleast_2d(np.asarray(self.Q, dtype=float))
        R = self.design.R if self.R is None else float(self.R)
        if R <= 0:
            raise ValidationError("R must be positive")
        if np.min(np.linalg.eigvalsh(0.5 * (Q + Q.T))) < -1e-12:
            raise ValidationError("Q must be positive semidefinite")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)


@dataclass(frozen=True)
class ControlDecision:
    """One control move with its provenance."""

    u: float
    region: int
    status: str              # terminal | qp | qp-state-slack | qp-terminal-slack | fault-zero
    cost: float
    active_set: tuple = ()


@dataclass(frozen=True)
class ExplicitRegion:
    """One critical region with its affine law u = K x_bar + d."""

    polyhedron: Polyhedron
    K: np.ndarray
    d: float
    mode_index: int
    source: str              # "terminal" or "active-set"
    active_set: tuple = ()
    region_index: int = 0    # plant region whose prediction built this law


@dataclass
class ExplicitController:
    """Point-location lookup table equivalent to the online QP."""

    regions: list
    fallback: bool = False   # True when the enumeration budget was exceeded
    coverage: float = 1.0    # fraction of the seeding samples located

    def evaluate(self, x_bar, tol=1e-9):
        """Affine law of the first region containing x_bar, or None."""
        x = np.asarray(x_bar, dtype=float).ravel()
        for idx, reg in enumerate(self.regions):
            if reg.polyhedron.contains(x, tol=tol):
                return float((reg.K @ x)[0]) + reg.d, idx
        return None

    def locate_all(self, x_bar, tol=1e-9):
        x = np.asarray(x_bar, dtype=float).ravel()
        return [i for i, reg in enumerate(self.regions) if reg.polyhedron.contains(x, tol=tol)]


class _RegionQp:
    """Condensed QP data for one (mode, offset) prediction configuration.

    The QP in U = (u_0..u_{N-1}) depends on the parameter x_bar affinely:
        cost      0.5 U'H U + (Fg x + g0)'U + const(x)
        rows      G U <= h0 + Eh x
    which is what the explicit-region reconstruction needs.
    """

    def __init__(self, cfg: MpcConfig, region_index: int):
        model, design, N = cfg.model, cfg.design, cfg.N
        mode = model.mode(region_index)
        self.region_index = region_index
        self.mode_index = 1 if region_index in (1, 2) else 2
        self.offset = mode.friction_offset
        aug = augment(mode, self.mode_index)
        A, B = aug.A_bar, aug.B_bar
        P_bar = design.cost_for_mode(self.mode_index)
        Qz = ERROR_MAP.T @ cfg.Q @ ERROR_MAP

        # prediction stacks: X = Sx x + Su (U - d 1)
        Sx = np.zeros((4 * N, 4))
        Su = np.zeros((4 * N, N))
        Ak = np.eye(4)
        powers = [np.eye(4)]
        for k in range(N):
            Ak = A @ Ak
            Sx[4 * k:4 * k + 4] = Ak
            powers.append(Ak)
        for k in range(1, N + 1):
            for j in range(k):
                Su[4 * (k - 1):4 * k, j] = (powers[k - 1 - j] @ B)[:, 0]

        W = np.zeros((4 * N, 4 * N))
        for k in range(1, N):
            W[4 * (k - 1):4 * k, 4 * (k - 1):4 * k] = Qz
        W[4 * (N - 1):, 4 * (N - 1):] = P_bar

        d = self.offset
        R = cfg.R
        self.H = 2.0 * (R * np.eye(N) + Su.T @ W @ Su)
        self.H = 0.5 * (self.H + self.H.T)
        # g(x) = Fg x + g0;   b(x) = Sx x - Su d 1
        ones = np.ones(N)
        self.Fg = 2.0 * Su.T @ W @ Sx
        self.g0 = -2.0 * Su.T @ W @ Su @ (d * ones) - 2.0 * R * d * ones
        # constant cost term pieces: b'Wb + R N d^2 + e0'Q e0
        self._W = W
        self._Sx = Sx
        self._Su = Su
        self._Qz = Qz

        rows_G = [np.eye(N), -np.eye(N)]
        rows_h0 = [np.full(N, model.constraints.u_max), np.full(N, model.constraints.u_max)]
        rows_Eh = [np.zeros((N, 4)), np.zeros((N, 4))]
        self.n_input_rows = 2 * N

        bounds = np.array([model.constraints.y_max, model.constraints.v_max])
        n_state_rows = 0
        for k in range(1, N + 1):
            blk_Su = Su[4 * (k - 1):4 * k]
            blk_Sx = Sx[4 * (k - 1):4 * k]
            for sign in (1.0, -1.0):
                E2 = sign * np.eye(2, 4)   # selects (y, v) of x_bar_k
                rows_G.append(E2 @ blk_Su)
                rows_Eh.append(-E2 @ blk_Sx)
                rows_h0.append(bounds + (E2 @ blk_Su @ (d * ones)))
                n_state_rows += 2
        self.n_state_rows = n_state_rows

        self.n_terminal_rows = 0
        if cfg.include_terminal:
            Gf, hf = design.X_f.G, design.X_f.h
            blk_Su = Su[4 * (N - 1):]
            blk_Sx = Sx[4 * (N - 1):]
            rows_G.append(Gf @ blk_Su)
            rows_Eh.append(-Gf @ blk_Sx)
            rows_h0.append(hf + Gf @ blk_Su @ (d * ones))
            self.n_terminal_rows = Gf.shape[0]

        self.G = np.vstack(rows_G)
        self.h0 = np.concatenate(rows_h0)
        self.Eh = np.vstack(rows_Eh)
        self.N = N
        self.R = R

    def cost_const(self, x_bar):
        """Parameter-dependent constant of the condensed cost (stage 0 plus
        the input-free part of the prediction)."""
        b = self._Sx @ x_bar - self._Su @ (self.offset * np.ones(self.N))
        return float(b @ self._W @ b + self.R * self.N * self.offset ** 2
                     + x_bar @ self._Qz @ x_bar)

    def qp_at(self, x_bar):
        g = self.Fg @ x_bar + self.g0
        h = self.h0 + self.Eh @ x_bar
        return QpProblem(self.H, g, self.G, h)

    def value(self, x_bar, U):
        q = self.qp_at(x_bar)
        return float(0.5 * U @ self.H @ U + q.g @ U + self.cost_const(x_bar))


class MpcController:
    """Online receding-horizon controller with a warm-start cache.

    The warm-start cache is the only mutable state and is confined to one
    control loop; multiple controllers over immutable configs can run in
    parallel scenarios.
    """

    def __init__(self, cfg: MpcConfig):
        self.cfg = cfg
        self._qps = {r: _RegionQp(cfg, r) for r in (1, 2, 3, 4)}
        self._warm = {}

    def region_qp(self, region_index):
        return self._qps[region_index]

    def decide(self, x_bar, tie_hint=1.0) -> ControlDecision:
        """Control move at the measured augmented state."""
        cfg = self.cfg
        x = np.asarray(x_bar, dtype=float).ravel()
        if not np.all(np.isfinite(x)):
            return ControlDecision(0.0, 0, "fault-zero", float("nan"))
        region = region_of(cfg.model, x[1], tie_hint)
        rq = self._qps[region]
        u_max = cfg.model.constraints.u_max

        if cfg.dual_mode and cfg.include_terminal and cfg.design.X_f.contains(x):
            K = cfg.design.K2
            d = cfg.model.f_cp if x[1] > 0 or (x[1] == 0 and tie_hint >= 0) else cfg.model.f_cn
            u = float((K @ x)[0]) + d
            e = ERROR_MAP @ x
            P_err = cfg.design.P2[np.ix_([0, 1, 3], [0, 1, 3])]
            cost = float(e @ P_err @ e)
            return ControlDecision(float(np.clip(u, -u_max, u_max)), region, "terminal", cost)

        try:
            status, U, active, lam = solve_qp(rq.qp_at(x), warm_active=self._warm.get(region))
        except NumericError:
            return ControlDecision(0.0, region, "fault-zero", float("nan"))
        if status == "optimal":
            self._warm[region] = active
            u = float(np.clip(U[0], -u_max, u_max))
            return ControlDecision(u, region, "qp", rq.value(x, U), active)

        for slack_terminal, label in ((False, "qp-state-slack"), (True, "qp-terminal-slack")):
            try:
                out = self._solve_soft(rq, x, slack_terminal)
            except NumericError:
                out = None
            if out is not None:
                U, cost = out
                u = float(np.clip(U[0], -u_max, u_max))
                return ControlDecision(u, region, label, cost)
        return ControlDecision(0.0, region, "fault-zero", float("nan"))

    def _solve_soft(self, rq: _RegionQp, x, slack_terminal):
        """Soft-constraint retry: scalar slack on the state rows, then also
        on the terminal rows.  Input bounds are never slackened."""
        cfg = self.cfg
        N = rq.N
        n_extra = 2 if slack_terminal else 1
        n = N + n_extra
        H = np.zeros((n, n))
        H[:N, :N] = rq.H
        H[N, N] = 2.0 * cfg.state_slack_weight
        if slack_terminal:
            H[N + 1, N + 1] = 2.0 * cfg.terminal_slack_weight
        g = np.zeros(n)
        g[:N] = rq.Fg @ x + rq.g0
        h = rq.h0 + rq.Eh @ x
        m = rq.G.shape[0]
        G = np.zeros((m + n_extra, n))
        G[:m, :N] = rq.G
        i0 = rq.n_input_rows
        i1 = i0 + rq.n_state_rows
        G[i0:i1, N] = -1.0
        if slack_terminal and rq.n_terminal_rows:
            G[i1:i1 + rq.n_terminal_rows, N + 1] = -1.0
        G[m, N] = -1.0
        h = np.concatenate([h, [0.0]])
        if slack_terminal:
            G[m + 1, N + 1] = -1.0
            h = np.concatenate([h, [0.0]])
        status, z, active, lam = solve_qp(QpProblem(H, g, G, h))
        if status != "optimal":
            return None
        U = z[:N]
        return U, rq.value(x, U)


def build_qp(cfg: MpcConfig, x_bar, region_index):
    """Condensed QP for the given state and region configuration."""
    return _RegionQp(cfg, region_index).qp_at(np.asarray(x_bar, dtype=float).ravel())


def solve_mpc(cfg: MpcConfig, x_bar, tie_hint=1.0) -> ControlDecision:
    """One-shot receding-horizon decision (no warm-start reuse)."""
    return MpcController(cfg).decide(x_bar, tie_hint)


def apply_deadband(u, v, epsilon):
    """Zero the input inside the low-velocity band (boundary inside)."""
    return 0.0 if abs(v) <= epsilon else u


def _region_guard_rows(model: PwaModel, region_index):
    """Polyhedral guard of a plant region in x_bar coordinates."""
    v_p, v_n = model.v_p, model.v_n
    ev = np.array([0.0, 1.0, 0.0, 0.0])
    if region_index == 1:
        return [(-ev, -v_p)]
    if region_index == 2:
        return [(ev, v_n)]
    if region_index == 3:
        return [(ev, v_p), (-ev, 0.0)]
    return [(-ev, -v_n), (ev, 0.0)]


def export_explicit(cfg: MpcConfig, samples=None, seed=0, n_samples=3000,
                    max_regions=4000, refine_rounds=3) -> ExplicitController:
    """Enumerate the explicit piecewise-affine form of the controller.

    Active sets are harvested from QP solves on a state sample set (default:
    a deterministic mix of terminal-set samples and feasible perturbations
    around them); each distinct active set yields one critical region via
    KKT elimination.  The terminal-set regions come first so point location
    agrees with the online dual-mode precedence.  After the base harvest,
    `refine_rounds` fresh sample batches are scanned and any new active sets
    are added until a round discovers nothing.  If the region budget is
    exceeded the table is marked partial and the online fallback flag is
    set.
    """
    controller = MpcController(cfg)
    design, model = cfg.design, cfg.model
    regions = []

    for sign_region, offset in ((3, model.f_cp), (4, model.f_cn)):
        guard = _region_guard_rows(model, sign_region)[-1:]  # the v-sign row
        G = np.vstack([design.X_f.G] + [g for g, _ in guard])
        h = np.concatenate([design.X_f.h, [b for _, b in guard]])
        regions.append(ExplicitRegion(
            polyhedron=Polyhedron(G, h, normalize=False),
            K=design.K2.copy().reshape(1, 4), d=offset, mode_index=2,
            source="terminal", region_index=sign_region))

    seen = {}
    budget_hit = False

    def harvest(batch):
        located = new = 0
        nonlocal budget_hit
        for x in batch:
            region = region_of(model, x[1], 1.0)
            rq = controller.region_qp(region)
            if cfg.dual_mode and design.X_f.contains(x):
                located += 1
                continue
            try:
                status, U, active, lam = solve_qp(rq.qp_at(x))
            except NumericError:
                continue
            if status != "optimal":
                continue
            located += 1
            key = (region, active)
            if key in seen:
                continue
            if len(regions) >= max_regions:
                budget_hit = True
                continue
            reg = _critical_region(model, rq, region, active)
            if reg is not None:
                seen[key] = True
                regions.append(reg)
                new += 1
        return located, new

    if samples is None:
        samples = default_explicit_samples(cfg, seed=seed, n=n_samples)
    located, _ = harvest(samples)
    coverage = located / max(len(samples), 1)
    for round_idx in range(refine_rounds):
        if budget_hit:
            break
        batch = default_explicit_samples(cfg, seed=seed + 1000 * (round_idx + 1),
                                         n=n_samples)
        _, new = harvest(batch)
        if new == 0:
            break
    return ExplicitController(regions=regions, fallback=budget_hit, coverage=coverage)


def _critical_region(model, rq: _RegionQp, region_index, active):
    """Affine law and region polyhedron from the KKT system of one active set."""
    H, G, Fg, g0, Eh, h0 = rq.H, rq.G, rq.Fg, rq.g0, rq.Eh, rq.h0
    act = list(active)
    inact = [i for i in range(G.shape[0]) if i not in set(act)]
    Hinv_Fg = np.linalg.solve(H, Fg)
    Hinv_g0 = np.linalg.solve(H, g0)
    if act:
        Ga = G[act]
        S = Ga @ np.linalg.solve(H, Ga.T)
        try:
            Si = np.linalg.inv(S)
        except np.linalg.LinAlgError:
            return None  # degenerate active set; online fallback covers it
        Lam = -Si @ (Eh[act] + Ga @ Hinv_Fg)
        lam0 = -Si @ (h0[act] + Ga @ Hinv_g0)
        Zx = -Hinv_Fg - np.linalg.solve(H, Ga.T @ Lam)
        z0 = -Hinv_g0 - np.linalg.solve(H, Ga.T @ lam0)
    else:
        Lam = np.zeros((0, 4))
        lam0 = np.zeros(0)
        Zx = -Hinv_Fg
        z0 = -Hinv_g0

    rows_G = []
    rows_h = []
    if inact:
        rows_G.append(G[inact] @ Zx - Eh[inact])
        rows_h.append(h0[inact] - G[inact] @ z0)
    if act:
        rows_G.append(-Lam)
        rows_h.append(lam0)
    for gr, hr in _region_guard_rows(model, region_index):
        rows_G.append(gr.reshape(1, 4))
        rows_h.append(np.atleast_1d(hr))
    P = Polyhedron(np.vstack(rows_G), np.concatenate(rows_h))
    K = Zx[0].reshape(1, 4)
    d = float(z0[0])
    return ExplicitRegion(P, K, d, rq.mode_index, "active-set", tuple(active),
                          region_index)


def default_explicit_samples(cfg: MpcConfig, seed=0, n=3000):
    """Deterministic state samples for active-set harvesting.

    Mixes terminal-set samples (scaled outward to leave X_f), jittered
    equilibrium neighborhoods, and coarse sweeps over the feasible corridor
    |y - r| small.
    """
    from .polytope import sample as poly_sample
    from .synthesis import equilibrium_state

    rng = np.random.default_rng(seed)
    model, design = cfg.model, cfg.design
    pts = []
    base = poly_sample(design.X_f, max(n // 3, 100), seed=seed)
    for x in base:
        for scale in (1.0, 1.5, 3.0, 8.0):
            z = x.copy()
            z[0] = x[2] + scale * (x[0] - x[2])   # push y away from r
            z[1] = x[1] * scale
            z[3] = x[3] * scale
            pts.append(z)
    for r in (-1.0, -0.5, 0.0, 0.5, 1.0):
        try:
            eq = equilibrium_state(model, design.K2, r)
        except Exception:
            continue
        for _ in range(n // 15):
            z = eq + rng.standard_normal(4) * np.array([0.05, 1.0, 0.0, 0.05])
            pts.append(z)
    return np.array(pts[:n]) if len(pts) > n else np.array(pts)
