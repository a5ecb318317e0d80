"""Acceptance suite: runs every criterion at its stated tolerance and prints
one pass/fail line per criterion.

Run with `pytest tests/test_acceptance.py -v -s` to see the criterion lines.

Criterion 1's amplitude band is asserted as stated even though it cannot be
met by the pinned tuning (see the oscillation-scale analysis in the project
notes): the closed-loop position stiffness of roughly 280 V/mm pins the
hunting amplitude near (offset error)/(stiffness) ~ 0.002 mm.  The ratio
check -- the hard criterion -- passes with a wide margin.
"""

import time
from pathlib import Path

import numpy as np
import pytest

from pwampc import fileio
from pwampc.mpc import (MpcConfig, MpcController, default_explicit_samples,
                        export_explicit)
from pwampc.numerics import (LpProblem, QpProblem, dare_residual, dlyap_residual,
                             solve_dare, solve_dlyap, solve_lp, solve_qp)
from pwampc.augment import augment
from pwampc.plant import identified_model, region_of, step_pwa
from pwampc.polytope import sample
from pwampc.sim import Scenario, measure, run
from pwampc.synthesis import (certificates, design_controller,
                              tracking_closed_loop)

REPO = Path(__file__).resolve().parents[1]
CONFIGS = REPO / "configs"

_STATE = {}


def _report(line, ok):
    tag = "PASS" if ok else "FAIL"
    print(f"[{tag}] {line}")
    return ok


@pytest.fixture(scope="module")
def designs():
    if "designs" not in _STATE:
        ident = identified_model()
        t0 = time.perf_counter()
        rob = design_controller(ident, robust=True)
        lqr = design_controller(ident, robust=False)
        _STATE["synthesis_time"] = time.perf_counter() - t0
        _STATE["designs"] = (ident, rob, lqr)
    return _STATE["designs"]


def _run_arm(scenario_path, controller, design, name):
    sc = fileio.load_scenario(scenario_path)
    d = sc.to_dict()
    d["controller"] = controller
    d["name"] = name
    return run(Scenario.from_dict(d), design=design)


@pytest.fixture(scope="module")
def mismatch_results(designs):
    if "mismatch" not in _STATE:
        ident, rob, lqr = designs
        t0 = time.perf_counter()
        tr_lqr = _run_arm(CONFIGS / "mismatch-step.json", "mpc-lqr", lqr, "mm-lqr")
        tr_rob = _run_arm(CONFIGS / "mismatch-step.json", "mpc-robust", rob, "mm-rob")
        elapsed = time.perf_counter() - t0 + _STATE["synthesis_time"]
        _STATE["mismatch"] = (measure(tr_lqr), measure(tr_rob), elapsed)
    return _STATE["mismatch"]


class TestCriterion1Robustness:
    def test_hard_ratio_and_runtime(self, mismatch_results):
        m_lqr, m_rob, elapsed = mismatch_results
        amp_lqr = m_lqr.oscillation_amplitude
        amp_rob = m_rob.oscillation_amplitude
        sustained = np.isfinite(amp_lqr) and amp_lqr > 1e-4
        ratio = amp_rob / amp_lqr
        ok = sustained and ratio <= 0.6 and elapsed < 30.0
        _report(
            f"criterion 1 (hard): sustained oscillation amp_lqr={amp_lqr:.5f} mm, "
            f"robust/lqr ratio={ratio:.3f} <= 0.6, runtime={elapsed:.1f} s < 30", ok)
        assert sustained, "LQR arm shows no sustained oscillation"
        assert ratio <= 0.6
        assert elapsed < 30.0

    def test_soft_amplitude_band(self, mismatch_results):
        # Soft band as stated.  The identified-model tuning pins the LQR-arm
        # hunting amplitude near 0.002 mm (disturbance / position stiffness),
        # an order below this band; see notes/decisions for the analysis.
        m_lqr, _, _ = mismatch_results
        amp = m_lqr.oscillation_amplitude
        ok = 0.01 <= amp <= 0.06
        _report(f"criterion 1 (soft band): lqr oscillation {amp:.5f} mm in [0.01, 0.06]", ok)
        assert 0.01 <= amp <= 0.06


class TestCriterion2ZeroOffset:
    def test_nominal_step_zero_offset(self, designs):
        ident, rob, lqr = designs
        ok_all = True
        for arm, design in (("mpc-robust", rob), ("mpc-lqr", lqr)):
            tr = _run_arm(CONFIGS / "nominal-step.json", arm, design, f"nom-{arm}")
            after_1s = tr.t >= 1.0
            worst = float(np.max(np.abs(tr.y[after_1s] - tr.r[after_1s])))
            ok_all &= worst <= 1e-3
            assert worst <= 1e-3, f"{arm} offset {worst:.2e} mm"
        _report("criterion 2: nominal 1 mm step, |y-r| <= 1e-3 mm within 1 s "
                "(both arms)", ok_all)


class TestCriterion3PidOrdering:
    def test_square_wave_comparison(self, designs):
        ident, rob, _ = designs
        sc = fileio.load_scenario(CONFIGS / "square-wave.json")
        tr_pid = run(sc)
        d = sc.to_dict()
        d["controller"] = "mpc-robust"
        d["name"] = "square-mpc"
        tr_mpc = run(Scenario.from_dict(d), design=rob)
        os_pid = measure(tr_pid).overshoot
        os_mpc = measure(tr_mpc).overshoot
        ok = os_pid > 0.1 and os_pid > os_mpc and os_mpc <= 0.05
        _report(f"criterion 3: pid overshoot {os_pid:.3f} mm > 0.1, "
                f"> mpc {os_mpc:.3f} mm, mpc <= 0.05", ok)
        assert os_pid > 0.1
        assert os_pid > os_mpc
        assert os_mpc <= 0.05


class TestCriterion4Certificates:
    def test_terminal_design_certificates(self, designs):
        ident, rob, lqr = designs
        ok_all = True
        for design in (lqr, rob):
            c = certificates(ident, design, n_grid=2000)
            res = max(c["decrease_residual_max_mode1"], c["decrease_residual_max_mode2"])
            ok = (res <= 1e-8
                  and c["spectral_radius_mode1"] < 1.0
                  and c["spectral_radius_mode2"] < 1.0
                  and c["sweep_peak"] <= c["gamma"] * (1 + 1e-3))
            ok_all &= ok
            assert res <= 1e-8
            assert c["spectral_radius_mode1"] < 1.0
            assert c["spectral_radius_mode2"] < 1.0
            assert c["sweep_peak"] <= c["gamma"] * (1 + 1e-3)
        _report("criterion 4: decrease residuals <= 1e-8, spectral radii < 1, "
                "2000-point sweep peak <= gamma*(1+1e-3) (both arms)", ok_all)


class TestCriterion5Invariance:
    def test_terminal_set_forward_invariant(self, designs):
        ident, rob, _ = designs
        X_f = rob.X_f
        K2 = rob.K2
        u_max = ident.constraints.u_max
        pts = sample(X_f, 1000, seed=42)
        violations = 0
        for x0 in pts:
            x = x0.copy()
            for _ in range(100):
                tie = 1.0 if (x[2] - x[0]) >= 0 else -1.0
                reg = region_of(ident, x[1], tie)
                d = ident.f_cp if reg in (1, 3) else ident.f_cn
                u = float((K2 @ x)[0]) + d
                if abs(u) > u_max + 1e-9:
                    violations += 1
                    break
                xp = step_pwa(ident, x[:2], u, tie)
                if abs(xp[0]) > ident.constraints.y_max + 1e-9 \
                        or abs(xp[1]) > ident.constraints.v_max + 1e-9:
                    violations += 1
                    break
                x = np.array([xp[0], xp[1], x[2], x[3] + x[0] - x[2]])
                if not X_f.contains(x, tol=1e-9):
                    violations += 1
                    break
        _report(f"criterion 5: 1000 terminal-set samples, 100 steps under the "
                f"terminal law, violations={violations} (zero allowed)", violations == 0)
        assert violations == 0


class TestCriterion6Explicit:
    def test_table_matches_online(self, designs):
        ident, rob, _ = designs
        cfg = MpcConfig(model=ident, design=rob, epsilon=0.0)
        table = export_explicit(cfg, seed=0, n_samples=6000)
        ctrl = MpcController(cfg)
        candidates = default_explicit_samples(cfg, seed=2024, n=14000)
        feasible = located = 0
        max_diff = 0.0
        for x in candidates:
            if feasible >= 10000:
                break
            dec = ctrl.decide(x, 1.0)
            if dec.status not in ("qp", "terminal"):
                continue
            feasible += 1
            out = table.evaluate(x)
            if out is None:
                continue  # honest online fallback
            located += 1
            max_diff = max(max_diff, abs(out[0] - dec.u))
        coverage = located / feasible
        ok = feasible == 10000 and coverage >= 0.99 and max_diff <= 1e-6
        _report(f"criterion 6: {feasible} feasible states, table coverage "
                f"{coverage:.4f}, max |u_table - u_qp| = {max_diff:.2e} <= 1e-6; "
                f"region count {len(table.regions)} (reference design used 23; "
                f"logged, not asserted)", ok)
        assert feasible == 10000
        assert coverage >= 0.99
        assert max_diff <= 1e-6


class TestCriterion7SolverOracles:
    def test_riccati_lyapunov_residuals(self, designs):
        ident, rob, _ = designs
        aug2 = augment(ident.mode(3), 2)
        Q = np.diag([1e4, 0.5, 1e4])
        R = np.atleast_2d(0.001)
        P, K = solve_dare(aug2.error_A, aug2.error_B, Q, R)
        res_dare = np.linalg.norm(
            dare_residual(aug2.error_A, aug2.error_B, Q, R, P), 2)
        Acl = tracking_closed_loop(aug2, rob.K2)
        K_err = aug2.reduce_gain(rob.K2)
        W = Q + K_err.T * 0.001 @ K_err
        P_l = solve_dlyap(Acl, W)
        res_dlyap = np.linalg.norm(dlyap_residual(Acl, W, P_l), 2)
        ok = (res_dare <= 1e-8 * (1 + np.linalg.norm(P, 2))
              and res_dlyap <= 1e-8 * (1 + np.linalg.norm(P_l, 2)))
        _report(f"criterion 7a: DARE residual {res_dare:.2e}, Lyapunov residual "
                f"{res_dlyap:.2e} (both <= 1e-8 scaled)", ok)
        assert ok

    def test_qp_vs_grid_on_mpc_instances(self, designs):
        ident, rob, _ = designs
        cfg = MpcConfig(model=ident, design=rob, N=2, include_terminal=False,
                        epsilon=0.0)
        ctrl = MpcController(cfg)
        grid = np.linspace(-10.0, 10.0, 2001)  # 0.01 V
        rng = np.random.default_rng(77)
        worst = 0.0
        for trial in range(100):
            region = int(rng.integers(1, 5))
            rq = ctrl.region_qp(region)
            x = np.array([rng.uniform(-0.2, 0.2), rng.uniform(-3, 3),
                          rng.uniform(-0.2, 0.2), rng.uniform(-0.05, 0.05)])
            q = rq.qp_at(x)
            status, z, active, lam = solve_qp(q)
            assert status == "optimal"
            val = 0.5 * z @ q.H @ z + q.g @ z
            # separable evaluation of the quadratic over the full 2-D grid
            a, b, c = q.H[0, 0], q.H[1, 1], q.H[0, 1]
            J = (0.5 * a * grid ** 2 + q.g[0] * grid)[:, None] \
                + (0.5 * b * grid ** 2 + q.g[1] * grid)[None, :] \
                + c * grid[:, None] * grid[None, :]
            mask = np.ones(J.shape, dtype=bool)
            for i in range(q.G.shape[0]):
                mask &= (q.G[i, 0] * grid)[:, None] + (q.G[i, 1] * grid)[None, :] <= q.h[i] + 1e-12
            grid_min = float(np.min(J[mask]))
            assert val <= grid_min + 1e-9
            worst = max(worst, grid_min - val)
        ok = worst <= 0.02
        _report(f"criterion 7b: 100 random horizon-2 instances, worst "
                f"grid-vs-QP cost gap {worst:.2e} <= 0.02", ok)
        assert ok

    def test_lp_vs_vertex_enumeration(self):
        rng = np.random.default_rng(31)
        checked = 0
        for trial in range(100):
            G = np.vstack([np.eye(2), -np.eye(2), rng.standard_normal((4, 2))])
            h = np.concatenate([np.full(4, 2.5), rng.uniform(-0.2, 2.0, 4)])
            c = rng.standard_normal(2)
            status, z, val = solve_lp(LpProblem(c, G, h))
            best = _vertex_min(c, G, h)
            if best is None:
                assert status == "infeasible"
            else:
                assert status == "optimal"
                assert abs(val - best) <= 1e-9 * (1 + abs(best))
            checked += 1
        _report(f"criterion 7c: {checked} random 2-D LPs match vertex "
                f"enumeration exactly", checked == 100)


def _vertex_min(c, G, h, tol=1e-9):
    best = None
    m = G.shape[0]
    for i in range(m):
        for j in range(i + 1, m):
            M = np.vstack([G[i], G[j]])
            if abs(np.linalg.det(M)) < 1e-12:
                continue
            v = np.linalg.solve(M, np.array([h[i], h[j]]))
            if np.all(G @ v <= h + tol):
                val = float(c @ v)
                best = val if best is None else min(best, val)
    return best


class TestCriterion8Determinism:
    def test_cli_commands_byte_identical(self, tmp_path):
        from pwampc.cli import main

        short = Scenario(
            name="det", plant={"alias": "identified"}, controller="pid",
            reference={"type": "step", "amplitude": 1.0}, duration=0.3,
            epsilon=0.0, mpc={"pid_antiwindup": False})
        sc_path = tmp_path / "det.json"
        fileio.save_scenario(short, sc_path)
        model = CONFIGS / "identified-model.json"

        runs = {
            "design": ["design", "--model", str(model), "--kind", "mpc-lqr"],
            "simulate": ["simulate", "--scenario", str(sc_path)],
            "compare": ["compare", "--scenario", str(sc_path), "--controllers", "pid"],
            "identify": ["identify"],
        }
        ok_all = True
        for name, argv in runs.items():
            outs = []
            for rep in ("x", "y"):
                out = tmp_path / f"{name}-{rep}"
                assert main(argv + ["--out", str(out)]) == 0
                outs.append(out)
            files = sorted(p.name for p in outs[0].iterdir())
            assert files == sorted(p.name for p in outs[1].iterdir())
            for f in files:
                same = (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes()
                ok_all &= same
                assert same, f"{name}: {f} differs between reruns"
        # export-table needs the controller artifact from the design run
        ctrl_path = tmp_path / "design-x" / "controller-mpc-lqr.json"
        outs = []
        for rep in ("x", "y"):
            out = tmp_path / f"table-{rep}"
            assert main(["export-table", "--controller", str(ctrl_path),
                         "--out", str(out)]) == 0
            outs.append(out)
        for f in sorted(p.name for p in outs[0].iterdir()):
            same = (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes()
            ok_all &= same
            assert same
        _report("criterion 8: design/simulate/compare/identify/export-table "
                "byte-identical across reruns", ok_all)
