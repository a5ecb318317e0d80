"""Deterministic closed-loop simulation: scenarios, mismatch injection,
metric extraction.

The loop is exact-step: read state -> deadband/controller -> clamp -> plant
step -> integrator update.  Runs are reproducible bit-exactly for a given
scenario on the same machine.
"""

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .baseline import PidController
from .errors import SimulationFault, ValidationError
from .mpc import MpcConfig, MpcController, apply_deadband
from .plant import (NonlinearFrictionPlant, PwaModel, assumed_model,
                    identified_model, nonlinear_model, region_of, step_nonlinear,
                    step_pwa)
from .synthesis import design_controller

CONTROLLER_KINDS = ("mpc-lqr", "mpc-robust", "pid")


@dataclass(frozen=True)
class Scenario:
    """One closed-loop experiment description (serializable)."""

    name: str
    plant: dict                      # model dict or {"alias": ...}
    controller: str                  # mpc-lqr | mpc-robust | pid
    reference: dict                  # {"type": "step"|"square", "amplitude", ...}
    duration: float = 2.0
    Ts: float = 1e-3
    seed: int = 0
    epsilon: float = 0.5             # MPC deadband; PID arm ignores it
    controller_model: dict = None    # model the MPC is synthesized from
    mpc: dict = field(default_factory=dict)   # N/Q/R/w_star/gamma_range overrides
    antiwindup: bool = True          # freeze theta while the input saturates
    initial_state: tuple = (0.0, 0.0)

    def __post_init__(self):
        if self.Ts <= 0:
            raise ValidationError("Ts must be positive")
        n = self.duration / self.Ts
        if self.duration <= 0 or abs(n - round(n)) > 1e-9:
            raise ValidationError("duration must be a positive multiple of Ts")
        if self.controller not in CONTROLLER_KINDS:
            raise ValidationError(f"unknown controller {self.controller!r}")
        if self.reference.get("type") not in ("step", "square"):
            raise ValidationError("reference type must be 'step' or 'square'")

    @property
    def n_steps(self):
        return int(round(self.duration / self.Ts))

    def to_dict(self):
        d = {
            "name": self.name,
            "plant": self.plant,
            "controller": self.controller,
            "reference": self.reference,
            "duration": self.duration,
            "Ts": self.Ts,
            "seed": self.seed,
            "epsilon": self.epsilon,
            "mpc": self.mpc,
            "antiwindup": self.antiwindup,
            "initial_state": list(self.initial_state),
        }
        if self.controller_model is not None:
            d["controller_model"] = self.controller_model
        return d

    @staticmethod
    def from_dict(d):
        return Scenario(
            name=d.get("name", "scenario"),
            plant=d["plant"],
            controller=d["controller"],
            reference=d["reference"],
            duration=float(d.get("duration", 2.0)),
            Ts=float(d.get("Ts", 1e-3)),
            seed=int(d.get("seed", 0)),
            epsilon=float(d.get("epsilon", 0.5)),
            controller_model=d.get("controller_model"),
            mpc=d.get("mpc", {}),
            antiwindup=bool(d.get("antiwindup", True)),
            initial_state=tuple(d.get("initial_state", (0.0, 0.0))),
        )

    def config_hash(self):
        payload = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


MODEL_ALIASES = {
    "identified": identified_model,
    "assumed": assumed_model,
    "nonlinear": nonlinear_model,
}


def resolve_plant(spec):
    """Model dict or {"alias": name[, overrides...]} -> plant object."""
    if isinstance(spec, str):
        spec = {"alias": spec}
    if "alias" in spec:
        try:
            base = MODEL_ALIASES[spec["alias"]]()
        except KeyError:
            raise ValidationError(f"unknown model alias {spec['alias']!r}")
        overrides = {k: v for k, v in spec.items() if k != "alias"}
        if not overrides:
            return base
        d = base.to_dict()
        d.update(overrides)
        spec = d
    if spec.get("type") == "nonlinear":
        return NonlinearFrictionPlant.from_dict(spec)
    return PwaModel.from_dict(spec)


@dataclass
class SimTrace:
    """Time-indexed closed-loop record with header metadata."""

    t: np.ndarray
    r: np.ndarray
    y: np.ndarray
    v: np.ndarray
    u: np.ndarray
    region: np.ndarray
    status: list
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.t)

    def to_csv(self):
        """Byte-stable CSV: header `t,r,y,v,u,region,status`."""
        lines = ["t,r,y,v,u,region,status"]
        for i in range(len(self.t)):
            lines.append("%.6f,%.17g,%.17g,%.17g,%.17g,%d,%s" % (
                self.t[i], self.r[i], self.y[i], self.v[i], self.u[i],
                self.region[i], self.status[i]))
        return "\n".join(lines) + "\n"

    @staticmethod
    def from_csv(text):
        lines = text.strip().split("\n")
        if lines[0] != "t,r,y,v,u,region,status":
            raise ValidationError("unrecognized trace header")
        cols = [ln.split(",") for ln in lines[1:]]
        arr = lambda i: np.array([float(c[i]) for c in cols])
        return SimTrace(arr(0), arr(1), arr(2), arr(3), arr(4),
                        np.array([int(c[5]) for c in cols]),
                        [c[6] for c in cols])


def reference_at(ref, k, Ts):
    """Reference value at step k (exact integer phase arithmetic).

    A square wave toggles between `amplitude` and `low` (default 0) each
    half period, starting at `amplitude`.
    """
    if ref["type"] == "step":
        t0 = float(ref.get("time", 0.0))
        return float(ref["amplitude"]) if k * Ts >= t0 else 0.0
    period = int(round(1.0 / (float(ref["frequency"]) * Ts)))
    half = period // 2
    low = float(ref.get("low", 0.0))
    return float(ref["amplitude"]) if (k % period) < half else low


def build_controller(scenario: Scenario, design=None, controller_model=None):
    """Instantiate the scenario's controller; returns (kind, object).

    `controller_model` overrides the prediction model (used when loading a
    controller artifact, whose embedded model must stay authoritative).
    """
    if scenario.controller == "pid":
        aw = bool(scenario.mpc.get("pid_antiwindup", True))
        gains = scenario.mpc.get("pid_gains")
        if gains:
            return "pid", PidController.from_relay_vector(
                tuple(gains), Ts=scenario.Ts, anti_windup=aw)
        return "pid", PidController(Ts=scenario.Ts, anti_windup=aw)
    if controller_model is not None:
        ctrl_model = controller_model
    else:
        ctrl_model = resolve_plant(scenario.controller_model or "identified")
    if not isinstance(ctrl_model, PwaModel):
        raise ValidationError("MPC synthesis needs a PWA controller model")
    if design is None:
        kwargs = {}
        for key in ("Q", "R", "w_star", "gamma_range", "theta_max"):
            if key in scenario.mpc:
                kwargs[key] = scenario.mpc[key]
        if "Q" in kwargs:
            kwargs["Q"] = np.diag(kwargs["Q"]) if np.ndim(kwargs["Q"]) == 1 else np.asarray(kwargs["Q"])
        design = design_controller(ctrl_model,
                                   robust=(scenario.controller == "mpc-robust"),
                                   **kwargs)
    cfg = MpcConfig(model=ctrl_model, design=design,
                    N=int(scenario.mpc.get("N", 5)),
                    epsilon=scenario.epsilon)
    return "mpc", MpcController(cfg)


def run(scenario: Scenario, design=None, controller_model=None) -> SimTrace:
    """Execute the closed loop; on a fault, returns the partial trace with a
    fault record in the metadata."""
    plant = resolve_plant(scenario.plant)
    kind, controller = build_controller(scenario, design, controller_model)
    n = scenario.n_steps
    Ts = scenario.Ts
    u_max = 10.0 if not isinstance(plant, PwaModel) else plant.constraints.u_max

    t = np.arange(n) * Ts
    R = np.empty(n)
    Y = np.empty(n)
    V = np.empty(n)
    U = np.empty(n)
    REG = np.zeros(n, dtype=int)
    ST = []
    meta = {
        "scenario": scenario.name,
        "controller": scenario.controller,
        "config_hash": scenario.config_hash(),
    }

    x = np.array(scenario.initial_state, dtype=float)
    theta = 0.0
    fault = None
    k = 0
    try:
        for k in range(n):
            r = reference_at(scenario.reference, k, Ts)
            e = r - x[0]
            tie = 1.0 if e >= 0 else -1.0
            if kind == "pid":
                u = controller.step(e)
                status = "pid"
            else:
                if abs(x[1]) <= controller.cfg.epsilon and controller.cfg.epsilon > 0:
                    u, status = 0.0, "deadband"
                    theta += x[0] - r
                else:
                    dec = controller.decide(np.array([x[0], x[1], r, theta]), tie)
                    u, status = dec.u, dec.status
                    saturated = abs(u) >= u_max - 1e-12
                    if not (scenario.antiwindup and saturated):
                        theta += x[0] - r
            u = float(np.clip(u, -u_max, u_max))
            R[k], Y[k], V[k], U[k] = r, x[0], x[1], u
            ST.append(status)
            if isinstance(plant, PwaModel):
                REG[k] = region_of(plant, x[1], tie)
                x = step_pwa(plant, x, u, tie)
            else:
                REG[k] = 0
                x = step_nonlinear(plant, x, u, Ts)
    except SimulationFault as exc:
        fault = str(exc)
        n = k
        t, R, Y, V, U, REG = (a[:n] for a in (t, R, Y, V, U, REG))
    if fault:
        meta["fault"] = fault
    return SimTrace(t, R, Y, V, U, REG, ST, meta)


@dataclass(frozen=True)
class Metrics:
    """Tracking quality summary; NaN fields carry a reason flag."""

    overshoot: float
    rise_time: float
    steady_state_error: float
    oscillation_amplitude: float
    flags: tuple = ()

    def to_dict(self):
        def val(x):
            return None if np.isnan(x) else float(x)
        return {
            "overshoot_mm": val(self.overshoot),
            "rise_time_s": val(self.rise_time),
            "steady_state_error_mm": val(self.steady_state_error),
            "oscillation_amplitude_mm": val(self.oscillation_amplitude),
            "flags": list(self.flags),
        }


def _segments(r):
    """Maximal runs of constant reference: list of (start, end_exclusive)."""
    out = []
    start = 0
    for i in range(1, len(r)):
        if r[i] != r[start]:
            out.append((start, i))
            start = i
    out.append((start, len(r)))
    return out


SETTLE_BAND = 0.05      # fraction of the step magnitude
SETTLE_HOLD_S = 0.1     # band dwell defining "settled"


def measure(trace: SimTrace) -> Metrics:
    """Metrics per reference-hold segment, aggregated by worst case.

    overshoot: max excursion past the setpoint in the step direction.
    rise time: 10% to 90% of the step change.
    steady-state error: mean |y - r| over the last 20% of each hold.
    oscillation amplitude: half peak-to-peak of the error over the settled
    window (after the response first enters the +/-5% band of the step and
    stays there for 100 ms; the window starts 100 ms after entry).
    """
    if len(trace) < 2:
        raise ValidationError("trace too short to measure")
    Ts = float(trace.t[1] - trace.t[0])
    hold_steps = max(int(round(SETTLE_HOLD_S / Ts)), 1)
    flags = []
    overshoot = 0.0
    rise = np.nan
    sse = 0.0
    osc = np.nan

    prev_level = trace.y[0]
    for seg_idx, (a, b) in enumerate(_segments(trace.r)):
        r = trace.r[a]
        y = trace.y[a:b]
        e = y - r
        step = r - prev_level
        prev_level = r
        sse = max(sse, float(np.mean(np.abs(e[int(np.floor(0.8 * len(e))):]))))
        if step == 0.0:
            # no transition: the segment is settled from the start if the
            # error stays within the band scaled to the setpoint
            scale = max(abs(r), 1.0)
            if len(e) > hold_steps and np.all(np.abs(e) <= SETTLE_BAND * scale + 1e-12):
                amp = 0.5 * float(e.max() - e.min())
                osc = amp if np.isnan(osc) else max(osc, amp)
            continue
        sgn = np.sign(step)
        overshoot = max(overshoot, float(max(0.0, np.max(sgn * e))))
        lo = r - step + 0.1 * step
        hi = r - step + 0.9 * step
        idx_lo = np.nonzero(sgn * (y - lo) >= 0)[0]
        idx_hi = np.nonzero(sgn * (y - hi) >= 0)[0]
        if len(idx_lo) and len(idx_hi) and np.isnan(rise):
            rise = float((idx_hi[0] - idx_lo[0]) * Ts)
        band = np.abs(e) <= SETTLE_BAND * abs(step) + 1e-12
        settled = None
        for i in range(len(e) - hold_steps):
            if band[i:i + hold_steps].all():
                settled = i + hold_steps
                break
        if settled is not None and settled < len(e):
            w = e[settled:]
            amp = 0.5 * float(w.max() - w.min())
            osc = amp if np.isnan(osc) else max(osc, amp)

    if np.isnan(rise):
        flags.append("no-rise-phase")
    if np.isnan(osc):
        flags.append("never-settled")
    return Metrics(overshoot, rise, sse, osc, tuple(flags))
