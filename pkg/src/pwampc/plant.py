"""Discrete-time PWA motor model and a continuous nonlinear-friction plant.

Units are fixed repo-wide: position mm, velocity mm/s, input V, time s.
The PWA model covers the velocity axis with four guarded regions: two outer
sliding regions (mode 1) and two inner low-speed regions (mode 2), each pair
split by the sign of the friction offset.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import IdentificationError, SimulationFault, ValidationError


@dataclass(frozen=True)
class LinearDynamics:
    """One discrete-time affine mode x+ = A x + B (u - friction_offset)."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    friction_offset: float

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float).reshape(2, 2)
        B = np.asarray(self.B, dtype=float).reshape(2, 1)
        C = np.asarray(self.C, dtype=float).reshape(1, 2)
        for name, M in (("A", A), ("B", B), ("C", C)):
            if not np.all(np.isfinite(M)):
                raise ValidationError(f"non-finite entries in {name}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)


@dataclass(frozen=True)
class ConstraintSet:
    """Operating limits: travel range, velocity bound, input voltage."""

    y_max: float = 9.5
    v_max: float = 400.0
    u_max: float = 10.0

    def __post_init__(self):
        if min(self.y_max, self.v_max, self.u_max) < 0:
            raise ValidationError("constraint bounds must be positive")


@dataclass(frozen=True)
class PwaModel:
    """Four-region PWA motion model over the velocity axis.

    modes[0] is the outer (sliding) dynamics, modes[1] the inner low-speed
    dynamics.  Region guards:

        1: v >= v_p          mode 1, offset f_cp
        2: v <= v_n          mode 1, offset f_cn
        3: 0 <= v <  v_p     mode 2, offset f_cp
        4: v_n <  v <  0     mode 2, offset f_cn

    Boundaries at |v| = v_p, |v_n| belong to the outer regions; v = 0 is
    resolved by the tie hint (sign of the current tracking error).
    """

    A1: np.ndarray
    B1: np.ndarray
    A2: np.ndarray
    B2: np.ndarray
    f_cp: float
    f_cn: float
    Ts: float = 1e-3
    constraints: ConstraintSet = field(default_factory=ConstraintSet)
    name: str = "pwa"
    kinematic_position: bool = False

    def __post_init__(self):
        for attr in ("A1", "A2"):
            object.__setattr__(self, attr, np.asarray(getattr(self, attr), dtype=float).reshape(2, 2))
        for attr in ("B1", "B2"):
            object.__setattr__(self, attr, np.asarray(getattr(self, attr), dtype=float).reshape(2, 1))
        if not (self.f_cn < 0.0 < self.f_cp):
            raise ValidationError("need f_cn < 0 < f_cp")
        if self.Ts <= 0:
            raise ValidationError("Ts must be positive")
        if not (self.v_n < 0.0 < self.v_p):
            raise ValidationError("region thresholds must satisfy v_n < 0 < v_p")

    @property
    def C(self):
        return np.array([[1.0, 0.0]])

    @property
    def v_p(self):
        """Positive region threshold: steady mode-2 velocity at y=0 under u=+3 V."""
        return self._steady_velocity(3.0 - self.f_cp)

    @property
    def v_n(self):
        """Negative region threshold: steady mode-2 velocity at y=0 under u=-3 V."""
        return self._steady_velocity(-3.0 - self.f_cn)

    def _steady_velocity(self, u_eff):
        return float(self.B2[1, 0] * u_eff / (1.0 - self.A2[1, 1]))

    def mode(self, index):
        """LinearDynamics for region index 1..4."""
        if index in (1, 2):
            A, B = self.A1, self.B1
        elif index in (3, 4):
            A, B = self.A2, self.B2
        else:
            raise ValidationError(f"region index {index} out of range")
        offset = self.f_cp if index in (1, 3) else self.f_cn
        return LinearDynamics(A, B, self.C, offset)

    def to_dict(self):
        return {
            "type": "pwa",
            "name": self.name,
            "A1": self.A1.tolist(),
            "B1": self.B1.tolist(),
            "A2": self.A2.tolist(),
            "B2": self.B2.tolist(),
            "f_cp": self.f_cp,
            "f_cn": self.f_cn,
            "Ts": self.Ts,
            "kinematic_position": self.kinematic_position,
            "constraints": {
                "y_max": self.constraints.y_max,
                "v_max": self.constraints.v_max,
                "u_max": self.constraints.u_max,
            },
        }

    @staticmethod
    def from_dict(d):
        cs = d.get("constraints", {})
        return PwaModel(
            A1=np.array(d["A1"]), B1=np.array(d["B1"]),
            A2=np.array(d["A2"]), B2=np.array(d["B2"]),
            f_cp=float(d["f_cp"]), f_cn=float(d["f_cn"]),
            Ts=float(d.get("Ts", 1e-3)),
            constraints=ConstraintSet(
                y_max=float(cs.get("y_max", 9.5)),
                v_max=float(cs.get("v_max", 400.0)),
                u_max=float(cs.get("u_max", 10.0)),
            ),
            name=d.get("name", "pwa"),
            kinematic_position=bool(d.get("kinematic_position", False)),
        )


def identified_model():
    """Default identified plant: the low-speed mode has the shallower
    velocity pole and offsets 2.0 / -2.6 V."""
    return PwaModel(
        A1=[[0.9968, 6.289e-4], [-5.544, 0.3623]],
        B1=[[4.616e-3], [3.493]],
        A2=[[0.9990, 6.312e-4], [-1.658, 0.3662]],
        B2=[[2.033e-3], [1.636]],
        f_cp=2.0,
        f_cn=-2.6,
        name="identified",
    )


def assumed_model():
    """Mismatched plant: steeper low-speed friction slope (A2[1,1]=0.4000)
    and offsets 2.4 / -2.9 V; outer mode unchanged."""
    base = identified_model()
    return PwaModel(
        A1=base.A1, B1=base.B1,
        A2=[[0.9990, 6.312e-4], [-1.658, 0.4000]],
        B2=base.B2,
        f_cp=2.4,
        f_cn=-2.9,
        name="assumed",
    )


def region_of(model: PwaModel, v, tie_hint=1.0):
    """Region index in {1,2,3,4} for velocity v.

    Outer regions win on the |v| = v_p, |v_n| boundaries.  At v = 0 exactly
    the tie hint (sign of the current tracking error) picks the positive- or
    negative-offset inner region; a zero hint defaults to the positive side.
    """
    if not np.isfinite(v):
        raise SimulationFault(f"non-finite velocity {v}")
    if v >= model.v_p:
        return 1
    if v <= model.v_n:
        return 2
    if v > 0.0:
        return 3
    if v < 0.0:
        return 4
    return 3 if tie_hint >= 0.0 else 4


def step_pwa(model: PwaModel, x, u, tie_hint=1.0):
    """One step of the PWA plant; u is clamped to the input range first.

    With `kinematic_position` set on the model, the velocity row is stepped
    with the region dynamics while the position is the trapezoidal integral
    of velocity.  The identified position rows are not an exact
    discretization of a motion model and admit spurious equilibria where the
    position holds steady at nonzero velocity; the kinematic option removes
    those for simulation-truth use.
    """
    x = np.asarray(x, dtype=float).reshape(2)
    if not np.all(np.isfinite(x)):
        raise SimulationFault(f"non-finite state {x}")
    u_max = model.constraints.u_max
    u = float(np.clip(u, -u_max, u_max))
    mode = model.mode(region_of(model, x[1], tie_hint))
    x_next = mode.A @ x + mode.B[:, 0] * (u - mode.friction_offset)
    if model.kinematic_position:
        x_next[0] = x[0] + 0.5 * model.Ts * (x[1] + x_next[1])
    if not np.all(np.isfinite(x_next)):
        raise SimulationFault(f"non-finite state after step: {x_next}")
    return x_next


@dataclass(frozen=True)
class NonlinearFrictionPlant:
    """Continuous-time motion plant with Coulomb + viscous + Stribeck friction.

    dy/dt = v
    dv/dt = a y + b v + c (u - F(v))
    F(v)  = offset(v) * (1 + (f_s0/offset) * exp(-|v/v_s|^delta)) + k v

    written with direction-dependent Coulomb levels f_cp > 0 > f_cn; the
    breakaway level in each direction is offset + sign * f_s0.  At v = 0 the
    rotor is held by static friction until |u| exceeds breakaway.
    """

    a: float = 0.0
    b: float = -1015.3
    c: float = 5561.0
    f_cp: float = 2.3
    f_cn: float = -2.7
    k: float = 0.02
    f_s0: float = 0.2
    v_s: float = 1.0
    delta: float = 2.0
    n_substeps: int = 64
    name: str = "nonlinear"

    def __post_init__(self):
        if not (self.f_cn < 0.0 < self.f_cp):
            raise ValidationError("need f_cn < 0 < f_cp")
        if self.v_s <= 0 or self.delta < 1 or self.f_s0 < 0:
            raise ValidationError("invalid Stribeck parameters")

    @property
    def breakaway_pos(self):
        return self.f_cp + self.f_s0

    @property
    def breakaway_neg(self):
        return self.f_cn - self.f_s0

    def friction(self, v):
        """Sliding friction force (in volts) at nonzero velocity."""
        if v > 0:
            coulomb = self.f_cp
        elif v < 0:
            coulomb = self.f_cn
        else:
            return 0.0
        stribeck = np.sign(v) * self.f_s0 * np.exp(-abs(v / self.v_s) ** self.delta)
        return coulomb + stribeck + self.k * v

    def to_dict(self):
        return {
            "type": "nonlinear",
            "name": self.name,
            "a": self.a, "b": self.b, "c": self.c,
            "f_cp": self.f_cp, "f_cn": self.f_cn, "k": self.k,
            "f_s0": self.f_s0, "v_s": self.v_s, "delta": self.delta,
            "n_substeps": self.n_substeps,
        }

    @staticmethod
    def from_dict(d):
        return NonlinearFrictionPlant(
            a=float(d.get("a", 0.0)), b=float(d.get("b", -1015.3)),
            c=float(d.get("c", 5561.0)),
            f_cp=float(d.get("f_cp", 2.3)), f_cn=float(d.get("f_cn", -2.7)),
            k=float(d.get("k", 0.02)), f_s0=float(d.get("f_s0", 0.2)),
            v_s=float(d.get("v_s", 1.0)), delta=float(d.get("delta", 2.0)),
            n_substeps=int(d.get("n_substeps", 64)),
            name=d.get("name", "nonlinear"),
        )


def nonlinear_model():
    """Default nonlinear plant; breakaway levels +2.5 / -2.9 V."""
    return NonlinearFrictionPlant()


def _rk4(plant, x, u, h):
    def f(s):
        y, v = s
        return np.array([v, plant.a * y + plant.b * v + plant.c * (u - plant.friction(v))])

    k1 = f(x)
    k2 = f(x + 0.5 * h * k1)
    k3 = f(x + 0.5 * h * k2)
    k4 = f(x + h * k3)
    return x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def step_nonlinear(plant: NonlinearFrictionPlant, x, u, Ts, n_substeps=None):
    """Integrate the nonlinear plant over Ts with fixed RK4 substeps.

    Static friction: at v = 0 the state holds until |u| exceeds the
    breakaway level.  A velocity zero crossing inside a substep stops the
    rotor at the crossing and re-applies the stiction test.
    """
    if Ts <= 0:
        raise ValidationError("Ts must be positive")
    x = np.asarray(x, dtype=float).reshape(2).copy()
    n = plant.n_substeps if n_substeps is None else int(n_substeps)
    h = Ts / n
    for _ in range(n):
        if x[1] == 0.0:
            # net driving effort in volts, including the position term
            drive = u + plant.a * x[0] / plant.c
            breakaway = plant.breakaway_pos if drive >= 0 else -plant.breakaway_neg
            if abs(drive) <= breakaway:
                continue  # held by static friction
        x_new = _rk4(plant, x, u, h)
        if x[1] != 0.0 and np.sign(x_new[1]) * np.sign(x[1]) < 0:
            # crossed zero inside the substep: stop at the crossing
            frac = x[1] / (x[1] - x_new[1])
            x = np.array([x[0] + frac * (x_new[0] - x[0]), 0.0])
        else:
            x = x_new
        if not np.all(np.isfinite(x)) or abs(x[1]) > 1e7:
            raise SimulationFault("nonlinear integration blow-up; reduce the step size")
    return x


def identify_static_friction(plant: NonlinearFrictionPlant, amplitude=3.0,
                             freq=0.2, Ts=1e-3, threshold=1e-4):
    """Estimate the static friction levels with a slow sine-wave input.

    Drives the plant from rest with u(t) = amplitude * sin(2 pi freq t) and
    records the input value at the first motion onset (position change
    beyond `threshold`, the encoder resolution) in each direction.

    Returns (f_cp_est, f_cn_est).  Raises IdentificationError if either
    direction never moves within 1.5 periods.
    """
    if amplitude <= max(plant.breakaway_pos, -plant.breakaway_neg):
        raise IdentificationError(
            f"sine amplitude {amplitude} V does not exceed both breakaway levels"
        )
    n_steps = int(np.ceil(1.5 / (freq * Ts)))
    x = np.zeros(2)
    y_rest = 0.0
    at_rest = True
    f_cp_est = None
    f_cn_est = None
    for k in range(n_steps):
        u = amplitude * np.sin(2.0 * np.pi * freq * k * Ts)
        x = step_nonlinear(plant, x, u, Ts)
        if at_rest and abs(x[0] - y_rest) > threshold:
            if u > 0 and f_cp_est is None:
                f_cp_est = u
            elif u < 0 and f_cn_est is None:
                f_cn_est = u
            at_rest = False
        elif not at_rest and x[1] == 0.0:
            y_rest = x[0]
            at_rest = True
        if f_cp_est is not None and f_cn_est is not None:
            return f_cp_est, f_cn_est
    missing = "positive" if f_cp_est is None else "negative"
    raise IdentificationError(f"no motion onset detected in the {missing} direction")
