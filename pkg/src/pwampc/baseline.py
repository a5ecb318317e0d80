"""Relay-tuned PID benchmark controller.

The relay experiment reports the unlabeled gain triple
(34.96, 0.09674, 1545.5).  Read as (Kp, Kd, Ki) in standard positional SI
form,

    u = Kp e + Ki Ts sum(e) + Kd (e - e_prev) / Ts,

every term is simultaneously sensible for this plant: proportional
authority 35 V/mm, mild velocity damping 0.097 V s/mm, and an integrator of
1545.5 V/(mm s), the "large integrating factor" that overcomes friction.
The alternative reading (Kp, Ki, Kd) makes the derivative term either a
relay (+-1500 V swings) or the dominant destabilizing feedback, and is
rejected; the interpretation is isolated here so it can be swapped.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

# raw triple from the relay experiment, in reported order
RELAY_VECTOR = (34.96, 0.09674, 1545.5)


@dataclass
class PidController:
    """Positional PID with output clamp and optional anti-windup.

    With anti_windup set, the error sum is updated during clamping only
    when the update shrinks its magnitude, so the integrator state is
    non-increasing in magnitude while the output is clamped.  The plain
    (windup-prone) form of the bench controller uses anti_windup=False.
    """

    Kp: float = RELAY_VECTOR[0]
    Ki: float = RELAY_VECTOR[2]
    Kd: float = RELAY_VECTOR[1]
    Ts: float = 1e-3
    u_max: float = 10.0
    anti_windup: bool = True
    error_sum: float = field(default=0.0, init=False)
    prev_error: float = field(default=None, init=False)

    def __post_init__(self):
        if self.Ts <= 0:
            raise ValidationError("Ts must be positive")
        if self.u_max <= 0:
            raise ValidationError("output clamp must be positive")

    @classmethod
    def from_relay_vector(cls, vector=RELAY_VECTOR, **kwargs):
        """Build from the raw relay triple, reading it as (Kp, Kd, Ki)."""
        kp, kd, ki = vector
        return cls(Kp=kp, Ki=ki, Kd=kd, **kwargs)

    def reset(self):
        self.error_sum = 0.0
        self.prev_error = None

    def _raw(self, e, error_sum, diff):
        return (self.Kp * e + self.Ki * self.Ts * error_sum
                + self.Kd * diff / self.Ts)

    def step(self, e):
        """One control update for tracking error e (mm); returns volts."""
        e = float(e)
        diff = 0.0 if self.prev_error is None else e - self.prev_error
        self.prev_error = e

        candidate = self.error_sum + e
        u_raw = self._raw(e, candidate, diff)
        if abs(u_raw) > self.u_max and self.anti_windup:
            if abs(candidate) <= abs(self.error_sum):
                self.error_sum = candidate
            # else: freeze the integrator while clamped
            u_raw = self._raw(e, self.error_sum, diff)
        else:
            self.error_sum = candidate
        return float(np.clip(u_raw, -self.u_max, self.u_max))


def pid_step(ctrl: PidController, e):
    """Functional wrapper around PidController.step."""
    return ctrl.step(e)
