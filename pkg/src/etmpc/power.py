"""Static + dynamic power model and its inversion to operating points.

p = k_s0 + icc*v * gain(t, v) + c_eff * f * v^2, with an exponential
voltage/temperature leakage gain. The controller freezes the gain at the
worst-case corner so its view of the plant stays linear; the simulated
plant evaluates it at the instantaneous temperature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field


@dataclass
class PowerModelParams:
    k_s0: float = 0.2            # temperature/voltage independent static floor [W]
    k_v: float = 1.2             # leakage voltage sensitivity [1/V]
    k_t: float = 0.02            # leakage temperature sensitivity [1/degC]
    k_t0: float = -2.0           # leakage offset
    icc: float = 0.4             # per-element leakage current scale [A]
    ceff_by_class: dict = field(default_factory=lambda: {0: 0.6e-9, 1: 1.0e-9, 2: 1.5e-9})
    vf_table: list = field(default_factory=lambda: [(0.6, 1.2e9), (0.8, 2.0e9), (1.0, 2.8e9)])
    p_min: float = 0.0
    p_max: float = 4.0
    t_limit: float = 85.0        # silicon cap [degC]
    v_max: float = 1.0
    t_max: float = 85.0

    def validate(self):
        vs = [v for v, _ in self.vf_table]
        fs = [f for _, f in self.vf_table]
        if sorted(vs) != vs or sorted(fs) != fs or len(set(vs)) != len(vs):
            raise ValueError("vf_table must be strictly increasing in V and F")
        if self.p_min > self.p_max:
            raise ValueError("p_min must not exceed p_max")
        return self

    def ceff(self, workload_class):
        return self.ceff_by_class[int(workload_class)]

    def leakage_gain(self, t_si, v):
        return math.exp(self.k_v * v + self.k_t * t_si + self.k_t0)

    def frozen_gain(self):
        """Gain at the critical corner; keeps the controller model linear."""
        return self.leakage_gain(self.t_max, self.v_max)

    def static_power(self, v, t_si=None, gain=None):
        if gain is None:
            gain = self.leakage_gain(t_si, v)
        return self.k_s0 + self.icc * v * gain


def power_forward(params: PowerModelParams, v, f, t_si, workload_class, gain=None):
    """Evaluate the power model at an operating point."""
    ceff = params.ceff(workload_class)
    return params.static_power(v, t_si, gain) + ceff * f * v * v


def power_inverse(params: PowerModelParams, p_target, t_si, workload_class,
                  domain_voltage=None, gain=None):
    """Operating point (v, f) realizing a power target.

    Picks the smallest table voltage admitting the target at a feasible
    frequency, then solves the dynamic term for f. With ``domain_voltage``
    given (shared VRM rail), only the frequency is chosen. Returns
    (v, f, clamped).
    """
    ceff = params.ceff(workload_class)

    def freq_at(v):
        return (p_target - params.static_power(v, t_si, gain)) / (ceff * v * v)

    if domain_voltage is not None:
        fmax = max(f for tv, f in params.vf_table if tv <= domain_voltage + 1e-12)
        f = freq_at(domain_voltage)
        clamped = not (0.0 <= f <= fmax)
        return domain_voltage, min(max(f, 0.0), fmax), clamped

    for v, fmax in params.vf_table:
        f = freq_at(v)
        if 0.0 <= f <= fmax:
            return v, f, False
    v0, f0max = params.vf_table[0]
    if freq_at(v0) < 0.0:
        # target below the static floor: lowest rail, idle clock
        return v0, 0.0, True
    vt, ftmax = params.vf_table[-1]
    return vt, ftmax, True


def smallest_feasible_voltage(params: PowerModelParams, p_target, t_si,
                              workload_class, gain=None):
    """Lowest table voltage whose frequency range can realize the target."""
    ceff = params.ceff(workload_class)
    for v, fmax in params.vf_table:
        f = (p_target - params.static_power(v, t_si, gain)) / (ceff * v * v)
        if 0.0 <= f <= fmax:
            return v
    return params.vf_table[0][0] if p_target <= params.static_power(
        params.vf_table[0][0], t_si, gain) else params.vf_table[-1][0]
