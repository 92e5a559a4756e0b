"""RC thermal model of a processor grid.

Each processing element contributes a silicon node and a copper
(heat-spreader) node; one shared heat-sink node closes the vertical path
to ambient. Temperatures are expressed relative to ambient, so the state
equation is homogeneous: Tdot = a_t T + b_t P, with T_si = c_t T.

State ordering: (si_0, cu_0, si_1, cu_1, ..., si_{Nc-1}, cu_{Nc-1}, sink).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg


@dataclass
class GridSpec:
    nw: int
    nh: int
    hp: int = 2                      # prediction horizon
    ts: float = 1e-3                 # controller sample time [s]
    domains: list = field(default_factory=list)  # PE-index sets sharing a VRM budget

    def __post_init__(self):
        if self.nw * self.nh < 1:
            raise ValueError("grid must contain at least one element")
        if self.hp < 1:
            raise ValueError("horizon must be at least 1")
        if self.ts <= 0:
            raise ValueError("sample time must be positive")
        if self.domains:
            flat = sorted(i for d in self.domains for i in d)
            if flat != list(range(self.n_pe)):
                raise ValueError("domains must partition the element set")

    @property
    def n_pe(self):
        return self.nw * self.nh

    @property
    def name(self):
        return f"P{self.nw}x{self.nh}_H{self.hp}"

    def neighbors(self, i):
        r, c = divmod(i, self.nw)
        out = []
        if c > 0:
            out.append(i - 1)
        if c + 1 < self.nw:
            out.append(i + 1)
        if r > 0:
            out.append(i - self.nw)
        if r + 1 < self.nh:
            out.append(i + self.nw)
        return out


def default_domains(nw, nh):
    """Two VRM domains splitting the grid into left/right halves."""
    n = nw * nh
    if n < 2 or nw < 2:
        return [list(range(n))]
    left, right = [], []
    for i in range(n):
        (left if i % nw < nw // 2 else right).append(i)
    return [left, right]


@dataclass
class ThermalConstants:
    """Lumped RC values [K/W] and [J/K]; time constants sit in the
    millisecond-to-tens-of-ms range typical of die-level silicon."""

    r_si_lat: float = 8.0     # silicon <-> lateral silicon neighbour
    r_si_cu: float = 2.0      # silicon <-> its copper element
    r_cu_sink: float = 1.0    # copper <-> shared heat sink
    r_sink_amb: float = 0.05  # heat sink <-> ambient
    c_si: float = 2e-3
    c_cu: float = 5e-2
    c_sink: float = 5.0
    t_amb: float = 45.0       # ambient reference [degC]

    def validate(self):
        for name in ("r_si_lat", "r_si_cu", "r_cu_sink", "r_sink_amb",
                     "c_si", "c_cu", "c_sink"):
            if getattr(self, name) <= 0:
                raise ValueError(f"thermal constant {name} must be positive")
        return self


@dataclass
class ThermalPlantModel:
    spec: GridSpec
    constants: ThermalConstants
    a_t: np.ndarray
    b_t: np.ndarray
    c_t: np.ndarray
    d: np.ndarray | None = None        # discrete state matrix (set by discretize)
    e: np.ndarray | None = None        # discrete input matrix
    ts: float | None = None

    @property
    def n_x(self):
        return self.a_t.shape[0]

    @property
    def n_u(self):
        return self.b_t.shape[1]

    def copy_with(self, **kw):
        return replace(self, **kw)


def build_thermal_model(spec: GridSpec, constants: ThermalConstants | None = None) -> ThermalPlantModel:
    """Assemble the continuous-time matrices from the RC grid."""
    constants = (constants or ThermalConstants()).validate()
    nc = spec.n_pe
    n_x = 2 * nc + 1
    sink = 2 * nc
    a = np.zeros((n_x, n_x))
    b = np.zeros((n_x, nc))
    c = np.zeros((nc, n_x))

    g_lat = 1.0 / constants.r_si_lat
    g_sc = 1.0 / constants.r_si_cu
    g_cs = 1.0 / constants.r_cu_sink
    g_amb = 1.0 / constants.r_sink_amb

    def couple(i, j, g, ci):
        a[i, i] -= g / ci
        a[i, j] += g / ci

    for i in range(nc):
        si, cu = 2 * i, 2 * i + 1
        for j in spec.neighbors(i):
            couple(si, 2 * j, g_lat, constants.c_si)
        couple(si, cu, g_sc, constants.c_si)
        couple(cu, si, g_sc, constants.c_cu)
        couple(cu, sink, g_cs, constants.c_cu)
        couple(sink, cu, g_cs, constants.c_sink)
        b[si, i] = 1.0 / constants.c_si
        c[i, si] = 1.0
    a[sink, sink] -= g_amb / constants.c_sink

    return ThermalPlantModel(spec, constants, a, b, c)


def discretize(model: ThermalPlantModel, ts: float | None = None):
    """Exact zero-order-hold discretization via the matrix exponential.

    Returns (d, e) and stores them on the model. The exponential generally
    fills in far beyond the continuous structure; that fill is what the
    pruning stage removes again.
    """
    if ts is None:
        ts = model.spec.ts
    n, m = model.n_x, model.n_u
    block = np.zeros((n + m, n + m))
    block[:n, :n] = model.a_t
    block[:n, n:] = model.b_t
    phi = scipy.linalg.expm(block * ts)
    d = phi[:n, :n]
    e = phi[:n, n:]
    model.d = d
    model.e = e
    model.ts = ts
    return d, e
