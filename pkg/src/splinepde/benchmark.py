"""Channel-cylinder benchmark evaluation.

The reference geometry is a 41 x 220-cell channel with a diameter-10 cylinder
at (20, 20) in channel coordinates.  On the node lattice that becomes a
43 x 222 grid with a one-cell solid frame; the raster is padded with inert
solid cells to 48 x 224 so the update model's downsampling divides evenly.
Forces on the cylinder are midpoint-rule integrals of the continuously
sampled stress on the analytic circle.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np
import torch

from .domain import DomainSpec
from .errors import ConfigError, GeometryError, RolloutError
from .fields import CoefficientState, FieldLayout, flow_fields
from .losses import LossReport, LossWeights, SamplePlan, flow_loss
from .models import PdeModel, step as model_step

CHANNEL_W = 220
CHANNEL_H = 41
CYL_CENTER = (20.5, 20.5)   # lattice coordinates of the channel point (20, 20)
CYL_RADIUS = 5.0
PAD_W = 224
PAD_H = 48

_RE_PARAMS = {2: (1.0, 1.0, 0.2), 20: (0.1, 1.0, 0.2), 100: (0.1, 1.0, 1.0)}


def reynolds(rho: float, v_mag: float, length: float, mu: float) -> float:
    if min(rho, v_mag, length, mu) <= 0:
        raise ConfigError("reynolds arguments must be positive")
    return rho * v_mag * length / mu


def drag_lift_coefficients(f_d: float, f_l: float, rho: float, u_mean: float,
                           length: float):
    """DFG normalization 2F/(rho U_mean^2 L); density included explicitly."""
    if u_mean <= 0 or length <= 0 or rho <= 0:
        raise ConfigError("normalization arguments must be positive")
    denom = rho * u_mean ** 2 * length
    return 2.0 * f_d / denom, 2.0 * f_l / denom


@dataclass
class DfgSetup:
    re_target: int
    mu: float = 0.0
    rho: float = 0.0
    u_mean: float = 0.0

    def __post_init__(self):
        if self.re_target not in _RE_PARAMS:
            raise ConfigError(f"no benchmark parameters for Re={self.re_target}")
        self.mu, self.rho, self.u_mean = _RE_PARAMS[self.re_target]
        got = reynolds(self.rho, self.u_mean, 2 * CYL_RADIUS, self.mu)
        assert abs(got - self.re_target) < 1e-9

    def domain(self) -> DomainSpec:
        spec = DomainSpec("flow", PAD_W, PAD_H, mu=self.mu, rho=self.rho,
                          info={"re_target": self.re_target,
                                "u_mean": self.u_mean,
                                "length": 2 * CYL_RADIUS})
        solid = np.ones((PAD_H, PAD_W), dtype=bool)
        solid[1:CHANNEL_H + 1, 1:CHANNEL_W + 1] = False
        ii, jj = np.meshgrid(np.arange(PAD_W), np.arange(PAD_H))
        cyl = ((ii - CYL_CENTER[0]) ** 2 + (jj - CYL_CENTER[1]) ** 2
               <= CYL_RADIUS ** 2)
        solid |= cyl
        spec.solid = solid
        profile = self.inflow_profile()
        for col in (0, CHANNEL_W + 1):
            spec.value[0, 1:CHANNEL_H + 1, col] = profile
        return spec

    def inflow_profile(self) -> np.ndarray:
        """Parabolic v_x at the inlet cell centers, mean speed u_mean."""
        u_max = 1.5 * self.u_mean
        y = np.arange(1, CHANNEL_H + 1) - 0.5   # channel coordinate
        return 4.0 * u_max * y * (CHANNEL_H - y) / CHANNEL_H ** 2


def _solid_component(solid: np.ndarray, i: int, j: int) -> np.ndarray:
    """Connected solid cells (4-neighborhood) reachable from cell (i, j)."""
    h, w = solid.shape
    comp = np.zeros_like(solid)
    if not (0 <= i < w and 0 <= j < h) or not solid[j, i]:
        return comp
    comp[j, i] = True
    queue = deque([(i, j)])
    while queue:
        ci, cj = queue.popleft()
        for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            ni, nj = ci + di, cj + dj
            if 0 <= ni < w and 0 <= nj < h and solid[nj, ni] and not comp[nj, ni]:
                comp[nj, ni] = True
                queue.append((ni, nj))
    return comp


def surface_forces(state: CoefficientState, center, radius: float, mu: float,
                   m: int = 256, domain: DomainSpec | None = None,
                   tau: float = 1.0):
    """Viscous and pressure force on a circle by midpoint quadrature.

    F_mu = sum mu (grad v) n ds, F_p = sum -p n ds over m equal arcs with
    analytic outward normals; fields are sampled continuously on the circle.
    """
    if m < 16:
        raise ConfigError("need at least 16 quadrature points")
    cx, cy = center
    theta = 2.0 * np.pi * (np.arange(m) + 0.5) / m
    nx, ny = np.cos(theta), np.sin(theta)
    px, py = cx + radius * nx, cy + radius * ny
    if (px.min() < 0 or px.max() > state.width - 1
            or py.min() < 0 or py.max() > state.height - 1):
        raise GeometryError("quadrature circle leaves the grid")
    if domain is not None:
        snap = domain.materialize(state.t + tau * state.dt)
        own = _solid_component(snap.solid, int(round(cx)), int(round(cy)))
        ci = np.clip(np.round(px).astype(int), 0, domain.width - 1)
        cj = np.clip(np.round(py).astype(int), 0, domain.height - 1)
        if np.any(snap.solid[cj, ci] & ~own[cj, ci]):
            raise GeometryError("circle intersects a foreign solid")
    dtype = state.c0.dtype
    t = torch.as_tensor
    f = flow_fields(state.c0, state.c1, state.layout, t(px, dtype=dtype),
                    t(py, dtype=dtype), torch.full((m,), float(tau), dtype=dtype),
                    state.dt)
    n = torch.stack([t(nx, dtype=dtype), t(ny, dtype=dtype)], dim=1)
    ds = 2.0 * np.pi * radius / m
    f_mu = (mu * torch.einsum("mij,mj->mi", f["grad_v"], n)).sum(dim=0) * ds
    f_p = (-f["p"].unsqueeze(1) * n).sum(dim=0) * ds
    return f_mu.detach().cpu().numpy(), f_p.detach().cpu().numpy()


def divergence_leak(state: CoefficientState, domain: DomainSpec,
                    samples_per_face: int = 4,
                    rng: np.random.Generator | None = None,
                    tau: float = 1.0) -> float:
    """Mean |v . n| over boundary faces whose prescribed normal flow is zero."""
    if state.layout.kind != "flow":
        raise ConfigError("divergence leak requires a flow layout")
    rng = rng or np.random.default_rng()
    t_abs = state.t + tau * state.dt
    faces = domain.boundary_faces(t_abs)
    normal_target = np.sum(faces.value * faces.normal, axis=1)
    keep = np.abs(normal_target) < 1e-12
    if keep.sum() == 0:
        return 0.0
    mid = np.repeat(faces.mid[keep], samples_per_face, axis=0)
    tan = np.repeat(faces.tangent[keep], samples_per_face, axis=0)
    nrm = np.repeat(faces.normal[keep], samples_per_face, axis=0)
    u = rng.uniform(-0.5, 0.5, mid.shape[0])
    x = np.clip(mid[:, 0] + u * tan[:, 0], 0, domain.width - 1)
    y = np.clip(mid[:, 1] + u * tan[:, 1], 0, domain.height - 1)
    dtype = state.c0.dtype
    t = torch.as_tensor
    f = flow_fields(state.c0, state.c1, state.layout, t(x, dtype=dtype),
                    t(y, dtype=dtype),
                    torch.full((x.size,), float(tau), dtype=dtype), state.dt)
    vn = (f["v"] * t(nrm, dtype=dtype)).sum(dim=1)
    return float(vn.abs().mean())


@dataclass
class ForceReport:
    steps: np.ndarray
    f_mu: np.ndarray     # [T, 2]
    f_p: np.ndarray      # [T, 2]
    l_p: np.ndarray
    l_b: np.ndarray
    leak: np.ndarray
    c_d: np.ndarray
    c_l: np.ndarray
    warmup: int = 0

    @property
    def f_tot(self) -> np.ndarray:
        return self.f_mu + self.f_p

    @property
    def f_d(self) -> np.ndarray:
        return self.f_tot[:, 0]

    @property
    def f_l(self) -> np.ndarray:
        return self.f_tot[:, 1]

    def window(self, series: np.ndarray) -> np.ndarray:
        return series[self.steps >= self.warmup]

    def summary(self) -> dict:
        out = {}
        for name, series in (("c_d", self.c_d), ("c_l", self.c_l),
                             ("l_p", self.l_p), ("l_b", self.l_b),
                             ("leak", self.leak)):
            w = self.window(series)
            out[name] = (float(w.min()), float(w.mean()), float(w.max()))
        return out

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("step,FD,FL,CD,CL,Lp,Lb,leak\n")
            for k in range(self.steps.size):
                fh.write(f"{self.steps[k]},{self.f_d[k]:.8e},"
                         f"{self.f_l[k]:.8e},{self.c_d[k]:.8e},"
                         f"{self.c_l[k]:.8e},{self.l_p[k]:.8e},"
                         f"{self.l_b[k]:.8e},{self.leak[k]:.8e}\n")
            for name, (lo, avg, hi) in self.summary().items():
                fh.write(f"# {name} min/avg/max = {lo:.6g}/{avg:.6g}/{hi:.6g}"
                         f" over steps >= {self.warmup}\n")


def run_dfg(model: PdeModel, re_target: int, steps: int, warmup: int = 50,
            quadrature: int = 256, seed: int = 0,
            state: CoefficientState | None = None) -> ForceReport:
    """Roll out on the benchmark domain and record forces and losses."""
    setup = DfgSetup(re_target)
    domain = setup.domain()
    layout = model.layout
    if layout.kind != "flow":
        raise ConfigError("benchmark rollout needs a flow model")
    if steps <= warmup:
        raise ConfigError("need more steps than warmup")
    if state is None:
        state = CoefficientState.zeros(layout, PAD_W, PAD_H,
                                       dtype=torch.float32)
    rng = np.random.default_rng(seed)
    length = 2 * CYL_RADIUS
    rows = {k: [] for k in ("f_mu", "f_p", "l_p", "l_v", "l_b", "l_tot",
                            "leak", "c_d", "c_l")}
    counts = (0, 0)
    for it in range(steps):
        state = model_step(model, domain, state)
        if not state.is_finite():
            raise RolloutError("non-finite coefficients", step=it)
        f_mu, f_p = surface_forces(state, CYL_CENTER, CYL_RADIUS, setup.mu,
                                   m=quadrature, domain=domain)
        f_tot = f_mu + f_p
        c_d, c_l = drag_lift_coefficients(f_tot[0], f_tot[1], setup.rho,
                                          setup.u_mean, length)
        rep = flow_loss(state, domain, SamplePlan(), LossWeights.flow(),
                        rng=np.random.default_rng(rng.integers(2 ** 63)))
        leak = divergence_leak(state, domain,
                               rng=np.random.default_rng(rng.integers(2 ** 63)))
        counts = (rep.n_interior, rep.n_boundary)
        rows["f_mu"].append(f_mu)
        rows["f_p"].append(f_p)
        rows["l_p"].append(rep.l_p)
        rows["l_v"].append(rep.l_v)
        rows["l_b"].append(rep.l_b)
        rows["l_tot"].append(rep.l_tot)
        rows["leak"].append(leak)
        rows["c_d"].append(c_d)
        rows["c_l"].append(c_l)
    report = ForceReport(steps=np.arange(steps),
                         f_mu=np.asarray(rows["f_mu"]),
                         f_p=np.asarray(rows["f_p"]),
                         l_p=np.asarray(rows["l_p"]),
                         l_b=np.asarray(rows["l_b"]),
                         leak=np.asarray(rows["leak"]),
                         c_d=np.asarray(rows["c_d"]),
                         c_l=np.asarray(rows["c_l"]), warmup=warmup)
    loss_mean = LossReport(
        kind="flow",
        l_p=float(report.window(np.asarray(rows["l_p"])).mean()),
        l_v=float(report.window(np.asarray(rows["l_v"])).mean()),
        l_b=float(report.window(np.asarray(rows["l_b"])).mean()),
        l_tot=float(report.window(np.asarray(rows["l_tot"])).mean()),
        n_interior=counts[0], n_boundary=counts[1])
    return report, loss_mean
