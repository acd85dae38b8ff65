"""Monte Carlo physics losses over one time slab.

Interior residuals (momentum for flow; height-rate and velocity-rate for
wave) are sampled at one jittered point per fluid cell, boundary conditions
at two points per solid-fluid face, each with its own time draw inside
[t, t + dt].  Losses are per-sample means, so the fixed weights are
resolution independent.  Everything differentiates through to the spline
coefficients.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from .domain import DomainSpec
from .errors import ConfigError, DomainError, SamplingDomainError
from .fields import FieldLayout, flow_fields, wave_fields


@dataclass(frozen=True)
class LossWeights:
    alpha: float
    beta: float
    gamma: float = 0.0

    def __post_init__(self):
        if self.alpha <= 0 or self.beta <= 0 or self.gamma < 0:
            raise ConfigError("loss weights must be positive")

    @staticmethod
    def flow() -> "LossWeights":
        return LossWeights(alpha=10.0, beta=20.0)

    @staticmethod
    def wave() -> "LossWeights":
        return LossWeights(alpha=0.1, beta=1.0, gamma=10.0)


@dataclass(frozen=True)
class SamplePlan:
    interior_per_cell: int = 1
    boundary_per_face: int = 2
    time_draws: int = 1

    def __post_init__(self):
        if min(self.interior_per_cell, self.boundary_per_face,
               self.time_draws) < 1:
            raise ConfigError("sample plan counts must be >= 1")


@dataclass
class LossReport:
    kind: str
    l_p: float = 0.0
    l_z: float = 0.0
    l_v: float = 0.0
    l_b: float = 0.0
    l_tot: float = 0.0
    n_interior: int = 0
    n_boundary: int = 0


@dataclass
class SlabSamples:
    """Numpy draw of all loss sample points of one domain and slab."""

    xi: np.ndarray
    yi: np.ndarray
    ti: np.ndarray
    xb: np.ndarray
    yb: np.ndarray
    tb: np.ndarray
    target: np.ndarray   # [Nb, C] Dirichlet targets at the drawn times


def draw_slab_points(domain: DomainSpec, t0: float, plan: SamplePlan,
                     rng: np.random.Generator) -> SlabSamples:
    """Stratified interior jitter + uniform boundary-face samples.

    Oscillator-driven faces get their target re-evaluated at each sample's
    own time; face geometry is frozen at the slab start t0.
    """
    dt = domain.dt
    cells = domain.fluid_cells(t0)
    if cells.shape[0] == 0:
        raise DomainError("domain has no fluid cells")
    reps = plan.interior_per_cell * plan.time_draws
    base = np.repeat(cells, reps, axis=0).astype(float)
    xi = base[:, 0] + rng.uniform(-0.5, 0.5, base.shape[0])
    yi = base[:, 1] + rng.uniform(-0.5, 0.5, base.shape[0])
    np.clip(xi, 0.0, domain.width - 1.0, out=xi)
    np.clip(yi, 0.0, domain.height - 1.0, out=yi)
    ti = rng.uniform(t0, t0 + dt, base.shape[0])

    faces = domain.boundary_faces(t0)
    nb = len(faces) * plan.boundary_per_face * plan.time_draws
    if nb:
        reps_b = plan.boundary_per_face * plan.time_draws
        mid = np.repeat(faces.mid, reps_b, axis=0)
        tan = np.repeat(faces.tangent, reps_b, axis=0)
        drv = np.repeat(faces.driver, reps_b, axis=0)
        target = np.repeat(faces.value, reps_b, axis=0)
        u = rng.uniform(-0.5, 0.5, nb)
        xb = np.clip(mid[:, 0] + u * tan[:, 0], 0.0, domain.width - 1.0)
        yb = np.clip(mid[:, 1] + u * tan[:, 1], 0.0, domain.height - 1.0)
        tb = rng.uniform(t0, t0 + dt, nb)
        driven = np.nonzero(drv >= 0)[0]
        for n in driven:
            target[n, :] = domain.oscillators[drv[n]].height(tb[n])
    else:
        xb = yb = tb = np.zeros(0)
        target = np.zeros((0, domain.dirichlet_channels))
    return SlabSamples(xi, yi, ti, xb, yb, tb, target)


def _t(arr, dtype):
    return torch.as_tensor(np.ascontiguousarray(arr), dtype=dtype)


def flow_residuals_batched(c0, c1, layout, x, y, tau, dt, mu, rho, force,
                           entry=None) -> torch.Tensor:
    """Momentum residual rho(dv/dt + (v.grad)v) - mu lap(v) + grad(p) - f, [N,2]."""
    f = flow_fields(c0, c1, layout, x, y, tau, dt, entry=entry)
    adv = torch.einsum("nij,nj->ni", f["grad_v"], f["v"])
    return (rho.unsqueeze(1) * (f["dv_dt"] + adv)
            - mu.unsqueeze(1) * f["lap_v"] + f["grad_p"] - force)


def wave_residuals_batched(c0, c1, layout, x, y, tau, dt, stiffness, damping,
                           entry=None):
    """Height-rate and velocity-rate residuals, each [N]."""
    f = wave_fields(c0, c1, layout, x, y, tau, dt, entry=entry)
    r_z = f["dz_dt"] - f["v_z"]
    r_v = f["dv_z_dt"] - stiffness * f["lap_z"] + damping * f["v_z"]
    return r_z, r_v


def batch_loss_terms(c0: torch.Tensor, c1: torch.Tensor, layout: FieldLayout,
                     domains, t0s, plan: SamplePlan, weights: LossWeights,
                     rng: np.random.Generator) -> dict:
    """Losses over a minibatch of domains sharing one coefficient stack.

    c0, c1: [B, C, H, W]; per-sample means are taken over the pooled samples
    of all entries.  Returns torch scalars (graph-connected) plus counts.
    """
    dtype = c0.dtype
    dt = domains[0].dt
    sxi, syi, sti, sei = [], [], [], []
    sxb, syb, stb, seb, stg = [], [], [], [], []
    par_i, par_b = [], []
    for k, (dom, t0) in enumerate(zip(domains, t0s)):
        s = draw_slab_points(dom, t0, plan, rng)
        sxi.append(s.xi)
        syi.append(s.yi)
        sti.append((s.ti - t0) / dom.dt)
        sei.append(np.full(s.xi.size, k))
        if layout.kind == "flow":
            par_i.append(np.broadcast_to([dom.mu, dom.rho, dom.force[0],
                                          dom.force[1]], (s.xi.size, 4)))
        else:
            par_i.append(np.broadcast_to([dom.stiffness, dom.damping],
                                         (s.xi.size, 2)))
        sxb.append(s.xb)
        syb.append(s.yb)
        stb.append((s.tb - t0) / dom.dt)
        seb.append(np.full(s.xb.size, k))
        stg.append(s.target)

    xi, yi = _t(np.concatenate(sxi), dtype), _t(np.concatenate(syi), dtype)
    ti = _t(np.concatenate(sti), dtype)
    ei = torch.as_tensor(np.concatenate(sei), dtype=torch.long)
    pi = _t(np.concatenate(par_i), dtype)

    out = {"n_interior": xi.shape[0]}
    if layout.kind == "flow":
        r = flow_residuals_batched(c0, c1, layout, xi, yi, ti, dt,
                                   mu=pi[:, 0], rho=pi[:, 1],
                                   force=pi[:, 2:4], entry=ei)
        out["l_p"] = (r ** 2).sum(dim=1).mean()
    else:
        r_z, r_v = wave_residuals_batched(c0, c1, layout, xi, yi, ti, dt,
                                          stiffness=pi[:, 0], damping=pi[:, 1],
                                          entry=ei)
        out["l_z"] = (r_z ** 2).mean()
        out["l_v"] = (r_v ** 2).mean()

    xb, yb = _t(np.concatenate(sxb), dtype), _t(np.concatenate(syb), dtype)
    tb = _t(np.concatenate(stb), dtype)
    eb = torch.as_tensor(np.concatenate(seb), dtype=torch.long)
    tg = _t(np.concatenate(stg), dtype)
    out["n_boundary"] = xb.shape[0]
    if xb.shape[0] == 0:
        out["l_b"] = torch.zeros((), dtype=dtype)
    elif layout.kind == "flow":
        f = flow_fields(c0, c1, layout, xb, yb, tb, dt, entry=eb)
        out["l_b"] = ((f["v"] - tg) ** 2).sum(dim=1).mean()
    else:
        f = wave_fields(c0, c1, layout, xb, yb, tb, dt, entry=eb)
        out["l_b"] = ((f["z"] - tg[:, 0]) ** 2).mean()

    if layout.kind == "flow":
        out["l_tot"] = weights.alpha * out["l_p"] + weights.beta * out["l_b"]
    else:
        out["l_tot"] = (weights.alpha * out["l_z"] + weights.beta * out["l_v"]
                        + weights.gamma * out["l_b"])
    return out


def _report(kind: str, terms: dict) -> LossReport:
    get = lambda k: float(terms[k]) if k in terms else 0.0
    return LossReport(kind=kind, l_p=get("l_p"), l_z=get("l_z"),
                      l_v=get("l_v"), l_b=get("l_b"), l_tot=get("l_tot"),
                      n_interior=terms["n_interior"],
                      n_boundary=terms["n_boundary"])


def flow_loss(state, domain: DomainSpec, plan: SamplePlan | None = None,
              weights: LossWeights | None = None,
              rng: np.random.Generator | None = None) -> LossReport:
    if state.layout.kind != "flow":
        raise ConfigError("flow_loss requires a flow layout")
    terms = batch_loss_terms(state.c0.unsqueeze(0), state.c1.unsqueeze(0),
                             state.layout, [domain], [state.t],
                             plan or SamplePlan(), weights or LossWeights.flow(),
                             rng or np.random.default_rng())
    return _report("flow", terms)


def wave_loss(state, domain: DomainSpec, plan: SamplePlan | None = None,
              weights: LossWeights | None = None,
              rng: np.random.Generator | None = None) -> LossReport:
    if state.layout.kind != "wave":
        raise ConfigError("wave_loss requires a wave layout")
    terms = batch_loss_terms(state.c0.unsqueeze(0), state.c1.unsqueeze(0),
                             state.layout, [domain], [state.t],
                             plan or SamplePlan(), weights or LossWeights.wave(),
                             rng or np.random.default_rng())
    return _report("wave", terms)


def momentum_residual_at(state, domain: DomainSpec, point) -> np.ndarray:
    """Pointwise momentum residual; rejects points in solid cells."""
    x, y, t = point
    if domain.is_solid_at(x, y, t):
        raise SamplingDomainError(f"point ({x}, {y}) lies in a solid cell")
    dtype = state.c0.dtype
    tau = torch.as_tensor([(t - state.t) / state.dt], dtype=dtype)
    r = flow_residuals_batched(
        state.c0, state.c1, state.layout,
        torch.as_tensor([x], dtype=dtype), torch.as_tensor([y], dtype=dtype),
        tau, state.dt, mu=torch.full((1,), domain.mu, dtype=dtype),
        rho=torch.full((1,), domain.rho, dtype=dtype),
        force=torch.as_tensor([domain.force], dtype=dtype))
    return r[0].detach().cpu().numpy()


def wave_residuals_at(state, domain: DomainSpec, point):
    """Pointwise (r_z, r_v); rejects points in solid cells."""
    x, y, t = point
    if domain.is_solid_at(x, y, t):
        raise SamplingDomainError(f"point ({x}, {y}) lies in a solid cell")
    dtype = state.c0.dtype
    tau = torch.as_tensor([(t - state.t) / state.dt], dtype=dtype)
    r_z, r_v = wave_residuals_batched(
        state.c0, state.c1, state.layout,
        torch.as_tensor([x], dtype=dtype), torch.as_tensor([y], dtype=dtype),
        tau, state.dt, stiffness=torch.full((1,), domain.stiffness, dtype=dtype),
        damping=torch.full((1,), domain.damping, dtype=dtype))
    return float(r_z[0]), float(r_v[0])
