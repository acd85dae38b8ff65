"""Spline-coefficient field states and continuous space-time evaluation.

Coefficients live on the integer grid nodes of a W x H lattice, one channel
per tensor-product spline mode, at two time slices spanning the current slab
[t, t + dt].  Any point (x, y, tau) inside the lattice and slab can be
evaluated together with its partial derivatives; evaluation is linear in the
coefficients and differentiable by torch autograd.

Piece selection is cell-local: a sample in cell [i, i+1] always evaluates the
right-side piece of node i and the left-side piece of node i+1, so one-sided
derivative limits are used consistently on cell interiors and junctions.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import torch

from .errors import (ConfigError, DerivativeOrderError, LayoutError,
                     SamplingError)
from .kernels import LEFT, RIGHT, build_kernel


@dataclass(frozen=True)
class FieldDef:
    name: str
    lx: int
    ly: int
    offset: int  # first channel of this field in the coefficient stack

    @property
    def mx(self) -> int:
        return self.lx + 1

    @property
    def my(self) -> int:
        return self.ly + 1

    @property
    def channels(self) -> int:
        return self.mx * self.my


@dataclass(frozen=True)
class FieldLayout:
    """Channel layout of all fields of one PDE kind.

    Channel packing within a field: channel = j * (lx + 1) + i for x-mode i
    and y-mode j, so channel 0 is the pure value mode (0, 0).
    """

    kind: str
    fields: tuple
    temporal_order: int = 0

    @staticmethod
    def flow(a_order: int = 2, p_order: int = 1) -> "FieldLayout":
        if a_order < 2:
            raise ConfigError(
                "vector-potential spline order must be >= 2: the momentum "
                "residual needs third spatial derivatives of bounded variation")
        if p_order < 0:
            raise ConfigError("pressure spline order must be >= 0")
        a = FieldDef("a_z", a_order, a_order, 0)
        p = FieldDef("p", p_order, p_order, a.channels)
        return FieldLayout(kind="flow", fields=(a, p))

    @staticmethod
    def wave(order: int = 2) -> "FieldLayout":
        if order not in (1, 2):
            raise ConfigError("wave height-field spline order must be 1 or 2")
        z = FieldDef("z", order, order, 0)
        vz = FieldDef("v_z", order, order, z.channels)
        return FieldLayout(kind="wave", fields=(z, vz))

    @property
    def channels(self) -> int:
        return sum(f.channels for f in self.fields)

    def field(self, name: str) -> FieldDef:
        for f in self.fields:
            if f.name == name:
                return f
        raise LayoutError(f"layout {self.kind!r} has no field {name!r}")

    def describe(self) -> dict:
        return {
            "kind": self.kind,
            "fields": [(f.name, f.lx, f.ly) for f in self.fields],
            "temporal_order": self.temporal_order,
        }

    @staticmethod
    def from_description(desc: dict) -> "FieldLayout":
        if desc["kind"] == "flow":
            orders = {name: lx for name, lx, _ in desc["fields"]}
            return FieldLayout.flow(a_order=orders["a_z"], p_order=orders["p"])
        if desc["kind"] == "wave":
            order = desc["fields"][0][1]
            return FieldLayout.wave(order=order)
        raise ConfigError(f"unknown layout kind {desc['kind']!r}")


class CoefficientState:
    """Spline coefficients of all fields at the two slices of one time slab."""

    def __init__(self, layout: FieldLayout, c0: torch.Tensor, c1: torch.Tensor,
                 t: float = 0.0, dt: float = 1.0):
        if c0.shape != c1.shape or c0.dim() != 3:
            raise ConfigError(f"slice shapes must match and be [C,H,W], got "
                              f"{tuple(c0.shape)} / {tuple(c1.shape)}")
        if c0.shape[0] != layout.channels:
            raise ConfigError(f"layout expects {layout.channels} channels, "
                              f"got {c0.shape[0]}")
        if c0.shape[1] < 2 or c0.shape[2] < 2:
            raise ConfigError("grid must be at least 2x2 nodes")
        self.layout = layout
        self.c0 = c0
        self.c1 = c1
        self.t = float(t)
        self.dt = float(dt)

    @classmethod
    def zeros(cls, layout: FieldLayout, width: int, height: int,
              dtype=torch.float64, dt: float = 1.0) -> "CoefficientState":
        c = torch.zeros(layout.channels, height, width, dtype=dtype)
        return cls(layout, c, c.clone(), t=0.0, dt=dt)

    @property
    def width(self) -> int:
        return self.c0.shape[2]

    @property
    def height(self) -> int:
        return self.c0.shape[1]

    def promote(self, new_slice: torch.Tensor) -> "CoefficientState":
        """Advance the slab: old t+dt slice becomes t, new_slice becomes t+dt."""
        if new_slice.shape != self.c1.shape:
            raise ConfigError("promoted slice shape mismatch")
        return CoefficientState(self.layout, self.c1, new_slice,
                                t=self.t + self.dt, dt=self.dt)

    def clone(self) -> "CoefficientState":
        return CoefficientState(self.layout, self.c0.clone(), self.c1.clone(),
                                t=self.t, dt=self.dt)

    def is_finite(self) -> bool:
        return bool(torch.isfinite(self.c0).all() and torch.isfinite(self.c1).all())


@dataclass
class FieldSample:
    """Point sample of all fields needed by the residuals (numpy values)."""

    # flow
    v: np.ndarray | None = None
    dv_dt: np.ndarray | None = None
    grad_v: np.ndarray | None = None
    lap_v: np.ndarray | None = None
    p: float | None = None
    grad_p: np.ndarray | None = None
    # wave
    z: float | None = None
    dz_dt: float | None = None
    lap_z: float | None = None
    v_z: float | None = None
    dv_z_dt: float | None = None


# ---------------------------------------------------------------------------
# axis weights


@lru_cache(maxsize=None)
def _piece_matrix(order: int, side: int, deriv: int):
    """Ascending monomial coefficients [modes, order+2? -> padded] as numpy."""
    kt = build_kernel(order)
    rows = [kt.piece_coeffs(i, side, deriv) for i in range(order + 1)]
    width = max(r.size for r in rows)
    mat = np.zeros((order + 1, width))
    for i, r in enumerate(rows):
        mat[i, :r.size] = r
    return mat


def _polyval_batch(coeffs: torch.Tensor, u: torch.Tensor) -> torch.Tensor:
    """Horner on [modes, K] coefficients for u [N] -> [N, modes]."""
    acc = torch.zeros(u.shape[0], coeffs.shape[0], dtype=u.dtype, device=u.device)
    for k in range(coeffs.shape[1] - 1, -1, -1):
        acc = acc * u.unsqueeze(1) + coeffs[:, k]
    return acc


def _axis_weights(order: int, u: torch.Tensor, derivs) -> dict:
    """Kernel weights for the two nodes bounding a cell.

    u in [0, 1] is the within-cell coordinate.  Returns per requested
    derivative order a tensor [N, modes, 2]; index 0 of the last axis is the
    lower node (right piece at u), index 1 the upper node (left piece at u-1).
    """
    if any(d > order + 1 for d in derivs):
        raise DerivativeOrderError(
            f"derivative orders {sorted(derivs)} exceed order-{order} support")
    out = {}
    for d in derivs:
        right = torch.as_tensor(_piece_matrix(order, RIGHT, d),
                                dtype=u.dtype, device=u.device)
        left = torch.as_tensor(_piece_matrix(order, LEFT, d),
                               dtype=u.dtype, device=u.device)
        w_lo = _polyval_batch(right, u)
        w_hi = _polyval_batch(left, u - 1.0)
        out[d] = torch.stack([w_lo, w_hi], dim=-1)
    return out


def _locate(coord: torch.Tensor, n_nodes: int):
    i0 = torch.clamp(coord.floor().long(), 0, n_nodes - 2)
    return i0, coord - i0.to(coord.dtype)


# ---------------------------------------------------------------------------
# batched combo evaluation (the workhorse shared with the loss module)


def sample_field_combos(c0: torch.Tensor, c1: torch.Tensor, layout: FieldLayout,
                        field: str, x: torch.Tensor, y: torch.Tensor,
                        tau: torch.Tensor, combos, dt: float = 1.0,
                        entry: torch.Tensor | None = None) -> torch.Tensor:
    """Evaluate one field at N points for several derivative combos at once.

    c0, c1: [C, H, W] or batched [B, C, H, W] with ``entry`` giving the batch
    index per point.  ``combos`` is a sequence of (dx, dy, dt_order) with
    dt_order <= 1 (two slices, linear in time).  Returns [N, len(combos)].
    Kernel weights are constants with respect to the coefficients, so the
    result is differentiable in c0/c1 only.
    """
    fdef = layout.field(field)
    if c0.dim() == 3:
        c0 = c0.unsqueeze(0)
        c1 = c1.unsqueeze(0)
    if entry is None:
        entry = torch.zeros(x.shape[0], dtype=torch.long, device=x.device)
    _, _, H, W = c0.shape

    for dx, dy, dtau in combos:
        if dtau > layout.temporal_order + 1:
            raise DerivativeOrderError(
                f"temporal derivative {dtau} exceeds two-slice interpolation")
        if dx > fdef.lx + 1 or dy > fdef.ly + 1:
            raise DerivativeOrderError(
                f"spatial derivative ({dx},{dy}) exceeds field {field!r} "
                f"orders ({fdef.lx},{fdef.ly})")

    with torch.no_grad():
        i0, u = _locate(x, W)
        j0, v = _locate(y, H)
        wx = _axis_weights(fdef.lx, u, {c[0] for c in combos})
        wy = _axis_weights(fdef.ly, v, {c[1] for c in combos})
        pairs = sorted({(c[0], c[1]) for c in combos})
        wxs = torch.stack([wx[dx] for dx, _ in pairs], dim=1)  # [N,K,mx,2]
        wys = torch.stack([wy[dy] for _, dy in pairs], dim=1)  # [N,K,my,2]
        e3 = entry[:, None, None]
        j3 = (j0[:, None] + torch.arange(2, device=x.device)[None, :])[:, :, None]
        i3 = (i0[:, None] + torch.arange(2, device=x.device)[None, :])[:, None, :]

    sl = slice(fdef.offset, fdef.offset + fdef.channels)
    vals = []
    for c in (c0, c1):
        g = c[e3, sl, j3, i3]                       # [N, 2, 2, Cf]
        g = g.reshape(g.shape[0], 2, 2, fdef.my, fdef.mx)
        vals.append(torch.einsum("nqpab,nkaq,nkbp->nk", g, wys, wxs))
    v0, v1 = vals

    pair_index = {pr: k for k, pr in enumerate(pairs)}
    cols = []
    for dx, dy, dtau in combos:
        k = pair_index[(dx, dy)]
        if dtau == 0:
            cols.append((1.0 - tau) * v0[:, k] + tau * v1[:, k])
        else:
            cols.append((v1[:, k] - v0[:, k]) / dt)
    return torch.stack(cols, dim=1)


# ---------------------------------------------------------------------------
# public point-sampling operations


def _as_points(state: CoefficientState, x, y, t, check=True):
    dtype = state.c0.dtype
    xt = torch.atleast_1d(torch.as_tensor(x, dtype=dtype))
    yt = torch.atleast_1d(torch.as_tensor(y, dtype=dtype))
    tt = torch.atleast_1d(torch.as_tensor(t, dtype=dtype))
    xt, yt, tt = torch.broadcast_tensors(xt, yt, tt)
    xt, yt, tt = xt.reshape(-1), yt.reshape(-1), tt.reshape(-1)
    eps = 1e-9
    if check:
        if ((xt < -eps).any() or (xt > state.width - 1 + eps).any()
                or (yt < -eps).any() or (yt > state.height - 1 + eps).any()):
            raise SamplingError("point outside the grid "
                                f"[0, {state.width - 1}] x [0, {state.height - 1}]")
        tau = (tt - state.t) / state.dt
        if (tau < -eps).any() or (tau > 1 + eps).any():
            raise SamplingError(f"time outside the current slab "
                                f"[{state.t}, {state.t + state.dt}]")
    tau = ((tt - state.t) / state.dt).clamp(0.0, 1.0)
    return xt, yt, tau


def sample_scalar(state: CoefficientState, field: str, point, deriv=(0, 0, 0)):
    """Continuous evaluation of one field (or a partial derivative) at points.

    ``point`` is (x, y, t) with scalars or broadcastable arrays; scalar input
    returns a float.  The temporal chain rule factor (1/dt)**dt_order is
    applied.
    """
    x, y, t = point
    xt, yt, tau = _as_points(state, x, y, t)
    out = sample_field_combos(state.c0, state.c1, state.layout, field,
                              xt, yt, tau, [tuple(deriv)], dt=state.dt)[:, 0]
    if np.isscalar(x) and np.isscalar(y) and np.isscalar(t):
        return float(out[0])
    return out.detach().cpu().numpy()


_FLOW_A_COMBOS = [
    (0, 1, 0), (1, 0, 0),              # v = (d_y a, -d_x a)
    (0, 1, 1), (1, 0, 1),              # time derivatives of v
    (1, 1, 0), (0, 2, 0), (2, 0, 0),   # grad v entries
    (2, 1, 0), (0, 3, 0), (3, 0, 0), (1, 2, 0),  # laplacian of v
]
_FLOW_P_COMBOS = [(0, 0, 0), (1, 0, 0), (0, 1, 0)]


def flow_fields(c0, c1, layout, x, y, tau, dt, entry=None):
    """All flow quantities entering the momentum residual, batched.

    Returns a dict of tensors: v [N,2], dv_dt [N,2], grad_v [N,2,2],
    lap_v [N,2], p [N], grad_p [N,2].
    """
    a = sample_field_combos(c0, c1, layout, "a_z", x, y, tau,
                            _FLOW_A_COMBOS, dt=dt, entry=entry)
    pr = sample_field_combos(c0, c1, layout, "p", x, y, tau,
                             _FLOW_P_COMBOS, dt=dt, entry=entry)
    ay, ax, ayt, axt, axy, ayy, axx, axxy, ayyy, axxx, axyy = a.unbind(dim=1)
    v = torch.stack([ay, -ax], dim=1)
    dv_dt = torch.stack([ayt, -axt], dim=1)
    grad_v = torch.stack([
        torch.stack([axy, ayy], dim=1),
        torch.stack([-axx, -axy], dim=1),
    ], dim=1)                                  # grad_v[n, component, d/d(axis)]
    lap_v = torch.stack([axxy + ayyy, -(axxx + axyy)], dim=1)
    return {
        "v": v, "dv_dt": dv_dt, "grad_v": grad_v, "lap_v": lap_v,
        "p": pr[:, 0], "grad_p": pr[:, 1:3],
    }


_WAVE_Z_COMBOS = [(0, 0, 0), (0, 0, 1), (2, 0, 0), (0, 2, 0)]
_WAVE_V_COMBOS = [(0, 0, 0), (0, 0, 1)]


def wave_fields(c0, c1, layout, x, y, tau, dt, entry=None):
    """Wave quantities entering the residuals: z, dz_dt, lap_z, v_z, dv_z_dt."""
    z = sample_field_combos(c0, c1, layout, "z", x, y, tau,
                            _WAVE_Z_COMBOS, dt=dt, entry=entry)
    vz = sample_field_combos(c0, c1, layout, "v_z", x, y, tau,
                             _WAVE_V_COMBOS, dt=dt, entry=entry)
    return {
        "z": z[:, 0], "dz_dt": z[:, 1], "lap_z": z[:, 2] + z[:, 3],
        "v_z": vz[:, 0], "dv_z_dt": vz[:, 1],
    }


def velocity_at(state: CoefficientState, point):
    """Velocity and its derivatives from the vector potential at one point.

    Returns (v, dv_dt, grad_v, lap_v) as numpy arrays; v_x = d_y a_z and
    v_y = -d_x a_z, so the divergence vanishes identically.
    """
    if state.layout.kind != "flow":
        raise LayoutError("velocity_at requires a flow layout")
    x, y, t = point
    xt, yt, tau = _as_points(state, x, y, t)
    f = flow_fields(state.c0, state.c1, state.layout, xt, yt, tau, state.dt)
    squeeze = np.isscalar(x) and np.isscalar(y) and np.isscalar(t)
    def conv(t_):
        arr = t_.detach().cpu().numpy()
        return arr[0] if squeeze else arr
    return conv(f["v"]), conv(f["dv_dt"]), conv(f["grad_v"]), conv(f["lap_v"])


def field_sample(state: CoefficientState, point) -> FieldSample:
    """Full residual-level sample record at one point (flow or wave)."""
    x, y, t = point
    xt, yt, tau = _as_points(state, x, y, t)
    if state.layout.kind == "flow":
        f = flow_fields(state.c0, state.c1, state.layout, xt, yt, tau, state.dt)
        g = lambda k: f[k][0].detach().cpu().numpy()
        return FieldSample(v=g("v"), dv_dt=g("dv_dt"), grad_v=g("grad_v"),
                           lap_v=g("lap_v"), p=float(f["p"][0]),
                           grad_p=g("grad_p"))
    f = wave_fields(state.c0, state.c1, state.layout, xt, yt, tau, state.dt)
    return FieldSample(
        z=float(f["z"][0]), dz_dt=float(f["dz_dt"][0]),
        lap_z=float(f["lap_z"][0]), v_z=float(f["v_z"][0]),
        dv_z_dt=float(f["dv_z_dt"][0]))


# ---------------------------------------------------------------------------
# dense rendering via transposed convolution


_RENDER_EXPRS = {
    "a_z": ("flow", [("a_z", 0, 0, 1.0)]),
    "p": ("flow", [("p", 0, 0, 1.0)]),
    "v_x": ("flow", [("a_z", 0, 1, 1.0)]),
    "v_y": ("flow", [("a_z", 1, 0, -1.0)]),
    "z": ("wave", [("z", 0, 0, 1.0)]),
    "v_z": ("wave", [("v_z", 0, 0, 1.0)]),
}


@lru_cache(maxsize=None)
def _render_axis_kernel(order: int, f: int, deriv: int, dtype_str: str):
    """Per-axis transposed-conv taps g[mode, t], t = 0..2f-1, offset (t-f)/f."""
    kt = build_kernel(order)
    taps = np.zeros((order + 1, 2 * f))
    for t in range(2 * f):
        off = (t - f) / f
        side = RIGHT if off >= 0 else LEFT
        for i in range(order + 1):
            taps[i, t] = np.polynomial.polynomial.polyval(
                off, kt.piece_coeffs(i, side, deriv))
    return torch.as_tensor(taps, dtype=getattr(torch, dtype_str))


def _render_one(cslice: torch.Tensor, fdef: FieldDef, dx: int, dy: int,
                f: int) -> torch.Tensor:
    """conv_transpose2d accumulation of one field slice at upsampling f."""
    dtype_str = str(cslice.dtype).split(".")[-1]
    gx = _render_axis_kernel(fdef.lx, f, dx, dtype_str)   # [mx, 2f]
    gy = _render_axis_kernel(fdef.ly, f, dy, dtype_str)   # [my, 2f]
    weight = torch.einsum("at,bs->abts", gy, gx)          # [my, mx, 2f, 2f]
    weight = weight.reshape(fdef.my * fdef.mx, 1, 2 * f, 2 * f)
    inp = cslice[fdef.offset:fdef.offset + fdef.channels].unsqueeze(0)
    out = torch.nn.functional.conv_transpose2d(inp, weight, stride=f)
    H, W = cslice.shape[1], cslice.shape[2]
    out = out.sum(dim=1)[0]
    out = out[f:f + f * H, f:f + f * W]
    # positions beyond the last node clamp to the node (edge replication)
    last_y, last_x = f * (H - 1), f * (W - 1)
    out[last_y + 1:, :] = out[last_y:last_y + 1, :]
    out[:, last_x + 1:] = out[:, last_x:last_x + 1]
    return out


def render(state: CoefficientState, field_expr: str, upsample: int = 1,
           tau: float = 0.0) -> np.ndarray:
    """Dense [f*H x f*W] evaluation of a field expression at slab fraction tau.

    Pixel (row u, col v) holds the field at (min(v/f, W-1), min(u/f, H-1)),
    identical to pointwise sample_scalar calls at those positions.
    """
    if int(upsample) != upsample or upsample < 1:
        raise ConfigError(f"upsample factor must be a positive integer, got {upsample}")
    if not 0.0 <= tau <= 1.0:
        raise SamplingError(f"tau must lie in [0, 1], got {tau}")
    f = int(upsample)
    if field_expr == "v_mag":
        vx = render(state, "v_x", f, tau)
        vy = render(state, "v_y", f, tau)
        return np.sqrt(vx * vx + vy * vy)
    if field_expr not in _RENDER_EXPRS:
        raise LayoutError(f"unknown field expression {field_expr!r}")
    kind, terms = _RENDER_EXPRS[field_expr]
    if kind != state.layout.kind:
        raise LayoutError(f"field {field_expr!r} needs a {kind} layout")
    acc = None
    with torch.no_grad():
        for cslice, w in ((state.c0, 1.0 - tau), (state.c1, tau)):
            if w == 0.0:
                continue
            for fname, dx, dy, sign in terms:
                part = _render_one(cslice, state.layout.field(fname), dx, dy, f)
                part = part * (sign * w)
                acc = part if acc is None else acc + part
    return acc.cpu().numpy()
