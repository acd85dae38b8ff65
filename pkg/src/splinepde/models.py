"""Convolutional update models over spline-coefficient grids.

The model maps (occupancy, Dirichlet data, coefficients at t) to a bounded
coefficient increment; adding the increment and mean-normalizing the gauge
channels advances the simulation one slab.  Zero network output is an exact
fixed point of stepping.
"""

from __future__ import annotations

import numpy as np
import torch
from torch import nn

from .domain import DomainSpec
from .errors import ConfigError, ShapeError, TrainingError
from .fields import CoefficientState, FieldLayout
from .kernels import build_kernel

# per-step cap on the value-mode increment; derivative modes scale down by
# the kernels' derivative magnitudes so all modes move fields comparably
INCREMENT_CAP = 10.0

UNET_DIVISOR = 16


def increment_scales(layout: FieldLayout) -> torch.Tensor:
    """Per-channel bounds for the coefficient increment, shape [C]."""
    scales = []
    for f in layout.fields:
        sx = build_kernel(f.lx).scale
        sy = build_kernel(f.ly).scale
        for iy in range(f.my):
            for ix in range(f.mx):
                scales.append(INCREMENT_CAP / (sx[ix] * sy[iy]))
    return torch.as_tensor(scales, dtype=torch.float64)


def normalize_modes(layout: FieldLayout, c: torch.Tensor) -> torch.Tensor:
    """Zero the spatial mean of the gauge channels (flow value modes).

    The value kernels form a partition of unity, so this shifts a_z and p by
    constants only; velocity and pressure gradients are unchanged.
    """
    if layout.kind != "flow":
        return c
    out = c.clone()
    for f in layout.fields:
        ch = f.offset
        out[..., ch, :, :] = c[..., ch, :, :] \
            - c[..., ch, :, :].mean(dim=(-2, -1), keepdim=True)
    return out


class FlowUNet(nn.Module):
    """U-shaped network: 4 levels, 32 base channels doubling, skip concat."""

    def __init__(self, in_channels: int, out_channels: int, base: int = 32):
        super().__init__()
        b = base
        self.enc0 = nn.Conv2d(in_channels, b, 3, padding=1)
        self.enc1 = nn.Conv2d(b, 2 * b, 3, padding=1)
        self.enc2 = nn.Conv2d(2 * b, 4 * b, 3, padding=1)
        self.enc3 = nn.Conv2d(4 * b, 8 * b, 3, padding=1)
        self.dec2 = nn.Conv2d(8 * b + 4 * b, 4 * b, 3, padding=1)
        self.dec1 = nn.Conv2d(4 * b + 2 * b, 2 * b, 3, padding=1)
        self.dec0 = nn.Conv2d(2 * b + b, b, 3, padding=1)
        self.head = nn.Conv2d(b, out_channels, 1)
        self.act = nn.LeakyReLU(0.1)
        self.pool = nn.MaxPool2d(2)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        up = lambda t: nn.functional.interpolate(t, scale_factor=2,
                                                 mode="bilinear",
                                                 align_corners=False)
        e0 = self.act(self.enc0(x))
        e1 = self.act(self.enc1(self.pool(e0)))
        e2 = self.act(self.enc2(self.pool(e1)))
        e3 = self.act(self.enc3(self.pool(e2)))
        d2 = self.act(self.dec2(torch.cat([up(e3), e2], dim=1)))
        d1 = self.act(self.dec1(torch.cat([up(d2), e1], dim=1)))
        d0 = self.act(self.dec0(torch.cat([up(d1), e0], dim=1)))
        return self.head(d0)


class WaveCNN(nn.Module):
    """Plain 3-layer CNN, 64 hidden channels."""

    def __init__(self, in_channels: int, out_channels: int, hidden: int = 64):
        super().__init__()
        self.net = nn.Sequential(
            nn.Conv2d(in_channels, hidden, 3, padding=1), nn.LeakyReLU(0.1),
            nn.Conv2d(hidden, hidden, 3, padding=1), nn.LeakyReLU(0.1),
            nn.Conv2d(hidden, out_channels, 3, padding=1))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(x)


class PdeModel(nn.Module):
    """Update map from (domain planes, coefficient slice) to a bounded Δc."""

    def __init__(self, layout: FieldLayout):
        super().__init__()
        self.layout = layout
        plane_channels = 1 + (2 if layout.kind == "flow" else 1)
        in_ch = plane_channels + layout.channels
        if layout.kind == "flow":
            self.net = FlowUNet(in_ch, layout.channels)
        else:
            self.net = WaveCNN(in_ch, layout.channels)
        self.register_buffer("scale", increment_scales(layout).float())

    def forward(self, planes: torch.Tensor, coeffs: torch.Tensor) -> torch.Tensor:
        """Bounded increment Δc for input planes [B,P,H,W] and coeffs [B,C,H,W]."""
        if planes.shape[-2:] != coeffs.shape[-2:]:
            raise ShapeError(f"plane grid {tuple(planes.shape[-2:])} does not "
                             f"match coefficient grid {tuple(coeffs.shape[-2:])}")
        if coeffs.shape[-3] != self.layout.channels:
            raise ShapeError(f"expected {self.layout.channels} coefficient "
                             f"channels, got {coeffs.shape[-3]}")
        H, W = coeffs.shape[-2:]
        if self.layout.kind == "flow" and (H % UNET_DIVISOR or W % UNET_DIVISOR):
            raise ConfigError(f"grid {W}x{H} not divisible by {UNET_DIVISOR}")
        raw = self.net(torch.cat([planes, coeffs], dim=-3))
        # rational soft clip: slope 1 at zero for every channel and only
        # polynomial saturation tails, so neither the wide value modes nor
        # the narrow derivative modes lose their gradient signal
        s = self.scale.to(raw.dtype).view(-1, 1, 1)
        return raw / (1 + raw.abs() / s)


def step(model: PdeModel, domain: DomainSpec,
         state: CoefficientState) -> CoefficientState:
    """Advance one slab: predict the slice at the new t + dt and promote.

    Inference path; gradients never flow through it (training drives the
    batched forward directly).
    """
    if (state.width, state.height) != (domain.width, domain.height):
        raise ShapeError("state and domain grids differ")
    with torch.no_grad():
        t_in = state.t + state.dt
        dtype = next(model.parameters()).dtype
        planes = domain.input_planes(t_in, dtype=dtype).unsqueeze(0)
        dc = model(planes, state.c1.to(dtype).unsqueeze(0))[0]
        new = normalize_modes(state.layout, state.c1 + dc.to(state.c1.dtype))
    return state.promote(new)


def parameter_gradients(model: PdeModel, loss: torch.Tensor) -> dict:
    """Gradient of a scalar loss for every named parameter (0 if unused)."""
    if not torch.isfinite(loss):
        raise TrainingError(f"non-finite loss {float(loss.detach())!r}")
    named = [(n, p) for n, p in model.named_parameters() if p.requires_grad]
    grads = torch.autograd.grad(loss, [p for _, p in named], allow_unused=True)
    return {n: (g if g is not None else torch.zeros_like(p))
            for (n, p), g in zip(named, grads)}


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(path, model: PdeModel, optimizer=None, *, step_count: int = 0,
                    seed: int | None = None, extra: dict | None = None) -> None:
    payload = {
        "layout": model.layout.describe(),
        "model_state": {k: v.cpu() for k, v in model.state_dict().items()},
        "step": int(step_count),
        "seed": seed,
        "extra": extra or {},
    }
    if optimizer is not None:
        payload["optimizer_state"] = optimizer.state_dict()
    torch.save(payload, path)


def load_checkpoint(path, with_optimizer=None):
    """Rebuild the model (and optionally optimizer state) from a checkpoint."""
    payload = torch.load(path, map_location="cpu", weights_only=True)
    layout = FieldLayout.from_description(payload["layout"])
    model = PdeModel(layout)
    model.load_state_dict(payload["model_state"])
    if with_optimizer is not None and "optimizer_state" in payload:
        with_optimizer.load_state_dict(payload["optimizer_state"])
    return model, payload
