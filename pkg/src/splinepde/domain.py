"""Cell-grid simulation domains.

A domain is a W x H raster of unit cells centered on the spline nodes: an
occupancy mask (solid / fluid), Dirichlet data on solid cells (velocity for
flow, height for wave), physical parameters, and optional time-dependent
oscillator drivers.  Everything the losses and the update model consume is
derived from snapshots of this raster.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch

from .errors import ConfigError, GeometryError


@dataclass
class Oscillator:
    """A driven cell: height A*sin(freq*t), optionally drifting linearly."""

    x: float
    y: float
    amp: float
    freq: float
    vx: float = 0.0
    vy: float = 0.0

    def position(self, t: float):
        return self.x + self.vx * t, self.y + self.vy * t

    def height(self, t: float) -> float:
        return self.amp * math.sin(self.freq * t)

    def to_dict(self) -> dict:
        return {"x": self.x, "y": self.y, "amp": self.amp, "freq": self.freq,
                "vx": self.vx, "vy": self.vy}


@dataclass
class DomainSnapshot:
    """Raster state at one instant: occupancy, Dirichlet data, driver ids."""

    solid: np.ndarray        # [H, W] bool
    value: np.ndarray        # [C, H, W] Dirichlet data on solid cells
    driver: np.ndarray       # [H, W] int, oscillator index or -1


@dataclass
class FaceSet:
    """Solid-fluid interface faces (unit length each), vectorized.

    Normals point from the solid cell into the fluid.  ``driver`` carries the
    oscillator index responsible for a face's Dirichlet value (-1 if static),
    so targets can be re-evaluated at exact sample times.
    """

    mid: np.ndarray          # [F, 2] (x, y) face midpoints
    tangent: np.ndarray      # [F, 2] unit tangent
    normal: np.ndarray       # [F, 2] unit normal, solid -> fluid
    value: np.ndarray        # [F, C] Dirichlet target
    driver: np.ndarray       # [F] int

    def __len__(self) -> int:
        return self.mid.shape[0]


_OFFSETS = ((1, 0), (-1, 0), (0, 1), (0, -1))


class DomainSpec:
    """Occupancy + Dirichlet rasters + parameters of one simulation domain."""

    def __init__(self, kind: str, width: int, height: int, *,
                 mu: float = 0.1, rho: float = 1.0,
                 stiffness: float = 10.0, damping: float = 0.1,
                 force=(0.0, 0.0), dt: float = 1.0,
                 oscillators=(), info: dict | None = None):
        if kind not in ("flow", "wave"):
            raise ConfigError(f"unknown domain kind {kind!r}")
        if width < 3 or height < 3:
            raise GeometryError("domain needs at least 3x3 cells")
        self.kind = kind
        self.width = int(width)
        self.height = int(height)
        self.mu = float(mu)
        self.rho = float(rho)
        self.stiffness = float(stiffness)
        self.damping = float(damping)
        self.force = (float(force[0]), float(force[1]))
        self.dt = float(dt)
        self.oscillators = list(oscillators)
        self.info = dict(info or {})
        self.solid = np.zeros((height, width), dtype=bool)
        self.value = np.zeros((self.dirichlet_channels, height, width))

    @property
    def dirichlet_channels(self) -> int:
        return 2 if self.kind == "flow" else 1

    # -- raster editing ----------------------------------------------------

    def set_solid(self, mask: np.ndarray, value=0.0) -> None:
        """Mark cells solid with a Dirichlet value (scalar or per-channel)."""
        self.solid[mask] = True
        val = np.broadcast_to(np.asarray(value, dtype=float).reshape(-1, 1),
                              (self.dirichlet_channels, int(mask.sum())))
        self.value[:, mask] = val

    def set_fluid(self, mask: np.ndarray) -> None:
        self.solid[mask] = False
        self.value[:, mask] = 0.0

    def paint(self, x: float, y: float, radius: float, solid: bool,
              value=0.0) -> None:
        """Circular brush: make cells within radius solid (with value) or fluid."""
        ii, jj = np.meshgrid(np.arange(self.width), np.arange(self.height))
        mask = (ii - x) ** 2 + (jj - y) ** 2 <= radius ** 2
        if solid:
            self.set_solid(mask, value)
        else:
            self.set_fluid(mask)

    # -- snapshots ---------------------------------------------------------

    def materialize(self, t: float) -> DomainSnapshot:
        """Raster state at time t with oscillator drivers applied."""
        solid = self.solid.copy()
        value = self.value.copy()
        driver = np.full((self.height, self.width), -1, dtype=np.int64)
        for k, osc in enumerate(self.oscillators):
            ox, oy = osc.position(t)
            i = int(np.clip(round(ox), 0, self.width - 1))
            j = int(np.clip(round(oy), 0, self.height - 1))
            solid[j, i] = True
            value[:, j, i] = osc.height(t)
            driver[j, i] = k
        return DomainSnapshot(solid=solid, value=value, driver=driver)

    def fluid_cells(self, t: float) -> np.ndarray:
        """Integer (x, y) centers of all fluid cells at time t, shape [K, 2]."""
        snap = self.materialize(t)
        jj, ii = np.nonzero(~snap.solid)
        return np.stack([ii, jj], axis=1)

    def boundary_faces(self, t: float) -> FaceSet:
        """All faces between a solid and a fluid 4-neighbor at time t.

        Cells beyond the grid edge count as solid with zero Dirichlet value,
        so fluid cells on the rim contribute outer-frame faces.
        """
        snap = self.materialize(t)
        H, W, C = self.height, self.width, self.dirichlet_channels
        psolid = np.ones((H + 2, W + 2), dtype=bool)
        psolid[1:-1, 1:-1] = snap.solid
        pvalue = np.zeros((C, H + 2, W + 2))
        pvalue[:, 1:-1, 1:-1] = snap.value
        pdriver = np.full((H + 2, W + 2), -1, dtype=np.int64)
        pdriver[1:-1, 1:-1] = snap.driver
        mids, tangents, normals, values, drivers = [], [], [], [], []
        for dx, dy in _OFFSETS:
            jj, ii = np.nonzero(~snap.solid
                                & psolid[1 + dy:H + 1 + dy, 1 + dx:W + 1 + dx])
            if ii.size == 0:
                continue
            mids.append(np.stack([ii + dx / 2.0, jj + dy / 2.0], axis=1))
            tangents.append(np.broadcast_to([abs(dy), abs(dx)], (ii.size, 2)))
            normals.append(np.broadcast_to([-dx, -dy], (ii.size, 2)))
            values.append(pvalue[:, jj + 1 + dy, ii + 1 + dx].T)
            drivers.append(pdriver[jj + 1 + dy, ii + 1 + dx])
        if not mids:
            return FaceSet(np.zeros((0, 2)), np.zeros((0, 2)),
                           np.zeros((0, 2)), np.zeros((0, C)),
                           np.zeros(0, dtype=np.int64))
        return FaceSet(np.concatenate(mids).astype(float),
                       np.concatenate(tangents).astype(float),
                       np.concatenate(normals).astype(float),
                       np.concatenate(values),
                       np.concatenate(drivers))

    def is_solid_at(self, x: float, y: float, t: float) -> bool:
        """Whether the point's containing cell is solid at time t."""
        i = int(np.clip(round(x), 0, self.width - 1))
        j = int(np.clip(round(y), 0, self.height - 1))
        return bool(self.materialize(t).solid[j, i])

    def input_planes(self, t: float, dtype=torch.float32) -> torch.Tensor:
        """Model input raster [1 + C, H, W]: occupancy (1 = solid) + Dirichlet."""
        snap = self.materialize(t)
        occ = snap.solid.astype(np.float64)[None]
        return torch.as_tensor(np.concatenate([occ, snap.value]), dtype=dtype)

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "kind": self.kind, "width": self.width, "height": self.height,
            "mu": self.mu, "rho": self.rho, "stiffness": self.stiffness,
            "damping": self.damping, "force": list(self.force), "dt": self.dt,
            "oscillators": [o.to_dict() for o in self.oscillators],
            "info": self.info,
            "solid": self.solid.astype(np.uint8).tolist(),
            "value": self.value.tolist(),
        }

    @staticmethod
    def from_dict(d: dict) -> "DomainSpec":
        spec = DomainSpec(d["kind"], d["width"], d["height"], mu=d["mu"],
                          rho=d["rho"], stiffness=d["stiffness"],
                          damping=d["damping"], force=tuple(d["force"]),
                          dt=d["dt"],
                          oscillators=[Oscillator(**o) for o in d["oscillators"]],
                          info=d.get("info"))
        spec.solid = np.asarray(d["solid"], dtype=np.uint8).astype(bool)
        spec.value = np.asarray(d["value"], dtype=float)
        if spec.solid.shape != (spec.height, spec.width):
            raise GeometryError("occupancy raster shape mismatch")
        return spec


# ---------------------------------------------------------------------------
# generators


def flow_channel(width: int, height: int, inflow: float = 0.0, *,
                 mu: float = 0.1, rho: float = 1.0, dt: float = 1.0) -> DomainSpec:
    """Closed channel: solid frame, inlet/outlet columns moving at (inflow, 0)."""
    spec = DomainSpec("flow", width, height, mu=mu, rho=rho, dt=dt,
                      info={"inflow": inflow})
    frame = np.zeros((height, width), dtype=bool)
    frame[0, :] = frame[-1, :] = True
    frame[:, 0] = frame[:, -1] = True
    spec.set_solid(frame, 0.0)
    cols = np.zeros_like(frame)
    cols[:, 0] = cols[:, -1] = True
    spec.set_solid(cols, (inflow, 0.0))
    return spec


def add_circle(spec: DomainSpec, cx: float, cy: float, r: float,
               spin: float = 0.0) -> None:
    """Solid disk; spin is an angular velocity giving rigid-rotation values."""
    ii, jj = np.meshgrid(np.arange(spec.width), np.arange(spec.height))
    mask = (ii - cx) ** 2 + (jj - cy) ** 2 <= r ** 2
    spec.solid[mask] = True
    if spec.kind == "flow":
        spec.value[0, mask] = -spin * (jj[mask] - cy)
        spec.value[1, mask] = spin * (ii[mask] - cx)
    else:
        spec.value[:, mask] = 0.0


def add_box(spec: DomainSpec, cx: float, cy: float, hw: float, hh: float) -> None:
    ii, jj = np.meshgrid(np.arange(spec.width), np.arange(spec.height))
    mask = (np.abs(ii - cx) <= hw) & (np.abs(jj - cy) <= hh)
    spec.set_solid(mask, 0.0)


def wave_box(width: int, height: int, *, stiffness: float = 10.0,
             damping: float = 0.1, oscillators=(), dt: float = 1.0) -> DomainSpec:
    """Solid frame with quiet walls; oscillator cells drive the interior."""
    spec = DomainSpec("wave", width, height, stiffness=stiffness,
                      damping=damping, oscillators=oscillators, dt=dt)
    frame = np.zeros((height, width), dtype=bool)
    frame[0, :] = frame[-1, :] = True
    frame[:, 0] = frame[:, -1] = True
    spec.set_solid(frame, 0.0)
    return spec


def randomize_domain(rng: np.random.Generator, kind: str, width: int,
                     height: int) -> DomainSpec:
    """Sample a training domain.

    Flow: channel with inflow speed in [0, 1.5], at most one obstacle (disk of
    radius 3..12, box, or none), optional disk spin in [-0.3, 0.3], and
    viscosity / density drawn log-uniformly from [0.01, 1] / [1, 10] so the
    induced Reynolds numbers cover both creeping and turbulent regimes.
    Wave: box with 0..4 oscillator cells, amplitude [0.5, 1.5], frequency
    [0.1, 1], half of them drifting linearly; stiffness 10, damping 0.1.
    """
    if kind == "flow":
        v0 = rng.uniform(0.0, 1.5)
        mu = 10.0 ** rng.uniform(-2.0, 0.0)
        rho = 10.0 ** rng.uniform(0.0, 1.0)
        spec = flow_channel(width, height, inflow=v0, mu=mu, rho=rho)
        shape = rng.choice(["none", "circle", "box"])
        length = height - 2.0
        if shape == "circle":
            r = min(rng.uniform(3.0, 12.0), (min(width, height) - 8) / 2.0)
            cx = rng.uniform(r + 3, width - 4 - r)
            cy = rng.uniform(r + 3, height - 4 - r)
            spin = rng.uniform(-0.3, 0.3) if rng.uniform() < 0.5 else 0.0
            add_circle(spec, cx, cy, r, spin=spin)
            length = 2.0 * r
        elif shape == "box":
            hw = min(rng.uniform(2.0, 8.0), (width - 10) / 2.0)
            hh = min(rng.uniform(2.0, 8.0), (height - 10) / 2.0)
            cx = rng.uniform(hw + 3, width - 4 - hw)
            cy = rng.uniform(hh + 3, height - 4 - hh)
            add_box(spec, cx, cy, hw, hh)
            length = 2.0 * hh
        spec.info.update({"obstacle": str(shape), "length": float(length)})
        return spec
    if kind == "wave":
        oscs = []
        for _ in range(int(rng.integers(0, 5))):
            osc = Oscillator(x=float(rng.uniform(2, width - 3)),
                             y=float(rng.uniform(2, height - 3)),
                             amp=float(rng.uniform(0.5, 1.5)),
                             freq=float(rng.uniform(0.1, 1.0)))
            if rng.uniform() < 0.5:
                speed = rng.uniform(0.0, 0.5)
                ang = rng.uniform(0.0, 2 * np.pi)
                osc.vx = float(speed * np.cos(ang))
                osc.vy = float(speed * np.sin(ang))
            oscs.append(osc)
        return wave_box(width, height, oscillators=oscs)
    raise ConfigError(f"unknown domain kind {kind!r}")
