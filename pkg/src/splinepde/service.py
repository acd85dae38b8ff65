"""Interactive stepping service over a websocket.

One client owns one running simulation.  The network reader only enqueues
raw messages; the session loop drains the queue between steps, so domain
edits are atomic with respect to stepping and no frame reflects a partial
batch.  Frames are row-major float32 grids, base64 encoded.
"""

from __future__ import annotations

import asyncio
import json
import time

import torch
import websockets

from .domain import DomainSpec, Oscillator, flow_channel, wave_box
from .errors import SplinePdeError
from .fields import CoefficientState, render
from .models import PdeModel, step as model_step
from .snf import encode_frame


class ProtocolError(ValueError):
    pass


_FIELDS = {"flow": ("v_mag", "p", "v_x", "v_y", "a_z"),
           "wave": ("z", "v_z")}


def default_domain(kind: str) -> DomainSpec:
    if kind == "flow":
        return flow_channel(96, 48, inflow=0.5)
    return wave_box(64, 64)


class SimSession:
    """Mutable session state: domain, coefficients, streaming choices."""

    def __init__(self, model: PdeModel, domain: DomainSpec):
        self.model = model
        self.domain = domain
        self.state = CoefficientState.zeros(model.layout, domain.width,
                                            domain.height, dtype=torch.float32)
        self.step_count = 0
        self.field = "v_mag" if model.layout.kind == "flow" else "z"
        self.upsample = 1
        self.max_rate = 0.0
        self.paused = False

    def step_once(self) -> None:
        self.state = model_step(self.model, self.domain, self.state)
        self.step_count += 1

    def field_frame(self) -> dict:
        grid = render(self.state, self.field, upsample=self.upsample, tau=1.0)
        return {"type": "frame", "step": self.step_count, "field": self.field,
                "w": grid.shape[1], "h": grid.shape[0],
                "data": encode_frame(grid)}

    def occupancy_frame(self) -> dict:
        snap = self.domain.materialize(self.state.t + self.state.dt)
        return {"type": "frame", "step": self.step_count,
                "field": "occupancy", "w": self.domain.width,
                "h": self.domain.height,
                "data": encode_frame(snap.solid.astype("<f4"))}

    def _cells(self, msg) -> list:
        cells = msg.get("cells")
        if not isinstance(cells, list) or not cells:
            raise ProtocolError("paint needs a non-empty cell list")
        out = []
        for cell in cells:
            try:
                x, y = int(cell[0]), int(cell[1])
            except (TypeError, ValueError, IndexError):
                raise ProtocolError(f"bad cell entry {cell!r}")
            if not (0 <= x < self.domain.width and 0 <= y < self.domain.height):
                raise ProtocolError(f"cell ({x}, {y}) out of bounds")
            out.append((x, y))
        return out

    def apply(self, msg: dict) -> list:
        """Handle one control message, returning reply dicts."""
        kind = msg.get("type")
        if kind == "paint":
            mode = msg.get("value")
            if mode not in ("solid", "fluid"):
                raise ProtocolError("paint value must be solid or fluid")
            for x, y in self._cells(msg):
                self.domain.solid[y, x] = mode == "solid"
                self.domain.value[:, y, x] = 0.0
            return [self.occupancy_frame()]
        if kind == "bc":
            cells = self._cells(msg)
            if self.domain.kind == "flow":
                vx = float(msg.get("vx", 0.0))
                vy = float(msg.get("vy", 0.0))
                for x, y in cells:
                    self.domain.solid[y, x] = True
                    self.domain.value[0, y, x] = vx
                    self.domain.value[1, y, x] = vy
            else:
                z = float(msg.get("z", 0.0))
                omega = float(msg.get("omega", 0.0))
                for x, y in cells:
                    self.domain.solid[y, x] = True
                    if omega != 0.0:
                        self.domain.oscillators.append(
                            Oscillator(x, y, amp=z, freq=omega))
                    else:
                        self.domain.value[0, y, x] = z
            return [self.occupancy_frame()]
        if kind == "params":
            keys = ("mu", "rho") if self.domain.kind == "flow" \
                else ("k", "delta")
            attrs = {"mu": "mu", "rho": "rho", "k": "stiffness",
                     "delta": "damping"}
            for key in keys:
                if key in msg:
                    val = float(msg[key])
                    if val <= 0 and key != "delta":
                        raise ProtocolError(f"{key} must be positive")
                    setattr(self.domain, attrs[key], val)
            return []
        if kind == "pause":
            self.paused = True
            return []
        if kind == "resume":
            self.paused = False
            return []
        if kind == "reset":
            self.state = CoefficientState.zeros(
                self.model.layout, self.domain.width, self.domain.height,
                dtype=torch.float32)
            self.step_count = 0
            return []
        if kind == "select":
            if "field" in msg:
                name = str(msg["field"])
                if name not in _FIELDS[self.domain.kind]:
                    raise ProtocolError(f"no field {name!r} for "
                                        f"{self.domain.kind}")
                self.field = name
            if "upsample" in msg:
                f = int(msg["upsample"])
                if not 1 <= f <= 8:
                    raise ProtocolError("upsample must be in 1..8")
                self.upsample = f
            if "max_rate" in msg:
                self.max_rate = max(0.0, float(msg["max_rate"]))
            return []
        raise ProtocolError(f"unknown message type {kind!r}")


async def _reader(ws, queue) -> None:
    try:
        async for raw in ws:
            await queue.put(raw)
    finally:
        await queue.put(None)


async def _run_session(session: SimSession, ws) -> None:
    queue: asyncio.Queue = asyncio.Queue()
    reader = asyncio.ensure_future(_reader(ws, queue))
    await ws.send(json.dumps(session.occupancy_frame()))
    last_step = 0.0
    try:
        while True:
            raw = None
            if session.paused and queue.empty():
                raw = await queue.get()
            replies = []
            closed = False
            while True:
                if raw is None:
                    try:
                        raw = queue.get_nowait()
                    except asyncio.QueueEmpty:
                        break
                if raw is None:
                    closed = True
                    break
                try:
                    msg = json.loads(raw)
                    if not isinstance(msg, dict):
                        raise ProtocolError("messages are JSON objects")
                    replies.extend(session.apply(msg))
                except (json.JSONDecodeError, ProtocolError) as exc:
                    replies.append({"type": "error", "msg": str(exc)})
                raw = None
            for reply in replies:
                await ws.send(json.dumps(reply))
            if closed:
                return
            if session.paused:
                continue
            if session.max_rate > 0:
                wait = last_step + 1.0 / session.max_rate - time.monotonic()
                if wait > 0:
                    await asyncio.sleep(wait)
            last_step = time.monotonic()
            try:
                session.step_once()
                frame = session.field_frame()
            except SplinePdeError as exc:
                session.paused = True
                await ws.send(json.dumps({"type": "error", "msg": str(exc)}))
                continue
            await ws.send(json.dumps(frame))
            await asyncio.sleep(0)
    finally:
        reader.cancel()


async def serve_session(model: PdeModel, port: int = 8765,
                        host: str = "127.0.0.1",
                        domain: DomainSpec | None = None):
    """Start the websocket server; returns the listening server object."""
    template = (domain or default_domain(model.layout.kind)).to_dict()
    busy = [False]

    async def handler(ws):
        if busy[0]:
            await ws.send(json.dumps({"type": "error",
                                      "msg": "session busy"}))
            await ws.close()
            return
        busy[0] = True
        try:
            session = SimSession(model, DomainSpec.from_dict(template))
            await _run_session(session, ws)
        except (websockets.exceptions.ConnectionClosed, OSError):
            pass
        finally:
            busy[0] = False

    return await websockets.serve(handler, host, port)
