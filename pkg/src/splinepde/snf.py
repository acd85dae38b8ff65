"""Binary field export and frame payload encoding.

The .snf layout is magic `SNF1`, then little-endian uint32 W, H, C, then
C*H*W little-endian float32 values, row-major within each channel.
"""

from __future__ import annotations

import base64
import struct

import numpy as np
import torch

from .errors import ConfigError
from .fields import CoefficientState, FieldLayout

MAGIC = b"SNF1"


def write_snf(path, array) -> None:
    arr = np.asarray(array, dtype="<f4")
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3:
        raise ConfigError("snf arrays are [C,H,W] or [H,W]")
    c, h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<III", w, h, c))
        fh.write(np.ascontiguousarray(arr).tobytes())


def read_snf(path) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise ConfigError("bad snf magic")
    w, h, c = struct.unpack("<III", blob[4:16])
    data = np.frombuffer(blob[16:], dtype="<f4")
    if data.size != c * h * w:
        raise ConfigError("snf payload size mismatch")
    return data.reshape(c, h, w).copy()


def encode_frame(grid) -> str:
    """Row-major float32 little-endian grid as base64 text."""
    if torch.is_tensor(grid):
        grid = grid.detach().cpu().numpy()
    arr = np.ascontiguousarray(np.asarray(grid, dtype="<f4"))
    return base64.b64encode(arr.tobytes()).decode("ascii")


def decode_frame(data: str, w: int, h: int) -> np.ndarray:
    raw = base64.b64decode(data.encode("ascii"))
    arr = np.frombuffer(raw, dtype="<f4")
    if arr.size != w * h:
        raise ConfigError("frame payload size mismatch")
    return arr.reshape(h, w).copy()


def save_state(path, state: CoefficientState, step: int = 0) -> None:
    torch.save({"layout": state.layout.describe(),
                "c0": state.c0.detach().cpu(),
                "c1": state.c1.detach().cpu(),
                "t": float(state.t), "dt": float(state.dt),
                "step": int(step)}, path)


def load_state(path):
    payload = torch.load(path, map_location="cpu", weights_only=True)
    layout = FieldLayout.from_description(payload["layout"])
    state = CoefficientState(layout, payload["c0"], payload["c1"],
                             t=payload["t"], dt=payload["dt"])
    return state, payload.get("step", 0)
