"""Data-free pooled training.

A pool of randomized domains carries recycled coefficient slices.  Each step
draws a minibatch, occasionally resets entries to zero coefficients (half the
time with fresh geometry), predicts the next slice for every entry, takes one
Adam step on the physics loss over the spanned slab, and writes the detached
predictions back.  No field data is ever read; the only training signal is
the residuals and boundary targets.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field

import numpy as np
import torch

from .domain import DomainSpec, randomize_domain
from .errors import ConfigError, TrainingError
from .fields import FieldLayout
from .losses import LossWeights, SamplePlan, batch_loss_terms
from .models import PdeModel, normalize_modes, save_checkpoint


@dataclass
class PoolEntry:
    domain: DomainSpec
    coeffs: torch.Tensor   # [C, H, W] slice at time t, detached
    t: float = 0.0
    age: int = 0


class TrainingPool:
    """Fixed-size pool of (domain, coefficient slice, age) entries."""

    def __init__(self, layout: FieldLayout, size: int, width: int, height: int,
                 rng: np.random.Generator, dtype=torch.float32):
        self.layout = layout
        self.width = width
        self.height = height
        self.dtype = dtype
        self.entries = [
            PoolEntry(randomize_domain(rng, layout.kind, width, height),
                      torch.zeros(layout.channels, height, width, dtype=dtype))
            for _ in range(size)
        ]

    def __len__(self) -> int:
        return len(self.entries)

    def reset_entry(self, k: int, rng: np.random.Generator,
                    regen_prob: float) -> None:
        e = self.entries[k]
        if rng.uniform() < regen_prob:
            e.domain = randomize_domain(rng, self.layout.kind, self.width,
                                        self.height)
        e.coeffs = torch.zeros_like(e.coeffs)
        e.t = 0.0
        e.age = 0


@dataclass
class TrainConfig:
    kind: str
    width: int = 64
    height: int = 64
    steps: int = 500
    pool_size: int = 1000
    batch_size: int = 50
    lr: float = 1e-4
    p_reset: float = 0.2
    p_reset_final: float | None = None
    regen_prob: float = 0.5
    input_noise: float = 0.0
    seed: int = 0
    wave_order: int = 2
    plan: SamplePlan = field(default_factory=SamplePlan)
    weights: LossWeights | None = None
    out_dir: str | None = None
    checkpoint_every: int = 0

    def __post_init__(self):
        if self.batch_size > self.pool_size:
            raise ConfigError("batch size exceeds pool size")
        if self.kind not in ("flow", "wave"):
            raise ConfigError(f"unknown PDE kind {self.kind!r}")

    def layout(self) -> FieldLayout:
        if self.kind == "flow":
            return FieldLayout.flow()
        return FieldLayout.wave(order=self.wave_order)

    def reset_rate(self, it: int) -> float:
        """Reset probability at step it; anneals linearly to p_reset_final.

        Frequent resets keep early training stable while the model is still
        noisy; annealing toward a low rate lets pool entries grow old so the
        model trains against long self-generated rollouts.
        """
        if self.p_reset_final is None or self.steps <= 1:
            return self.p_reset
        f = it / (self.steps - 1)
        return self.p_reset + (self.p_reset_final - self.p_reset) * f

    def loss_weights(self) -> LossWeights:
        if self.weights is not None:
            return self.weights
        return LossWeights.flow() if self.kind == "flow" else LossWeights.wave()


def train_step(model: PdeModel, optimizer, pool: TrainingPool,
               config: TrainConfig, rng: np.random.Generator,
               p_reset: float | None = None) -> dict:
    """One minibatch update; returns the logged loss terms as floats."""
    layout = pool.layout
    if p_reset is None:
        p_reset = config.p_reset
    idx = rng.choice(len(pool), size=config.batch_size, replace=False)
    for k in idx:
        if rng.uniform() < p_reset:
            pool.reset_entry(int(k), rng, config.regen_prob)
        else:
            pool.entries[int(k)].age += 1
    batch = [pool.entries[int(k)] for k in idx]
    planes = torch.stack([e.domain.input_planes(e.t, dtype=pool.dtype)
                          for e in batch])
    coeffs = torch.stack([e.coeffs for e in batch])
    if config.input_noise > 0:
        # perturb the sampled slice and train through it: the model must
        # emit a physical next slice from a corrupted current one, which
        # teaches it to contract its own rollout drift
        s = model.scale.to(coeffs.dtype).view(-1, 1, 1)
        noise = torch.from_numpy(
            rng.standard_normal(tuple(coeffs.shape))).to(coeffs.dtype)
        coeffs = coeffs + config.input_noise * s * noise
    dc = model(planes, coeffs)
    c_next = normalize_modes(layout, coeffs + dc)
    terms = batch_loss_terms(coeffs, c_next, layout,
                             [e.domain for e in batch], [e.t for e in batch],
                             config.plan, config.loss_weights(), rng)
    loss = terms["l_tot"]
    if not torch.isfinite(loss.detach()):
        _dump_offender(model, layout, batch, coeffs, c_next, config, rng)
    optimizer.zero_grad()
    loss.backward()
    optimizer.step()
    detached = c_next.detach()
    for b, e in enumerate(batch):
        e.coeffs = detached[b].clone()
        e.t += e.domain.dt
    out = {k: float(v.detach()) if torch.is_tensor(v) else v
           for k, v in terms.items()}
    return out


def _dump_offender(model, layout, batch, coeffs, c_next, config, rng):
    """Find the entry with a non-finite per-entry loss and serialize it."""
    bad = None
    with torch.no_grad():
        for b, e in enumerate(batch):
            t = batch_loss_terms(coeffs[b:b + 1], c_next[b:b + 1].detach(),
                                 layout, [e.domain], [e.t], config.plan,
                                 config.loss_weights(),
                                 np.random.default_rng(0))
            if not np.isfinite(float(t["l_tot"])):
                bad = (b, e)
                break
    path = os.path.join(config.out_dir or ".", "abort_entry.pt")
    if bad is not None:
        b, e = bad
        torch.save({"domain": e.domain.to_dict(), "coeffs": e.coeffs,
                    "t": e.t, "age": e.age}, path)
        raise TrainingError(f"non-finite loss; offending entry {b} "
                            f"serialized to {path}")
    raise TrainingError("non-finite loss (no single entry isolates it)")


def train(config: TrainConfig, model: PdeModel | None = None):
    """Run the full loop; returns (model, rows) and appends the metrics log.

    Log format, one line per step: step, L_p|L_z, L_b, L_v, L_tot,
    wallclock_ms.  Deterministic for a fixed seed on fixed hardware.
    """
    layout = config.layout()
    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    if model is None:
        model = PdeModel(layout)
    optimizer = torch.optim.Adam(model.parameters(), lr=config.lr)
    pool = TrainingPool(layout, config.pool_size, config.width, config.height,
                        rng)
    log_file = None
    if config.out_dir:
        os.makedirs(config.out_dir, exist_ok=True)
        log_file = open(os.path.join(config.out_dir, "metrics.log"), "a")
    rows = []
    try:
        for it in range(config.steps):
            tick = time.perf_counter()
            terms = train_step(model, optimizer, pool, config, rng,
                               p_reset=config.reset_rate(it))
            ms = (time.perf_counter() - tick) * 1e3
            main = terms.get("l_p", terms.get("l_z", 0.0))
            row = {"step": it, "l_main": main, "l_b": terms["l_b"],
                   "l_v": terms.get("l_v", 0.0), "l_tot": terms["l_tot"],
                   "wallclock_ms": ms}
            rows.append(row)
            if log_file:
                log_file.write(f"{it}, {main:.6e}, {row['l_b']:.6e}, "
                               f"{row['l_v']:.6e}, {row['l_tot']:.6e}, "
                               f"{ms:.1f}\n")
                log_file.flush()
            if (config.checkpoint_every and config.out_dir
                    and (it + 1) % config.checkpoint_every == 0):
                save_checkpoint(os.path.join(config.out_dir,
                                             f"ckpt_{it + 1:06d}.pt"),
                                model, optimizer, step_count=it + 1,
                                seed=config.seed)
        if config.out_dir:
            save_checkpoint(os.path.join(config.out_dir, "model.pt"), model,
                            optimizer, step_count=config.steps,
                            seed=config.seed)
    finally:
        if log_file:
            log_file.close()
    return model, rows
