"""Command line front end: train, simulate, eval-dfg, serve, export."""

from __future__ import annotations

import argparse
import asyncio
import json
import os
import sys

import numpy as np
import torch

from .benchmark import run_dfg
from .domain import DomainSpec
from .errors import SplinePdeError
from .fields import CoefficientState, render
from .losses import LossWeights, SamplePlan, flow_loss, wave_loss
from .models import load_checkpoint, save_checkpoint, step as model_step
from .service import serve_session
from .snf import load_state, save_state, write_snf
from .training import TrainConfig, train


def _cmd_train(args) -> int:
    with open(args.config) as fh:
        raw = json.load(fh)
    if "plan" in raw:
        raw["plan"] = SamplePlan(**raw["plan"])
    if "weights" in raw:
        raw["weights"] = LossWeights(**raw["weights"])
    config = TrainConfig(kind=args.pde, **raw)
    model, rows = train(config)
    save_checkpoint(args.out, model, step_count=config.steps,
                    seed=config.seed)
    if rows:
        print(f"final L_tot {rows[-1]['l_tot']:.6g} after {len(rows)} steps")
    return 0


def _cmd_simulate(args) -> int:
    model, _ = load_checkpoint(args.ckpt)
    with open(args.domain) as fh:
        domain = DomainSpec.from_dict(json.load(fh))
    os.makedirs(args.out, exist_ok=True)
    layout = model.layout
    state = CoefficientState.zeros(layout, domain.width, domain.height,
                                   dtype=torch.float32)
    loss_fn = flow_loss if layout.kind == "flow" else wave_loss
    main_key = "l_p" if layout.kind == "flow" else "l_z"
    lines = ["step,Lmain,Lb,Lv,Ltot"]
    for it in range(args.steps):
        state = model_step(model, domain, state)
        rep = loss_fn(state, domain, rng=np.random.default_rng(1000 + it))
        lines.append(f"{it},{getattr(rep, main_key):.8e},{rep.l_b:.8e},"
                     f"{rep.l_v:.8e},{rep.l_tot:.8e}")
    with open(os.path.join(args.out, "losses.csv"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    save_state(os.path.join(args.out, "state.pt"), state, step=args.steps)
    return 0


def _cmd_eval_dfg(args) -> int:
    model, _ = load_checkpoint(args.ckpt)
    report, loss = run_dfg(model, args.re, steps=args.steps,
                           warmup=args.warmup)
    report.to_csv(args.out)
    lo, avg, hi = report.summary()["c_d"]
    print(f"CD min/avg/max = {lo:.4g}/{avg:.4g}/{hi:.4g}  "
          f"Lp {loss.l_p:.4g}  Lb {loss.l_b:.4g}")
    return 0


def _cmd_serve(args) -> int:
    model, _ = load_checkpoint(args.ckpt)
    if model.layout.kind != args.pde:
        print(f"checkpoint is a {model.layout.kind} model, not {args.pde}",
              file=sys.stderr)
        return 1
    domain = None
    if args.domain:
        with open(args.domain) as fh:
            domain = DomainSpec.from_dict(json.load(fh))

    async def _serve() -> None:
        server = await serve_session(model, port=args.port, domain=domain)
        print(f"serving on port {args.port}")
        await server.wait_closed()

    asyncio.run(_serve())
    return 0


def _cmd_export(args) -> int:
    state, _ = load_state(args.state)
    grid = render(state, args.field, upsample=args.upsample, tau=1.0)
    write_snf(args.out, grid)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="splinepde")
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("train", help="self-supervised training")
    p.add_argument("--pde", choices=("flow", "wave"), required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("simulate", help="headless rollout with loss log")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--domain", required=True)
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("eval-dfg", help="channel-cylinder benchmark")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--re", type=int, choices=(2, 20, 100), required=True)
    p.add_argument("--steps", type=int, default=350)
    p.add_argument("--warmup", type=int, default=50)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_eval_dfg)

    p = sub.add_parser("serve", help="interactive websocket session")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--pde", choices=("flow", "wave"), required=True)
    p.add_argument("--domain", default=None)
    p.set_defaults(func=_cmd_serve)

    p = sub.add_parser("export", help="render a saved state to .snf")
    p.add_argument("--state", required=True)
    p.add_argument("--field", required=True)
    p.add_argument("--upsample", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_export)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SplinePdeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
