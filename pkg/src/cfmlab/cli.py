"""``cfmlab`` command line: collect, train, eval, plan, ablate, gradcheck.

Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import bench, checks, dataset, models, sim
from .config import RunConfig
from .errors import EpisodeError, FormatError, TrainingDivergedError

log = logging.getLogger("cfmlab")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _csv(text):
    return [t for t in text.split(",") if t]


def _add_common(p):
    p.add_argument("--config", help="JSON RunConfig file; flags override its values")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int, help="worker cap (fallback: CFM_THREADS)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    parser = _Parser(prog="cfmlab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("collect", help="roll out the random policy and write a CFMD dataset")
    _add_common(p)
    p.add_argument("--env", dest="env_kind", choices=sim.ENV_KINDS)
    p.add_argument("--n-traj", type=int)
    p.add_argument("--len", dest="traj_len", type=int)
    p.add_argument("--size", dest="image_size", type=int)
    p.add_argument("--randomize", action="store_true", default=None)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train a latent model on a CFMD dataset")
    _add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--objective", choices=models.OBJECTIVES)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--forward", dest="forward_variant", choices=models.FORWARD_VARIANTS)
    p.add_argument("--similarity", choices=models.SIMILARITIES)
    p.add_argument("--condition", choices=("concat", "action"))
    p.add_argument("--out", help="checkpoint path (default derives from the config hash)")

    for name, help_text in (("eval", "benchmark checkpoints and/or the random policy"),
                            ("plan", "run one episode with per-step logging")):
        p = sub.add_parser(name, help=help_text)
        _add_common(p)
        p.add_argument("--ckpt", action="append", default=[], help="checkpoint path (repeatable)")
        p.add_argument("--policy", choices=("model", "random"), default="model")
        p.add_argument("--env", dest="env_kind", choices=sim.ENV_KINDS)
        p.add_argument("--size", dest="image_size", type=int)
        p.add_argument("--goals" if name == "eval" else "--goal", dest="goals", type=_csv)
        p.add_argument("--episodes", type=int)
        p.add_argument("--max-steps", type=int)
        p.add_argument("--candidates", dest="n_candidates", type=int)
        p.add_argument("--randomize", action="store_true", default=None)
        p.add_argument("--out", help="output prefix for .json/.tsv results")

    p = sub.add_parser("ablate", help="forward-model x similarity grid on one dataset")
    _add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--grid", nargs="+", default=["fm=linear,mlp,mlp_linear", "sim=e2,logbilinear"])
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--episodes", type=int)
    p.add_argument("--max-steps", type=int)
    p.add_argument("--goals", type=_csv)
    p.add_argument("--out")

    p = sub.add_parser("gradcheck", help="finite-difference check of every layer and objective")
    _add_common(p)
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--h", type=float, default=1e-5)
    p.add_argument("--max-coords", type=int, default=12)
    return parser


def _set_threads(n):
    n = n or int(os.environ.get("CFM_THREADS", "0") or 0)
    if n > 0:
        import numba

        numba.set_num_threads(max(1, min(n, numba.config.NUMBA_NUM_THREADS)))


def _run_config(args, keys):
    base = RunConfig()
    if args.config:
        base = RunConfig.from_json(Path(args.config).read_text())
    return base.merged({k: getattr(args, k, None) for k in keys + ["seed"]})


def _echo(cfg):
    print(json.dumps({"config": cfg.to_dict(), "config_hash": cfg.hash()}, sort_keys=True))


def cmd_collect(args):
    cfg = _run_config(args, ["env_kind", "n_traj", "traj_len", "image_size", "randomize"])
    _echo(cfg)
    data = dataset.collect_random(cfg.env_kind, cfg.n_traj, cfg.traj_len, cfg.seed, cfg.randomize, cfg.image_size)
    dataset.save_file(data, args.out)
    print(f"wrote {args.out}: {data.n_traj} trajectories, {data.n_transitions} transitions "
          f"({data.resampled_params} render-param resamples)")
    return 0


def cmd_train(args):
    data = dataset.load_file(args.data)
    cfg = _run_config(args, ["objective", "epochs", "batch_size", "lr", "forward_variant", "similarity", "condition"])
    cfg = cfg.merged({"env_kind": data.env_kind, "image_size": data.image_size, "data": args.data})
    _echo(cfg)
    out = Path(args.out or f"{cfg.objective}-{data.env_kind}-{cfg.hash()}.cfmc")
    try:
        ckpt, losses = models.train(data, cfg.train_config(),
                                    on_epoch=lambda e, l: print(f"epoch {e + 1}/{cfg.epochs} loss {l:.6f}", flush=True))
    except TrainingDivergedError:
        out.unlink(missing_ok=True)
        raise
    models.save_checkpoint_file(ckpt, out)
    curve = out.with_suffix(".losses.json")
    curve.write_text(json.dumps({"config": cfg.to_dict(), "config_hash": cfg.hash(), "losses": losses}, indent=2))
    print(f"wrote {out} and {curve}")
    return 0


def _load_methods(args):
    methods = {}
    for path in args.ckpt:
        methods[Path(path).stem] = models.load_checkpoint_file(path)
    if args.policy == "random":
        methods["random"] = "random"
    if not methods:
        raise UsageError("give --ckpt PATH (train one with `cfmlab train`) or --policy random")
    return methods


def _env_for(methods, cfg, args):
    kinds = set()
    for m in methods.values():
        if m != "random":
            kinds.update(k for k, v in sim.ACTION_DIMS.items() if v == m.forward.action_dim)
            cfg = cfg.merged({"image_size": m.encoder.input_size})
    if args.env_kind:
        return args.env_kind, cfg
    if len(kinds) != 1:
        raise UsageError("cannot infer the environment; pass --env")
    return kinds.pop(), cfg


def _default_goals(kind):
    return {"rope": ["horizontal", "random"], "cloth": ["flat", "random"], "pointmass": ["center", "random"]}[kind]


def cmd_eval(args):
    methods = _load_methods(args)
    cfg = _run_config(args, ["image_size", "episodes", "max_steps", "n_candidates", "randomize"])
    kind, cfg = _env_for(methods, cfg, args)
    goals = args.goals or _default_goals(kind)
    cfg = cfg.merged({"env_kind": kind, "goals": goals})
    _echo(cfg)
    table = bench.benchmark(kind, methods, goals, cfg.episodes, cfg.max_steps or None, cfg.seed,
                            cfg.n_candidates, cfg.image_size, cfg.randomize,
                            config={"run": cfg.to_dict(), "checkpoints": args.ckpt})
    _write_table(table, args.out or f"eval-{kind}-{cfg.hash()}")
    return 0


def _write_table(table, prefix):
    Path(f"{prefix}.json").write_text(table.to_json())
    Path(f"{prefix}.tsv").write_text(table.to_tsv())
    print(table.format_text())
    print(f"wrote {prefix}.json and {prefix}.tsv")


def cmd_plan(args):
    methods = _load_methods(args)
    if len(methods) != 1:
        raise UsageError("plan runs exactly one policy")
    cfg = _run_config(args, ["image_size", "max_steps", "n_candidates", "randomize"])
    kind, cfg = _env_for(methods, cfg, args)
    goal = (args.goals or _default_goals(kind))[0]
    _echo(cfg)
    (name, policy), = methods.items()
    spec = bench.GoalSpec(kind, goal, cfg.seed, cfg.image_size)
    rep = bench.run_episode(kind, policy, spec, cfg.max_steps or None, cfg.seed, cfg.randomize,
                            cfg.n_candidates, cfg.image_size)
    for t, d in enumerate(rep.trace):
        print(f"step {t:3d}  distance {d:.4f}")
    print(f"{name} on {goal}: best {rep.best:.4f}, final {rep.final:.4f}, "
          f"pixel intersection {rep.final_pixel_intersection}, {rep.wall_time:.1f}s")
    return 0


def _parse_grid(items):
    grid = {"fm": list(bench.ABLATION_FORWARD), "sim": list(bench.ABLATION_SIMILARITY)}
    for item in items:
        key, _, vals = item.partition("=")
        if key not in grid or not vals:
            raise UsageError(f"bad grid axis {item!r}; expected fm=... or sim=...")
        grid[key] = _csv(vals)
    for v in grid["fm"]:
        if v not in models.FORWARD_VARIANTS:
            raise UsageError(f"unknown forward model {v!r}")
    for v in grid["sim"]:
        if v not in models.SIMILARITIES:
            raise UsageError(f"unknown similarity {v!r}")
    return grid


def cmd_ablate(args):
    grid = _parse_grid(args.grid)
    data = dataset.load_file(args.data)
    cfg = _run_config(args, ["epochs", "batch_size", "episodes", "max_steps", "goals"])
    cfg = cfg.merged({"env_kind": data.env_kind, "image_size": data.image_size, "data": args.data,
                      "goals": args.goals or ["random"]})
    _echo(cfg)
    table, _ = bench.ablate(data, cfg.train_config(), cfg.goals, grid["fm"], grid["sim"],
                            n_episodes=cfg.episodes, max_steps=cfg.max_steps or None, seed=cfg.seed,
                            n_candidates=cfg.n_candidates)
    _write_table(table, args.out or f"ablate-{data.env_kind}-{cfg.hash()}")
    return 0


def cmd_gradcheck(args):
    seed = args.seed or 0
    items = checks.run_gradcheck(range(seed, seed + args.seeds), h=args.h, max_coords=args.max_coords)
    worst = checks.summarize(items)
    ok = True
    for name, err in worst.items():
        passed = err < args.tol
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'}  {name:<22} max rel. error {err:.3e}")
    print(f"{len(items)} checks over {args.seeds} seeds, tolerance {args.tol:g}: {'PASS' if ok else 'FAIL'}")
    return 0 if ok else 2


COMMANDS = {"collect": cmd_collect, "train": cmd_train, "eval": cmd_eval, "plan": cmd_plan,
            "ablate": cmd_ablate, "gradcheck": cmd_gradcheck}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help()
            return 1
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    _set_threads(args.threads)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"cfmlab {args.command}: {exc}", file=sys.stderr)
        return 1
    except (OSError, FormatError, TrainingDivergedError, EpisodeError, RuntimeError) as exc:
        print(f"cfmlab {args.command}: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        # invalid config values or flag combinations
        print(f"cfmlab {args.command}: {exc}", file=sys.stderr)
        return 1

if __name__ == "__main__":
    sys.exit(main())
