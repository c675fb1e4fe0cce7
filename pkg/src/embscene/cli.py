"""Command line entry point: ``embscene <command> [options]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import ConfigError, ExperimentConfig, load_config
from .demogen import demos_to_jsonl
from .gridscene import Pose, SceneError, load_scene, scene_to_json
from .harness import (EvalContext, StageFailed, evaluate, learned_method, make_splits, random_policy_rollout,
                      render_ascii, run_experiment, run_pipeline, train_config, train_il_selected)
from .langmetrics import METRIC_NAMES, score_corpus
from .lexicon import Lexicon, build_lexicon
from .perception import observe
from .policy import DivergenceDetected, Env, PolicyParams, demo_sequence, rollout, train_rl
from .scoring import ScoringConfig, score_map

log = logging.getLogger("embscene")


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_seed(args.seed)
    if getattr(args, "scenes", None) is not None:
        cfg = replace(cfg, split=replace(cfg.split, train_per_type=args.scenes))
    return cfg


def _scoring(cfg: ExperimentConfig, lex: Lexicon) -> ScoringConfig:
    return ScoringConfig.for_lexicon(lex, cfg.scoring.lam, cfg.scoring.mode)


def _pose(text: str) -> Pose:
    try:
        x, y, h = (int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected x,y,h but got {text!r}") from None
    return Pose(x, y, h)


def _write(path: str | None, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)


def _read_scene(path: str, lex: Lexicon | None = None):
    return load_scene(Path(path).read_text(), lex)


def _load_params(path: str) -> PolicyParams:
    return PolicyParams.from_json(Path(path).read_text())


def _eval_ctx(cfg, art, lr=None) -> EvalContext:
    scoring = _scoring(cfg, art.lexicon)
    return EvalContext(art.lexicon, scoring, cfg.noise, train_config(cfg, lr or cfg.rl.lr, cfg.rl.batch_size),
                       art.refs, cfg.visibility, cfg.seed)


# ----------------------------------------------------------------- commands


def cmd_gen_scenes(args) -> int:
    cfg = _config(args)
    split = make_splits(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for sid, scene in split.scenes.items():
        (out / f"{sid}.json").write_text(scene_to_json(scene) + "\n")
    print(f"wrote {len(split.scenes)} scenes to {out}")
    return 0


def cmd_score_map(args) -> int:
    cfg = _config(args)
    lex = build_lexicon(cfg.lexicon_seed)
    scene = _read_scene(args.scene, lex)
    smap = score_map(scene, lex, _scoring(cfg, lex), cfg.noise, cfg.visibility)
    _write(args.out, smap.to_csv())
    heat = render_ascii(scene, heat=smap) + f"s_max={smap.s_max:.4f} at {tuple(smap.argmax)}\n"
    (sys.stdout if args.out else sys.stderr).write(heat)
    return 0


def cmd_observe(args) -> int:
    cfg = _config(args)
    lex = build_lexicon(cfg.lexicon_seed)
    scene = _read_scene(args.scene, lex)
    obs = observe(scene, args.pose, lex, cfg.noise, cfg.scoring.mode, cfg.visibility)
    _write(args.out, obs.to_json() + "\n")
    return 0


def cmd_demos(args) -> int:
    cfg = _config(args)
    art = run_pipeline(cfg, stop_after="demos")
    _write(args.out, demos_to_jsonl(art.demos))
    log.info("%d demonstrations", len(art.demos))
    return 0


def cmd_train_il(args) -> int:
    cfg = _config(args)
    il = cfg.il
    if args.lr is not None:
        il = replace(il, lr=args.lr)
    if args.epochs is not None:
        il = replace(il, epochs=args.epochs)
    cfg = replace(cfg, il=il)
    art = run_pipeline(cfg, stop_after="demos")
    lex, split = art.lexicon, art.split
    seqs = [demo_sequence(split.scenes[d.scene_id], d, lex, cfg.noise, cfg.scoring.mode, cfg.visibility)
            for d in art.demos]
    params = PolicyParams.init(lex.n_categories, lex.bow_size, il.hidden, il.d_lang, cfg.seed)
    params, history = train_il_selected(params, seqs, cfg, split, _eval_ctx(cfg, art))
    for h in history:
        log.info("epochs=%d validation SoL=%.4f", h["epochs"], h["val_SoL"])
    _write(args.checkpoint, params.to_json() + "\n")
    return 0


def cmd_train_rl(args) -> int:
    cfg = _config(args)
    rl = cfg.rl
    if args.lr is not None:
        rl = replace(rl, lr=args.lr)
    if args.epochs is not None:
        rl = replace(rl, updates=args.epochs)
    cfg = replace(cfg, rl=rl)
    art = run_pipeline(cfg, stop_after="demos")
    params = _load_params(args.checkpoint)
    scoring = _scoring(cfg, art.lexicon)
    envs, starts = [], []
    for sid in art.split.train:
        scene = art.split.scenes[sid]
        rng = np.random.default_rng([cfg.seed, scene.seed, 0x52])
        envs.append(Env(scene, art.lexicon, cfg.noise.with_seed(int(rng.integers(2**31))), scoring, cfg.visibility))
        starts.append(list(art.score_maps[sid].poses))
    params = train_rl(params, envs, starts, train_config(cfg, rl.lr, rl.batch_size), rl.updates,
                      lambda k, base, sol: log.info("update %d baseline %.4f mean final score %.4f", k, base, sol))
    _write(args.out, params.to_json() + "\n")
    return 0


def cmd_rollout(args) -> int:
    cfg = _config(args)
    lex = build_lexicon(cfg.lexicon_seed)
    scene = _read_scene(args.scene, lex)
    params = _load_params(args.checkpoint)
    tc = train_config(cfg, cfg.rl.lr, cfg.rl.batch_size)
    ep = rollout(params, scene, args.start, lex, cfg.noise.with_seed(cfg.seed), tc, args.mode, cfg.seed,
                 _scoring(cfg, lex))
    doc = {"scene_id": scene.id, "start": list(args.start), "actions": [int(a) for a in ep.actions],
           "poses": [list(p) for p in ep.poses] + [list(ep.final_pose)], "NoS": ep.nos,
           "SoL": ep.final_score, "termination": ep.termination, "caption": " ".join(ep.final_observation.caption)}
    _write(args.out, json.dumps(doc, indent=2) + "\n")
    if args.render:
        sys.stderr.write(render_ascii(scene, trajectory=list(ep.poses) + [ep.final_pose]))
    return 0


def cmd_eval(args) -> int:
    cfg = _config(args)
    art = run_pipeline(cfg, stop_after="demos")
    methods = {"Random": random_policy_rollout}
    for item in args.checkpoint or []:
        name, _, path = item.rpartition("=")
        methods[name or Path(path).stem] = learned_method(_load_params(path))
    report = evaluate(methods, art.split, _eval_ctx(cfg, art))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.csv").write_text(report.to_csv())
    (out / "report.json").write_text(report.to_json() + "\n")
    (out / "details.jsonl").write_text(report.details_jsonl())
    sys.stdout.write(report.to_csv())
    return 0


def cmd_metrics(args) -> int:
    """Input: JSON lines ``{"candidate": str, "references": [str, ...]}``.
    Output: one CSV row per item, then a ``mean`` row."""
    items = []
    for k, line in enumerate(Path(args.input).read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
            items.append((doc["candidate"].split(), [r.split() for r in doc["references"]]))
        except (json.JSONDecodeError, KeyError, AttributeError, TypeError) as exc:
            print(f"error: line {k}: {exc!r}", file=sys.stderr)
            return 2
    lex = build_lexicon(load_config(args.config).lexicon_seed) if args.synonyms else None
    rows, means = score_corpus(items, lex)
    lines = ["item," + ",".join(METRIC_NAMES)]
    lines += [f"{i}," + ",".join(f"{r[k]:.6f}" for k in METRIC_NAMES) for i, r in enumerate(rows)]
    lines.append("mean," + ",".join(f"{means[k]:.6f}" for k in METRIC_NAMES))
    _write(args.out, "\n".join(lines) + "\n")
    return 0


def cmd_render(args) -> int:
    cfg = _config(args)
    lex = build_lexicon(cfg.lexicon_seed)
    scene = _read_scene(args.scene, lex)
    heat = score_map(scene, lex, _scoring(cfg, lex), cfg.noise, cfg.visibility) if args.heat else None
    traj = None
    if args.trajectory:
        traj = [Pose(*p) for p in json.loads(Path(args.trajectory).read_text())["poses"]]
    _write(args.out, render_ascii(scene, heat, traj))
    return 0


def cmd_run(args) -> int:
    cfg = _config(args)
    art = run_experiment(cfg, args.out, dry_run=args.dry_run)
    if art is not None:
        sys.stdout.write(art.report.to_csv())
    return 0


# ------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="embscene", description="Embodied scene description on procedural grid rooms.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def command(name, fn, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", help="JSON or TOML experiment config")
        sp.add_argument("--seed", type=int)
        sp.set_defaults(fn=fn)
        return sp

    sp = command("gen-scenes", cmd_gen_scenes, "generate the scene split")
    sp.add_argument("--scenes", type=int, help="training scenes per room type")
    sp.add_argument("--out", required=True)

    sp = command("score-map", cmd_score_map, "score every viewpoint of a scene")
    sp.add_argument("--scene", required=True)
    sp.add_argument("--out")

    sp = command("observe", cmd_observe, "detections and caption at one pose")
    sp.add_argument("--scene", required=True)
    sp.add_argument("--pose", type=_pose, required=True, help="x,y,h")
    sp.add_argument("--out")

    sp = command("demos", cmd_demos, "shortest-path demonstrations as JSONL")
    sp.add_argument("--scenes", type=int)
    sp.add_argument("--out")

    sp = command("train-il", cmd_train_il, "imitation learning from demonstrations")
    sp.add_argument("--scenes", type=int)
    sp.add_argument("--lr", type=float)
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--checkpoint", required=True, help="output checkpoint path")

    sp = command("train-rl", cmd_train_rl, "REINFORCE fine-tuning of a checkpoint")
    sp.add_argument("--scenes", type=int)
    sp.add_argument("--lr", type=float)
    sp.add_argument("--epochs", type=int, help="number of policy updates")
    sp.add_argument("--checkpoint", required=True, help="input checkpoint path")
    sp.add_argument("--out", required=True)

    sp = command("rollout", cmd_rollout, "run a checkpoint from one start pose")
    sp.add_argument("--scene", required=True)
    sp.add_argument("--start", type=_pose, required=True, help="x,y,h")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--mode", choices=("greedy", "sample"), default="greedy")
    sp.add_argument("--render", action="store_true")
    sp.add_argument("--out")

    sp = command("eval", cmd_eval, "evaluate Random and checkpoints on the test split")
    sp.add_argument("--scenes", type=int)
    sp.add_argument("--checkpoint", action="append", help="[name=]path, repeatable")
    sp.add_argument("--out", required=True)

    sp = command("metrics", cmd_metrics, "caption metrics for a candidate file")
    sp.add_argument("--input", required=True, help="JSON lines with candidate and references")
    sp.add_argument("--out")
    sp.add_argument("--synonyms", action="store_true", help="synonym stage for Meteor-lite")

    sp = command("render", cmd_render, "ASCII rendering of a scene")
    sp.add_argument("--scene", required=True)
    sp.add_argument("--heat", action="store_true")
    sp.add_argument("--trajectory", help="rollout JSON with a poses list")
    sp.add_argument("--out")

    sp = command("run", cmd_run, "full experiment")
    sp.add_argument("--scenes", type=int)
    sp.add_argument("--out", default="runs/default")
    sp.add_argument("--dry-run", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except (ConfigError, SceneError, StageFailed, DivergenceDetected, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
