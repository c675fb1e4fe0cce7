"""Dataset splits, ground-truth annotation, baselines, evaluation and the
end-to-end experiment runner."""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .config import ExperimentConfig
from .demogen import DegenerateScene, DemoConfig, demos_to_jsonl, make_demos
from .gridscene import STOP, Pose, Scene, generate_scene, scene_to_json
from .langmetrics import METRIC_NAMES, ReferenceSet, score_corpus
from .lexicon import Lexicon, build_lexicon
from .perception import NoiseConfig, observe
from .policy import (Env, Episode, PolicyParams, TrainConfig, demo_sequence, rollout, run_episode, train_il,
                     train_rl)
from .scoring import ScoreMap, ScoringConfig, annotation_noise, score_map

log = logging.getLogger(__name__)

BLOCK = 4  # validation starts: one cell per BLOCK x BLOCK block


# --------------------------------------------------------------------- splits


@dataclass
class DatasetSplit:
    scenes: dict[str, Scene]
    train: list[str]
    validation: list[str]
    test: list[str]
    validation_starts: dict[str, list[Pose]] = field(default_factory=dict)
    test_starts: dict[str, list[Pose]] = field(default_factory=dict)


def _block_starts(scene: Scene, rng: np.random.Generator) -> tuple[list[Pose], list[Pose]]:
    val, test = [], []
    for by in range(0, scene.height, BLOCK):
        for bx in range(0, scene.width, BLOCK):
            cells = [(x, y) for y in range(by, min(by + BLOCK, scene.height))
                     for x in range(bx, min(bx + BLOCK, scene.width)) if scene.is_free(x, y)]
            if not cells:
                continue
            cx, cy = bx + (BLOCK - 1) / 2.0, by + (BLOCK - 1) / 2.0
            pick = min(cells, key=lambda c: ((c[0] - cx) ** 2 + (c[1] - cy) ** 2, c[1], c[0]))
            for c in cells:
                (val if c == pick else test).append(Pose(c[0], c[1], int(rng.integers(8))))
    return val, test


def make_splits(cfg: ExperimentConfig) -> DatasetSplit:
    sp = cfg.split
    scenes, train, val, test = {}, [], [], []
    val_starts, test_starts = {}, {}
    k = 0
    for room in sp.room_types:
        for i in range(sp.per_type):
            scene = generate_scene(cfg.scene.gen_config(room), cfg.seed * 10_000 + k)
            k += 1
            scenes[scene.id] = scene
            rng = np.random.default_rng([cfg.seed, scene.seed, 0x57])
            v, t = _block_starts(scene, rng)
            if i < sp.train_per_type:
                train.append(scene.id)
            elif i < sp.train_per_type + sp.val_per_type:
                val.append(scene.id)
                val_starts[scene.id] = v
            else:
                test.append(scene.id)
                chosen = sorted(rng.choice(len(t), size=min(sp.starts_per_scene, len(t)), replace=False))
                test_starts[scene.id] = [t[j] for j in chosen]
    return DatasetSplit(scenes, train, val, test, val_starts, test_starts)


# --------------------------------------------------------------- annotation


def ground_truth_refs(scene: Scene, smap: ScoreMap, gamma: float, lex: Lexicon, noise: NoiseConfig,
                      mode: str = "caption", vis=None) -> ReferenceSet:
    if smap.s_max <= 0.0:
        raise DegenerateScene(f"scene {scene.id} has s_max = 0")
    ann = annotation_noise(noise)
    kw = {} if vis is None else {"vis": vis}
    caps = [observe(scene, p, lex, ann, mode, **kw).caption
            for p, s in zip(smap.poses, smap.scores) if s >= gamma * smap.s_max]
    return ReferenceSet.of(caps)


# ------------------------------------------------------------------ baselines


def random_policy_rollout(scene: Scene, start: Pose, cfg: TrainConfig, seed: int, env: Env) -> Episode:
    rng = np.random.default_rng([seed, 0xBA5E])

    def choose(t, hist, bow, mask):
        idx = np.flatnonzero(mask)
        return int(idx[rng.integers(len(idx))]), -np.log(len(idx))

    return run_episode(env, start, choose, cfg.T, cfg.rho)


def stop_policy_rollout(scene: Scene, start: Pose, cfg: TrainConfig, seed: int, env: Env) -> Episode:
    return run_episode(env, start, lambda t, h, b, m: (STOP, 0.0), cfg.T, cfg.rho)


def learned_method(params: PolicyParams) -> Callable:
    def run(scene, start, cfg, seed, env):
        return rollout(params, scene, start, env.lex, env.noise, cfg, "greedy", seed, env.scoring, env)
    return run


# ----------------------------------------------------------------- evaluation

REPORT_COLUMNS = ("method", "episodes", "NoS", "SoL") + METRIC_NAMES


@dataclass
class EvalReport:
    rows: list[dict]
    details: list[dict]

    def row(self, method: str) -> dict:
        return next(r for r in self.rows if r["method"] == method)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in self.rows:
            w.writerow([r[c] if isinstance(r[c], (str, int)) else repr(float(r[c])) for c in REPORT_COLUMNS])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({"rows": self.rows}, indent=2, sort_keys=True)

    def details_jsonl(self) -> str:
        return "".join(json.dumps(d, sort_keys=True) + "\n" for d in self.details)


def aggregate(details: list[dict], method: str) -> dict:
    mine = [d for d in details if d["method"] == method]
    row = {"method": method, "episodes": len(mine)}
    for key in ("NoS", "SoL") + METRIC_NAMES:
        row[key] = float(np.mean([d[key] for d in mine])) if mine else 0.0
    return row


@dataclass
class EvalContext:
    lex: Lexicon
    scoring: ScoringConfig
    noise: NoiseConfig
    train_cfg: TrainConfig
    refs: dict[str, ReferenceSet]
    vis: object = None
    seed: int = 0


def episode_seed(ctx_seed: int, scene: Scene, j: int) -> int:
    return int(np.random.default_rng([ctx_seed, scene.seed, j, 0xE7]).integers(2**31))


def evaluate(methods: dict[str, Callable], split: DatasetSplit, ctx: EvalContext,
             scene_ids: list[str] | None = None) -> EvalReport:
    """Roll out every method from every test start; all methods see the same
    episode noise seeds."""
    scene_ids = split.test if scene_ids is None else scene_ids
    starts = {**split.validation_starts, **split.test_starts}
    raw = []
    for name, method in methods.items():
        for sid in scene_ids:
            scene = split.scenes[sid]
            for j, start in enumerate(starts[sid]):
                seed = episode_seed(ctx.seed, scene, j)
                kw = {} if ctx.vis is None else {"vis": ctx.vis}
                env = Env(scene, ctx.lex, ctx.noise.with_seed(seed), ctx.scoring, **kw)
                ep = method(scene, start, ctx.train_cfg, seed, env)
                raw.append((name, sid, j, start, ep))
    # CIDEr document frequencies are estimated per method, over its own corpus
    metric_rows = []
    for name in methods:
        corpus = [(ep.final_observation.caption, ctx.refs[sid]) for n, sid, _, _, ep in raw if n == name]
        metric_rows += score_corpus(corpus, ctx.lex)[0] if corpus else []
    details = []
    for (name, sid, j, start, ep), m in zip(raw, metric_rows):
        details.append({
            "method": name, "scene_id": sid, "start_index": j, "start": list(start),
            "final_pose": list(ep.final_pose), "steps": len(ep), "NoS": ep.nos, "SoL": ep.final_score,
            "termination": ep.termination, "caption": " ".join(ep.final_observation.caption),
            "return": float(sum(ep.rewards)), **m,
        })
    return EvalReport([aggregate(details, name) for name in methods], details)


# ------------------------------------------------------------------- pipeline


def train_config(cfg: ExperimentConfig, lr: float, batch_size: int, epochs: int = 1) -> TrainConfig:
    return TrainConfig(lr=lr, beta=cfg.rl.beta, rho=cfg.rl.rho, T=cfg.rl.T, baseline_decay=cfg.rl.baseline_decay,
                       batch_size=batch_size, epochs=epochs, seed=cfg.seed)


def validation_sol(params: PolicyParams, split: DatasetSplit, ctx: EvalContext) -> float:
    return evaluate({"IL": learned_method(params)}, split, ctx, split.validation).rows[0]["SoL"]


def train_il_selected(params: PolicyParams, seqs, cfg: ExperimentConfig, split: DatasetSplit,
                      ctx: EvalContext) -> tuple[PolicyParams, list]:
    """Imitation learning in rounds of ``select_every`` epochs, keeping the
    parameters with the best mean validation SoL (earliest on ties)."""
    il = cfg.il
    if il.select_every <= 0 or not split.validation:
        return train_il(params, seqs, train_config(cfg, il.lr, il.batch_size, il.epochs)), []
    best, best_sol, history = params, -np.inf, []
    done, rnd = 0, 0
    while done < il.epochs:
        n = min(il.select_every, il.epochs - done)
        tc = replace(train_config(cfg, il.lr, il.batch_size, n), seed=cfg.seed * 1000 + rnd)
        params = train_il(params, seqs, tc)
        done, rnd = done + n, rnd + 1
        sol = validation_sol(params, split, ctx)
        history.append({"epochs": done, "val_SoL": sol})
        log.info("il epochs=%d val SoL=%.4f", done, sol)
        if sol > best_sol:
            best, best_sol = params, sol
    return best, history


@dataclass
class Artifacts:
    lexicon: Lexicon
    split: DatasetSplit
    score_maps: dict[str, ScoreMap]
    refs: dict[str, ReferenceSet]
    demos: list
    il_params: PolicyParams | None = None
    rl_params: PolicyParams | None = None
    report: EvalReport | None = None
    il_history: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)


STAGES = ("generate", "annotate", "demos", "train-il", "train-rl", "evaluate")


class StageFailed(RuntimeError):
    pass


def plan(cfg: ExperimentConfig) -> list[str]:
    sp = cfg.split
    n = len(sp.room_types) * sp.per_type
    return [
        f"generate: {n} scenes ({sp.train_per_type}/{sp.val_per_type}/{sp.test_per_type} per room type)",
        f"annotate: score maps + ground-truth references (gamma={cfg.scoring.gamma}, lambda={cfg.scoring.lam})",
        f"demos: {cfg.demos.per_scene} per training scene, T_max={cfg.demos.t_max}",
        f"train-il: H={cfg.il.hidden}, lr={cfg.il.lr}, epochs={cfg.il.epochs}, batch={cfg.il.batch_size}",
        f"train-rl: lr={cfg.rl.lr}, updates={cfg.rl.updates}, batch={cfg.rl.batch_size}, beta={cfg.rl.beta}, rho={cfg.rl.rho}",
        f"evaluate: Random / IL / IL+RL on {len(sp.room_types) * sp.test_per_type} test scenes x {sp.starts_per_scene} starts",
    ]


def run_pipeline(cfg: ExperimentConfig, stop_after: str | None = None) -> Artifacts:
    import time

    timings = {}

    def stage(name):
        timings[name] = time.perf_counter()
        log.info("stage %s", name)

    try:
        current = "generate"
        stage(current)
        lex = build_lexicon(cfg.lexicon_seed)
        scoring = ScoringConfig.for_lexicon(lex, cfg.scoring.lam, cfg.scoring.mode)
        split = make_splits(cfg)

        current = "annotate"
        stage(current)
        smaps = {sid: score_map(sc, lex, scoring, cfg.noise, cfg.visibility) for sid, sc in split.scenes.items()}
        refs = {sid: ground_truth_refs(split.scenes[sid], smaps[sid], cfg.scoring.gamma, lex, cfg.noise,
                                       scoring.mode, cfg.visibility)
                for sid in split.validation + split.test}
        art = Artifacts(lex, split, smaps, refs, [], timings=timings)

        current = "demos"
        stage(current)
        dcfg = DemoConfig(cfg.scoring.gamma, cfg.demos.per_scene, cfg.demos.t_max,
                          target_per_demo=cfg.demos.target_per_demo)
        train_scenes = [split.scenes[s] for s in split.train]
        art.demos = make_demos(train_scenes, lex, scoring, cfg.noise, dcfg, cfg.seed, smaps)
        if stop_after == "demos":
            return art

        current = "train-il"
        stage(current)
        seqs = [demo_sequence(split.scenes[d.scene_id], d, lex, cfg.noise, scoring.mode, cfg.visibility)
                for d in art.demos]
        params = PolicyParams.init(lex.n_categories, lex.bow_size, cfg.il.hidden, cfg.il.d_lang, cfg.seed)
        ctx = EvalContext(lex, scoring, cfg.noise, train_config(cfg, cfg.rl.lr, cfg.rl.batch_size), refs,
                          cfg.visibility, cfg.seed)
        art.il_params, art.il_history = train_il_selected(params, seqs, cfg, split, ctx)

        current = "train-rl"
        stage(current)
        envs, starts = [], []
        for sid in split.train:
            scene = split.scenes[sid]
            rng = np.random.default_rng([cfg.seed, scene.seed, 0x52])
            envs.append(Env(scene, lex, cfg.noise.with_seed(int(rng.integers(2**31))), scoring, cfg.visibility))
            starts.append(list(smaps[sid].poses))
        art.rl_params = train_rl(art.il_params, envs, starts,
                                 train_config(cfg, cfg.rl.lr, cfg.rl.batch_size), cfg.rl.updates)

        current = "evaluate"
        stage(current)
        methods = {"Random": random_policy_rollout, "IL": learned_method(art.il_params),
                   "IL+RL": learned_method(art.rl_params)}
        art.report = evaluate(methods, split, ctx)
        timings["end"] = time.perf_counter()
        return art
    except Exception as exc:
        raise StageFailed(f"stage {current} failed: {exc}") from exc


def run_experiment(cfg: ExperimentConfig, run_dir: str | Path, dry_run: bool = False) -> Artifacts | None:
    """Run every stage and persist scenes, demos, checkpoints and reports."""
    if dry_run:
        for line in plan(cfg):
            print(line)
        return None
    art = run_pipeline(cfg)
    out = Path(run_dir)
    for sub in ("scenes", "checkpoints", "reports"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    (out / "config.resolved.json").write_text(cfg.to_json() + "\n")
    (out / "lexicon.json").write_text(art.lexicon.to_json() + "\n")
    (out / "split.json").write_text(json.dumps({
        "train": art.split.train, "validation": art.split.validation, "test": art.split.test,
        "test_starts": {k: [list(p) for p in v] for k, v in art.split.test_starts.items()},
        "scene_seeds": {k: s.seed for k, s in art.split.scenes.items()},
    }, indent=2, sort_keys=True) + "\n")
    for sid, scene in art.split.scenes.items():
        (out / "scenes" / f"{sid}.json").write_text(scene_to_json(scene) + "\n")
    (out / "demos.jsonl").write_text(demos_to_jsonl(art.demos))
    (out / "checkpoints" / "il.json").write_text(art.il_params.to_json() + "\n")
    (out / "checkpoints" / "il_rl.json").write_text(art.rl_params.to_json() + "\n")
    (out / "reports" / "report.csv").write_text(art.report.to_csv())
    (out / "reports" / "report.json").write_text(art.report.to_json() + "\n")
    (out / "reports" / "details.jsonl").write_text(art.report.details_jsonl())
    return art


# ---------------------------------------------------------------------- ascii


def render_ascii(scene: Scene, heat: ScoreMap | None = None, trajectory: list[Pose] | None = None) -> str:
    """Row 0 of the output is the top (largest y). Header line first."""
    grid = [["." for _ in range(scene.width)] for _ in range(scene.height)]
    for y in range(scene.height):
        for x in range(scene.width):
            if scene.obstacle[y, x]:
                obj = scene.owner_of(x, y)
                grid[y][x] = obj.category[0].upper() if obj else "#"
    if heat is not None:
        best = np.zeros((scene.height, scene.width))
        for p, s in zip(heat.poses, heat.scores):
            best[p.y, p.x] = max(best[p.y, p.x], s)
        top = heat.s_max if heat.s_max > 0 else 1.0
        for x, y in scene.free_cells():
            grid[y][x] = str(min(9, int(10 * best[y, x] / top)))
    if trajectory:
        for t, p in enumerate(trajectory):
            grid[p.y][p.x] = str(t % 10)
        grid[trajectory[0].y][trajectory[0].x] = "S"
        grid[trajectory[-1].y][trajectory[-1].x] = "E"
    border = "#" * (scene.width + 2)
    lines = [f"{scene.id} {scene.width}x{scene.height}", border]
    lines += ["#" + "".join(grid[y]) + "#" for y in range(scene.height - 1, -1, -1)]
    lines.append(border)
    return "\n".join(lines) + "\n"

