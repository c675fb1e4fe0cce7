"""Recurrent navigation policy with hand-written BPTT, imitation learning and
REINFORCE fine-tuning."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .gridscene import (N_ACTIONS, STOP, Pose, Scene, VisibilityConfig, action_from_index, apply_action,
                        feasible_actions)
from .lexicon import Lexicon
from .perception import NoiseConfig, Observation, observe
from .scoring import ScoringConfig, viewpoint_score

PARAM_NAMES = ("W_L", "W_s", "W_h", "b", "W_o", "b_o")
CHECKPOINT_FORMAT = "embscene-policy"
CHECKPOINT_VERSION = 1


class EmptyMask(ValueError):
    pass


class DivergenceDetected(RuntimeError):
    pass


@dataclass
class PolicyParams:
    W_L: np.ndarray  # (d_lang, bow_size)
    W_s: np.ndarray  # (hidden, n_categories + d_lang)
    W_h: np.ndarray  # (hidden, hidden)
    b: np.ndarray  # (hidden,)
    W_o: np.ndarray  # (72, hidden)
    b_o: np.ndarray  # (72,)

    @classmethod
    def init(cls, n_categories: int, bow_size: int, hidden: int = 64, d_lang: int = 16, seed: int = 0,
             scale: float = 0.1) -> "PolicyParams":
        rng = np.random.default_rng([seed, 0x9A])
        u = lambda *shape: rng.uniform(-scale, scale, size=shape)
        return cls(u(d_lang, bow_size), u(hidden, n_categories + d_lang), u(hidden, hidden),
                   np.zeros(hidden), u(N_ACTIONS, hidden), np.zeros(N_ACTIONS))

    @property
    def hidden(self) -> int:
        return self.W_h.shape[0]

    @property
    def n_categories(self) -> int:
        return self.W_s.shape[1] - self.W_L.shape[0]

    def arrays(self) -> list[np.ndarray]:
        return [getattr(self, n) for n in PARAM_NAMES]

    def copy(self) -> "PolicyParams":
        return PolicyParams(*(a.copy() for a in self.arrays()))

    def zeros_like(self) -> "PolicyParams":
        return PolicyParams(*(np.zeros_like(a) for a in self.arrays()))

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def with_flat(self, vec: np.ndarray) -> "PolicyParams":
        out, k = [], 0
        for a in self.arrays():
            out.append(np.asarray(vec[k : k + a.size], dtype=float).reshape(a.shape).copy())
            k += a.size
        return PolicyParams(*out)

    def axpy(self, alpha: float, other: "PolicyParams") -> "PolicyParams":
        return PolicyParams(*(a + alpha * g for a, g in zip(self.arrays(), other.arrays())))

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays())

    def to_json(self) -> str:
        return json.dumps({
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "tensors": {n: {"shape": list(a.shape), "data": a.ravel().tolist()}
                        for n, a in zip(PARAM_NAMES, self.arrays())},
        })

    @classmethod
    def from_json(cls, text: str) -> "PolicyParams":
        doc = json.loads(text)
        if doc.get("format") != CHECKPOINT_FORMAT or doc.get("version") != CHECKPOINT_VERSION:
            raise ValueError("not a supported policy checkpoint")
        arrays = []
        for n in PARAM_NAMES:
            t = doc["tensors"][n]
            arrays.append(np.array(t["data"], dtype=float).reshape(t["shape"]))
        return cls(*arrays)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    beta: float = 0.99
    rho: float = 0.01
    T: int = 40
    baseline_decay: float = 0.9
    batch_size: int = 8  # demos per IL step, episodes per REINFORCE step
    epochs: int = 1
    seed: int = 0
    clip_norm: float | None = None

    def __post_init__(self):
        if not 0.0 < self.beta < 1.0:
            raise ValueError("beta must lie in (0, 1)")
        if self.lr <= 0:
            raise ValueError("lr must be positive")


# ----------------------------------------------------------------- features


def observation_features(obs: Observation, lex: Lexicon) -> tuple[np.ndarray, np.ndarray]:
    """Per-category max detection confidence, and the caption bag of words."""
    hist = np.zeros(lex.n_categories)
    for d in obs.detections:
        j = lex.category_index(d.category)
        hist[j] = max(hist[j], d.confidence)
    return hist, lex.bow(obs.caption)


def state_vector(obs: Observation, params: PolicyParams, lex: Lexicon) -> np.ndarray:
    hist, bow = observation_features(obs, lex)
    return np.concatenate([hist, params.W_L @ bow])


def masked_softmax(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    if not mask.any():
        raise EmptyMask("no feasible action")
    z = np.where(mask, logits, -np.inf)
    z = z - z.max()
    e = np.where(mask, np.exp(z), 0.0)
    return e / e.sum()


def policy_step(params: PolicyParams, h_prev: np.ndarray, s_t: np.ndarray, mask: np.ndarray):
    h = np.tanh(params.W_s @ s_t + params.W_h @ h_prev + params.b)
    return h, masked_softmax(params.W_o @ h + params.b_o, mask)


# ------------------------------------------------------- batched BPTT core


class Sequence(NamedTuple):
    hist: np.ndarray  # (L, N)
    bow: np.ndarray  # (L, V)
    mask: np.ndarray  # (L, 72) bool
    actions: np.ndarray  # (L,) int


@dataclass
class SequenceBatch:
    hist: np.ndarray  # (K, T, N)
    bow: np.ndarray  # (K, T, V)
    mask: np.ndarray  # (K, T, 72)
    actions: np.ndarray  # (K, T)
    weights: np.ndarray  # (K, T); zero on padding

    @classmethod
    def pack(cls, seqs: list[Sequence], weights: list[np.ndarray] | None = None) -> "SequenceBatch":
        K = len(seqs)
        T = max((len(s.actions) for s in seqs), default=0)
        N = seqs[0].hist.shape[1] if seqs else 0
        V = seqs[0].bow.shape[1] if seqs else 0
        hist = np.zeros((K, T, N))
        bow = np.zeros((K, T, V))
        mask = np.ones((K, T, N_ACTIONS), dtype=bool)
        actions = np.zeros((K, T), dtype=np.int64)
        w = np.zeros((K, T))
        for k, s in enumerate(seqs):
            L = len(s.actions)
            hist[k, :L], bow[k, :L], mask[k, :L], actions[k, :L] = s.hist, s.bow, s.mask, s.actions
            w[k, :L] = 1.0 if weights is None else weights[k]
        return cls(hist, bow, mask, actions, w)

    def __len__(self):
        return self.actions.shape[0]


def weighted_nll_and_grad(params: PolicyParams, batch: SequenceBatch, need_grad: bool = True):
    """Loss = sum_{k,t} w[k,t] * -log pi(a[k,t] | history); gradient by BPTT."""
    K = len(batch)
    if K == 0 or batch.actions.shape[1] == 0:
        return 0.0, params.zeros_like()
    T = batch.actions.shape[1]
    H = params.hidden
    N = params.n_categories
    rows = np.arange(K)
    hs = np.zeros((T + 1, K, H))
    ss = []
    probs = []
    loss = 0.0
    for t in range(T):
        s = np.concatenate([batch.hist[:, t], batch.bow[:, t] @ params.W_L.T], axis=1)
        h = np.tanh(s @ params.W_s.T + hs[t] @ params.W_h.T + params.b)
        hs[t + 1] = h
        logits = h @ params.W_o.T + params.b_o
        m = batch.mask[:, t]
        z = np.where(m, logits, -np.inf)
        zmax = z.max(axis=1, keepdims=True)
        e = np.where(m, np.exp(z - zmax), 0.0)
        tot = e.sum(axis=1, keepdims=True)
        p = e / tot
        logp_a = (z - zmax - np.log(tot))[rows, batch.actions[:, t]]
        loss -= float(np.dot(batch.weights[:, t], logp_a))
        ss.append(s)
        probs.append(p)
    if not need_grad:
        return loss, None
    g = params.zeros_like()
    dh_next = np.zeros((K, H))
    for t in range(T - 1, -1, -1):
        gl = probs[t].copy()
        gl[rows, batch.actions[:, t]] -= 1.0
        gl *= batch.weights[:, t, None]
        h, h_prev, s = hs[t + 1], hs[t], ss[t]
        g.W_o += gl.T @ h
        g.b_o += gl.sum(axis=0)
        dz = (gl @ params.W_o + dh_next) * (1.0 - h * h)
        g.W_s += dz.T @ s
        g.W_h += dz.T @ h_prev
        g.b += dz.sum(axis=0)
        ds_lang = dz @ params.W_s[:, N:]
        g.W_L += ds_lang.T @ batch.bow[:, t]
        dh_next = dz @ params.W_h
    return loss, g


def _clip(grad: PolicyParams, clip_norm: float | None) -> PolicyParams:
    if clip_norm is None:
        return grad
    norm = float(np.linalg.norm(grad.flat()))
    if norm <= clip_norm:
        return grad
    return grad.axpy(clip_norm / norm - 1.0, grad)


# ------------------------------------------------------------------ imitation


def demo_sequence(scene: Scene, demo, lex: Lexicon, noise: NoiseConfig, mode: str = "caption",
                  vis: VisibilityConfig = VisibilityConfig()) -> Sequence:
    """Teacher-forcing inputs for one demonstration, observed at its noise seed."""
    ep_noise = noise.with_seed(demo.noise_seed)
    hists, bows, masks = [], [], []
    for pose in demo.poses:
        hist, bow = observation_features(observe(scene, pose, lex, ep_noise, mode, vis), lex)
        hists.append(hist)
        bows.append(bow)
        masks.append(feasible_actions(scene, pose))
    return Sequence(np.array(hists), np.array(bows), np.array(masks),
                    np.array([a.index for a in demo.actions], dtype=np.int64))


def il_loss_and_grad(params: PolicyParams, seqs: list[Sequence]):
    return weighted_nll_and_grad(params, SequenceBatch.pack(seqs))


def train_il(params: PolicyParams, seqs: list[Sequence], cfg: TrainConfig,
             on_step: Callable[[int, float], None] | None = None) -> PolicyParams:
    params = params.copy()
    rng = np.random.default_rng([cfg.seed, 0x11])
    step = 0
    for _ in range(cfg.epochs):
        order = rng.permutation(len(seqs))
        for start in range(0, len(order), cfg.batch_size):
            batch = SequenceBatch.pack([seqs[i] for i in order[start : start + cfg.batch_size]])
            loss, grad = weighted_nll_and_grad(params, batch)
            if not np.isfinite(loss):
                raise DivergenceDetected(f"IL loss became {loss} at step {step}")
            params = params.axpy(-cfg.lr, _clip(grad, cfg.clip_norm))
            if not params.is_finite():
                raise DivergenceDetected(f"non-finite parameters after IL step {step}")
            if on_step is not None:
                on_step(step, loss)
            step += 1
    return params


# ------------------------------------------------------------------- rollouts


class Env:
    """Observation/score lookups for one scene under one noise seed, memoised."""

    def __init__(self, scene: Scene, lex: Lexicon, noise: NoiseConfig, scoring: ScoringConfig,
                 vis: VisibilityConfig = VisibilityConfig()):
        self.scene, self.lex, self.noise, self.scoring, self.vis = scene, lex, noise, scoring, vis
        self._cache: dict[Pose, tuple] = {}

    def look(self, pose: Pose):
        hit = self._cache.get(pose)
        if hit is None:
            obs = observe(self.scene, pose, self.lex, self.noise, self.scoring.mode, self.vis)
            hist, bow = observation_features(obs, self.lex)
            hit = (obs, viewpoint_score(obs, self.lex, self.scoring), hist, bow,
                   feasible_actions(self.scene, pose))
            self._cache[pose] = hit
        return hit


@dataclass
class Episode:
    scene_id: str
    start: Pose
    poses: list[Pose] = field(default_factory=list)  # pose at which each action is taken
    observations: list[Observation] = field(default_factory=list)
    hist: list[np.ndarray] = field(default_factory=list)
    bow: list[np.ndarray] = field(default_factory=list)
    masks: list[np.ndarray] = field(default_factory=list)
    actions: list[int] = field(default_factory=list)
    logps: list[float] = field(default_factory=list)
    rewards: list[float] = field(default_factory=list)
    p_values: list[float] = field(default_factory=list)  # p before the first action, then after each
    final_pose: Pose | None = None
    final_observation: Observation | None = None
    final_score: float = 0.0
    termination: str = ""

    def __len__(self):
        return len(self.actions)

    @property
    def nos(self) -> int:
        return sum(1 for a in self.actions if a != STOP)

    def sequence(self) -> Sequence:
        return Sequence(np.array(self.hist), np.array(self.bow), np.array(self.masks),
                        np.array(self.actions, dtype=np.int64))


def run_episode(env: Env, start: Pose, choose: Callable, T: int, rho: float) -> Episode:
    """Generic rollout loop; ``choose(t, hist, bow, mask)`` returns (action, logp)."""
    ep = Episode(env.scene.id, start)
    pose = start
    obs, score, hist, bow, mask = env.look(pose)
    p_prev = score
    ep.p_values.append(p_prev)
    moves = 0
    ep.termination = "HorizonReached"
    for t in range(T):
        a, logp = choose(t, hist, bow, mask)
        ep.poses.append(pose)
        ep.observations.append(obs)
        ep.hist.append(hist)
        ep.bow.append(bow)
        ep.masks.append(mask)
        ep.actions.append(int(a))
        ep.logps.append(float(logp))
        if a == STOP:
            ep.rewards.append(0.0)
            ep.p_values.append(p_prev)
            ep.termination = "Stopped"
            break
        pose = apply_action(env.scene, pose, action_from_index(a))
        obs, score, hist, bow, mask = env.look(pose)
        moves += 1
        p = score - rho * moves
        ep.rewards.append(p - p_prev)
        ep.p_values.append(p)
        p_prev = p
    ep.final_pose, ep.final_observation, ep.final_score = pose, obs, score
    return ep


def rollout(params: PolicyParams, scene: Scene, start: Pose, lex: Lexicon, noise: NoiseConfig,
            cfg: TrainConfig, mode: str = "sample", seed: int = 0, scoring: ScoringConfig | None = None,
            env: Env | None = None) -> Episode:
    if mode not in ("sample", "greedy"):
        raise ValueError(f"unknown rollout mode {mode!r}")
    if env is None:
        env = Env(scene, lex, noise.with_seed(seed), scoring or ScoringConfig.for_lexicon(lex))
    rng = np.random.default_rng([seed, 0xAC])
    W_Lt = params.W_L.T
    h = np.zeros(params.hidden)

    def choose(t, hist, bow, mask):
        nonlocal h
        s = np.concatenate([hist, bow @ W_Lt])
        h, probs = policy_step(params, h, s, mask)
        if mode == "greedy":
            a = int(np.argmax(probs))
        else:
            a = int(np.searchsorted(np.cumsum(probs), rng.random() * probs.sum(), side="right"))
            a = min(a, N_ACTIONS - 1)
            while not mask[a]:
                a -= 1
        return a, np.log(probs[a])

    return run_episode(env, start, choose, cfg.T, cfg.rho)


def returns(rewards, beta: float) -> np.ndarray:
    out = np.zeros(len(rewards))
    acc = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        acc = rewards[t] + beta * acc
        out[t] = acc
    return out


def reinforce_batch(episodes: list[Episode], baseline: float, beta: float) -> SequenceBatch:
    """Episodes packed with per-step weights -(R_t - baseline), so the weighted
    NLL gradient is the negated REINFORCE ascent direction."""
    seqs = [ep.sequence() for ep in episodes]
    weights = [returns(ep.rewards, beta) - baseline for ep in episodes]
    return SequenceBatch.pack(seqs, weights)


def reinforce_update(params: PolicyParams, episodes: list[Episode], baseline: float, cfg: TrainConfig):
    if not episodes:
        return params.copy(), baseline
    _, grad = weighted_nll_and_grad(params, reinforce_batch(episodes, baseline, cfg.beta))
    new = params.axpy(-cfg.lr, _clip(grad, cfg.clip_norm))
    if not new.is_finite():
        raise DivergenceDetected("non-finite parameters after REINFORCE update")
    mean_return = float(np.mean([returns(ep.rewards, cfg.beta)[0] if ep.rewards else 0.0 for ep in episodes]))
    baseline = cfg.baseline_decay * baseline + (1.0 - cfg.baseline_decay) * mean_return
    return new, baseline


def train_rl(params: PolicyParams, envs: list[Env], starts: list[list[Pose]], cfg: TrainConfig, n_updates: int,
             on_update: Callable[[int, float, float], None] | None = None) -> PolicyParams:
    """REINFORCE fine-tuning over sampled (scene, start) pairs."""
    rng = np.random.default_rng([cfg.seed, 0x21])
    baseline = 0.0
    params = params.copy()
    for u in range(n_updates):
        episodes = []
        for _ in range(cfg.batch_size):
            i = int(rng.integers(len(envs)))
            start = starts[i][int(rng.integers(len(starts[i])))]
            ep_seed = int(rng.integers(2**31))
            env = envs[i]
            episodes.append(rollout(params, env.scene, start, env.lex, env.noise, cfg, "sample", ep_seed,
                                    env.scoring, env))
        params, baseline = reinforce_update(params, episodes, baseline, cfg)
        if on_update is not None:
            on_update(u, baseline, float(np.mean([ep.final_score for ep in episodes])))
    return params


# ------------------------------------------------------------ verification


def numeric_grad(fun: Callable[[PolicyParams], float], params: PolicyParams, eps: float) -> PolicyParams:
    base = params.flat()
    out = np.zeros_like(base)
    for i in range(base.size):
        old = base[i]
        base[i] = old + eps
        up = fun(params.with_flat(base))
        base[i] = old - eps
        down = fun(params.with_flat(base))
        base[i] = old
        out[i] = (up - down) / (2.0 * eps)
    return params.with_flat(out)


def max_relative_error(a: PolicyParams, b: PolicyParams, floor: float = 1e-6) -> float:
    x, y = a.flat(), b.flat()
    if x.size == 0:
        return 0.0
    return float(np.max(np.abs(x - y) / np.maximum(np.maximum(np.abs(x), np.abs(y)), floor)))


def grad_check(params: PolicyParams, probe: SequenceBatch, eps: float = 1e-5) -> float:
    """Max relative error between the BPTT gradient of the weighted NLL and
    central finite differences, over every parameter."""
    _, analytic = weighted_nll_and_grad(params, probe)
    numeric = numeric_grad(lambda p: weighted_nll_and_grad(p, probe, need_grad=False)[0], params, eps)
    return max_relative_error(analytic, numeric)


def greedy_actions(params: PolicyParams, seq: Sequence) -> np.ndarray:
    """Teacher-forced argmax action at every step of a sequence."""
    h = np.zeros(params.hidden)
    out = []
    for t in range(len(seq.actions)):
        s = np.concatenate([seq.hist[t], params.W_L @ seq.bow[t]])
        h, probs = policy_step(params, h, s, seq.mask[t])
        out.append(int(np.argmax(probs)))
    return np.array(out)

