"""Cost scorer over (goal, trajectory) text pairs and its self-supervised training.

The scorer embeds both texts, forms standard sentence-pair features
[e_g, e_t, e_g*e_t, |e_g - e_t|], and maps them through a one-hidden-layer
tanh network to a scalar cost. Training minimizes a squared hinge ranking
loss with cost-centering regularization over automatically constructed
(positive, negative) trajectory pairs: valid continuations beat their base
prefix, base prefixes beat distractor-extended and step-shuffled variants.
"""

from __future__ import annotations

import json
import math
import random
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .trajectory import (
    RenderOptions,
    Trajectory,
    prefix,
    append_steps,
    render_critic_text,
    shuffle_steps,
)

__all__ = [
    "CriticError",
    "DimMismatch",
    "BadRow",
    "NoDistractorSource",
    "RemoteUnavailable",
    "MockHashEmbedder",
    "RemoteEmbedder",
    "CriticModel",
    "CriticTrainConfig",
    "PairKind",
    "PairExample",
    "PairConfig",
    "fnv1a64",
    "score",
    "pair_loss",
    "build_pairs",
    "loss_and_grads",
    "train",
    "init_model",
    "load_external_pairs",
    "dump_pairs",
    "load_pairs",
    "save_model",
    "load_model",
    "make_text_scorer",
    "make_plan_scorer",
]


class CriticError(ValueError):
    pass


class DimMismatch(CriticError):
    pass


class BadRow(CriticError):
    pass


class NoDistractorSource(CriticError):
    pass


class RemoteUnavailable(CriticError):
    pass


_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


def fnv1a64(token: str) -> int:
    """FNV-1a 64-bit hash of a token's UTF-8 bytes."""
    h = _FNV_OFFSET
    for b in token.encode("utf-8"):
        h ^= b
        h = (h * _FNV_PRIME) & _MASK64
    return h


_TOKEN_SPLIT = re.compile(r"[^0-9a-z]+")


@dataclass(frozen=True)
class MockHashEmbedder:
    """Deterministic hashing embedder standing in for a text encoder.

    Tokens are lowercased alphanumeric runs; each token adds +-1 (sign from
    hash bit 63) at index (hash mod dim); the result is L2-normalized.
    Empty token lists map to the exact zero vector.
    """

    dim: int
    kind: str = "mock-hash"

    def embed(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dim, dtype=np.float64)
        for token in _TOKEN_SPLIT.split(text.lower()):
            if not token:
                continue
            h = fnv1a64(token)
            sign = -1.0 if (h >> 63) & 1 else 1.0
            vec[h % self.dim] += sign
        norm = float(np.linalg.norm(vec))
        if norm > 0.0:
            vec /= norm
        return vec


@dataclass
class RemoteEmbedder:
    """Embeddings from an HTTP endpoint speaking the /embeddings protocol."""

    dim: int
    endpoint: str
    model: str
    timeout: float = 30.0
    kind: str = "remote"
    _session: object = None

    @classmethod
    def from_env(cls, dim: int) -> "RemoteEmbedder":
        import os

        endpoint = os.environ.get("WM_EMB_ENDPOINT", "")
        model = os.environ.get("WM_EMB_MODEL", "")
        if not endpoint:
            raise RemoteUnavailable("WM_EMB_ENDPOINT is not configured")
        return cls(dim=dim, endpoint=endpoint.rstrip("/"), model=model)

    def embed_batch(self, texts: Sequence[str]) -> list[np.ndarray]:
        import requests

        session = self._session or requests
        try:
            resp = session.post(
                f"{self.endpoint}/embeddings",
                json={"model": self.model, "input": list(texts)},
                timeout=self.timeout,
            )
            resp.raise_for_status()
            payload = resp.json()
        except Exception as exc:
            raise RemoteUnavailable(f"embedding endpoint failed: {exc}") from exc
        out = []
        for rec in payload["data"]:
            vec = np.asarray(rec["embedding"], dtype=np.float64)
            if vec.shape != (self.dim,):
                raise DimMismatch(f"remote returned dim {vec.shape}, expected {self.dim}")
            norm = float(np.linalg.norm(vec))
            out.append(vec / norm if norm > 0 else vec)
        return out

    def embed(self, text: str) -> np.ndarray:
        return self.embed_batch([text])[0]


@dataclass
class CriticModel:
    """Parameters of the scalar cost head: C = w2 . tanh(W1 z + b1) + b2."""

    dim: int
    hidden: int
    W1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: float

    def copy(self) -> "CriticModel":
        return CriticModel(self.dim, self.hidden, self.W1.copy(), self.b1.copy(),
                           self.w2.copy(), float(self.b2))


def init_model(dim: int, hidden: int, seed: int = 0) -> CriticModel:
    """Seeded init: W1 uniform in +-1/sqrt(4*dim), everything else zero."""
    rng = np.random.default_rng(seed)
    bound = 1.0 / math.sqrt(4 * dim)
    W1 = rng.uniform(-bound, bound, size=(hidden, 4 * dim))
    return CriticModel(dim=dim, hidden=hidden, W1=W1,
                       b1=np.zeros(hidden), w2=np.zeros(hidden), b2=0.0)


def _pair_features(eg: np.ndarray, et: np.ndarray) -> np.ndarray:
    return np.concatenate([eg, et, eg * et, np.abs(eg - et)], axis=-1)


def score(m: CriticModel, e, goal_text: str, traj_text: str) -> float:
    """Cost of a trajectory text under a goal; lower means closer to done."""
    if getattr(e, "dim", None) != m.dim:
        raise DimMismatch(f"embedder dim {getattr(e, 'dim', None)} != model dim {m.dim}")
    z = _pair_features(e.embed(goal_text), e.embed(traj_text))
    c = float(m.w2 @ np.tanh(m.W1 @ z + m.b1) + m.b2)
    if not math.isfinite(c):
        raise CriticError("non-finite cost")
    return c


@dataclass(frozen=True)
class CriticTrainConfig:
    margin: float = 1.0
    lam: float = 0.01
    batch_size: int = 128
    epochs: int = 1
    lr: float = 1e-3
    seed: int = 0

    def __post_init__(self) -> None:
        if self.margin <= 0:
            raise CriticError("margin must be > 0")
        if self.lam < 0:
            raise CriticError("lambda must be >= 0")


def pair_loss(c_pos: float, c_neg: float, cfg: CriticTrainConfig) -> float:
    """Squared hinge ranking loss plus cost-centering term.

    L = max(0, margin + c_pos - c_neg)^2 + lam * (c_pos^2 + c_neg^2);
    minimizing it pushes c_pos at least margin below c_neg.
    """
    hinge = max(0.0, cfg.margin + c_pos - c_neg)
    return hinge * hinge + cfg.lam * (c_pos * c_pos + c_neg * c_neg)


class PairKind(str, Enum):
    GOOD_VS_BASE = "GoodVsBase"
    BASE_VS_BAD = "BaseVsBad"
    BASE_VS_SHUFFLED = "BaseVsShuffled"
    EXTERNAL = "External"


@dataclass(frozen=True)
class PairExample:
    goal_text: str
    pos_text: str
    neg_text: str
    kind: PairKind

    def __post_init__(self) -> None:
        if self.pos_text == self.neg_text:
            raise BadRow("pos and neg texts are identical")


@dataclass(frozen=True)
class PairConfig:
    seed: int = 0
    min_base: int = 1
    good_steps: int = 1
    distractor_steps: int = 1
    render: RenderOptions = RenderOptions()


def build_pairs(trajs: Sequence[Trajectory], cfg: PairConfig = PairConfig()) -> list[PairExample]:
    """Construct ranking pairs from a trajectory corpus.

    For every trajectory and cut point k: the k-step base prefix is beaten
    by the (k + good_steps)-step continuation, and itself beats both the
    base plus distractor step(s) pulled from a different-goal trajectory
    and (for k >= 2) a shuffled reordering of the base. Pairs whose two
    texts collide (duplicate step texts) are dropped.
    """
    for t in trajs:
        if len(t.steps) < 2:
            raise CriticError("every source trajectory needs >= 2 steps")
    rng = random.Random(cfg.seed)
    pairs: list[PairExample] = []
    for ti, t in enumerate(trajs):
        donors = [o for o in trajs if o.goal != t.goal]
        if not donors:
            raise NoDistractorSource(f"no trajectory with a different goal than {t.goal!r}")
        n = len(t.steps)
        goal_text, _ = render_critic_text(t, 0, cfg.render)
        for k in range(max(1, cfg.min_base), n):
            _, base_text = render_critic_text(t, k, cfg.render)
            _, good_text = render_critic_text(t, min(n, k + cfg.good_steps), cfg.render)

            donor = donors[rng.randrange(len(donors))]
            width = min(cfg.distractor_steps, len(donor.steps))
            at = rng.randrange(len(donor.steps) - width + 1)
            bad = append_steps(prefix(t, k), donor.steps[at:at + width])
            _, bad_text = render_critic_text(bad, k + width, cfg.render)

            shuffled_text = None
            if k >= 2:
                shuffled = shuffle_steps(prefix(t, k), seed=rng.randrange(2**31))
                _, shuffled_text = render_critic_text(shuffled, k, cfg.render)

            for pos, neg, kind in (
                (good_text, base_text, PairKind.GOOD_VS_BASE),
                (base_text, bad_text, PairKind.BASE_VS_BAD),
                (base_text, shuffled_text, PairKind.BASE_VS_SHUFFLED),
            ):
                if neg is None or pos == neg:
                    continue
                pairs.append(PairExample(goal_text, pos, neg, kind))
    return pairs


class _EmbedCache:
    def __init__(self, embedder) -> None:
        self.embedder = embedder
        self._store: dict[str, np.ndarray] = {}

    def get(self, text: str) -> np.ndarray:
        vec = self._store.get(text)
        if vec is None:
            vec = self.embedder.embed(text)
            self._store[text] = vec
        return vec

    def matrix(self, texts: Sequence[str]) -> np.ndarray:
        return np.stack([self.get(t) for t in texts])


@dataclass
class CriticGrads:
    W1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: float


def _forward(m: CriticModel, Z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    U = np.tanh(Z @ m.W1.T + m.b1)
    return U @ m.w2 + m.b2, U


def _backward(m: CriticModel, Z: np.ndarray, U: np.ndarray, dC: np.ndarray) -> CriticGrads:
    dA = (dC[:, None] * m.w2[None, :]) * (1.0 - U * U)
    return CriticGrads(W1=dA.T @ Z, b1=dA.sum(axis=0), w2=U.T @ dC, b2=float(dC.sum()))


def loss_and_grads(
    m: CriticModel,
    e,
    batch: Sequence[PairExample],
    cfg: CriticTrainConfig,
    cache: _EmbedCache | None = None,
) -> tuple[float, CriticGrads]:
    """Mean pair loss over the batch and its exact analytic gradients."""
    if not batch:
        raise CriticError("batch must be nonempty")
    cache = cache or _EmbedCache(e)
    Eg = cache.matrix([p.goal_text for p in batch])
    Zp = _pair_features(Eg, cache.matrix([p.pos_text for p in batch]))
    Zn = _pair_features(Eg, cache.matrix([p.neg_text for p in batch]))
    Cp, Up = _forward(m, Zp)
    Cn, Un = _forward(m, Zn)
    B = len(batch)
    hinge = np.maximum(0.0, cfg.margin + Cp - Cn)
    loss = float(np.mean(hinge**2 + cfg.lam * (Cp**2 + Cn**2)))
    dCp = (2.0 * hinge + 2.0 * cfg.lam * Cp) / B
    dCn = (-2.0 * hinge + 2.0 * cfg.lam * Cn) / B
    gp = _backward(m, Zp, Up, dCp)
    gn = _backward(m, Zn, Un, dCn)
    return loss, CriticGrads(W1=gp.W1 + gn.W1, b1=gp.b1 + gn.b1,
                             w2=gp.w2 + gn.w2, b2=gp.b2 + gn.b2)


def train(
    m: CriticModel,
    e,
    pairs: Sequence[PairExample],
    cfg: CriticTrainConfig,
) -> tuple[CriticModel, list[float]]:
    """Adam over seeded-shuffled batches; returns the model and per-batch loss."""
    if not pairs:
        raise CriticError("no training pairs")
    model = m.copy()
    cache = _EmbedCache(e)
    rng = np.random.default_rng(cfg.seed)
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    params = ("W1", "b1", "w2", "b2")
    mom = {p: np.zeros_like(getattr(model, p)) if p != "b2" else 0.0 for p in params}
    vel = {p: np.zeros_like(getattr(model, p)) if p != "b2" else 0.0 for p in params}
    t = 0
    history: list[float] = []
    for _ in range(cfg.epochs):
        order = rng.permutation(len(pairs))
        for lo in range(0, len(pairs), cfg.batch_size):
            batch = [pairs[i] for i in order[lo:lo + cfg.batch_size]]
            loss, grads = loss_and_grads(model, e, batch, cfg, cache)
            history.append(loss)
            t += 1
            for p in params:
                g = getattr(grads, p)
                mom[p] = beta1 * mom[p] + (1 - beta1) * g
                vel[p] = beta2 * vel[p] + (1 - beta2) * (g * g if p == "b2" else g**2)
                mhat = mom[p] / (1 - beta1**t)
                vhat = vel[p] / (1 - beta2**t)
                if p == "b2":
                    model.b2 = model.b2 - cfg.lr * mhat / (math.sqrt(vhat) + eps)
                else:
                    getattr(model, p)[...] = getattr(model, p) - cfg.lr * mhat / (np.sqrt(vhat) + eps)
    return model, history


def load_external_pairs(source: Iterable[str] | str) -> list[PairExample]:
    """Read preference rows (JSONL {goal, pos, neg}) as External pairs."""
    lines = source.splitlines() if isinstance(source, str) else source
    pairs = []
    for lineno, ln in enumerate(lines, start=1):
        if not ln.strip():
            continue
        try:
            row = json.loads(ln)
        except json.JSONDecodeError as exc:
            raise BadRow(f"line {lineno}: invalid JSON: {exc}") from exc
        try:
            goal, pos, neg = row["goal"], row["pos"], row["neg"]
        except (KeyError, TypeError) as exc:
            raise BadRow(f"line {lineno}: missing key {exc}") from exc
        if not all(isinstance(x, str) and x for x in (goal, pos, neg)):
            raise BadRow(f"line {lineno}: goal/pos/neg must be nonempty strings")
        if pos == neg:
            raise BadRow(f"line {lineno}: pos equals neg")
        pairs.append(PairExample(goal_text=goal, pos_text=pos, neg_text=neg,
                                 kind=PairKind.EXTERNAL))
    return pairs


def dump_pairs(pairs: Sequence[PairExample]) -> str:
    return "".join(
        json.dumps({"goal": p.goal_text, "pos": p.pos_text, "neg": p.neg_text,
                    "kind": p.kind.value}, sort_keys=True) + "\n"
        for p in pairs
    )


def load_pairs(text: str) -> list[PairExample]:
    """Read the pairs JSONL written by dump_pairs (kind column honored)."""
    pairs = []
    for lineno, ln in enumerate(text.splitlines(), start=1):
        if not ln.strip():
            continue
        row = json.loads(ln)
        try:
            kind = PairKind(row.get("kind", "External"))
        except ValueError as exc:
            raise BadRow(f"line {lineno}: unknown kind {row.get('kind')!r}") from exc
        pairs.append(PairExample(goal_text=row["goal"], pos_text=row["pos"],
                                 neg_text=row["neg"], kind=kind))
    return pairs


def save_model(m: CriticModel, embedder) -> str:
    return json.dumps(
        {
            "dim": m.dim,
            "hidden": m.hidden,
            "W1": m.W1.tolist(),
            "b1": m.b1.tolist(),
            "w2": m.w2.tolist(),
            "b2": m.b2,
            "embedder": {"kind": getattr(embedder, "kind", "mock-hash"), "dim": m.dim},
        },
        sort_keys=True,
    )


def load_model(text: str):
    payload = json.loads(text)
    m = CriticModel(
        dim=int(payload["dim"]),
        hidden=int(payload["hidden"]),
        W1=np.asarray(payload["W1"], dtype=np.float64),
        b1=np.asarray(payload["b1"], dtype=np.float64),
        w2=np.asarray(payload["w2"], dtype=np.float64),
        b2=float(payload["b2"]),
    )
    emb = payload.get("embedder", {"kind": "mock-hash"})
    if emb.get("kind") == "remote":
        embedder = RemoteEmbedder.from_env(dim=m.dim)
    else:
        embedder = MockHashEmbedder(dim=m.dim)
    return m, embedder


def make_text_scorer(m: CriticModel, e) -> Callable[[str, str], float]:
    """A (goal_text, trajectory_text) -> cost callable with embedding reuse."""
    cache = _EmbedCache(e)

    def scorer(goal_text: str, traj_text: str) -> float:
        z = _pair_features(cache.get(goal_text), cache.get(traj_text))
        return float(m.w2 @ np.tanh(m.W1 @ z + m.b1) + m.b2)

    return scorer


def make_plan_scorer(m: CriticModel, e, opts: RenderOptions = RenderOptions()):
    """A (goal_text, Trajectory) -> cost callable for the planners."""
    text_scorer = make_text_scorer(m, e)

    def scorer(goal_text: str, traj: Trajectory) -> float:
        _, traj_text = render_critic_text(traj, len(traj.steps), opts)
        return text_scorer(goal_text, traj_text)

    return scorer
