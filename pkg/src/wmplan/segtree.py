"""Tree-of-captions construction from a timestamped feature stream.

Segmentation is bottom-up: every frame starts as its own segment and the
adjacent pair whose merge least increases the total within-segment sum of
squared deviations is fused, repeatedly, until a single root remains. The
merge trace is the tree. Merge cost between adjacent segments a and b is

    delta_sse = (n_a * n_b / (n_a + n_b)) * ||mean_a - mean_b||^2

which is the exact growth of within-segment SSE caused by the merge, and is
computable in O(d) from sufficient statistics (count, vector sum).
"""

from __future__ import annotations

import io
import json
import math
from collections import deque
from dataclasses import dataclass, field
from typing import IO, Iterable, Mapping, Sequence

import numpy as np

from . import accel

__all__ = [
    "FeatureStream",
    "SegStat",
    "TreeNode",
    "CaptionTree",
    "SegTreeError",
    "BadHeader",
    "DimMismatch",
    "NonMonotonic",
    "EmptyStream",
    "load_feature_stream",
    "ward_delta",
    "build_tree",
    "filter_captionable",
    "bfs_windows",
    "dfs_render",
    "pool_frames",
]


class SegTreeError(ValueError):
    pass


class BadHeader(SegTreeError):
    pass


class DimMismatch(SegTreeError):
    pass


class NonMonotonic(SegTreeError):
    pass


class EmptyStream(SegTreeError):
    pass


@dataclass(frozen=True)
class FeatureStream:
    """Timestamped feature vectors: times is (T, 2) [t0, t1] seconds,
    vectors is (T, dim)."""

    dim: int
    times: np.ndarray
    vectors: np.ndarray

    def __post_init__(self) -> None:
        times = np.asarray(self.times, dtype=np.float64).reshape(-1, 2)
        vectors = np.asarray(self.vectors, dtype=np.float64)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "vectors", vectors)
        if vectors.ndim != 2 or vectors.shape[1] != self.dim:
            raise DimMismatch(f"vectors shape {vectors.shape} does not match dim={self.dim}")
        if times.shape[0] != vectors.shape[0]:
            raise DimMismatch("times and vectors disagree on frame count")
        if np.any(times[:, 0] >= times[:, 1]):
            raise NonMonotonic("every frame needs t0 < t1")
        if times.shape[0] > 1:
            if np.any(np.diff(times[:, 0]) <= 0):
                raise NonMonotonic("frames must be sorted by t0")
            if np.any(times[1:, 0] < times[:-1, 1]):
                raise NonMonotonic("frames overlap")

    def __len__(self) -> int:
        return self.times.shape[0]


def load_feature_stream(source: IO[bytes] | IO[str] | str | bytes) -> FeatureStream:
    """Read the JSONL feature-stream format.

    Line 1 is the header ``{"dim": <int>, "unit": "seconds"}``; every
    following line is ``{"t0": <float>, "t1": <float>, "v": [...]}``.
    """
    if isinstance(source, bytes):
        text = source.decode("utf-8")
    elif isinstance(source, str):
        text = source
    else:
        raw = source.read()
        text = raw.decode("utf-8") if isinstance(raw, bytes) else raw
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise BadHeader("empty feature stream file")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise BadHeader(f"header is not valid JSON: {exc}") from exc
    if not isinstance(header, dict) or not isinstance(header.get("dim"), int) or header["dim"] <= 0:
        raise BadHeader(f"header must carry a positive integer dim, got {header!r}")
    dim = header["dim"]
    times = []
    vectors = []
    for lineno, ln in enumerate(lines[1:], start=2):
        try:
            row = json.loads(ln)
        except json.JSONDecodeError as exc:
            raise BadHeader(f"line {lineno} is not valid JSON: {exc}") from exc
        v = row.get("v")
        if not isinstance(v, list) or len(v) != dim:
            raise DimMismatch(f"line {lineno}: vector length {len(v) if isinstance(v, list) else '?'} != dim {dim}")
        times.append((float(row["t0"]), float(row["t1"])))
        vectors.append([float(x) for x in v])
    return FeatureStream(dim=dim, times=np.array(times, dtype=np.float64).reshape(-1, 2),
                         vectors=np.array(vectors, dtype=np.float64).reshape(-1, dim))


@dataclass(frozen=True)
class SegStat:
    """Sufficient statistics of one temporal segment."""

    n: int
    sum: np.ndarray
    sumsq: float
    start: float
    end: float

    @classmethod
    def of_frame(cls, stream: FeatureStream, i: int) -> "SegStat":
        v = stream.vectors[i]
        return cls(n=1, sum=v.copy(), sumsq=float(v @ v),
                   start=float(stream.times[i, 0]), end=float(stream.times[i, 1]))

    def merge(self, other: "SegStat") -> "SegStat":
        return SegStat(n=self.n + other.n, sum=self.sum + other.sum,
                       sumsq=self.sumsq + other.sumsq,
                       start=min(self.start, other.start), end=max(self.end, other.end))

    @property
    def mean(self) -> np.ndarray:
        return self.sum / self.n

    @property
    def sse(self) -> float:
        """Within-segment sum of squared deviations from the segment mean."""
        return self.sumsq - float(self.sum @ self.sum) / self.n


def ward_delta(a: SegStat, b: SegStat) -> float:
    """Increase in total within-segment SSE caused by merging a and b."""
    diff = a.mean - b.mean
    return (a.n * b.n / (a.n + b.n)) * float(diff @ diff)


@dataclass(frozen=True)
class TreeNode:
    id: int
    start: float
    end: float
    children: tuple[int, ...] = ()
    caption: str | None = None

    @property
    def is_leaf(self) -> bool:
        return not self.children

    @property
    def duration(self) -> float:
        return self.end - self.start


@dataclass(frozen=True)
class CaptionTree:
    """Binary merge hierarchy over video segments.

    Leaves carry ids 0..T-1 in temporal order; merge s creates internal
    node T+s, so the root is the highest id. ``merge_deltas`` retains the
    per-merge SSE increases (in merge order, not serialized).
    """

    root: int
    nodes: dict[int, TreeNode]
    merge_deltas: tuple[float, ...] = field(default=(), compare=False)

    def node(self, node_id: int) -> TreeNode:
        return self.nodes[node_id]

    def __len__(self) -> int:
        return len(self.nodes)

    def with_captions(self, captions: Mapping[int, str]) -> "CaptionTree":
        nodes = dict(self.nodes)
        for node_id, caption in captions.items():
            n = nodes[node_id]
            nodes[node_id] = TreeNode(n.id, n.start, n.end, n.children, caption)
        return CaptionTree(root=self.root, nodes=nodes, merge_deltas=self.merge_deltas)

    def to_json(self) -> str:
        payload = {
            "root": self.root,
            "nodes": [
                {"id": n.id, "start": n.start, "end": n.end,
                 "children": list(n.children), "caption": n.caption}
                for n in sorted(self.nodes.values(), key=lambda n: n.id)
            ],
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "CaptionTree":
        payload = json.loads(text)
        nodes = {
            int(rec["id"]): TreeNode(
                id=int(rec["id"]), start=float(rec["start"]), end=float(rec["end"]),
                children=tuple(int(c) for c in rec.get("children", [])),
                caption=rec.get("caption"),
            )
            for rec in payload["nodes"]
        }
        return cls(root=int(payload["root"]), nodes=nodes)


def build_tree(stream: FeatureStream) -> CaptionTree:
    """Cluster adjacent frames into the full merge hierarchy.

    Each step fuses the adjacent active pair with the smallest ward_delta
    (leftmost on ties), re-evaluated fresh every step.
    """
    T = len(stream)
    if T == 0:
        raise EmptyStream("cannot build a tree over zero frames")
    nodes = {
        i: TreeNode(id=i, start=float(stream.times[i, 0]), end=float(stream.times[i, 1]))
        for i in range(T)
    }
    if T == 1:
        return CaptionTree(root=0, nodes=nodes)
    counts = np.ones(T, dtype=np.float64)
    left_ids, right_ids, deltas = accel.merge_sequence(stream.vectors, counts)
    for step in range(T - 1):
        left = nodes[int(left_ids[step])]
        right = nodes[int(right_ids[step])]
        new_id = T + step
        nodes[new_id] = TreeNode(id=new_id, start=left.start, end=right.end,
                                 children=(left.id, right.id))
    return CaptionTree(root=2 * T - 2, nodes=nodes, merge_deltas=tuple(float(d) for d in deltas))


def _bfs_ids(tree: CaptionTree) -> list[int]:
    order = []
    queue = deque([tree.root])
    while queue:
        node_id = queue.popleft()
        order.append(node_id)
        queue.extend(tree.nodes[node_id].children)
    return order


def filter_captionable(tree: CaptionTree, min_duration: float = 5.0) -> list[int]:
    """Ids of nodes at least min_duration long, in BFS order."""
    return [i for i in _bfs_ids(tree) if tree.nodes[i].duration >= min_duration]


def bfs_windows(tree: CaptionTree, k: int = 5) -> list[int]:
    """The first k nodes in BFS traversal order (children left first)."""
    if k < 1:
        raise SegTreeError("k must be >= 1")
    return _bfs_ids(tree)[:k]


def _span_label(node: TreeNode) -> str:
    return f"{node.start:.2f}s -> {node.end:.2f}s (duration: {node.duration:.1f}s)"


def dfs_render(tree: CaptionTree, labels: Mapping[int, str] | None = None) -> str:
    """Linearize the tree as markdown in DFS order.

    The root is a ``#`` heading; internal nodes get ``##``/``###``/...
    ``Segment`` headings with hierarchical dotted numbering; leaves are
    bold span lines. Captions follow their heading (or sit inline after a
    leaf's colon). ``labels`` overrides stored captions by node id.
    """
    chunks: list[str] = []

    def caption_of(node: TreeNode) -> str | None:
        if labels is not None and node.id in labels:
            return labels[node.id]
        return node.caption

    def visit(node_id: int, depth: int, dotted: str) -> None:
        node = tree.nodes[node_id]
        caption = caption_of(node)
        if depth == 0:
            chunks.append(f"# {_span_label(node)}")
            if caption:
                chunks.append(caption)
        elif node.is_leaf:
            line = f"**{_span_label(node)}**:"
            if caption:
                line += f" {caption}"
            chunks.append(line)
        else:
            chunks.append(f"{'#' * (depth + 1)} Segment {dotted} - {_span_label(node)}")
            if caption:
                chunks.append(caption)
        for pos, child in enumerate(node.children, start=1):
            visit(child, depth + 1, f"{dotted}.{pos}" if dotted else str(pos))

    visit(tree.root, 0, "")
    return "\n\n".join(chunks) + "\n"


def pool_frames(stream: FeatureStream, size: int) -> FeatureStream:
    """Mean-pool consecutive frames into windows of ``size`` (a coarser
    minimal granularity for very long streams; off by default)."""
    if size <= 1:
        return stream
    T = len(stream)
    if T == 0:
        raise EmptyStream("cannot pool an empty stream")
    times = []
    vectors = []
    for lo in range(0, T, size):
        hi = min(lo + size, T)
        times.append((float(stream.times[lo, 0]), float(stream.times[hi - 1, 1])))
        vectors.append(stream.vectors[lo:hi].mean(axis=0))
    return FeatureStream(dim=stream.dim, times=np.array(times), vectors=np.array(vectors))
