"""Recursive abstractive summary trees over factual chunks.

Each level clusters the current chunks with a diagonal-covariance Gaussian
mixture (EM, k selected by BIC, soft multi-membership), summarizes every
cluster with a chat model, then embeds the summaries as the next level.
Dimensionality is first reduced with PCA (power iteration with deflation)
because EM on raw high-dimensional embeddings is ill-conditioned with a few
hundred points.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .corpus import Chunk
from .errors import EmptyCluster
from .index import IndexEntry, VectorIndex
from .tokens import count_tokens

VARIANCE_FLOOR = 1e-6
EM_TOL = 1e-6
EM_MAX_ITER = 200


@dataclass
class RaptorConfig:
    max_levels: int = 4
    min_cluster_size: int = 5
    threshold: float = 0.1
    target_dim: int = 10
    seed: int = 0
    k_max: int = 16
    summary_budget: int = 256
    context_limit: int = 4096

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class GmmModel:
    k: int
    weights: np.ndarray  # (k,)
    means: np.ndarray  # (k, d)
    variances: np.ndarray  # (k, d), entrywise >= VARIANCE_FLOOR
    log_likelihood: float
    ll_history: list[float] = field(default_factory=list)


@dataclass
class ReducedVectors:
    points: np.ndarray
    degenerate: bool = False


@dataclass
class RaptorTree:
    levels: list[list[str]]  # level 0 = leaf chunk ids, >=1 summary ids
    edges: dict[str, list[str]]  # summary chunk_id -> child chunk ids
    config: dict

    def to_dict(self) -> dict:
        return {"levels": self.levels, "edges": self.edges, "config": self.config}

    @classmethod
    def from_dict(cls, d: dict) -> "RaptorTree":
        return cls(levels=d["levels"], edges=d["edges"], config=d.get("config", {}))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "RaptorTree":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def descendant_leaves(self, chunk_id: str) -> set[str]:
        """All level-0 chunk ids reachable from the given chunk."""
        leaves = set(self.levels[0]) if self.levels else set()
        if chunk_id in leaves:
            return {chunk_id}
        out: set[str] = set()
        stack = [chunk_id]
        seen = set()
        while stack:
            cid = stack.pop()
            if cid in seen:
                continue
            seen.add(cid)
            children = self.edges.get(cid, [])
            for child in children:
                if child in leaves:
                    out.add(child)
                else:
                    stack.append(child)
        return out


def reduce_dim(vectors: np.ndarray, target_dim: int, seed: int = 0) -> ReducedVectors:
    """PCA projection via power iteration with deflation.

    Returns the input unchanged when it is already at (or below) the target
    dimensionality; flags degenerate input (zero variance) instead of
    raising so tree builds can fall back to a single cluster.
    """
    points = np.asarray(vectors, dtype=np.float64)
    n, d = points.shape
    if d <= target_dim:
        return ReducedVectors(points=points)
    if n < 2:
        return ReducedVectors(points=np.zeros((n, target_dim)), degenerate=True)

    centered = points - points.mean(axis=0)
    if not np.any(np.abs(centered) > 1e-12):
        return ReducedVectors(points=np.zeros((n, target_dim)), degenerate=True)

    cov = (centered.T @ centered) / (n - 1)
    rng = np.random.default_rng(seed)
    components = []
    work = cov.copy()
    for _ in range(min(target_dim, d)):
        v = rng.normal(size=d)
        v /= np.linalg.norm(v)
        eigval = 0.0
        for _ in range(1000):
            w = work @ v
            norm = np.linalg.norm(w)
            if norm < 1e-15:
                break
            w_next = w / norm
            if np.linalg.norm(w_next - v) < 1e-12 or np.linalg.norm(w_next + v) < 1e-12:
                v = w_next
                eigval = norm
                break
            v = w_next
            eigval = norm
        # Deterministic sign: largest-magnitude entry positive.
        pivot = int(np.argmax(np.abs(v)))
        if v[pivot] < 0:
            v = -v
        components.append(v)
        work = work - eigval * np.outer(v, v)
    basis = np.stack(components, axis=1)  # (d, target_dim)
    return ReducedVectors(points=centered @ basis)


def _log_gauss_diag(points: np.ndarray, mean: np.ndarray, var: np.ndarray) -> np.ndarray:
    diff2 = (points - mean) ** 2
    return -0.5 * np.sum(diff2 / var + np.log(2.0 * np.pi * var), axis=1)


def _log_prob_matrix(points: np.ndarray, model_weights, means, variances) -> np.ndarray:
    k = means.shape[0]
    logp = np.empty((points.shape[0], k))
    for j in range(k):
        logp[:, j] = np.log(model_weights[j]) + _log_gauss_diag(points, means[j], variances[j])
    return logp


def _logsumexp(a: np.ndarray, axis: int) -> np.ndarray:
    m = np.max(a, axis=axis, keepdims=True)
    return (m + np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True))).squeeze(axis)


def _kmeanspp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    means = np.empty((k, points.shape[1]))
    first = int(rng.integers(n))
    means[0] = points[first]
    d2 = np.sum((points - means[0]) ** 2, axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        means[j] = points[idx]
        d2 = np.minimum(d2, np.sum((points - means[j]) ** 2, axis=1))
    return means


def fit_gmm(points: np.ndarray, k: int, seed: int = 0) -> GmmModel:
    """EM for a diagonal-covariance Gaussian mixture.

    Initialization is k-means++ style from the seed; iterates until the
    log-likelihood gain drops below EM_TOL or EM_MAX_ITER. A component that
    loses all responsibility mass is re-seeded once from the point with the
    lowest likelihood; a second collapse raises EmptyCluster.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points[:, None]
    n, d = points.shape
    if k < 1 or k > n:
        raise ValueError(f"k={k} out of range for {n} points")

    rng = np.random.default_rng(seed)
    means = _kmeanspp_init(points, k, rng)
    global_var = np.maximum(points.var(axis=0), VARIANCE_FLOOR)
    variances = np.tile(global_var, (k, 1))
    weights = np.full(k, 1.0 / k)

    prev_ll = -np.inf
    ll = -np.inf
    history: list[float] = []
    reseeded = False
    for _ in range(EM_MAX_ITER):
        logp = _log_prob_matrix(points, weights, means, variances)
        log_norm = _logsumexp(logp, axis=1)
        ll = float(np.sum(log_norm))
        history.append(ll)
        resp = np.exp(logp - log_norm[:, None])

        nk = resp.sum(axis=0)
        empty = np.where(nk < 1e-10)[0]
        if empty.size:
            if reseeded:
                raise EmptyCluster(f"component(s) {empty.tolist()} collapsed twice")
            reseeded = True
            worst = int(np.argmin(log_norm))
            for j in empty:
                means[j] = points[worst]
                variances[j] = global_var
                weights[j] = 1.0 / n
            weights /= weights.sum()
            prev_ll = -np.inf
            continue

        weights = nk / n
        means = (resp.T @ points) / nk[:, None]
        for j in range(k):
            diff2 = (points - means[j]) ** 2
            variances[j] = np.maximum(
                (resp[:, j][:, None] * diff2).sum(axis=0) / nk[j], VARIANCE_FLOOR
            )

        if ll - prev_ll < EM_TOL and np.isfinite(prev_ll):
            break
        prev_ll = ll

    return GmmModel(
        k=k,
        weights=weights,
        means=means,
        variances=variances,
        log_likelihood=ll,
        ll_history=history,
    )


def bic(model: GmmModel, n: int) -> float:
    d = model.means.shape[1]
    p = model.k * (2 * d) + (model.k - 1)
    return -2.0 * model.log_likelihood + p * np.log(n)


def fit_gmm_sweep(points: np.ndarray, k_max: int, seed: int = 0) -> list[GmmModel]:
    """Fit k = 1..min(k_max, n) with a shared seed schedule."""
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    return [fit_gmm(points, k, seed=seed + k) for k in range(1, min(k_max, n) + 1)]


def select_k(points: np.ndarray, k_max: int, seed: int = 0) -> int:
    """BIC-minimizing component count; ties go to the smaller k."""
    models = fit_gmm_sweep(points, k_max, seed=seed)
    n = np.asarray(points).shape[0]
    scores = [bic(m, n) for m in models]
    return int(np.argmin(scores)) + 1


def posteriors(model: GmmModel, points: np.ndarray) -> np.ndarray:
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points[:, None]
    logp = _log_prob_matrix(points, model.weights, model.means, model.variances)
    log_norm = _logsumexp(logp, axis=1)
    return np.exp(logp - log_norm[:, None])


def assign_soft(model: GmmModel, points: np.ndarray, threshold: float = 0.1) -> list[set[int]]:
    """Per-point cluster memberships: every component with posterior >=
    threshold, always including the argmax component (ties -> lower index)."""
    if not 0.0 < threshold <= 1.0:
        raise ValueError(f"threshold must be in (0, 1], got {threshold}")
    post = posteriors(model, points)
    assignments: list[set[int]] = []
    for row in post:
        members = {int(j) for j in np.where(row >= threshold)[0]}
        members.add(int(np.argmax(row)))  # argmax: first index on ties
        assignments.append(members)
    return assignments


SUMMARY_PROMPT = """You are summarizing excerpts of power grid regulations.
Write a concise summary that preserves every clause number, every obligation
(shall/must requirements), and every numeric threshold that appears below.
Target length: at most {budget} tokens.

REGULATION EXCERPTS:
{body}

SUMMARY:"""


def _chunk_block(chunk: Chunk) -> str:
    labels = ".".join(label for label, _ in chunk.clause_path) or chunk.chunk_id
    return f"[{labels}]\n{chunk.text}"


def summarize_cluster(chunks: list[Chunk], chat, cfg: RaptorConfig, cluster_id: str = "") -> str:
    """Summarize a cluster's chunks, batching hierarchically when the
    concatenated prompt would exceed the provider context limit."""
    if not chunks:
        raise ValueError("summarize_cluster requires at least one chunk")

    def run(texts: list[str]) -> str:
        body = "\n\n".join(texts)
        prompt = SUMMARY_PROMPT.format(budget=cfg.summary_budget, body=body)
        try:
            from .providers import ChatMessage

            return chat.chat([ChatMessage("user", prompt)]).content
        except Exception as exc:
            raise type(exc)(f"cluster {cluster_id}: {exc}") from exc

    blocks = [_chunk_block(c) for c in chunks]
    overhead = count_tokens(SUMMARY_PROMPT)
    limit = max(cfg.context_limit - overhead, 64)

    while True:
        if sum(count_tokens(b) for b in blocks) <= limit or len(blocks) == 1:
            return run(blocks)
        batches: list[list[str]] = []
        current: list[str] = []
        used = 0
        for block in blocks:
            t = count_tokens(block)
            if current and used + t > limit:
                batches.append(current)
                current, used = [], 0
            current.append(block)
            used += t
        if current:
            batches.append(current)
        blocks = [run(batch) for batch in batches]


def build_tree(
    leaf_chunks: list[Chunk],
    embedder,
    chat,
    index: VectorIndex,
    cfg: RaptorConfig,
    kb_id: str,
) -> tuple[RaptorTree, list[Chunk]]:
    """Build the recursive summary tree and upsert summary embeddings.

    Returns the tree plus the newly created summary chunks. Recursion stops
    when a level has <= min_cluster_size chunks or max_levels is reached.
    The caller is responsible for atomic persistence.
    """
    if not leaf_chunks:
        raise ValueError("build_tree requires at least one leaf chunk")

    levels: list[list[str]] = [[c.chunk_id for c in leaf_chunks]]
    edges: dict[str, list[str]] = {}
    summaries: list[Chunk] = []
    current = list(leaf_chunks)
    level = 0

    while level < cfg.max_levels and len(current) > cfg.min_cluster_size:
        vectors = embedder.embed_batch([c.text for c in current])
        matrix = np.stack([v.values.astype(np.float64) for v in vectors])
        reduced = reduce_dim(matrix, cfg.target_dim, seed=cfg.seed)
        if reduced.degenerate:
            assignments = [{0} for _ in current]
            k = 1
        else:
            k = select_k(reduced.points, cfg.k_max, seed=cfg.seed)
            model = fit_gmm(reduced.points, k, seed=cfg.seed + k)
            assignments = assign_soft(model, reduced.points, threshold=cfg.threshold)

        clusters: dict[int, list[Chunk]] = {}
        for chunk, members in zip(current, assignments):
            for j in sorted(members):
                clusters.setdefault(j, []).append(chunk)

        level += 1
        new_chunks: list[Chunk] = []
        for j in sorted(clusters):
            members = clusters[j]
            cid = f"{kb_id}:L{level}:c{j:03d}"
            text = summarize_cluster(members, chat, cfg, cluster_id=cid)
            summary = Chunk(
                chunk_id=cid,
                kb_id=kb_id,
                doc_id="",
                clause_path=[],
                text=text,
                token_count=count_tokens(text),
                level=level,
                child_chunk_ids=[c.chunk_id for c in members],
            )
            edges[cid] = list(summary.child_chunk_ids)
            new_chunks.append(summary)

        levels.append([c.chunk_id for c in new_chunks])
        summaries.extend(new_chunks)

        summary_vectors = embedder.embed_batch([c.text for c in new_chunks])
        index.upsert(
            [
                IndexEntry(chunk_id=c.chunk_id, vector=v, level=level, kb_id=kb_id)
                for c, v in zip(new_chunks, summary_vectors)
                if not v.degenerate
            ]
        )
        current = new_chunks

    tree = RaptorTree(levels=levels, edges=edges, config=cfg.to_dict())
    return tree, summaries
