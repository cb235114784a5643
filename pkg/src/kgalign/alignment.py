"""Cross-space alignment by self-learning over fixed embeddings.

The embeddings of each language are frozen; alignment retrofits an
orthogonal transform M between unit-normalized spaces.  Each iteration
solves the Procrustes problem on the current pair set, then proposes new
pairs under a mutual 1-NN constraint with CSLS scoring, until the number
of new entity pairs per iteration falls below a stop fraction.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .config import NeighborQuery
from .embedding import EmbeddingSpace, read_embeddings
from .grounding import ENTITY_PREFIX


def unit_rows(mat: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(mat, axis=1)
    if np.any(norms == 0):
        raise ValueError("zero-norm vector cannot be normalized")
    return mat / norms[:, None]


@dataclass
class AlignmentSpace:
    """One side of an alignment problem: items with unit vectors.

    Items are entity markers (`@ent:<id>`) followed by lexemes ordered by
    descending corpus frequency, as written by the embedding serializer.
    """

    items: tuple[str, ...]
    vectors: np.ndarray              # unit rows
    entity_mask: np.ndarray          # bool per item
    index: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if not self.index:
            self.index = {it: i for i, it in enumerate(self.items)}

    @property
    def n_entities(self) -> int:
        return int(self.entity_mask.sum())

    def entity_ids(self) -> list[str]:
        return [it[len(ENTITY_PREFIX):] for it, m in
                zip(self.items, self.entity_mask) if m]

    @classmethod
    def from_file(cls, path) -> "AlignmentSpace":
        tokens, mat = read_embeddings(path)
        mask = np.array([t.startswith(ENTITY_PREFIX) for t in tokens])
        return cls(items=tuple(tokens), vectors=unit_rows(mat),
                   entity_mask=mask)

    @classmethod
    def from_space(cls, space: EmbeddingSpace) -> "AlignmentSpace":
        ent = space.ent_out if space.ent_out is not None else space.ent0
        items = tuple(ENTITY_PREFIX + e for e in space.entities) + space.lexemes
        mat = np.vstack([ent, space.lex])
        mask = np.zeros(len(items), dtype=bool)
        mask[:space.n_entities] = True
        return cls(items=items, vectors=unit_rows(mat), entity_mask=mask)


@dataclass
class AlignmentState:
    source: AlignmentSpace
    target: AlignmentSpace
    ent_pairs: list[tuple[str, str]]          # entity ids, 1-to-1
    lex_pairs: list[tuple[str, str]] = field(default_factory=list)
    transform: np.ndarray | None = None
    iteration: int = 0
    proposal_counts: list[int] = field(default_factory=list)
    lexeme_top_f: int = 10000

    def aligned_source_entities(self) -> set[str]:
        return {s for s, _ in self.ent_pairs}

    def aligned_target_entities(self) -> set[str]:
        return {t for _, t in self.ent_pairs}

    def pair_matrices(self) -> tuple[np.ndarray, np.ndarray]:
        """Stacked (X, Y) vectors of all current pairs, entities + lexemes."""
        xs, ys = [], []
        for s, t in self.ent_pairs:
            xs.append(self.source.vectors[self.source.index[ENTITY_PREFIX + s]])
            ys.append(self.target.vectors[self.target.index[ENTITY_PREFIX + t]])
        for s, t in self.lex_pairs:
            si = self.source.index.get(s)
            ti = self.target.index.get(t)
            if si is None or ti is None:
                continue
            xs.append(self.source.vectors[si])
            ys.append(self.target.vectors[ti])
        return np.array(xs), np.array(ys)


def procrustes_solve(pairs_x: np.ndarray, pairs_y: np.ndarray) -> np.ndarray:
    """Orthogonal M minimizing sum ||M x - y||^2 via SVD of X^T Y.

    Rows are unit-normalized internally; M = V U^T for U S V^T = svd(X^T Y).
    """
    if len(pairs_x) == 0:
        raise ValueError("need at least one pair")
    x = unit_rows(np.atleast_2d(pairs_x))
    y = unit_rows(np.atleast_2d(pairs_y))
    u, s, vt = np.linalg.svd(x.T @ y)
    if np.any(s < 1e-12 * max(s[0], 1.0)):
        warnings.warn("rank-deficient Procrustes system; minimizer is "
                      "not unique", RuntimeWarning, stacklevel=2)
    return vt.T @ u.T


def _topk_mean(scores: np.ndarray, k: int, axis: int) -> np.ndarray:
    n = scores.shape[axis]
    k = min(k, n)
    part = np.partition(scores, n - k, axis=axis)
    sl = [slice(None)] * scores.ndim
    sl[axis] = slice(n - k, n)
    return part[tuple(sl)].mean(axis=axis)


def cosine_matrix(mapped_src: np.ndarray, tgt: np.ndarray) -> np.ndarray:
    return unit_rows(mapped_src) @ unit_rows(tgt).T


def csls_matrix(cos: np.ndarray, csls_k: int) -> np.ndarray:
    """2*cos - mean top-k row similarity - mean top-k column similarity."""
    r_src = _topk_mean(cos, csls_k, axis=1)
    r_tgt = _topk_mean(cos, csls_k, axis=0)
    return 2.0 * cos - r_src[:, None] - r_tgt[None, :]


@dataclass(frozen=True)
class CSLSContext:
    """Vector clouds the per-pair CSLS penalties are computed against."""

    mapped_sources: np.ndarray
    targets: np.ndarray
    csls_k: int


def csls_score(mapped_source: np.ndarray, target: np.ndarray,
               ctx: CSLSContext) -> float:
    ms = mapped_source / np.linalg.norm(mapped_source)
    tg = target / np.linalg.norm(target)
    cos_to_targets = unit_rows(ctx.targets) @ ms
    cos_to_sources = unit_rows(ctx.mapped_sources) @ tg
    r_t = float(np.sort(cos_to_targets)[-min(ctx.csls_k, len(cos_to_targets)):].mean())
    r_s = float(np.sort(cos_to_sources)[-min(ctx.csls_k, len(cos_to_sources)):].mean())
    return float(2.0 * ms @ tg - r_t - r_s)


def _score_matrix(mapped_src: np.ndarray, tgt: np.ndarray,
                  q: NeighborQuery) -> np.ndarray:
    """Similarity matrix, higher is better, under the query's metric."""
    if q.metric == "csls":
        return csls_matrix(cosine_matrix(mapped_src, tgt), q.csls_k)
    d = np.linalg.norm(mapped_src[:, None, :] - tgt[None, :, :], axis=2)
    return -d


def _candidate_indices(space: AlignmentSpace, aligned_entities: set[str],
                       top_f: int) -> np.ndarray:
    """Unaligned entities plus the top-F most frequent lexemes."""
    keep = []
    n_lex_taken = 0
    for i, item in enumerate(space.items):
        if space.entity_mask[i]:
            if item[len(ENTITY_PREFIX):] not in aligned_entities:
                keep.append(i)
        elif n_lex_taken < top_f:
            keep.append(i)
            n_lex_taken += 1
    return np.array(keep, dtype=np.int64)


def propose_pairs(state: AlignmentState,
                  q: NeighborQuery) -> list[tuple[str, str, bool]]:
    """Mutual 1-NN proposals; returns (source item, target item, is_entity).

    Candidates exclude already-aligned entities on both sides; lexemes are
    limited to the top-F frequency cutoff.  A mutual pair survives only if
    both items have the same type; existing lexeme pairs are not re-proposed.
    """
    src_idx = _candidate_indices(state.source,
                                 state.aligned_source_entities(),
                                 state.lexeme_top_f)
    tgt_idx = _candidate_indices(state.target,
                                 state.aligned_target_entities(),
                                 state.lexeme_top_f)
    if len(src_idx) == 0 or len(tgt_idx) == 0:
        return []
    mapped = state.source.vectors[src_idx] @ state.transform.T
    scores = _score_matrix(mapped, state.target.vectors[tgt_idx], q)
    nn_of_src = scores.argmax(axis=1)
    nn_of_tgt = scores.argmax(axis=0)

    existing_lex = set(state.lex_pairs)
    proposals = []
    for i, j in enumerate(nn_of_src):
        if nn_of_tgt[j] != i:
            continue
        si, ti = src_idx[i], tgt_idx[int(j)]
        s_ent = bool(state.source.entity_mask[si])
        t_ent = bool(state.target.entity_mask[ti])
        if s_ent != t_ent:
            continue
        s_item = state.source.items[si]
        t_item = state.target.items[ti]
        if s_ent:
            proposals.append((s_item[len(ENTITY_PREFIX):],
                              t_item[len(ENTITY_PREFIX):], True))
        elif (s_item, t_item) not in existing_lex:
            proposals.append((s_item, t_item, False))
    return proposals


def self_learn(state: AlignmentState, q: NeighborQuery,
               stop_fraction: float = 0.01,
               max_iterations: int = 50) -> AlignmentState:
    """Iterate Procrustes solve + mutual-NN proposal until convergence.

    Stops when an iteration proposes fewer entity pairs than
    stop_fraction * |source entities| or the iteration cap is reached.
    The pair set only grows; embeddings are never modified.
    """
    if not state.ent_pairs:
        raise ValueError("self-learning requires a non-empty entity seed set")
    threshold = stop_fraction * state.source.n_entities
    while state.iteration < max_iterations:
        x, y = state.pair_matrices()
        state.transform = procrustes_solve(x, y)
        proposals = propose_pairs(state, q)
        n_ent = 0
        for s, t, is_ent in proposals:
            if is_ent:
                state.ent_pairs.append((s, t))
                n_ent += 1
            else:
                state.lex_pairs.append((s, t))
        state.proposal_counts.append(n_ent)
        state.iteration += 1
        if n_ent < threshold:
            break
    return state


def solve_once(state: AlignmentState) -> AlignmentState:
    """Single Procrustes solve on the seed pairs, no proposal loop."""
    if not state.ent_pairs:
        raise ValueError("alignment requires a non-empty entity seed set")
    x, y = state.pair_matrices()
    state.transform = procrustes_solve(x, y)
    state.iteration += 1
    return state


def _entity_vectors(space: AlignmentSpace, ids: list[str]) -> np.ndarray:
    rows = []
    for e in ids:
        idx = space.index.get(ENTITY_PREFIX + e)
        if idx is None:
            raise KeyError(f"unknown entity id {e!r}")
        rows.append(idx)
    return space.vectors[np.array(rows, dtype=np.int64)]


def infer_batch(query_ids: list[str], state: AlignmentState,
                q: NeighborQuery, candidate_ids: list[str]) -> np.ndarray:
    """Score matrix (queries x candidates), higher is better.

    For CSLS, the target-side penalty of a candidate is computed against
    all mapped source entities; the query-side penalty against the
    candidate set.
    """
    qx = _entity_vectors(state.source, query_ids) @ state.transform.T
    cand = _entity_vectors(state.target, candidate_ids)
    if q.metric == "l2":
        return -np.linalg.norm(qx[:, None, :] - cand[None, :, :], axis=2)
    all_src = state.source.vectors[state.source.entity_mask] @ state.transform.T
    cos = cosine_matrix(qx, cand)
    r_query = _topk_mean(cos, q.csls_k, axis=1)
    cos_cand_src = cosine_matrix(cand, all_src)
    r_cand = _topk_mean(cos_cand_src, q.csls_k, axis=1)
    return 2.0 * cos - r_query[:, None] - r_cand[None, :]


def infer(query_id: str, state: AlignmentState, q: NeighborQuery,
          candidate_ids: list[str]) -> list[tuple[str, float]]:
    """Candidates ranked best-first; ties broken by candidate list order."""
    scores = infer_batch([query_id], state, q, candidate_ids)[0]
    order = np.lexsort((np.arange(len(candidate_ids)), -scores))
    return [(candidate_ids[i], float(scores[i])) for i in order]


# ---------------------------------------------------------------------------
# Persistence

def save_state(state: AlignmentState, path) -> None:
    payload = {
        "source": {
            "items": list(state.source.items),
            "vectors": state.source.vectors.tolist(),
        },
        "target": {
            "items": list(state.target.items),
            "vectors": state.target.vectors.tolist(),
        },
        "ent_pairs": [list(p) for p in state.ent_pairs],
        "lex_pairs": [list(p) for p in state.lex_pairs],
        "transform": (state.transform.tolist()
                      if state.transform is not None else None),
        "iteration": state.iteration,
        "proposal_counts": state.proposal_counts,
        "lexeme_top_f": state.lexeme_top_f,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, separators=(",", ":"))


def _space_from_payload(data) -> AlignmentSpace:
    items = tuple(data["items"])
    mask = np.array([t.startswith(ENTITY_PREFIX) for t in items])
    return AlignmentSpace(items=items, vectors=np.array(data["vectors"]),
                          entity_mask=mask)


def load_state(path) -> AlignmentState:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    return AlignmentState(
        source=_space_from_payload(data["source"]),
        target=_space_from_payload(data["target"]),
        ent_pairs=[tuple(p) for p in data["ent_pairs"]],
        lex_pairs=[tuple(p) for p in data["lex_pairs"]],
        transform=(np.array(data["transform"])
                   if data["transform"] is not None else None),
        iteration=data["iteration"],
        proposal_counts=list(data["proposal_counts"]),
        lexeme_top_f=data["lexeme_top_f"],
    )


def load_seed_pairs(path) -> list[tuple[str, str]]:
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ValueError(
                    f"{path}: line {lineno}: expected `source<TAB>target`")
            pairs.append((parts[0], parts[1]))
    return pairs
