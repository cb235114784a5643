"""Joint KG + text embedding learning for one language.

Entities are encoded by an n-layer GCN over the normalized adjacency and
scored with a translational loss; text tokens are trained with a sampled
softmax skip-gram over negative L2 distance.  Entity mentions in the
corpus resolve to the GCN output rows, so both losses share one storage
location per entity.  All gradients are computed analytically in numpy and
applied with AMSGrad.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import OptimizerConfig
from .grounding import ENTITY_PREFIX, GroundedCorpus, Token
from .kg import GraphStructure, KnowledgeGraph, RelationStats, relation_stats

EPS = 1e-12


class TrainingDivergence(RuntimeError):
    """Raised when a loss or parameter becomes non-finite."""


def xavier_uniform(rng: np.random.Generator, n_rows: int, n_cols: int,
                   fan_in: int | None = None,
                   fan_out: int | None = None) -> np.ndarray:
    fan_in = n_rows if fan_in is None else fan_in
    fan_out = n_cols if fan_out is None else fan_out
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(n_rows, n_cols))


_ACT = {
    "relu": (lambda z: np.maximum(z, 0.0), lambda z: (z > 0).astype(float)),
    "identity": (lambda z: z, lambda z: np.ones_like(z)),
    "tanh": (lambda z: np.tanh(z), lambda z: 1.0 - np.tanh(z) ** 2),
}


@dataclass
class EmbeddingSpace:
    """Trainable tables for one language's entities, relations and lexemes.

    `lexemes` is ordered by descending corpus frequency so downstream
    consumers can apply a top-F frequency cutoff by row index.
    """

    lang: str
    dim: int
    entities: tuple[str, ...]
    relations: tuple[str, ...]
    lexemes: tuple[str, ...]
    lexeme_freqs: tuple[int, ...]
    ent0: np.ndarray
    rel: np.ndarray
    lex: np.ndarray
    gcn_weights: list[np.ndarray]
    gcn_enabled: bool = True
    activation: str = "relu"
    ent_out: np.ndarray | None = None
    ent_index: dict[str, int] = field(default_factory=dict)
    lex_index: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if not self.ent_index:
            self.ent_index = {e: i for i, e in enumerate(self.entities)}
        if not self.lex_index:
            self.lex_index = {w: i for i, w in enumerate(self.lexemes)}

    @property
    def n_entities(self) -> int:
        return len(self.entities)

    @property
    def n_lexemes(self) -> int:
        return len(self.lexemes)

    @property
    def n_tokens(self) -> int:
        return self.n_entities + self.n_lexemes

    def token_index(self, token: Token, corpus: GroundedCorpus) -> int:
        """Unified index: entities first, then lexemes."""
        if token.is_entity:
            return self.ent_index[token.entity]
        return self.n_entities + self.lex_index[corpus.lexeme_of(token)]

    def parameters(self) -> dict[str, np.ndarray]:
        params = {"ent0": self.ent0, "rel": self.rel, "lex": self.lex}
        for i, w in enumerate(self.gcn_weights):
            params[f"gcn_{i}"] = w
        return params

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in self.parameters().values())


def init_space(kg: KnowledgeGraph, corpus: GroundedCorpus,
               cfg: OptimizerConfig, rng: np.random.Generator) -> EmbeddingSpace:
    """Xavier-initialized embedding space for one language."""
    k = cfg.dim
    items = list(corpus.lexicon.items())
    order = sorted(range(len(items)), key=lambda i: (-items[i][1], i))
    lexemes = tuple(items[i][0] for i in order)
    freqs = tuple(items[i][1] for i in order)
    ent0 = xavier_uniform(rng, kg.n_entities, k, fan_in=k, fan_out=k)
    rel = xavier_uniform(rng, kg.n_relations, k, fan_in=k, fan_out=k)
    lex = xavier_uniform(rng, len(lexemes), k, fan_in=k, fan_out=k)
    n_layers = cfg.gcn_layers if cfg.gcn_enabled else 0
    gcn = [xavier_uniform(rng, k, k) for _ in range(n_layers)]
    return EmbeddingSpace(
        lang=kg.lang, dim=k, entities=kg.entities, relations=kg.relations,
        lexemes=lexemes, lexeme_freqs=freqs, ent0=ent0, rel=rel, lex=lex,
        gcn_weights=gcn, gcn_enabled=cfg.gcn_enabled,
        activation=cfg.activation)


# ---------------------------------------------------------------------------
# GCN forward/backward

def _gcn_forward_cached(space: EmbeddingSpace, graph: GraphStructure):
    """Returns (entity output, cache for backward)."""
    act, _ = _ACT[space.activation]
    e = space.ent0
    cache = []
    for w in space.gcn_weights:
        agg = graph.norm_adjacency @ e
        z = agg @ w
        cache.append((agg, z))
        e = act(z)
    return e, cache


def gcn_forward(space: EmbeddingSpace, graph: GraphStructure) -> np.ndarray:
    """n-layer propagation E^(l) = phi(N E^(l-1) M^(l-1)); returns E^(n)."""
    return _gcn_forward_cached(space, graph)[0]


def _gcn_backward(space: EmbeddingSpace, graph: GraphStructure, cache,
                  d_out: np.ndarray):
    """Backprop d_out through the cached forward; returns (d_ent0, d_weights)."""
    _, dact = _ACT[space.activation]
    d_weights = [None] * len(space.gcn_weights)
    de = d_out
    for layer in range(len(space.gcn_weights) - 1, -1, -1):
        agg, z = cache[layer]
        dz = de * dact(z)
        d_weights[layer] = agg.T @ dz
        # norm adjacency is symmetric, so its transpose is itself
        de = graph.norm_adjacency @ (dz @ space.gcn_weights[layer].T)
    return de, d_weights


def entity_output(space: EmbeddingSpace,
                  graph: GraphStructure | None) -> np.ndarray:
    if space.gcn_enabled:
        if graph is None:
            raise ValueError("graph structure required when GCN is enabled")
        return gcn_forward(space, graph)
    return space.ent0


# ---------------------------------------------------------------------------
# Losses

def triple_score(h_vec: np.ndarray, r_vec: np.ndarray,
                 t_vec: np.ndarray) -> float:
    """Translational plausibility ||h + r - t||; lower is more plausible."""
    return float(np.linalg.norm(h_vec + r_vec - t_vec))


@dataclass(frozen=True)
class KGBatch:
    positives: np.ndarray      # (B, 3) int (h, r, t)
    neg_heads: np.ndarray      # (B, m) int
    neg_tails: np.ndarray      # (B, m) int


@dataclass(frozen=True)
class TextBatch:
    centers: np.ndarray        # (B,) unified token index
    contexts: np.ndarray       # (B,)
    negatives: np.ndarray      # (B, m)


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def kg_loss(batch: KGBatch, space: EmbeddingSpace,
            graph: GraphStructure | None, bias: float):
    """Sampled-softmax translational loss and analytic gradients.

    Per positive triple: -log softmax of (b - f) over the positive and its
    negatives, averaged over the batch.  The positive term is included in
    the denominator so the loss is bounded and strictly positive.
    """
    cache = None
    if space.gcn_enabled:
        ent, cache = _gcn_forward_cached(space, graph)
    else:
        ent = space.ent0

    h, r, t = batch.positives[:, 0], batch.positives[:, 1], batch.positives[:, 2]
    bsz, m = batch.neg_heads.shape

    diff_pos = ent[h] + space.rel[r] - ent[t]               # (B, k)
    f_pos = np.linalg.norm(diff_pos, axis=1)
    diff_neg = (ent[batch.neg_heads] + space.rel[r][:, None, :]
                - ent[batch.neg_tails])                      # (B, m, k)
    f_neg = np.linalg.norm(diff_neg, axis=2)

    logits = bias - np.concatenate([f_pos[:, None], f_neg], axis=1)
    probs = _softmax_rows(logits)
    loss = float(-np.mean(np.log(probs[:, 0] + EPS)))

    # dL/df_j = (1[j=0] - p_j) / B
    coef = -probs / bsz
    coef[:, 0] += 1.0 / bsz

    u_pos = diff_pos / np.maximum(f_pos, EPS)[:, None]
    u_neg = diff_neg / np.maximum(f_neg, EPS)[:, :, None]

    d_ent = np.zeros_like(ent)
    d_rel = np.zeros_like(space.rel)

    g_pos = coef[:, 0:1] * u_pos
    np.add.at(d_ent, h, g_pos)
    np.add.at(d_ent, t, -g_pos)
    np.add.at(d_rel, r, g_pos)

    g_neg = coef[:, 1:, None] * u_neg
    np.add.at(d_ent, batch.neg_heads, g_neg)
    np.add.at(d_ent, batch.neg_tails, -g_neg)
    np.add.at(d_rel, r, g_neg.sum(axis=1))

    grads = {"rel": d_rel}
    if space.gcn_enabled:
        d_ent0, d_weights = _gcn_backward(space, graph, cache, d_ent)
        grads["ent0"] = d_ent0
        for i, dw in enumerate(d_weights):
            grads[f"gcn_{i}"] = dw
    else:
        grads["ent0"] = d_ent
    return loss, grads


def text_loss(batch: TextBatch, space: EmbeddingSpace,
              graph: GraphStructure | None):
    """Skip-gram sampled softmax over negative L2 distance.

    The logit for a (center, candidate) pair is -||v_center - v_cand||, so
    co-occurring tokens are pulled together.  Entity tokens resolve to GCN
    outputs; gradients on them flow back into the base table and weights.
    """
    cache = None
    if space.gcn_enabled:
        ent, cache = _gcn_forward_cached(space, graph)
    else:
        ent = space.ent0
    n_ent = space.n_entities

    def gather(idx):
        idx = np.asarray(idx)
        out = np.empty(idx.shape + (space.dim,))
        ent_mask = idx < n_ent
        out[ent_mask] = ent[idx[ent_mask]]
        out[~ent_mask] = space.lex[idx[~ent_mask] - n_ent]
        return out

    vx = gather(batch.centers)                 # (B, k)
    vc = gather(batch.contexts)                # (B, k)
    vn = gather(batch.negatives)               # (B, m, k)
    bsz = len(batch.centers)

    diff_pos = vx - vc
    d_pos = np.linalg.norm(diff_pos, axis=1)
    diff_neg = vx[:, None, :] - vn
    d_neg = np.linalg.norm(diff_neg, axis=2)

    logits = -np.concatenate([d_pos[:, None], d_neg], axis=1)
    probs = _softmax_rows(logits)
    loss = float(-np.mean(np.log(probs[:, 0] + EPS)))

    # dL/dd_j = (1[j=0] - p_j) / B
    coef = -probs / bsz
    coef[:, 0] += 1.0 / bsz

    u_pos = diff_pos / np.maximum(d_pos, EPS)[:, None]
    u_neg = diff_neg / np.maximum(d_neg, EPS)[:, :, None]

    g_pos = coef[:, 0:1] * u_pos               # d/dvx from positive term
    g_neg = coef[:, 1:, None] * u_neg

    d_ent = np.zeros_like(ent)
    d_lex = np.zeros_like(space.lex)

    def scatter(idx, grad):
        idx = np.asarray(idx)
        ent_mask = idx < n_ent
        if ent_mask.any():
            np.add.at(d_ent, idx[ent_mask], grad[ent_mask])
        if (~ent_mask).any():
            np.add.at(d_lex, idx[~ent_mask] - n_ent, grad[~ent_mask])

    scatter(batch.centers, g_pos + g_neg.sum(axis=1))
    scatter(batch.contexts, -g_pos)
    scatter(batch.negatives.ravel(),
            (-g_neg).reshape(-1, space.dim))

    grads = {"lex": d_lex}
    if space.gcn_enabled:
        d_ent0, d_weights = _gcn_backward(space, graph, cache, d_ent)
        grads["ent0"] = d_ent0
        for i, dw in enumerate(d_weights):
            grads[f"gcn_{i}"] = dw
    else:
        grads["ent0"] = d_ent
    return loss, grads


# ---------------------------------------------------------------------------
# Batch construction

def negative_triples(triple: tuple[int, int, int], stats: RelationStats,
                     kg: KnowledgeGraph, count: int,
                     rng: np.random.Generator,
                     triple_set: set | None = None) -> list[tuple[int, int, int]]:
    """Bernoulli-corrupted negatives: corrupt the head with probability
    tph/(tph+hpt), else the tail; resample corruptions that exist in the KG.
    """
    if kg.n_entities < 2:
        raise ValueError("need at least 2 entities to corrupt a triple")
    triple_set = triple_set if triple_set is not None else kg.triple_set()
    h, r, t = triple
    p_head = stats.head_corruption_prob(r)
    out = []
    for _ in range(count):
        corrupt_head = rng.random() < p_head
        attempts = 0
        while True:
            cand = int(rng.integers(kg.n_entities))
            corrupted = (cand, r, t) if corrupt_head else (h, r, cand)
            if corrupted not in triple_set:
                out.append(corrupted)
                break
            attempts += 1
            if attempts > 10 * kg.n_entities:
                # side is saturated for this triple; corrupt the other one
                corrupt_head = not corrupt_head
                attempts = 0
    return out


def _kg_batch(pos: np.ndarray, stats: RelationStats, triple_set: set,
              n_entities: int, count: int, rng: np.random.Generator) -> KGBatch:
    bsz = len(pos)
    coins = rng.random((bsz, count))
    cands = rng.integers(n_entities, size=(bsz, count))
    neg_h = np.repeat(pos[:, 0:1], count, axis=1)
    neg_t = np.repeat(pos[:, 2:3], count, axis=1)
    p_head = stats.head_corruption_prob(pos[:, 1])
    head_side = coins < p_head[:, None]
    neg_h[head_side] = cands[head_side]
    neg_t[~head_side] = cands[~head_side]
    # resample the (rare) corruptions that collide with observed triples
    for i in range(bsz):
        r = int(pos[i, 1])
        for j in range(count):
            while (int(neg_h[i, j]), r, int(neg_t[i, j])) in triple_set:
                cand = int(rng.integers(n_entities))
                if head_side[i, j]:
                    neg_h[i, j] = cand
                else:
                    neg_t[i, j] = cand
    return KGBatch(positives=pos, neg_heads=neg_h, neg_tails=neg_t)


def context_pairs(corpus: GroundedCorpus, radius: int):
    """Yield (center, context) token pairs within `radius` per document."""
    if radius < 1:
        raise ValueError("radius must be >= 1")
    for doc in corpus.documents:
        n = len(doc)
        for i in range(n):
            for j in range(max(0, i - radius), min(n, i + radius + 1)):
                if j != i:
                    yield doc[i], doc[j]


def _pair_array(docs_idx: list[np.ndarray], radius: int) -> np.ndarray:
    """All (center, context) unified-index pairs as an (N, 2) int array."""
    chunks = []
    for idx in docs_idx:
        n = len(idx)
        for off in range(1, radius + 1):
            if n <= off:
                continue
            left, right = idx[:-off], idx[off:]
            chunks.append(np.stack([left, right], axis=1))
            chunks.append(np.stack([right, left], axis=1))
    if not chunks:
        return np.empty((0, 2), dtype=np.int64)
    return np.concatenate(chunks, axis=0)


def encode_corpus(corpus: GroundedCorpus,
                  space: EmbeddingSpace) -> list[np.ndarray]:
    docs = []
    for doc in corpus.documents:
        docs.append(np.array([space.token_index(tok, corpus) for tok in doc],
                             dtype=np.int64))
    return docs


# ---------------------------------------------------------------------------
# Optimizer

class AMSGrad:
    """AMSGrad: Adam with a non-decreasing second-moment estimate."""

    def __init__(self, params: dict[str, np.ndarray], lr: float,
                 beta1: float, beta2: float, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.v_hat = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads: dict[str, np.ndarray]) -> None:
        for name, g in grads.items():
            p = self.params[name]
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            np.maximum(self.v_hat[name], v, out=self.v_hat[name])
            p -= self.lr * m / (np.sqrt(self.v_hat[name]) + self.eps)


# ---------------------------------------------------------------------------
# Training loop

@dataclass
class TrainHistory:
    kg_steps: int = 0
    text_steps: int = 0
    epoch_kg_loss: list[float] = field(default_factory=list)
    epoch_text_loss: list[float] = field(default_factory=list)

    @property
    def epoch_total_loss(self) -> list[float]:
        kg = self.epoch_kg_loss or [0.0] * len(self.epoch_text_loss)
        tx = self.epoch_text_loss or [0.0] * len(self.epoch_kg_loss)
        return [a + b for a, b in zip(kg, tx)]


def train_with_history(kg: KnowledgeGraph, corpus: GroundedCorpus,
                       cfg: OptimizerConfig, seed: int,
                       graph: GraphStructure | None = None
                       ) -> tuple[EmbeddingSpace, TrainHistory]:
    """Alternating KG/text AMSGrad training; deterministic under a fixed seed."""
    from .kg import build_graph_structure

    rng = np.random.default_rng(seed)
    space = init_space(kg, corpus, cfg, rng)
    if graph is None and cfg.gcn_enabled:
        graph = build_graph_structure(kg)
    stats = relation_stats(kg)
    triple_set = kg.triple_set()
    triples = np.array(kg.triples, dtype=np.int64)

    docs_idx = encode_corpus(corpus, space)
    pairs = _pair_array(docs_idx, cfg.context_radius)
    use_text = cfg.use_text_loss and len(pairs) > 0
    use_kg = cfg.use_kg_loss and len(triples) > 0

    if cfg.unigram_power_sampling:
        counts = np.zeros(space.n_tokens)
        for idx in docs_idx:
            np.add.at(counts, idx, 1.0)
        weights = np.power(np.maximum(counts, 1.0), 0.75)
        token_probs = weights / weights.sum()
    else:
        token_probs = None

    opt = AMSGrad(space.parameters(), cfg.lr, cfg.beta1, cfg.beta2)
    history = TrainHistory()

    n_batches = max(1, int(np.ceil(len(triples) / cfg.batch_size))) \
        if use_kg else max(1, int(np.ceil(len(pairs) / cfg.batch_size)))
    pair_perm = rng.permutation(len(pairs)) if use_text else None
    pair_pos = 0

    def next_text_batch() -> TextBatch:
        nonlocal pair_perm, pair_pos
        if pair_pos + cfg.batch_size > len(pairs):
            pair_perm = rng.permutation(len(pairs))
            pair_pos = 0
        sel = pairs[pair_perm[pair_pos:pair_pos + cfg.batch_size]]
        pair_pos += cfg.batch_size
        if token_probs is None:
            negs = rng.integers(space.n_tokens,
                                size=(len(sel), cfg.neg_samples))
        else:
            negs = rng.choice(space.n_tokens,
                              size=(len(sel), cfg.neg_samples), p=token_probs)
        return TextBatch(centers=sel[:, 0], contexts=sel[:, 1], negatives=negs)

    for _ in range(cfg.epochs):
        kg_losses, text_losses = [], []
        order = rng.permutation(len(triples)) if use_kg else None
        for b in range(n_batches):
            if use_kg:
                sel = triples[order[b * cfg.batch_size:
                                    (b + 1) * cfg.batch_size]]
                batch = _kg_batch(sel, stats, triple_set, kg.n_entities,
                                  cfg.neg_samples, rng)
                loss, grads = kg_loss(batch, space, graph, cfg.bias_b)
                if not np.isfinite(loss):
                    raise TrainingDivergence(
                        f"non-finite KG loss at epoch {len(history.epoch_kg_loss)}")
                opt.step(grads)
                history.kg_steps += 1
                kg_losses.append(loss)
            if use_text:
                batch = next_text_batch()
                loss, grads = text_loss(batch, space, graph)
                if not np.isfinite(loss):
                    raise TrainingDivergence(
                        f"non-finite text loss at epoch {len(history.epoch_text_loss)}")
                opt.step(grads)
                history.text_steps += 1
                text_losses.append(loss)
        if kg_losses:
            history.epoch_kg_loss.append(float(np.mean(kg_losses)))
        if text_losses:
            history.epoch_text_loss.append(float(np.mean(text_losses)))

    if not space.all_finite():
        raise TrainingDivergence("non-finite parameters after training")
    space.ent_out = entity_output(space, graph)
    return space, history


def train(kg: KnowledgeGraph, corpus: GroundedCorpus, cfg: OptimizerConfig,
          seed: int) -> EmbeddingSpace:
    return train_with_history(kg, corpus, cfg, seed)[0]


# ---------------------------------------------------------------------------
# Serialization

def _format_row(vec: np.ndarray) -> str:
    return " ".join(repr(float(x)) for x in vec)


def write_embeddings(space: EmbeddingSpace, prefix) -> None:
    """Write `<prefix>.vec` (entities then frequency-ordered lexemes) and
    `<prefix>.rel.vec`, both in word2vec text format."""
    ent = space.ent_out if space.ent_out is not None else space.ent0
    with open(f"{prefix}.vec", "w", encoding="utf-8") as fh:
        fh.write(f"{space.n_tokens} {space.dim}\n")
        for i, e in enumerate(space.entities):
            fh.write(f"{ENTITY_PREFIX}{e} {_format_row(ent[i])}\n")
        for i, w in enumerate(space.lexemes):
            fh.write(f"{w} {_format_row(space.lex[i])}\n")
    with open(f"{prefix}.rel.vec", "w", encoding="utf-8") as fh:
        fh.write(f"{len(space.relations)} {space.dim}\n")
        for i, r in enumerate(space.relations):
            fh.write(f"{r} {_format_row(space.rel[i])}\n")


def read_embeddings(path) -> tuple[list[str], np.ndarray]:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        count, dim = int(header[0]), int(header[1])
        tokens, rows = [], []
        for line in fh:
            parts = line.rstrip("\n").split(" ")
            tokens.append(parts[0])
            rows.append([float(x) for x in parts[1:]])
    if len(tokens) != count or any(len(r) != dim for r in rows):
        raise ValueError(f"{path}: inconsistent embedding file")
    return tokens, np.array(rows)
