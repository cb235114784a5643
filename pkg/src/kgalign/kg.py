"""Language-specific knowledge graph data model.

A KG is a pair of ordered vocabularies (entities, relations) plus a set of
index triples.  The GCN consumes a symmetric, relation-blind view of the
graph with self-loops and symmetric degree normalization; negative sampling
consumes per-relation head/tail statistics.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp


class KGFormatError(ValueError):
    """Raised for malformed triples files."""


@dataclass(frozen=True)
class KnowledgeGraph:
    lang: str
    entities: tuple[str, ...]
    relations: tuple[str, ...]
    triples: tuple[tuple[int, int, int], ...]
    duplicate_count: int = 0
    ent_index: dict[str, int] = field(default_factory=dict, compare=False)
    rel_index: dict[str, int] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        n_ent, n_rel = len(self.entities), len(self.relations)
        for h, r, t in self.triples:
            if not (0 <= h < n_ent and 0 <= t < n_ent and 0 <= r < n_rel):
                raise ValueError(f"triple index out of range: {(h, r, t)}")
        if not self.ent_index:
            object.__setattr__(self, "ent_index",
                               {e: i for i, e in enumerate(self.entities)})
        if not self.rel_index:
            object.__setattr__(self, "rel_index",
                               {r: i for i, r in enumerate(self.relations)})

    @property
    def n_entities(self) -> int:
        return len(self.entities)

    @property
    def n_relations(self) -> int:
        return len(self.relations)

    def triple_set(self) -> set[tuple[int, int, int]]:
        return set(self.triples)


@dataclass(frozen=True)
class GraphStructure:
    """Self-looped symmetric adjacency and its normalized form.

    norm_adjacency = D^{-1/2} (A + I) D^{-1/2} with D the degree matrix of
    A + I itself, so every entry is finite even for isolated entities.
    """

    adjacency: sp.csr_matrix
    self_looped: sp.csr_matrix
    degrees: np.ndarray
    norm_adjacency: sp.csr_matrix


def from_string_triples(string_triples, lang: str,
                        duplicate_count: int = 0) -> KnowledgeGraph:
    """Build a KnowledgeGraph from (head, relation, tail) id strings.

    Vocabulary indices follow first appearance; duplicate triples collapse.
    """
    ents: dict[str, int] = {}
    rels: dict[str, int] = {}
    seen: set[tuple[int, int, int]] = set()
    triples: list[tuple[int, int, int]] = []
    dups = duplicate_count
    for h, r, t in string_triples:
        hi = ents.setdefault(h, len(ents))
        ri = rels.setdefault(r, len(rels))
        ti = ents.setdefault(t, len(ents))
        key = (hi, ri, ti)
        if key in seen:
            dups += 1
            continue
        seen.add(key)
        triples.append(key)
    return KnowledgeGraph(
        lang=lang,
        entities=tuple(ents),
        relations=tuple(rels),
        triples=tuple(triples),
        duplicate_count=dups,
        ent_index=ents,
        rel_index=rels,
    )


def load_kg(path, lang: str) -> KnowledgeGraph:
    """Load a KG from a UTF-8 TSV file, one `head<TAB>rel<TAB>tail` per line."""
    raw: list[tuple[str, str, str]] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3 or not all(parts):
                raise KGFormatError(
                    f"{path}: line {lineno}: expected 3 non-empty "
                    f"tab-separated fields, got {len(parts)}")
            raw.append((parts[0], parts[1], parts[2]))
    if not raw:
        raise KGFormatError(f"{path}: empty triples file")
    return from_string_triples(raw, lang)


def build_graph_structure(kg: KnowledgeGraph) -> GraphStructure:
    """Symmetric 0/1 adjacency over entities, relation types discarded."""
    n = kg.n_entities
    rows, cols = [], []
    for h, _, t in kg.triples:
        if h == t:
            continue
        rows.extend((h, t))
        cols.extend((t, h))
    data = np.ones(len(rows), dtype=np.float64)
    adj = sp.csr_matrix((data, (rows, cols)), shape=(n, n))
    adj.data[:] = 1.0  # multiple relations between a pair still yield 1
    adj.sum_duplicates()
    adj.data[:] = 1.0
    looped = (adj + sp.identity(n, format="csr", dtype=np.float64)).tocsr()
    degrees = np.asarray(looped.sum(axis=1)).ravel()
    inv_sqrt = 1.0 / np.sqrt(degrees)
    d_half = sp.diags(inv_sqrt)
    norm = (d_half @ looped @ d_half).tocsr()
    return GraphStructure(adjacency=adj, self_looped=looped,
                          degrees=degrees, norm_adjacency=norm)


@dataclass(frozen=True)
class RelationStats:
    """Per-relation mean tails-per-head and heads-per-tail."""

    tph: np.ndarray
    hpt: np.ndarray

    def head_corruption_prob(self, relation: int) -> float:
        tph = self.tph[relation]
        hpt = self.hpt[relation]
        return tph / (tph + hpt)


def relation_stats(kg: KnowledgeGraph) -> RelationStats:
    tails_per_head: list[dict[int, set[int]]] = [
        {} for _ in range(kg.n_relations)]
    heads_per_tail: list[dict[int, set[int]]] = [
        {} for _ in range(kg.n_relations)]
    for h, r, t in kg.triples:
        tails_per_head[r].setdefault(h, set()).add(t)
        heads_per_tail[r].setdefault(t, set()).add(h)
    tph = np.ones(kg.n_relations)
    hpt = np.ones(kg.n_relations)
    for r in range(kg.n_relations):
        if tails_per_head[r]:
            tph[r] = np.mean([len(ts) for ts in tails_per_head[r].values()])
            hpt[r] = np.mean([len(hs) for hs in heads_per_tail[r].values()])
    return RelationStats(tph=tph, hpt=hpt)
