"""Surface-form grounding: fuse a KG with a tokenized monolingual corpus.

Entity surface forms are inserted into a token-level prefix trie; the corpus
is scanned left-to-right and at each position the longest matching surface
form is collapsed into a single entity token.  No disambiguation is
attempted; ambiguous forms keep their first-inserted entity.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

from .kg import KnowledgeGraph

ENTITY_PREFIX = "@ent:"
RARE_TOKEN = "<unk>"


@dataclass(frozen=True)
class Token:
    """A grounded corpus token: an entity reference or a plain lexeme.

    Entity tokens keep the surface tokens they replaced so the original
    text can be reconstructed exactly.
    """

    entity: str | None
    text: str
    surface: tuple[str, ...] = ()

    @property
    def is_entity(self) -> bool:
        return self.entity is not None


def lexeme(text: str) -> Token:
    return Token(entity=None, text=text)


def entity_token(entity_id: str, surface: tuple[str, ...] = ()) -> Token:
    return Token(entity=entity_id, text=ENTITY_PREFIX + entity_id,
                 surface=surface)


class SurfaceFormIndex:
    """Prefix trie over normalized surface-form tokens.

    A full surface form maps to exactly one entity id; on collision the
    first inserted entity wins and the collision is counted.
    """

    _ENTRY = object()  # sentinel key holding the entity id at a terminal node

    def __init__(self, case_fold: bool = True):
        self.case_fold = case_fold
        self.root: dict = {}
        self.n_forms = 0
        self.collisions = 0
        self.skipped_unknown = 0

    def normalize(self, token: str) -> str:
        return token.lower() if self.case_fold else token

    def insert(self, surface_tokens: list[str], entity_id: str) -> bool:
        if not surface_tokens:
            raise ValueError("empty surface form")
        node = self.root
        for tok in surface_tokens:
            node = node.setdefault(self.normalize(tok), {})
        if self._ENTRY in node:
            self.collisions += 1
            return False
        node[self._ENTRY] = entity_id
        self.n_forms += 1
        return True

    def longest_match(self, tokens, start: int) -> tuple[str, int] | None:
        """Longest surface form matching tokens[start:]; (entity, length)."""
        node = self.root
        best = None
        i = start
        while i < len(tokens):
            child = node.get(self.normalize(tokens[i]))
            if child is None:
                break
            i += 1
            if self._ENTRY in child:
                best = (child[self._ENTRY], i - start)
            node = child
        return best


@dataclass
class GroundedCorpus:
    lang: str
    documents: list[list[Token]]
    lexicon: dict[str, int] = field(default_factory=dict)
    min_freq: int = 1

    def __post_init__(self):
        if not self.lexicon:
            self.lexicon = self._count_lexicon()

    def _count_lexicon(self) -> dict[str, int]:
        counts: Counter[str] = Counter()
        for doc in self.documents:
            for tok in doc:
                if not tok.is_entity:
                    counts[tok.text] += 1
        if self.min_freq > 1:
            kept: dict[str, int] = {}
            rare_total = 0
            for text, c in counts.items():
                if c >= self.min_freq:
                    kept[text] = c
                else:
                    rare_total += c
            if rare_total:
                kept[RARE_TOKEN] = kept.get(RARE_TOKEN, 0) + rare_total
            return kept
        return dict(counts)

    def lexeme_of(self, token: Token) -> str:
        """Vocabulary form of a lexeme token (rare lexemes fold to <unk>)."""
        if token.text in self.lexicon:
            return token.text
        return RARE_TOKEN

    def reconstruct(self, doc_idx: int) -> list[str]:
        """Original token sequence of a document, entity tokens expanded."""
        out: list[str] = []
        for tok in self.documents[doc_idx]:
            if tok.is_entity:
                out.extend(tok.surface)
            else:
                out.append(tok.text)
        return out


@dataclass(frozen=True)
class GroundingStats:
    coverage: float
    avg_match: float
    n_mentions: int


def build_index(forms_path, kg: KnowledgeGraph,
                case_fold: bool = True) -> SurfaceFormIndex:
    """Load `entity-id<TAB>surface form` lines into a trie.

    Unknown entity ids are skipped and counted; empty surface forms raise.
    """
    index = SurfaceFormIndex(case_fold=case_fold)
    with open(forms_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ValueError(
                    f"{forms_path}: line {lineno}: expected "
                    f"`entity-id<TAB>surface form`")
            ent, form = parts
            tokens = form.split()
            if not tokens:
                raise ValueError(
                    f"{forms_path}: line {lineno}: empty surface form")
            if ent not in kg.ent_index:
                index.skipped_unknown += 1
                continue
            index.insert(tokens, ent)
    return index


def ground_tokens(tokens: list[str], index: SurfaceFormIndex) -> list[Token]:
    """Greedy left-to-right longest-match grounding of one document."""
    out: list[Token] = []
    i = 0
    n = len(tokens)
    while i < n:
        match = index.longest_match(tokens, i)
        if match is None:
            out.append(lexeme(tokens[i]))
            i += 1
        else:
            ent, length = match
            out.append(entity_token(ent, tuple(tokens[i:i + length])))
            i += length
    return out


def grounding_stats(corpus: GroundedCorpus,
                    kg: KnowledgeGraph) -> GroundingStats:
    mentions: Counter[str] = Counter()
    for doc in corpus.documents:
        for tok in doc:
            if tok.is_entity:
                mentions[tok.entity] += 1
    covered = [e for e in kg.entities if mentions[e] > 0]
    coverage = len(covered) / kg.n_entities if kg.n_entities else 0.0
    avg = (sum(mentions[e] for e in covered) / len(covered)
           if covered else 0.0)
    return GroundingStats(coverage=coverage, avg_match=avg,
                          n_mentions=sum(mentions.values()))


def ground_corpus(corpus_path, index: SurfaceFormIndex, kg: KnowledgeGraph,
                  min_freq: int = 5) -> tuple[GroundedCorpus, GroundingStats]:
    """Ground a pre-tokenized corpus file (one document per line)."""
    docs: list[list[Token]] = []
    with open(corpus_path, encoding="utf-8") as fh:
        for line in fh:
            docs.append(ground_tokens(line.split(), index))
    corpus = GroundedCorpus(lang=kg.lang, documents=docs, min_freq=min_freq)
    return corpus, grounding_stats(corpus, kg)


def load_pregrounded(corpus_path, kg: KnowledgeGraph,
                     min_freq: int = 5) -> GroundedCorpus:
    """Read an externally grounded corpus (`@ent:<id>` entity markers).

    Markers with unknown ids are demoted to plain lexemes, with a count
    kept on the returned corpus' `demoted` attribute.
    """
    docs: list[list[Token]] = []
    demoted = 0
    with open(corpus_path, encoding="utf-8") as fh:
        for line in fh:
            doc: list[Token] = []
            for raw in line.split():
                if raw.startswith(ENTITY_PREFIX):
                    ent = raw[len(ENTITY_PREFIX):]
                    if not ent:
                        raise ValueError(f"malformed entity marker: {raw!r}")
                    if ent in kg.ent_index:
                        doc.append(entity_token(ent, (raw,)))
                    else:
                        demoted += 1
                        doc.append(lexeme(raw))
                else:
                    doc.append(lexeme(raw))
            docs.append(doc)
    corpus = GroundedCorpus(lang=kg.lang, documents=docs, min_freq=min_freq)
    corpus.demoted = demoted
    return corpus


def write_grounded(corpus: GroundedCorpus, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for doc in corpus.documents:
            fh.write(" ".join(tok.text for tok in doc))
            fh.write("\n")
