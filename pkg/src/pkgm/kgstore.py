"""Triple file ingestion, id interning, and the category index.

Triple files are UTF-8 text, one triple per line, fields separated by a
single TAB, no header. Lines starting with "#" are ignored. Category
membership is encoded as ordinary triples under a configurable relation
name (default "isA"), i.e. (entity, isA, category).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator


class Vocab:
    """Dense string-to-id interning, ids assigned in first-appearance order."""

    def __init__(self, tokens: Iterable[str] = ()):
        self._tokens: list[str] = []
        self._ids: dict[str, int] = {}
        for tok in tokens:
            self.add(tok)

    def add(self, token: str) -> int:
        """Intern token, returning its id (existing or newly assigned)."""
        idx = self._ids.get(token)
        if idx is None:
            idx = len(self._tokens)
            self._ids[token] = idx
            self._tokens.append(token)
        return idx

    def id(self, token: str) -> int:
        return self._ids[token]

    def token(self, idx: int) -> str:
        return self._tokens[idx]

    def __len__(self) -> int:
        return len(self._tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._ids

    def __iter__(self) -> Iterator[str]:
        return iter(self._tokens)

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocab) and self._tokens == other._tokens

    def write_tsv(self, path) -> None:
        """Write one "token<TAB>id" line per entry."""
        with open(path, "w", encoding="utf-8") as fh:
            for idx, tok in enumerate(self._tokens):
                fh.write(f"{tok}\t{idx}\n")

    @classmethod
    def read_tsv(cls, path) -> "Vocab":
        vocab = cls()
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.rstrip("\n")
                if not line:
                    continue
                tok, idx = line.split("\t")
                got = vocab.add(tok)
                if got != int(idx):
                    raise ValueError(f"vocab file {path} is not dense: {tok} -> {idx}")
        return vocab


@dataclass
class TripleStore:
    """Immutable view of an interned triple set.

    relation_counts holds occurrences among stored (deduplicated) triples.
    category_of maps entity id to category entity id and is derived only
    from triples under the configured category relation.
    """

    entities: Vocab
    relations: Vocab
    triples: list[tuple[int, int, int]]
    category_of: dict[int, int]
    relation_counts: dict[int, int]
    category_relation: str = "isA"
    min_relation_count: int = 1
    triple_set: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if not self.triple_set:
            self.triple_set = frozenset(self.triples)

    @property
    def n_entities(self) -> int:
        return len(self.entities)

    @property
    def n_relations(self) -> int:
        return len(self.relations)

    @property
    def category_relation_id(self) -> int | None:
        if self.category_relation in self.relations:
            return self.relations.id(self.category_relation)
        return None

    def token_triples(self) -> list[tuple[str, str, str]]:
        """Stored triples externalized back to tokens, in storage order."""
        ent, rel = self.entities.token, self.relations.token
        return [(ent(h), rel(r), ent(t)) for h, r, t in self.triples]


def store_from_triples(
    rows: Iterable[tuple[str, str, str]],
    category_relation: str = "isA",
    min_relation_count: int = 1,
) -> TripleStore:
    """Build a TripleStore from (head, relation, tail) token rows.

    Duplicate rows collapse to one triple. Entities with several category
    triples keep the lexicographically smallest category token; the paper
    setting assumes one category per entity, so this is only a tie-break.
    """
    unique = list(dict.fromkeys((h, r, t) for h, r, t in rows))
    if not unique:
        raise ValueError("no triples")

    entities = Vocab()
    relations = Vocab()
    triples: list[tuple[int, int, int]] = []
    categories: dict[int, str] = {}
    counts: dict[int, int] = {}
    for head, rel, tail in unique:
        h = entities.add(head)
        r = relations.add(rel)
        t = entities.add(tail)
        triples.append((h, r, t))
        counts[r] = counts.get(r, 0) + 1
        if rel == category_relation:
            prev = categories.get(h)
            if prev is None or tail < prev:
                categories[h] = tail

    category_of = {e: entities.id(tok) for e, tok in categories.items()}
    return TripleStore(
        entities=entities,
        relations=relations,
        triples=triples,
        category_of=category_of,
        relation_counts=counts,
        category_relation=category_relation,
        min_relation_count=min_relation_count,
    )


def load_triples(path, category_relation: str = "isA") -> TripleStore:
    """Parse a TAB-separated triple file into a TripleStore.

    Raises ValueError naming the line number for malformed lines and
    ValueError("no triples") when the file holds no data lines.
    """
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) != 3:
                raise ValueError(
                    f"{path}: line {lineno}: expected 3 TAB-separated fields, got {len(fields)}"
                )
            rows.append(tuple(fields))
    return store_from_triples(rows, category_relation=category_relation)


def filter_rare_relations(store: TripleStore, min_count: int) -> TripleStore:
    """Drop triples whose relation occurs fewer than min_count times.

    The category relation always survives because key-relation selection
    depends on it. Vocabularies are re-interned densely.
    """
    if min_count < 1:
        raise ValueError(f"min_count must be >= 1, got {min_count}")
    keep = []
    for head, rel, tail in store.token_triples():
        rid = store.relations.id(rel)
        if store.relation_counts[rid] >= min_count or rel == store.category_relation:
            keep.append((head, rel, tail))
    if not keep:
        raise ValueError("all relations filtered")
    return store_from_triples(
        keep,
        category_relation=store.category_relation,
        min_relation_count=min_count,
    )


def write_triples(path, rows: Iterable[tuple[str, str, str]]) -> None:
    """Write token triples in the TAB-separated file format."""
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for head, rel, tail in rows:
            fh.write(f"{head}\t{rel}\t{tail}\n")
