"""Key relation selection from categorical relation frequency.

The frequency of relation r for entity e counts how many entities in
e's category have at least one triple under r. Every entity receives
exactly k key relations, ordered by descending frequency with ties
broken by ascending relation id.
"""

from __future__ import annotations

from dataclasses import dataclass

from .kgstore import TripleStore, Vocab


@dataclass
class KeyRelationTable:
    k: int
    rows: dict[int, tuple[int, ...]]

    def __contains__(self, entity_id: int) -> bool:
        return entity_id in self.rows

    def relations_for(self, entity_id: int) -> tuple[int, ...]:
        return self.rows[entity_id]


def relation_frequency(store: TripleStore, r: int, e: int) -> int:
    """Count category members of e that have any triple under relation r."""
    cat = store.category_of.get(e)
    if cat is None:
        raise ValueError(f"uncategorized entity {store.entities.token(e)!r}")
    heads_with_r = {h for h, rr, _ in store.triples if rr == r}
    return sum(1 for m, c in store.category_of.items() if c == cat and m in heads_with_r)


def select_key_relations(store: TripleStore, k: int, entities=None) -> KeyRelationTable:
    """Pick the k key relations for every categorized entity.

    Ranking is per category: frequency descending, relation id ascending
    on ties. Categories with fewer than k observed relations are padded
    with the globally most frequent relations not already chosen, so each
    list holds exactly k distinct ids. Requires k <= number of relations.
    """
    if k < 1:
        raise ValueError(f"k must be positive, got {k}")
    if k > store.n_relations:
        raise ValueError(f"k={k} exceeds relation count {store.n_relations}")

    # frequency = distinct category members having the relation
    pairs = {(h, r) for h, r, _ in store.triples}
    per_cat: dict[int, dict[int, int]] = {}
    for h, r in pairs:
        cat = store.category_of.get(h)
        if cat is not None:
            counts = per_cat.setdefault(cat, {})
            counts[r] = counts.get(r, 0) + 1

    global_order = sorted(store.relation_counts, key=lambda r: (-store.relation_counts[r], r))
    cat_lists: dict[int, tuple[int, ...]] = {}
    for cat in set(store.category_of.values()):
        counts = per_cat.get(cat, {})
        ranked = sorted(counts, key=lambda r: (-counts[r], r))[:k]
        if len(ranked) < k:
            seen = set(ranked)
            ranked += [r for r in global_order if r not in seen][: k - len(ranked)]
        cat_lists[cat] = tuple(ranked)

    if entities is None:
        entities = sorted(store.category_of)
    rows = {}
    for e in entities:
        cat = store.category_of.get(e)
        if cat is None:
            raise ValueError(f"uncategorized entity {store.entities.token(e)!r}")
        rows[e] = cat_lists[cat]
    return KeyRelationTable(k=k, rows=rows)


def write_keyrel_tsv(path, table: KeyRelationTable, entity_vocab: Vocab,
                     relation_vocab: Vocab) -> None:
    """Write one "entity<TAB>r1,...,rk" line per entity, entity id order."""
    with open(path, "w", encoding="utf-8") as fh:
        for e in sorted(table.rows):
            rels = ",".join(relation_vocab.token(r) for r in table.rows[e])
            fh.write(f"{entity_vocab.token(e)}\t{rels}\n")


def read_keyrel_tsv(path, entity_vocab: Vocab, relation_vocab: Vocab) -> KeyRelationTable:
    rows: dict[int, tuple[int, ...]] = {}
    k = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            try:
                entity, rels = line.split("\t")
            except ValueError:
                raise ValueError(f"{path}: line {lineno}: expected 2 TAB-separated fields")
            rel_ids = tuple(relation_vocab.id(tok) for tok in rels.split(","))
            if k is None:
                k = len(rel_ids)
            elif len(rel_ids) != k:
                raise ValueError(f"{path}: line {lineno}: expected {k} relations, got {len(rel_ids)}")
            rows[entity_vocab.id(entity)] = rel_ids
    if k is None:
        raise ValueError(f"{path}: empty key relation table")
    return KeyRelationTable(k=k, rows=rows)
