"""Model parameters and the two score functions with analytic gradients.

The triple query module scores (h, r, t) as the L1 norm of h + r - t.
The relation query module scores (h, r) as the L1 norm of M_r h - r,
where M_r is the transfer matrix of relation r. The combined score is
their sum. Subgradients use the convention sign(0) = 0.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .kgstore import Vocab

CHECKPOINT_FORMAT_VERSION = 1
HEADER_FILE = "header.json"
ENTITY_BLOB = "entity_emb.f32"
RELATION_BLOB = "relation_emb.f32"
TRANSFER_BLOB = "transfer.f32"
ENTITY_VOCAB_FILE = "entities.tsv"
RELATION_VOCAB_FILE = "relations.tsv"


@dataclass
class ModelParams:
    """Learnable parameter tables.

    entity_emb is (n_entities, dim), relation_emb is (n_relations, dim),
    transfer is (n_relations, dim, dim).
    """

    dim: int
    entity_emb: np.ndarray
    relation_emb: np.ndarray
    transfer: np.ndarray

    @property
    def n_entities(self) -> int:
        return self.entity_emb.shape[0]

    @property
    def n_relations(self) -> int:
        return self.relation_emb.shape[0]


@dataclass
class TripleScore:
    value: float
    parts: tuple[float, float]


@dataclass
class Gradients:
    """Sparse gradient of the combined score for a single triple."""

    d_head: np.ndarray
    d_tail: np.ndarray
    d_relation: np.ndarray
    d_transfer: np.ndarray


def init_params(n_entities: int, n_relations: int, dim: int, rng: np.random.Generator,
                dtype=np.float32) -> ModelParams:
    """Initialize parameter tables.

    Entity and relation rows are drawn uniformly from [-6/sqrt(d), 6/sqrt(d)]
    and L2-normalized per row. Transfer matrices start at the identity plus
    uniform noise in [-0.01, 0.01] so relation existence begins near an
    identity transfer without symmetry lock.
    """
    bound = 6.0 / np.sqrt(dim)
    ent = rng.uniform(-bound, bound, size=(n_entities, dim)).astype(dtype)
    ent /= np.linalg.norm(ent, axis=1, keepdims=True)
    rel = rng.uniform(-bound, bound, size=(n_relations, dim)).astype(dtype)
    rel /= np.linalg.norm(rel, axis=1, keepdims=True)
    transfer = np.tile(np.eye(dim, dtype=dtype), (n_relations, 1, 1))
    transfer += rng.uniform(-0.01, 0.01, size=(n_relations, dim, dim)).astype(dtype)
    return ModelParams(dim=dim, entity_emb=ent, relation_emb=rel, transfer=transfer)


def _check_index(idx: int, size: int, kind: str) -> None:
    # negative ids would silently wrap under numpy indexing
    if not 0 <= idx < size:
        raise IndexError(f"{kind} id {idx} out of range [0, {size})")


def score_triple(params: ModelParams, h: int, r: int, t: int) -> float:
    _check_index(h, params.n_entities, "entity")
    _check_index(t, params.n_entities, "entity")
    _check_index(r, params.n_relations, "relation")
    diff = params.entity_emb[h] + params.relation_emb[r] - params.entity_emb[t]
    return float(np.abs(diff).sum())


def score_relation(params: ModelParams, h: int, r: int) -> float:
    _check_index(h, params.n_entities, "entity")
    _check_index(r, params.n_relations, "relation")
    resid = params.transfer[r] @ params.entity_emb[h] - params.relation_emb[r]
    return float(np.abs(resid).sum())


def score_combined(params: ModelParams, h: int, r: int, t: int) -> TripleScore:
    f_triple = score_triple(params, h, r, t)
    f_rel = score_relation(params, h, r)
    return TripleScore(value=f_triple + f_rel, parts=(f_triple, f_rel))


def gradients(params: ModelParams, h: int, r: int, t: int) -> Gradients:
    """Analytic subgradient of the combined score at one triple.

    d_head = sign(h + r - t) + M_r^T sign(M_r h - r)
    d_tail = -sign(h + r - t)
    d_relation = sign(h + r - t) - sign(M_r h - r)
    d_transfer = sign(M_r h - r) h^T
    """
    _check_index(h, params.n_entities, "entity")
    _check_index(t, params.n_entities, "entity")
    _check_index(r, params.n_relations, "relation")
    vh = params.entity_emb[h]
    vr = params.relation_emb[r]
    vt = params.entity_emb[t]
    m = params.transfer[r]
    s_triple = np.sign(vh + vr - vt)
    s_rel = np.sign(m @ vh - vr)
    return Gradients(
        d_head=s_triple + m.T @ s_rel,
        d_tail=-s_triple,
        d_relation=s_triple - s_rel,
        d_transfer=np.outer(s_rel, vh),
    )


def save_checkpoint(out_dir, params: ModelParams, entity_vocab: Vocab,
                    relation_vocab: Vocab) -> Path:
    """Write a checkpoint directory.

    Layout: header.json plus three little-endian float32 blobs (entity
    table, relation table, transfer tensor, all C order) and the two
    vocabulary TSV files. The round trip is bit-exact.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if len(entity_vocab) != params.n_entities or len(relation_vocab) != params.n_relations:
        raise ValueError("vocab sizes do not match parameter tables")
    header = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "dim": params.dim,
        "n_entities": params.n_entities,
        "n_relations": params.n_relations,
        "entity_vocab": ENTITY_VOCAB_FILE,
        "relation_vocab": RELATION_VOCAB_FILE,
        "blobs": {
            "entity_emb": ENTITY_BLOB,
            "relation_emb": RELATION_BLOB,
            "transfer": TRANSFER_BLOB,
        },
    }
    (out_dir / HEADER_FILE).write_text(json.dumps(header, indent=2) + "\n", encoding="utf-8")
    (out_dir / ENTITY_BLOB).write_bytes(np.ascontiguousarray(params.entity_emb, dtype="<f4").tobytes())
    (out_dir / RELATION_BLOB).write_bytes(np.ascontiguousarray(params.relation_emb, dtype="<f4").tobytes())
    (out_dir / TRANSFER_BLOB).write_bytes(np.ascontiguousarray(params.transfer, dtype="<f4").tobytes())
    entity_vocab.write_tsv(out_dir / ENTITY_VOCAB_FILE)
    relation_vocab.write_tsv(out_dir / RELATION_VOCAB_FILE)
    return out_dir


def load_checkpoint(ckpt_dir) -> tuple[ModelParams, Vocab, Vocab]:
    ckpt_dir = Path(ckpt_dir)
    header = json.loads((ckpt_dir / HEADER_FILE).read_text(encoding="utf-8"))
    if header["format_version"] != CHECKPOINT_FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format_version {header['format_version']}")
    dim = header["dim"]
    n_e = header["n_entities"]
    n_r = header["n_relations"]

    def blob(name, shape):
        raw = (ckpt_dir / header["blobs"][name]).read_bytes()
        arr = np.frombuffer(raw, dtype="<f4").reshape(shape)
        # frombuffer views are read-only; training needs writable copies
        return arr.astype(np.float32)

    params = ModelParams(
        dim=dim,
        entity_emb=blob("entity_emb", (n_e, dim)),
        relation_emb=blob("relation_emb", (n_r, dim)),
        transfer=blob("transfer", (n_r, dim, dim)),
    )
    entity_vocab = Vocab.read_tsv(ckpt_dir / header["entity_vocab"])
    relation_vocab = Vocab.read_tsv(ckpt_dir / header["relation_vocab"])
    if len(entity_vocab) != n_e or len(relation_vocab) != n_r:
        raise ValueError("vocab sizes do not match checkpoint header")
    return params, entity_vocab, relation_vocab
