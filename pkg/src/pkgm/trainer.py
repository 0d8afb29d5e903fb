"""Margin-based training of the two scoring modules with negative sampling."""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .kgstore import TripleStore
from .model import ModelParams, init_params
from .optim import Adam


@dataclass
class TrainConfig:
    """Training hyperparameters. Defaults follow the reference setting
    (d=64, margin 1, lr 1e-4, batch 1000, 2 epochs, 1 negative)."""

    dim: int = 64
    margin: float = 1.0
    learning_rate: float = 1e-4
    batch_size: int = 1000
    epochs: int = 2
    negatives_per_positive: int = 1
    corrupt_relation_prob: float = 1.0 / 3.0
    seed: int = 0
    min_rel_count: int = 1

    def validate(self) -> None:
        if self.dim < 1:
            raise ValueError(f"dim must be positive, got {self.dim}")
        if self.margin <= 0:
            raise ValueError(f"margin must be positive, got {self.margin}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be positive, got {self.batch_size}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.negatives_per_positive < 1:
            raise ValueError(
                f"negatives_per_positive must be positive, got {self.negatives_per_positive}"
            )
        if not 0.0 <= self.corrupt_relation_prob <= 1.0:
            raise ValueError(
                f"corrupt_relation_prob must be in [0, 1], got {self.corrupt_relation_prob}"
            )


@dataclass
class TrainReport:
    epoch_losses: list[float] = field(default_factory=list)
    wall_time_s: float = 0.0
    checkpoint_path: str | None = None
    config: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return asdict(self)


def hinge_loss(pos_score: float, neg_score: float, margin: float) -> float:
    return max(0.0, pos_score + margin - neg_score)


def sample_negative(store: TripleStore, positive: tuple[int, int, int],
                    rng: np.random.Generator,
                    corrupt_relation_prob: float = 1.0 / 3.0) -> tuple[int, int, int]:
    """Corrupt exactly one slot of a positive triple.

    The relation slot is chosen with probability corrupt_relation_prob,
    otherwise head or tail with equal probability. Candidates that are
    stored positives are rejected and resampled, capped at 100 attempts;
    after the cap the last differing candidate is returned unfiltered.
    """
    h, r, t = positive
    n_e = store.n_entities
    n_r = store.n_relations
    fallback = None
    for _ in range(100):
        u = rng.random()
        if u < corrupt_relation_prob:
            slot, orig, size = 1, r, n_r
        elif u < corrupt_relation_prob + (1.0 - corrupt_relation_prob) / 2.0:
            slot, orig, size = 0, h, n_e
        else:
            slot, orig, size = 2, t, n_e
        if size < 2:
            # this slot cannot change; redraw the slot
            continue
        # draw uniformly over the size-1 values other than the original
        repl = int(rng.integers(size - 1))
        if repl >= orig:
            repl += 1
        cand = tuple(repl if i == slot else v for i, v in enumerate(positive))
        if cand in store.triple_set:
            fallback = cand
            continue
        return cand
    if fallback is not None:
        return fallback
    # degenerate vocab where random draws never produced a change
    for e in range(n_e):
        if e != t:
            return (h, r, e)
    for rr in range(n_r):
        if rr != r:
            return (h, rr, t)
    raise ValueError("store admits no corrupted triple")


def _batch_terms(params: ModelParams, hs, rs, ts):
    """Scores plus the intermediates the subgradients reuse."""
    h = params.entity_emb[hs]
    r = params.relation_emb[rs]
    m = params.transfer[rs]
    diff = h + r - params.entity_emb[ts]
    resid = np.einsum("bij,bj->bi", m, h) - r
    scores = np.abs(diff).sum(axis=1) + np.abs(resid).sum(axis=1)
    return scores, diff, resid, m, h


def _accumulate(grads, hs, rs, ts, diff, resid, m, h, weight) -> None:
    """Add weighted subgradients for a batch of triples into dense tables.

    weight is per-triple: positive for positives, negative for negatives,
    zero where the hinge is inactive.
    """
    s_t = np.sign(diff) * weight[:, None]
    s_r = np.sign(resid) * weight[:, None]
    np.add.at(grads["entity_emb"], hs, s_t + np.einsum("bji,bj->bi", m, s_r))
    np.add.at(grads["entity_emb"], ts, -s_t)
    np.add.at(grads["relation_emb"], rs, s_t - s_r)
    np.add.at(grads["transfer"], rs, np.einsum("bi,bj->bij", s_r, h))


def _project_entity_rows(entity_emb: np.ndarray) -> None:
    # keep entity rows inside the L2 unit ball to prevent norm inflation
    norms = np.linalg.norm(entity_emb, axis=1)
    over = norms > 1.0
    if over.any():
        entity_emb[over] /= norms[over, None]


def train(store: TripleStore, config: TrainConfig) -> tuple[ModelParams, TrainReport]:
    """Optimize model parameters on the stored triples.

    Each step accumulates hinge-loss subgradients over one batch (mean over
    positive/negative pairs), applies an Adam update to all three tables,
    and re-projects entity rows to L2 norm <= 1. Deterministic for a fixed
    (store, config) in this single-worker implementation.
    """
    config.validate()
    if not store.triples:
        raise ValueError("store has no triples")
    start = time.perf_counter()
    rng = np.random.default_rng(config.seed)
    params = init_params(store.n_entities, store.n_relations, config.dim, rng)
    adam = Adam(
        {
            "entity_emb": params.entity_emb,
            "relation_emb": params.relation_emb,
            "transfer": params.transfer,
        },
        lr=config.learning_rate,
    )
    triples = np.asarray(store.triples, dtype=np.int64)
    n = len(triples)
    neg_k = config.negatives_per_positive
    epoch_losses: list[float] = []

    for epoch in range(config.epochs):
        order = rng.permutation(n)
        loss_sum = 0.0
        pair_count = 0
        for step, lo in enumerate(range(0, n, config.batch_size)):
            pos = triples[order[lo:lo + config.batch_size]]
            neg_rows = [
                sample_negative(store, (int(p[0]), int(p[1]), int(p[2])), rng,
                                config.corrupt_relation_prob)
                for p in pos
                for _ in range(neg_k)
            ]
            neg = np.asarray(neg_rows, dtype=np.int64)
            pos_rep = np.repeat(pos, neg_k, axis=0)

            pos_s, pos_diff, pos_resid, pos_m, pos_h = _batch_terms(
                params, pos_rep[:, 0], pos_rep[:, 1], pos_rep[:, 2])
            neg_s, neg_diff, neg_resid, neg_m, neg_h = _batch_terms(
                params, neg[:, 0], neg[:, 1], neg[:, 2])
            losses = np.maximum(0.0, pos_s + config.margin - neg_s)
            if not np.isfinite(losses).all():
                raise RuntimeError(f"non-finite loss at epoch {epoch} step {step}")

            n_pairs = len(losses)
            weight = (losses > 0).astype(np.float32) / np.float32(n_pairs)
            grads = {
                "entity_emb": np.zeros_like(params.entity_emb),
                "relation_emb": np.zeros_like(params.relation_emb),
                "transfer": np.zeros_like(params.transfer),
            }
            _accumulate(grads, pos_rep[:, 0], pos_rep[:, 1], pos_rep[:, 2],
                        pos_diff, pos_resid, pos_m, pos_h, weight)
            _accumulate(grads, neg[:, 0], neg[:, 1], neg[:, 2],
                        neg_diff, neg_resid, neg_m, neg_h, -weight)
            adam.step(grads)
            _project_entity_rows(params.entity_emb)

            loss_sum += float(losses.sum())
            pair_count += n_pairs
        epoch_losses.append(loss_sum / pair_count)

    report = TrainReport(
        epoch_losses=epoch_losses,
        wall_time_s=time.perf_counter() - start,
        config=asdict(config),
    )
    return params, report
