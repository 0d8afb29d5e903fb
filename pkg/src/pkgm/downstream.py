"""Downstream recommender integrating frozen service vectors.

The recommender is a GMF + MLP model over implicit feedback, trained
with binary cross-entropy against sampled negatives. Service vectors
enter only the MLP tower input, concatenated after the user and item
embeddings, and receive no gradient. Evaluation is leave-one-out: the
latest interaction per user is ranked against sampled unobserved items.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from .evaluation import EvalReport
from .kgstore import Vocab
from .optim import Adam
from .servicing import ServiceBundle, condense_single


@dataclass
class InteractionSet:
    """Implicit-feedback interactions, score 1 each, with an order index."""

    users: Vocab
    items: Vocab
    interactions: list[tuple[int, int, int]]

    @property
    def n_users(self) -> int:
        return len(self.users)

    @property
    def n_items(self) -> int:
        return len(self.items)


def interactions_from_rows(rows: Iterable[tuple[str, str, int]]) -> InteractionSet:
    users = Vocab()
    items = Vocab()
    interactions = [(users.add(u), items.add(i), int(o)) for u, i, o in rows]
    if not interactions:
        raise ValueError("no interactions")
    return InteractionSet(users=users, items=items, interactions=interactions)


def load_interactions(path) -> InteractionSet:
    """Parse "user<TAB>item<TAB>order_index" lines."""
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
            try:
                order = int(fields[2])
            except ValueError:
                raise ValueError(f"{path}: line {lineno}: order index must be an integer")
            rows.append((fields[0], fields[1], order))
    return interactions_from_rows(rows)


def write_interactions(path, rows: Iterable[tuple[str, str, int]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for user, item, order in rows:
            fh.write(f"{user}\t{item}\t{order}\n")


def integrate_single(user_emb: np.ndarray, item_emb: np.ndarray,
                     service: np.ndarray) -> np.ndarray:
    """Stack [p_u ; q_i ; S^e] into one MLP input vector."""
    for name, vec in (("user_emb", user_emb), ("item_emb", item_emb), ("service", service)):
        if np.ndim(vec) != 1:
            raise ValueError(f"{name} must be a 1-d vector, got shape {np.shape(vec)}")
    return np.concatenate([user_emb, item_emb, service])


def integrate_sequence(seq: list[np.ndarray], bundle: ServiceBundle,
                       entity_id: int) -> list[np.ndarray]:
    """Append the entity's triple-module then relation-module vectors."""
    if bundle.variant != "all":
        raise ValueError(f"integrate_sequence requires variant 'all', got {bundle.variant!r}")
    vecs = bundle.vectors_for(entity_id)
    for pos, v in enumerate(seq):
        if np.shape(v) != (bundle.dim,):
            raise ValueError(f"seq[{pos}] has shape {np.shape(v)}, expected ({bundle.dim},)")
    return list(seq) + [vecs[i] for i in range(vecs.shape[0])]


def service_table_for_items(data: InteractionSet, bundle: ServiceBundle,
                            entity_vocab: Vocab) -> np.ndarray:
    """Condensed service vector per interaction item, item id order.

    Items are matched to KG entities by token. Raises when any item has
    no service vector.
    """
    rows = []
    for idx in range(data.n_items):
        token = data.items.token(idx)
        if token not in entity_vocab or entity_vocab.id(token) not in bundle.vectors:
            raise ValueError(f"item {token!r} has no service vector")
        rows.append(condense_single(bundle, entity_vocab.id(token)))
    table = np.asarray(rows, dtype=np.float32)
    table.setflags(write=False)
    return table


@dataclass
class RecConfig:
    gmf_dim: int = 8
    mlp_dim: int = 32
    hidden: tuple[int, ...] = (32, 16, 8)
    learning_rate: float = 1e-4
    epochs: int = 100
    batch_size: int = 256
    neg_ratio: int = 4
    l2: float = 0.001
    seed: int = 0

    def validate(self) -> None:
        if self.gmf_dim < 1 or self.mlp_dim < 1:
            raise ValueError("embedding dims must be positive")
        if not self.hidden:
            raise ValueError("hidden layer sizes must be non-empty")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be positive, got {self.batch_size}")
        if self.neg_ratio < 0:
            raise ValueError(f"neg_ratio must be >= 0, got {self.neg_ratio}")
        if self.l2 < 0:
            raise ValueError(f"l2 must be >= 0, got {self.l2}")


@dataclass
class RecModel:
    """GMF + MLP recommender with an optional frozen service input."""

    params: dict[str, np.ndarray]
    hidden: tuple[int, ...]
    service: np.ndarray | None = None
    train_losses: list[float] = field(default_factory=list)

    def predict(self, users: np.ndarray, items: np.ndarray) -> np.ndarray:
        return _forward(self, np.asarray(users), np.asarray(items))[0]


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _init_rec_params(n_users: int, n_items: int, config: RecConfig,
                     service_dim: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
    def glorot(n_in, n_out):
        lim = np.sqrt(6.0 / (n_in + n_out))
        return rng.uniform(-lim, lim, size=(n_in, n_out)).astype(np.float32)

    params = {
        "gmf_user": rng.normal(0.0, 0.01, size=(n_users, config.gmf_dim)).astype(np.float32),
        "gmf_item": rng.normal(0.0, 0.01, size=(n_items, config.gmf_dim)).astype(np.float32),
        "mlp_user": rng.normal(0.0, 0.01, size=(n_users, config.mlp_dim)).astype(np.float32),
        "mlp_item": rng.normal(0.0, 0.01, size=(n_items, config.mlp_dim)).astype(np.float32),
    }
    in_dim = 2 * config.mlp_dim + service_dim
    for layer, width in enumerate(config.hidden, start=1):
        params[f"w{layer}"] = glorot(in_dim, width)
        params[f"b{layer}"] = np.zeros(width, dtype=np.float32)
        in_dim = width
    out_dim = config.gmf_dim + config.hidden[-1]
    params["w_out"] = glorot(out_dim, 1)[:, 0]
    return params


def _forward(model: RecModel, users: np.ndarray, items: np.ndarray):
    p = model.params
    gmf = p["gmf_user"][users] * p["gmf_item"][items]
    parts = [p["mlp_user"][users], p["mlp_item"][items]]
    if model.service is not None:
        parts.append(model.service[items])
    mlp_in = np.concatenate(parts, axis=1)
    activations = [mlp_in]
    z = mlp_in
    for layer in range(1, len(model.hidden) + 1):
        z = np.maximum(z @ p[f"w{layer}"] + p[f"b{layer}"], 0.0)
        activations.append(z)
    feat = np.concatenate([gmf, z], axis=1)
    prob = _sigmoid(feat @ p["w_out"])
    return prob, gmf, activations, feat


def _backward(model: RecModel, users, items, labels, prob, gmf, activations, feat,
              l2: float) -> dict[str, np.ndarray]:
    p = model.params
    batch = len(labels)
    grads = {name: np.zeros_like(arr) for name, arr in p.items()}

    dlogit = (prob - labels).astype(np.float32) / np.float32(batch)
    grads["w_out"] = feat.T @ dlogit
    dfeat = np.outer(dlogit, p["w_out"])
    gdim = gmf.shape[1]
    dgmf = dfeat[:, :gdim]
    dz = dfeat[:, gdim:]
    for layer in range(len(model.hidden), 0, -1):
        dz = dz * (activations[layer] > 0)
        grads[f"w{layer}"] = activations[layer - 1].T @ dz
        grads[f"b{layer}"] = dz.sum(axis=0)
        dz = dz @ p[f"w{layer}"].T
    mdim = p["mlp_user"].shape[1]
    # the service slice of dz is dropped: service vectors get no gradient
    np.add.at(grads["mlp_user"], users, dz[:, :mdim])
    np.add.at(grads["mlp_item"], items, dz[:, mdim:2 * mdim])
    np.add.at(grads["gmf_user"], users, dgmf * p["gmf_item"][items])
    np.add.at(grads["gmf_item"], items, dgmf * p["gmf_user"][users])
    if l2 > 0:
        # weight decay on embedding rows seen in the batch
        for name, idx in (("gmf_user", users), ("gmf_item", items),
                          ("mlp_user", users), ("mlp_item", items)):
            np.add.at(grads[name], idx, l2 * p[name][idx])
    return grads


def _sample_unobserved(user_items: set[int], n_items: int, rng: np.random.Generator,
                       exclude: int) -> int:
    for _ in range(100):
        j = int(rng.integers(n_items))
        if j not in user_items:
            return j
    # dense user; accept any item other than the positive
    for _ in range(100):
        j = int(rng.integers(n_items))
        if j != exclude:
            return j
    return exclude


def train_recommender(data: InteractionSet, service_table: np.ndarray | None,
                      config: RecConfig) -> RecModel:
    """Train on the given interactions (callers hold out test data first).

    Per positive, neg_ratio unobserved items are sampled fresh each epoch
    and labeled 0. Updates use Adam with weight decay on the embedding
    rows of each batch. When service_table is given, row i is the frozen
    condensed service vector of item i.
    """
    config.validate()
    if service_table is not None:
        if service_table.shape[0] != data.n_items:
            raise ValueError(
                f"service table has {service_table.shape[0]} rows for {data.n_items} items"
            )
        service_table = np.asarray(service_table, dtype=np.float32)
        service_table.setflags(write=False)
    rng = np.random.default_rng(config.seed)
    service_dim = 0 if service_table is None else service_table.shape[1]
    params = _init_rec_params(data.n_users, data.n_items, config, service_dim, rng)
    model = RecModel(params=params, hidden=tuple(config.hidden), service=service_table)
    optimizer = Adam(params, lr=config.learning_rate)

    positives = [(u, i) for u, i, _ in data.interactions]
    user_items: dict[int, set[int]] = {}
    for u, i in positives:
        user_items.setdefault(u, set()).add(i)

    for _ in range(config.epochs):
        users_ep = []
        items_ep = []
        labels_ep = []
        for u, i in positives:
            users_ep.append(u)
            items_ep.append(i)
            labels_ep.append(1.0)
            for _ in range(config.neg_ratio):
                users_ep.append(u)
                items_ep.append(_sample_unobserved(user_items[u], data.n_items, rng, i))
                labels_ep.append(0.0)
        users_arr = np.asarray(users_ep, dtype=np.int64)
        items_arr = np.asarray(items_ep, dtype=np.int64)
        labels_arr = np.asarray(labels_ep, dtype=np.float32)
        order = rng.permutation(len(labels_arr))

        loss_sum = 0.0
        for lo in range(0, len(order), config.batch_size):
            sel = order[lo:lo + config.batch_size]
            u_b, i_b, y_b = users_arr[sel], items_arr[sel], labels_arr[sel]
            prob, gmf, acts, feat = _forward(model, u_b, i_b)
            clipped = np.clip(prob, 1e-7, 1.0 - 1e-7)
            loss_sum += float(-(y_b * np.log(clipped)
                                + (1.0 - y_b) * np.log(1.0 - clipped)).sum())
            grads = _backward(model, u_b, i_b, y_b, prob, gmf, acts, feat, config.l2)
            optimizer.step(grads)
        model.train_losses.append(loss_sum / len(order))
    return model


def leave_one_out_split(data: InteractionSet):
    """Partition into (train interactions, held-out item per user).

    The held-out interaction is the one with the largest order index
    (ties keep the latest line). Users need >= 2 interactions.
    """
    latest: dict[int, int] = {}
    for pos, (u, _, order) in enumerate(data.interactions):
        if u not in latest or order >= data.interactions[latest[u]][2]:
            latest[u] = pos
    held = {}
    train = []
    for pos, (u, i, order) in enumerate(data.interactions):
        if pos == latest[u]:
            held[u] = i
        else:
            train.append((u, i, order))
    counts: dict[int, int] = {}
    for u, _, _ in data.interactions:
        counts[u] = counts.get(u, 0) + 1
    thin = [u for u, c in counts.items() if c < 2]
    if thin:
        names = ", ".join(data.users.token(u) for u in sorted(thin)[:5])
        raise ValueError(f"users with fewer than 2 interactions: {names}")
    return train, held


def leave_one_out_ranks(score_fn: Callable[[int, np.ndarray], np.ndarray],
                        data: InteractionSet, n_negatives: int = 100,
                        seed: int = 0) -> np.ndarray:
    """Rank each user's held-out item against sampled unobserved items.

    Negative candidates depend only on (data, seed), never on the model,
    so comparisons across models with a shared seed are paired. Ranks are
    pessimistic: score ties count against the held-out item.
    """
    _, held = leave_one_out_split(data)
    observed: dict[int, set[int]] = {}
    for u, i, _ in data.interactions:
        observed.setdefault(u, set()).add(i)
    rng = np.random.default_rng(seed)
    ranks = np.zeros(data.n_users, dtype=np.int64)
    for u in range(data.n_users):
        pool = np.setdiff1d(np.arange(data.n_items), sorted(observed[u]))
        if len(pool) > n_negatives:
            negatives = rng.choice(pool, size=n_negatives, replace=False)
        else:
            negatives = pool
        candidates = np.concatenate([[held[u]], negatives])
        scores = np.asarray(score_fn(u, candidates), dtype=np.float64)
        ranks[u] = 1 + int((scores[1:] >= scores[0]).sum())
    return ranks


def ndcg_at(ranks: np.ndarray, k: int) -> float:
    gains = np.where(ranks <= k, 1.0 / np.log2(ranks + 1.0), 0.0)
    return float(gains.mean())


def evaluate_leave_one_out(model: RecModel, data: InteractionSet,
                           cutoffs=(5, 10, 30), n_negatives: int = 100,
                           seed: int = 0) -> EvalReport:
    def score_fn(u: int, item_ids: np.ndarray) -> np.ndarray:
        users = np.full(len(item_ids), u, dtype=np.int64)
        return model.predict(users, np.asarray(item_ids, dtype=np.int64))

    ranks = leave_one_out_ranks(score_fn, data, n_negatives=n_negatives, seed=seed)
    metrics = {}
    for k in cutoffs:
        metrics[f"ndcg@{k}"] = ndcg_at(ranks, k)
        metrics[f"hr@{k}"] = float((ranks <= k).mean())
    return EvalReport(
        task="recommendation",
        metrics=metrics,
        sizes={"n_users": data.n_users, "n_items": data.n_items,
               "n_interactions": len(data.interactions)},
        config={"cutoffs": list(cutoffs), "n_negatives": n_negatives, "seed": seed,
                "with_services": model.service is not None},
    )
