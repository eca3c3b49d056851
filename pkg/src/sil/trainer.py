"""Training loop (Adam on MSE), 5-fold grid search, out-of-fold prediction.

Sequences are processed one at a time (no padding): the corpus is small
and per-item graphs avoid masking bugs. Minibatches only average the
per-item gradients.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .autodiff import backward
from .corpus import rescale_rating, truncate
from .embeddings import embed_utterance
from .errors import ContractError, NumericError, UndefinedCorrelationError
from .metrics import pearson
from .model import (ModelConfig, ModelParams, forward, init_params,
                    POOLING_MODES)
from .optim import AdamState, adam_step
from .seeding import derive_seed, rng_for

WORKERS_ENV = "SIL_WORKERS"


@dataclass
class Example:
    """One training item: embedded tokens plus rescaled target."""

    id: str
    embedded: np.ndarray
    target: float


@dataclass
class TrainConfig:
    model: ModelConfig
    epochs: int = 40
    batch_size: int = 32
    lr: float = 0.001
    with_context: bool = False
    pooling: str = "attention"
    grad_clip: float | None = None  # off by default
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ContractError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ContractError("batch_size must be >= 1")
        if self.pooling not in POOLING_MODES:
            raise ContractError(f"unknown pooling {self.pooling!r}")


@dataclass
class EpochStats:
    train_mse: float
    valid_r: float


@dataclass
class LearningCurve:
    epochs: list[EpochStats] = field(default_factory=list)
    best_epoch: int | None = None  # 1-based index of checkpointed epoch
    aborted: str | None = None

    def best_valid_r(self) -> float:
        finite = [e.valid_r for e in self.epochs if math.isfinite(e.valid_r)]
        return max(finite) if finite else float("nan")


def examples_from_records(records, source, with_context: bool = False,
                          rating_attr: str = "mean_rating") -> list[Example]:
    """Truncate, embed and rescale records into trainer-ready examples.

    No-context runs truncate targets to their first 30 tokens; context
    runs truncate the context to its last 150 tokens and keep the target
    whole, with context tokens prepended at embedding time.
    """
    mode = "with_context" if with_context else "target_only"
    out = []
    for record in records:
        rating = getattr(record, rating_attr)
        if rating is None:
            continue
        truncated = truncate(record, mode)
        out.append(Example(
            id=record.id,
            embedded=embed_utterance(truncated, source, with_context),
            target=rescale_rating(rating)))
    return out


def evaluate(examples: list[Example], params: ModelParams,
             config: TrainConfig) -> np.ndarray:
    """Eval-mode scores for examples, in input order."""
    return np.array([
        float(forward(ex.embedded, params, config.model,
                      pooling=config.pooling).score.value)
        for ex in examples
    ])


def _clip_grads(grads: dict[str, np.ndarray], max_norm: float) -> None:
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if total > max_norm:
        scale = max_norm / total
        for g in grads.values():
            g *= scale


def train(train_examples: list[Example], valid_examples: list[Example],
          config: TrainConfig) -> tuple[ModelParams, LearningCurve]:
    """Minibatch Adam on MSE over rescaled ratings.

    Shuffles per epoch with a seeded stream, records train MSE and
    validation Pearson r per epoch, and returns the parameters from the
    epoch with the best validation r. With no usable validation signal
    (empty set or undefined r throughout) the final epoch's parameters
    are returned. A non-finite loss aborts training with a diagnostic on
    the curve, returning the last checkpointed parameters.
    """
    if not train_examples:
        raise ContractError("train set must be nonempty")
    width = train_examples[0].embedded.shape[1]
    if width != config.model.input_dim:
        raise ContractError(
            f"examples have width {width}, model expects "
            f"{config.model.input_dim}")

    params = init_params(config.model)
    state = AdamState(lr=config.lr)
    shuffle_rng = rng_for(config.seed, "epoch-shuffle")
    dropout_rng = rng_for(config.seed, "dropout")

    curve = LearningCurve()
    best_params: ModelParams | None = None
    best_r = -np.inf
    n = len(train_examples)

    for epoch in range(1, config.epochs + 1):
        order = shuffle_rng.permutation(n)
        sq_errors: list[float] = []
        try:
            for start in range(0, n, config.batch_size):
                batch = [train_examples[i]
                         for i in order[start:start + config.batch_size]]
                summed: dict[str, np.ndarray] = {}
                for ex in batch:
                    fp = forward(ex.embedded, params, config.model,
                                 train=True, rng=dropout_rng,
                                 pooling=config.pooling)
                    err = fp.score - ex.target
                    loss = err * err
                    sq_errors.append(float(loss.value))
                    for name, g in backward(loss).items():
                        if name in summed:
                            summed[name] += g
                        else:
                            summed[name] = g.copy()
                grads = {name: g / len(batch) for name, g in summed.items()}
                if config.grad_clip is not None:
                    _clip_grads(grads, config.grad_clip)
                adam_step(params.tensors, grads, state)
        except NumericError as exc:
            curve.aborted = f"epoch {epoch}: {exc}"
            break

        train_mse = float(np.mean(sq_errors))
        if not math.isfinite(train_mse):
            curve.aborted = f"epoch {epoch}: non-finite training loss"
            break
        valid_r = float("nan")
        if valid_examples:
            scores = evaluate(valid_examples, params, config)
            targets = np.array([ex.target for ex in valid_examples])
            try:
                valid_r = pearson(scores, targets)
            except (UndefinedCorrelationError, ContractError):
                valid_r = float("nan")
        curve.epochs.append(EpochStats(train_mse=train_mse, valid_r=valid_r))
        if math.isfinite(valid_r) and valid_r > best_r:
            best_r = valid_r
            best_params = params.clone()
            curve.best_epoch = epoch

    if best_params is None:
        best_params = params.clone()
        curve.best_epoch = len(curve.epochs) if curve.epochs else None
    return best_params, curve


# ---------------------------------------------------------------------------
# Grid search over 5-fold cross-validation
# ---------------------------------------------------------------------------

@dataclass
class GridPoint:
    hidden_dim: int
    dropout_rate: float
    pooling: str = "attention"
    with_context: bool = False
    embedding: str = "glove"


@dataclass
class TuneResult:
    point: GridPoint
    fold_rs: list[float]
    mean_r: float
    error: str | None = None


def _fold_seed(seed: int, fold: int) -> int:
    return derive_seed(seed, f"fold:{fold}")


def _train_fold(args) -> tuple[int, int, float, str | None]:
    """Worker task: train one (grid point, fold) pair, return its best r."""
    point_idx, fold_idx, train_ex, heldout_ex, config = args
    try:
        _, curve = train(train_ex, heldout_ex, config)
        if curve.aborted:
            return point_idx, fold_idx, float("nan"), curve.aborted
        return point_idx, fold_idx, curve.best_valid_r(), None
    except (NumericError, ContractError) as exc:
        return point_idx, fold_idx, float("nan"), str(exc)


def _worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def tune(records, sources: dict, grid: list[GridPoint], folds,
         *, epochs: int = 40, batch_size: int = 32, lr: float = 0.001,
         seed: int = 0) -> list[TuneResult]:
    """Grid search scored by mean held-out Pearson r over the given folds.

    `records` must already be restricted to the training split (no test
    leakage). `sources` maps embedding names to lookup sources; `folds`
    is the kfold output shared by every grid point. Failures are captured
    per configuration without stopping the sweep. Results are sorted by
    mean r descending, ties broken by smaller hidden_dim, lower dropout,
    then grid order. Set SIL_WORKERS to parallelize across fold tasks.
    """
    if not grid:
        raise ContractError("grid must be nonempty")

    example_cache: dict[tuple[str, bool], dict[str, Example]] = {}

    def examples_for(point: GridPoint) -> dict[str, Example]:
        key = (point.embedding, point.with_context)
        if key not in example_cache:
            if point.embedding not in sources:
                raise ContractError(
                    f"unknown embedding source {point.embedding!r}")
            built = examples_from_records(
                records, sources[point.embedding], point.with_context)
            example_cache[key] = {ex.id: ex for ex in built}
        return example_cache[key]

    tasks = []
    errors: dict[int, str] = {}
    for p_idx, point in enumerate(grid):
        try:
            pool = examples_for(point)
        except ContractError as exc:
            errors[p_idx] = str(exc)
            continue
        dim = pool[next(iter(pool))].embedded.shape[1]
        for f_idx, (train_ids, heldout_ids) in enumerate(folds):
            fold_seed = _fold_seed(seed, f_idx)
            config = TrainConfig(
                model=ModelConfig(
                    input_dim=dim, hidden_dim=point.hidden_dim,
                    dropout_rate=point.dropout_rate,
                    use_attention=point.pooling == "attention",
                    seed=fold_seed),
                epochs=epochs, batch_size=batch_size, lr=lr,
                with_context=point.with_context, pooling=point.pooling,
                seed=fold_seed)
            train_ex = [pool[i] for i in train_ids if i in pool]
            heldout_ex = [pool[i] for i in heldout_ids if i in pool]
            tasks.append((p_idx, f_idx, train_ex, heldout_ex, config))

    workers = _worker_count()
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool_exec:
            outcomes = list(pool_exec.map(_train_fold, tasks))
    else:
        outcomes = [_train_fold(t) for t in tasks]

    fold_rs: dict[int, dict[int, float]] = {}
    for p_idx, f_idx, r, err in outcomes:
        fold_rs.setdefault(p_idx, {})[f_idx] = r
        if err and p_idx not in errors:
            errors[p_idx] = err

    results = []
    for p_idx, point in enumerate(grid):
        per_fold = fold_rs.get(p_idx, {})
        rs = [per_fold[i] for i in sorted(per_fold)]
        finite = [r for r in rs if math.isfinite(r)]
        mean_r = float(np.mean(finite)) if finite and len(finite) == len(rs) \
            else float("nan")
        results.append(TuneResult(point=point, fold_rs=rs, mean_r=mean_r,
                                  error=errors.get(p_idx)))

    order = sorted(
        range(len(results)),
        key=lambda i: (
            -(results[i].mean_r if math.isfinite(results[i].mean_r)
              else -np.inf),
            results[i].point.hidden_dim,
            results[i].point.dropout_rate,
            i))
    return [results[i] for i in order]


def cv_predict(examples: list[Example], config: TrainConfig, k: int = 6,
               seed: int = 0) -> dict[str, float]:
    """One out-of-fold score per example id, for a fixed configuration.

    Each fold's model trains on the other folds with no validation set,
    so the final epoch's parameters are used (no held-out peeking).
    """
    from .corpus import kfold  # local import avoids a cycle at module load

    by_id = {ex.id: ex for ex in examples}
    if len(by_id) != len(examples):
        raise ContractError("duplicate example ids")
    scores: dict[str, float] = {}
    for f_idx, (train_ids, heldout_ids) in enumerate(kfold(examples, k, seed)):
        fold_seed = _fold_seed(seed, f_idx)
        fold_config = replace(
            config, seed=fold_seed,
            model=replace(config.model, seed=fold_seed))
        params, curve = train([by_id[i] for i in train_ids], [], fold_config)
        if curve.aborted:
            raise NumericError(
                f"fold {f_idx} aborted: {curve.aborted}")
        heldout = [by_id[i] for i in heldout_ids]
        for ex, score in zip(heldout, evaluate(heldout, params, fold_config)):
            scores[ex.id] = float(score)
    return scores
