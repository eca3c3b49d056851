"""Command-line entry point.

Subcommands: import, train, tune, eval, cv-predict, minimal-pairs,
attention, regress, ceiling. Each reads an optional JSON config file
(--config), lets explicit flags override config keys, writes its outputs
atomically (temp file + rename) and drops a run manifest next to the
first output. Exit codes: 0 success, 1 invalid input or usage, 2 runtime
or numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .corpus import (kfold, parse_corpus, rescale_rating, split, truncate,
                     unscale_rating, write_corpus, FeatureVector,
                     UtteranceRecord)
from .embeddings import embed_utterance, load_glove, load_precomputed, tokenize
from .errors import (ContractError, IntegrityError, NumericError, ParseError,
                     UndefinedCorrelationError, ValidationError)
from .metrics import bootstrap_ceiling, mse, pearson
from .model import ModelConfig, forward, load_checkpoint, save_checkpoint
from .probes import (attention_by_position, attention_for_records,
                     generate_minimal_pairs, load_frames, minimal_pair_report,
                     partitive_of_analysis, regression_compare,
                     RegressionSpec, score_variants)
from .seeding import derive_seed
from .trainer import (GridPoint, TrainConfig, cv_predict,
                      examples_from_records, evaluate, train, tune,
                      WORKERS_ENV)

USER_ERRORS = (ValidationError, ParseError, ContractError, IntegrityError,
               FileNotFoundError, UndefinedCorrelationError)


class _Parser(argparse.ArgumentParser):
    """argparse maps usage errors to exit 2 by default; we contract exit 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


# ---------------------------------------------------------------------------
# Small shared helpers
# ---------------------------------------------------------------------------

def _fmt_cell(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _atomic_write_text(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _write_csv(path: Path, header: list[str], rows) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt_cell(cell) for cell in row])
    _atomic_write_text(path, buf.getvalue())


def _sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _sha256_file(path) -> str:
    return _sha256_bytes(Path(path).read_bytes())


def _read_json(path) -> dict:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc})") from None
    return obj


def _effective_config(args, keys: list[str], defaults: dict) -> dict:
    """defaults < config file < explicit flags."""
    merged = dict(defaults)
    if getattr(args, "config", None):
        file_config = _read_json(args.config)
        if not isinstance(file_config, dict):
            raise ValidationError(f"{args.config}: config must be an object")
        unknown = set(file_config) - set(keys)
        if unknown:
            raise ValidationError(
                f"{args.config}: unknown config keys: {sorted(unknown)}")
        merged.update(file_config)
    for key in keys:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    return merged


def _write_manifest(command: str, argv: list[str], config: dict,
                    inputs: dict, outputs: list[Path], seed: int,
                    started: str, manifest_path: Path) -> None:
    manifest = {
        "command": command,
        "argv": argv,
        "config": config,
        "config_sha256": _sha256_bytes(
            json.dumps(config, sort_keys=True).encode("utf-8")),
        "inputs": {name: {"path": str(p), "sha256": _sha256_file(p)}
                   for name, p in inputs.items() if p and Path(p).exists()},
        "outputs": [str(p) for p in outputs],
        "seed": seed,
        "started_at": started,
        "finished_at": datetime.now(timezone.utc).isoformat(),
        "version": __version__,
    }
    _atomic_write_text(manifest_path,
                       json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _load_source(cfg: dict):
    glove = cfg.get("glove")
    precomputed = cfg.get("precomputed")
    if bool(glove) == bool(precomputed):
        raise ValidationError(
            "exactly one of --glove / --precomputed is required")
    if glove:
        return load_glove(glove, cfg.get("unk_policy", "zero_vector")), glove
    return load_precomputed(precomputed), precomputed


def _subset_records(records, cfg: dict):
    subset = cfg.get("subset", "all")
    if subset == "all":
        return records
    if subset not in ("train", "test"):
        raise ValidationError(f"unknown subset {subset!r}")
    sp = split(records, cfg["train_fraction"], cfg["split_seed"])
    keep = set(sp.train_ids if subset == "train" else sp.test_ids)
    return [r for r in records if r.id in keep]


def _model_train_config(cfg: dict, input_dim: int, model_seed: int,
                        train_seed: int) -> TrainConfig:
    return TrainConfig(
        model=ModelConfig(
            input_dim=input_dim,
            hidden_dim=cfg["hidden_dim"],
            dropout_rate=cfg["dropout_rate"],
            use_attention=cfg["pooling"] == "attention",
            seed=model_seed),
        epochs=cfg["epochs"], batch_size=cfg["batch_size"], lr=cfg["lr"],
        with_context=cfg["with_context"], pooling=cfg["pooling"],
        grad_clip=cfg.get("grad_clip"), seed=train_seed)


def _records_by_id(records) -> dict:
    return {r.id: r for r in records}


# ---------------------------------------------------------------------------
# import
# ---------------------------------------------------------------------------

# raw-column synonyms accepted by the one-time dataset converter
IMPORT_SYNONYMS = {
    "id": ["id", "item_id", "item", "tgrep_id", "tgrep.id", "workerid_item"],
    "sentence": ["sentence", "utterance", "target", "tokens", "sentence_grammatical"],
    "context": ["context", "context_tokens", "prior_context", "preceding_context"],
    "mean_rating": ["mean_rating", "rating", "mean", "strength_rating",
                    "mean_strength"],
    "participant_ratings": ["participant_ratings", "ratings",
                            "individual_ratings"],
    "no_context_mean_rating": ["no_context_mean_rating", "nocontext_rating",
                               "rating_nocontext", "mean_nocontext"],
    "partitive": ["partitive"],
    "strength": ["strength", "determiner_strength", "strengthsome",
                 "strength_some"],
    "mention": ["mention", "linguistic_mention", "redmention",
                "prior_mention"],
    "subjecthood": ["subjecthood", "subject", "redsubjecthood"],
    "modification": ["modification", "modified", "redmodification"],
    "some_index": ["some_index"],
    "of_partitive_indices": ["of_partitive_indices"],
    "of_other_indices": ["of_other_indices"],
}

_TRUTHY = {"1", "true", "yes", "y", "t"}
_FALSY = {"0", "false", "no", "n", "f"}


def _import_binary(cell: str, what: str, row: int) -> int:
    norm = cell.strip().lower()
    if norm in _TRUTHY:
        return 1
    if norm in _FALSY:
        return 0
    raise ValidationError(f"cannot read binary {what} from {cell!r}", row=row)


def _import_float(cell: str, what: str, row: int) -> float:
    try:
        return float(cell)
    except ValueError:
        raise ParseError(f"cannot read {what} from {cell!r}", line=row) from None


def cmd_import(args, argv):
    keys = ["input", "output", "pretokenized", "column_map"]
    cfg = _effective_config(args, keys, {"pretokenized": False,
                                         "column_map": {}})
    for required in ("input", "output"):
        if not cfg.get(required):
            raise ValidationError(f"import requires --{required}")

    raw_path = Path(cfg["input"])
    delimiter = "\t" if raw_path.suffix.lower() == ".tsv" else ","
    with open(raw_path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh, delimiter=delimiter))
    if not rows:
        raise ValidationError(f"{raw_path}: empty input")
    header = [h.strip().lower() for h in rows[0]]

    def find(field: str) -> int | None:
        override = cfg["column_map"].get(field)
        candidates = [override.lower()] if override else IMPORT_SYNONYMS[field]
        for name in candidates:
            if name in header:
                return header.index(name)
        return None

    col = {field: find(field) for field in IMPORT_SYNONYMS}
    for required in ("id", "sentence", "partitive", "strength", "mention",
                     "subjecthood", "modification"):
        if col[required] is None:
            raise ValidationError(
                f"{raw_path}: no column found for {required!r} "
                f"(tried {IMPORT_SYNONYMS[required]}); use column_map")
    if col["mean_rating"] is None and col["participant_ratings"] is None:
        raise ValidationError(
            f"{raw_path}: need a mean_rating or participant_ratings column")

    def cell(row, field):
        idx = col[field]
        return row[idx].strip() if idx is not None and idx < len(row) else ""

    records = []
    for row_num, row in enumerate(rows[1:], start=2):
        if not any(c.strip() for c in row):
            continue
        rid = cell(row, "id")
        sentence = cell(row, "sentence")
        tokens = sentence.split() if cfg["pretokenized"] else tokenize(sentence)
        if not tokens:
            raise ValidationError("empty sentence", row=row_num)
        context_text = cell(row, "context")
        context_tokens = (context_text.split() if cfg["pretokenized"]
                          else tokenize(context_text)) if context_text else []

        ratings_cell = cell(row, "participant_ratings")
        participant = []
        if ratings_cell:
            parts = ratings_cell.replace(";", ",").split(",")
            participant = [_import_float(p, "participant rating", row_num)
                           for p in parts if p.strip()]
        mean_cell = cell(row, "mean_rating")
        if mean_cell:
            mean_rating = _import_float(mean_cell, "mean rating", row_num)
        elif participant:
            mean_rating = sum(participant) / len(participant)
        else:
            raise ValidationError("row has no rating", row=row_num)
        if participant:
            observed = sum(participant) / len(participant)
            if abs(observed - mean_rating) > 1e-6:
                # trust the raw ratings; recompute the mean
                mean_rating = observed

        nc_cell = cell(row, "no_context_mean_rating")
        no_context = (_import_float(nc_cell, "no-context rating", row_num)
                      if nc_cell else None)

        lowered = [t.lower() for t in tokens]
        some_cell = cell(row, "some_index")
        if some_cell:
            some_index = int(_import_float(some_cell, "some_index", row_num))
        elif "some" in lowered:
            some_index = lowered.index("some")
        else:
            raise ValidationError(
                f"no 'some' token in {tokens}", row=row_num)

        partitive = _import_binary(cell(row, "partitive"), "partitive",
                                   row_num)
        of_part_cell = cell(row, "of_partitive_indices")
        of_other_cell = cell(row, "of_other_indices")
        if of_part_cell or of_other_cell:
            of_partitive = [int(v) for v in of_part_cell.split(",") if v]
            of_other = [int(v) for v in of_other_cell.split(",") if v]
        else:
            # heuristic: a partitive item's "of" right after "some" is the
            # partitive one; every other "of" is non-partitive
            of_partitive = []
            if (partitive and some_index + 1 < len(tokens)
                    and lowered[some_index + 1] == "of"):
                of_partitive = [some_index + 1]
            of_other = [i for i, t in enumerate(lowered)
                        if t == "of" and i not in of_partitive]

        features = FeatureVector(
            partitive=partitive,
            determiner_strength=_import_float(cell(row, "strength"),
                                              "strength", row_num),
            linguistic_mention=_import_binary(cell(row, "mention"), "mention",
                                              row_num),
            subjecthood=_import_binary(cell(row, "subjecthood"),
                                       "subjecthood", row_num),
            modification=_import_binary(cell(row, "modification"),
                                        "modification", row_num),
            utterance_length=len(tokens))
        records.append(UtteranceRecord(
            id=rid, tokens=tokens, context_tokens=context_tokens,
            mean_rating=mean_rating, participant_ratings=participant,
            features=features, some_index=some_index,
            of_partitive_indices=of_partitive, of_other_indices=of_other,
            no_context_mean_rating=no_context))

    out = Path(cfg["output"])
    out.parent.mkdir(parents=True, exist_ok=True)
    tmp = out.with_name(out.name + ".tmp")
    write_corpus(records, tmp)
    parse_corpus(tmp)  # round-trip validation before the rename
    os.replace(tmp, out)
    print(f"imported {len(records)} records -> {out}")
    return cfg, {"input": raw_path}, [out]


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

TRAIN_DEFAULTS = {
    "hidden_dim": 100, "dropout_rate": 0.2, "pooling": "attention",
    "with_context": False, "epochs": 40, "batch_size": 32, "lr": 0.001,
    "train_fraction": 0.7, "valid_fraction": 0.1, "seed": 0,
    "unk_policy": "zero_vector",
}


def cmd_train(args, argv):
    keys = ["corpus", "glove", "precomputed", "hidden_dim", "dropout_rate",
            "pooling", "with_context", "epochs", "batch_size", "lr",
            "grad_clip", "train_fraction", "valid_fraction", "seed",
            "unk_policy", "out", "curve", "split_manifest", "metrics"]
    cfg = _effective_config(args, keys, TRAIN_DEFAULTS)
    for required in ("corpus", "out"):
        if not cfg.get(required):
            raise ValidationError(f"train requires --{required}")

    records = parse_corpus(cfg["corpus"])
    source, source_path = _load_source(cfg)
    seed = cfg["seed"]

    sp = split(records, cfg["train_fraction"], seed)
    by_id = _records_by_id(records)
    train_records = [by_id[i] for i in sp.train_ids]
    test_records = [by_id[i] for i in sp.test_ids]

    if cfg["valid_fraction"] > 0:
        carve = split(train_records, 1.0 - cfg["valid_fraction"],
                      derive_seed(seed, "valid-carve"))
        core_records = [by_id[i] for i in carve.train_ids]
        valid_records = [by_id[i] for i in carve.test_ids]
    else:
        core_records, valid_records = train_records, []

    train_ex = examples_from_records(core_records, source,
                                     cfg["with_context"])
    valid_ex = examples_from_records(valid_records, source,
                                     cfg["with_context"])
    test_ex = examples_from_records(test_records, source,
                                    cfg["with_context"])

    config = _model_train_config(
        cfg, train_ex[0].embedded.shape[1],
        model_seed=derive_seed(seed, "model-init"),
        train_seed=derive_seed(seed, "train"))
    params, curve = train(train_ex, valid_ex, config)
    if curve.aborted:
        raise NumericError(f"training aborted: {curve.aborted}")

    out = Path(cfg["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    tmp = out.with_name(out.name + ".tmp")
    save_checkpoint(params, config.model, tmp)
    os.replace(tmp, out)
    outputs = [out]

    curve_path = Path(cfg.get("curve") or out.with_suffix(".curve.csv"))
    _write_csv(curve_path, ["epoch", "train_mse", "valid_r"],
               [(i + 1, e.train_mse, e.valid_r)
                for i, e in enumerate(curve.epochs)])
    outputs.append(curve_path)

    split_path = Path(cfg.get("split_manifest")
                      or out.with_suffix(".split.json"))
    _atomic_write_text(split_path, sp.to_json() + "\n")
    outputs.append(split_path)

    rows = [("train_items", len(train_ex)), ("valid_items", len(valid_ex)),
            ("test_items", len(test_ex)),
            ("best_epoch", curve.best_epoch or 0)]
    if test_ex:
        scores = evaluate(test_ex, params, config)
        targets = np.array([ex.target for ex in test_ex])
        rows.append(("test_mse", mse(scores, targets)))
        try:
            rows.append(("test_pearson_r", pearson(scores, targets)))
        except UndefinedCorrelationError:
            rows.append(("test_pearson_r", float("nan")))
    metrics_path = Path(cfg.get("metrics") or out.with_suffix(".metrics.csv"))
    _write_csv(metrics_path, ["metric", "value"], rows)
    outputs.append(metrics_path)

    print(f"trained {config.model.hidden_dim}d model "
          f"(best epoch {curve.best_epoch}) -> {out}")
    return cfg, {"corpus": Path(cfg["corpus"]),
                 "embeddings": Path(source_path)}, outputs


# ---------------------------------------------------------------------------
# tune
# ---------------------------------------------------------------------------

TUNE_DEFAULTS = {
    "k": 5, "epochs": 15, "batch_size": 32, "lr": 0.001,
    "train_fraction": 0.7, "seed": 0, "unk_policy": "zero_vector",
}

PAPER_GRID = [
    {"hidden_dim": h, "dropout_rate": d}
    for h in (100, 200, 400, 800) for d in (0.1, 0.2, 0.3, 0.4)
]


def _parse_grid(obj) -> list[GridPoint]:
    if not isinstance(obj, list) or not obj:
        raise ValidationError("grid must be a nonempty JSON array")
    points = []
    for entry in obj:
        try:
            points.append(GridPoint(
                hidden_dim=int(entry["hidden_dim"]),
                dropout_rate=float(entry["dropout_rate"]),
                pooling=entry.get("pooling", "attention"),
                with_context=bool(entry.get("with_context", False)),
                embedding=entry.get("embedding", "glove")))
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"bad grid entry {entry!r}: {exc}") from None
    return points


def cmd_tune(args, argv):
    keys = ["corpus", "glove", "precomputed", "grid", "k", "epochs",
            "batch_size", "lr", "train_fraction", "seed", "unk_policy",
            "out", "workers"]
    cfg = _effective_config(args, keys, TUNE_DEFAULTS)
    for required in ("corpus", "out"):
        if not cfg.get(required):
            raise ValidationError(f"tune requires --{required}")
    if cfg.get("workers"):
        os.environ[WORKERS_ENV] = str(cfg["workers"])

    records = parse_corpus(cfg["corpus"])
    seed = cfg["seed"]
    sp = split(records, cfg["train_fraction"], seed)
    by_id = _records_by_id(records)
    train_records = [by_id[i] for i in sp.train_ids]

    sources = {}
    if cfg.get("glove"):
        sources["glove"] = load_glove(cfg["glove"], cfg["unk_policy"])
    if cfg.get("precomputed"):
        for spec in (cfg["precomputed"] if isinstance(cfg["precomputed"], list)
                     else [cfg["precomputed"]]):
            name, _, path = spec.partition("=")
            if not path:
                name, path = "precomputed", name
            sources[name] = load_precomputed(path)
    if not sources:
        raise ValidationError("tune needs --glove and/or --precomputed")

    if cfg.get("grid"):
        grid_obj = cfg["grid"]
        if isinstance(grid_obj, str):
            grid_obj = _read_json(grid_obj)
        grid = _parse_grid(grid_obj)
    else:
        grid = _parse_grid(PAPER_GRID)
    for point in grid:
        if point.embedding not in sources:
            raise ValidationError(
                f"grid references embedding {point.embedding!r} but no such "
                f"source was given")

    folds = kfold(train_records, cfg["k"], derive_seed(seed, "cv-folds"))
    results = tune(train_records, sources, grid, folds,
                   epochs=cfg["epochs"], batch_size=cfg["batch_size"],
                   lr=cfg["lr"], seed=derive_seed(seed, "tune"))

    out = Path(cfg["out"])
    k = cfg["k"]
    header = (["hidden_dim", "dropout_rate", "pooling", "with_context",
               "embedding"] + [f"fold_{i}_r" for i in range(k)]
              + ["mean_r", "error"])
    rows = []
    for res in results:
        fold_cells = list(res.fold_rs) + [""] * (k - len(res.fold_rs))
        rows.append([res.point.hidden_dim, res.point.dropout_rate,
                     res.point.pooling, int(res.point.with_context),
                     res.point.embedding] + fold_cells
                    + [res.mean_r, res.error or ""])
    _write_csv(out, header, rows)

    best = results[0]
    print(f"best config: hidden={best.point.hidden_dim} "
          f"dropout={best.point.dropout_rate} pooling={best.point.pooling} "
          f"embedding={best.point.embedding} mean_r={best.mean_r:.4f}")
    inputs = {"corpus": Path(cfg["corpus"])}
    if cfg.get("glove"):
        inputs["glove"] = Path(cfg["glove"])
    return cfg, inputs, [out]


# ---------------------------------------------------------------------------
# eval / cv-predict
# ---------------------------------------------------------------------------

EVAL_DEFAULTS = {"with_context": False, "subset": "all",
                 "train_fraction": 0.7, "split_seed": 0,
                 "unk_policy": "zero_vector"}


def cmd_eval(args, argv):
    keys = ["model", "corpus", "glove", "precomputed", "with_context",
            "subset", "train_fraction", "split_seed", "unk_policy", "out",
            "predictions", "scatter"]
    cfg = _effective_config(args, keys, EVAL_DEFAULTS)
    for required in ("model", "corpus", "out"):
        if not cfg.get(required):
            raise ValidationError(f"eval requires --{required}")

    params, mconfig = load_checkpoint(cfg["model"])
    records = _subset_records(parse_corpus(cfg["corpus"]), cfg)
    source, source_path = _load_source(cfg)
    pooling = "attention" if mconfig.use_attention else "final_state"

    mode = "with_context" if cfg["with_context"] else "target_only"
    preds = []
    for record in records:
        truncated = truncate(record, mode)
        embedded = embed_utterance(truncated, source, cfg["with_context"])
        fp = forward(embedded, params, mconfig, train=False, pooling=pooling)
        weights = [] if fp.attention is None else list(fp.attention)
        preds.append((record.id, float(fp.score.value), weights,
                      record.mean_rating))

    scores = np.array([p[1] for p in preds])
    targets = np.array([rescale_rating(p[3]) for p in preds])
    rows = [("n_items", len(preds)), ("mse", mse(scores, targets))]
    try:
        rows.append(("pearson_r", pearson(scores, targets)))
    except (UndefinedCorrelationError, ContractError):
        rows.append(("pearson_r", float("nan")))
    out = Path(cfg["out"])
    _write_csv(out, ["metric", "value"], rows)
    outputs = [out]

    pred_path = Path(cfg.get("predictions") or out.with_suffix(".predictions.csv"))
    _write_csv(pred_path, ["id", "score", "attention"],
               [(rid, score, ";".join(repr(float(w)) for w in weights))
                for rid, score, weights, _ in preds])
    outputs.append(pred_path)

    scatter_path = Path(cfg.get("scatter") or out.with_suffix(".scatter.csv"))
    _write_csv(scatter_path, ["id", "empirical", "predicted"],
               [(rid, empirical, unscale_rating(score))
                for rid, score, _, empirical in preds])
    outputs.append(scatter_path)

    print(f"evaluated {len(preds)} items -> {out}")
    return cfg, {"corpus": Path(cfg["corpus"]), "model": Path(cfg["model"]),
                 "embeddings": Path(source_path)}, outputs


CV_DEFAULTS = {
    "hidden_dim": 100, "dropout_rate": 0.2, "pooling": "attention",
    "with_context": False, "epochs": 40, "batch_size": 32, "lr": 0.001,
    "k": 6, "seed": 0, "unk_policy": "zero_vector",
}


def cmd_cv_predict(args, argv):
    keys = ["corpus", "glove", "precomputed", "hidden_dim", "dropout_rate",
            "pooling", "with_context", "epochs", "batch_size", "lr",
            "grad_clip", "k", "seed", "unk_policy", "out"]
    cfg = _effective_config(args, keys, CV_DEFAULTS)
    for required in ("corpus", "out"):
        if not cfg.get(required):
            raise ValidationError(f"cv-predict requires --{required}")

    records = parse_corpus(cfg["corpus"])
    source, source_path = _load_source(cfg)
    examples = examples_from_records(records, source, cfg["with_context"])
    config = _model_train_config(
        cfg, examples[0].embedded.shape[1],
        model_seed=derive_seed(cfg["seed"], "model-init"),
        train_seed=derive_seed(cfg["seed"], "train"))
    scores = cv_predict(examples, config, cfg["k"],
                        derive_seed(cfg["seed"], "cv-predict"))

    out = Path(cfg["out"])
    _write_csv(out, ["id", "score"],
               [(ex.id, scores[ex.id]) for ex in examples])
    print(f"wrote {len(scores)} out-of-fold predictions -> {out}")
    return cfg, {"corpus": Path(cfg["corpus"]),
                 "embeddings": Path(source_path)}, [out]


# ---------------------------------------------------------------------------
# probes
# ---------------------------------------------------------------------------

MP_DEFAULTS = {"bootstrap": 1000, "seed": 0, "unk_policy": "zero_vector"}


def cmd_minimal_pairs(args, argv):
    keys = ["frames", "model", "glove", "bootstrap", "seed", "unk_policy",
            "out", "groups"]
    cfg = _effective_config(args, keys, MP_DEFAULTS)
    for required in ("model", "glove", "out"):
        if not cfg.get(required):
            raise ValidationError(f"minimal-pairs requires --{required}")

    frames = load_frames(cfg.get("frames"))
    variants = generate_minimal_pairs(frames)
    params, mconfig = load_checkpoint(cfg["model"])
    table = load_glove(cfg["glove"], cfg["unk_policy"])
    scores = score_variants(variants, params, mconfig, table)
    report = minimal_pair_report(variants, scores, B=cfg["bootstrap"],
                                 seed=derive_seed(cfg["seed"], "minimal-pairs"))

    out = Path(cfg["out"])
    _write_csv(out,
               ["variant_id", "frame_id", "some_subject", "passive",
                "partitive", "prenominal_mod", "postnominal_mod", "text",
                "score", "raw_rating"],
               [(v.variant_id, v.frame_id, v.features["some_subject"],
                 v.features["passive"], v.features["partitive"],
                 v.features["prenominal_mod"], v.features["postnominal_mod"],
                 v.text, float(s), unscale_rating(float(s)))
                for v, s in zip(variants, scores)])
    outputs = [out]

    groups_path = Path(cfg.get("groups") or out.with_suffix(".groups.csv"))
    _write_csv(groups_path, ["grouping", "level", "n", "mean", "lo", "hi"],
               [(g.grouping, g.level, g.n, g.mean, g.lo, g.hi)
                for g in report.groups])
    outputs.append(groups_path)

    print(f"scored {len(variants)} variants -> {out}")
    inputs = {"model": Path(cfg["model"]), "glove": Path(cfg["glove"])}
    if cfg.get("frames"):
        inputs["frames"] = Path(cfg["frames"])
    return cfg, inputs, outputs


ATTN_DEFAULTS = {"max_len": 30, "bootstrap": 1000, "seed": 0,
                 "unk_policy": "zero_vector"}


def cmd_attention(args, argv):
    keys = ["corpus", "model", "glove", "precomputed", "max_len", "bootstrap",
            "seed", "unk_policy", "out", "of_out", "summary"]
    cfg = _effective_config(args, keys, ATTN_DEFAULTS)
    for required in ("corpus", "model", "out"):
        if not cfg.get(required):
            raise ValidationError(f"attention requires --{required}")

    records = parse_corpus(cfg["corpus"])
    params, mconfig = load_checkpoint(cfg["model"])
    if not mconfig.use_attention:
        raise ValidationError("checkpoint was trained without attention")
    source, source_path = _load_source(cfg)
    weights = attention_for_records(records, params, mconfig, source)
    seed = cfg["seed"]
    report = attention_by_position(records, weights, cfg["max_len"],
                                   B=cfg["bootstrap"],
                                   seed=derive_seed(seed, "attention"))
    of_report = partitive_of_analysis(records, weights, B=cfg["bootstrap"],
                                      seed=derive_seed(seed, "of-analysis"))

    out = Path(cfg["out"])
    rows = [("some_vs_other", s.group, s.position, s.n, s.mean, s.lo, s.hi)
            for s in report.position_curves]
    rows += [("subjecthood_renormalized", s.group, s.position, s.n, s.mean,
              s.lo, s.hi) for s in report.subjecthood_curves]
    _write_csv(out, ["analysis", "group", "position", "n", "mean", "lo", "hi"],
               rows)
    outputs = [out]

    of_path = Path(cfg.get("of_out") or out.with_suffix(".of.csv"))
    of_rows = [("raw", s.kind, s.n_tokens, s.mean, s.lo, s.hi)
               for s in of_report.raw]
    of_rows += [("normalized", s.kind, s.n_tokens, s.mean, s.lo, s.hi)
                for s in of_report.normalized]
    _write_csv(of_path, ["mode", "kind", "n_tokens", "mean", "lo", "hi"],
               of_rows)
    outputs.append(of_path)

    summary_path = Path(cfg.get("summary") or out.with_suffix(".summary.csv"))
    _write_csv(summary_path, ["metric", "value"],
               [("some_mean_weight", report.some_mean),
                ("other_mean_weight", report.other_mean),
                ("n_length_filtered", report.n_length_filtered),
                ("n_multi_of", of_report.n_multi_of),
                ("skipped_missing_some", report.skipped_missing_some)])
    outputs.append(summary_path)

    print(f"attention analyses ({report.n_length_filtered} length-filtered, "
          f"{of_report.n_multi_of} multi-of) -> {out}")
    return cfg, {"corpus": Path(cfg["corpus"]), "model": Path(cfg["model"]),
                 "embeddings": Path(source_path)}, outputs


REGRESS_DEFAULTS = {"bootstrap": 10000, "seed": 0, "interactions": ""}


def cmd_regress(args, argv):
    keys = ["corpus", "predictions", "bootstrap", "seed", "interactions",
            "out"]
    cfg = _effective_config(args, keys, REGRESS_DEFAULTS)
    for required in ("corpus", "predictions", "out"):
        if not cfg.get(required):
            raise ValidationError(f"regress requires --{required}")

    records = parse_corpus(cfg["corpus"])
    preds: dict[str, float] = {}
    with open(cfg["predictions"], encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if not reader.fieldnames or "id" not in reader.fieldnames \
                or "score" not in reader.fieldnames:
            raise ValidationError(
                f"{cfg['predictions']}: need id,score columns")
        for row in reader:
            preds[row["id"]] = float(row["score"])

    interactions = []
    if cfg["interactions"]:
        raw = (cfg["interactions"] if isinstance(cfg["interactions"], list)
               else [p for p in cfg["interactions"].split(",") if p])
        for pair in raw:
            a, sep, b = (pair if isinstance(pair, str)
                         else ":".join(pair)).partition(":")
            if not sep:
                raise ValidationError(
                    f"interaction {pair!r} must look like a:b")
            interactions.append((a.strip(), b.strip()))

    spec = RegressionSpec(interactions=interactions)
    comparison = regression_compare(records, preds, spec,
                                    B=cfg["bootstrap"],
                                    seed=derive_seed(cfg["seed"], "regress"))
    out = Path(cfg["out"])
    _write_csv(out,
               ["predictor", "beta_original", "ci_orig_lo", "ci_orig_hi",
                "beta_extended", "ci_ext_lo", "ci_ext_hi", "p_shrink",
                "stars"],
               [(r.predictor, r.beta_original, r.ci_original[0],
                 r.ci_original[1], r.beta_extended, r.ci_extended[0],
                 r.ci_extended[1], r.p_shrink, r.stars)
                for r in comparison.rows])
    print(f"compared {comparison.n_items} items over "
          f"{comparison.n_bootstrap} resamples -> {out}")
    return cfg, {"corpus": Path(cfg["corpus"]),
                 "predictions": Path(cfg["predictions"])}, [out]


CEILING_DEFAULTS = {"bootstrap": 1000, "seed": 0}


def cmd_ceiling(args, argv):
    keys = ["corpus", "bootstrap", "seed", "out"]
    cfg = _effective_config(args, keys, CEILING_DEFAULTS)
    for required in ("corpus", "out"):
        if not cfg.get(required):
            raise ValidationError(f"ceiling requires --{required}")

    records = parse_corpus(cfg["corpus"])
    items = [r.participant_ratings for r in records
             if len(r.participant_ratings) >= 2]
    rows = [("n_items", len(items))]
    if items:
        rows.append(("ceiling_r", bootstrap_ceiling(
            items, cfg["bootstrap"], derive_seed(cfg["seed"], "ceiling"))))
    paired = [(r.mean_rating, r.no_context_mean_rating) for r in records
              if r.no_context_mean_rating is not None]
    rows.append(("n_with_no_context_rating", len(paired)))
    if len(paired) >= 2:
        x = np.array([p[0] for p in paired])
        y = np.array([p[1] for p in paired])
        try:
            rows.append(("context_vs_no_context_r", pearson(x, y)))
        except UndefinedCorrelationError:
            rows.append(("context_vs_no_context_r", float("nan")))

    out = Path(cfg["out"])
    _write_csv(out, ["metric", "value"], rows)
    print(f"agreement ceiling report -> {out}")
    return cfg, {"corpus": Path(cfg["corpus"])}, [out]


# ---------------------------------------------------------------------------
# parser wiring
# ---------------------------------------------------------------------------

def _add_common(p):
    p.add_argument("--config", help="JSON config file; flags override it")
    p.add_argument("--manifest", help="run manifest path "
                                      "(default: <first output>.manifest.json)")


def build_parser() -> _Parser:
    parser = _Parser(prog="sil", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("import", help="convert a released raw dataset to "
                                      "the corpus TSV")
    _add_common(p)
    p.add_argument("--input")
    p.add_argument("--output")
    p.add_argument("--pretokenized", action="store_const", const=True,
                   default=None, help="sentence/context cells are already "
                                      "space-tokenized")
    p.set_defaults(fn=cmd_import)

    p = sub.add_parser("train", help="train one model on the train split")
    _add_common(p)
    p.add_argument("--corpus")
    p.add_argument("--glove")
    p.add_argument("--precomputed")
    p.add_argument("--hidden-dim", dest="hidden_dim", type=int)
    p.add_argument("--dropout", dest="dropout_rate", type=float)
    p.add_argument("--pooling", choices=["attention", "final_state"])
    p.add_argument("--with-context", dest="with_context",
                   action="store_const", const=True, default=None)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--grad-clip", dest="grad_clip", type=float)
    p.add_argument("--train-fraction", dest="train_fraction", type=float)
    p.add_argument("--valid-fraction", dest="valid_fraction", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--unk-policy", dest="unk_policy",
                   choices=["zero_vector", "unk_token", "mean_vector"])
    p.add_argument("--out", help="checkpoint path")
    p.add_argument("--curve", help="learning-curve CSV path")
    p.add_argument("--split-manifest", dest="split_manifest")
    p.add_argument("--metrics")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("tune", help="grid search with k-fold CV on the "
                                    "train split")
    _add_common(p)
    p.add_argument("--corpus")
    p.add_argument("--glove")
    p.add_argument("--precomputed", action="append",
                   help="name=path, repeatable")
    p.add_argument("--grid", help="grid JSON file (default: built-in grid)")
    p.add_argument("--k", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--train-fraction", dest="train_fraction", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--unk-policy", dest="unk_policy",
                   choices=["zero_vector", "unk_token", "mean_vector"])
    p.add_argument("--out", help="ranked report CSV")
    p.add_argument("--workers", type=int, help=f"cap fold workers "
                                               f"(also {WORKERS_ENV})")
    p.set_defaults(fn=cmd_tune)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a corpus")
    _add_common(p)
    p.add_argument("--model")
    p.add_argument("--corpus")
    p.add_argument("--glove")
    p.add_argument("--precomputed")
    p.add_argument("--with-context", dest="with_context",
                   action="store_const", const=True, default=None)
    p.add_argument("--subset", choices=["all", "train", "test"])
    p.add_argument("--train-fraction", dest="train_fraction", type=float)
    p.add_argument("--split-seed", dest="split_seed", type=int)
    p.add_argument("--unk-policy", dest="unk_policy",
                   choices=["zero_vector", "unk_token", "mean_vector"])
    p.add_argument("--out", help="report CSV")
    p.add_argument("--predictions", help="per-item predictions CSV")
    p.add_argument("--scatter", help="id,empirical,predicted CSV")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("cv-predict", help="out-of-fold predictions for "
                                          "every record")
    _add_common(p)
    p.add_argument("--corpus")
    p.add_argument("--glove")
    p.add_argument("--precomputed")
    p.add_argument("--hidden-dim", dest="hidden_dim", type=int)
    p.add_argument("--dropout", dest="dropout_rate", type=float)
    p.add_argument("--pooling", choices=["attention", "final_state"])
    p.add_argument("--with-context", dest="with_context",
                   action="store_const", const=True, default=None)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--grad-clip", dest="grad_clip", type=float)
    p.add_argument("--k", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--unk-policy", dest="unk_policy",
                   choices=["zero_vector", "unk_token", "mean_vector"])
    p.add_argument("--out")
    p.set_defaults(fn=cmd_cv_predict)

    p = sub.add_parser("minimal-pairs", help="score the 800-variant "
                                             "minimal-pair suite")
    _add_common(p)
    p.add_argument("--frames", help="frame TSV (default: bundled)")
    p.add_argument("--model")
    p.add_argument("--glove")
    p.add_argument("--bootstrap", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--unk-policy", dest="unk_policy",
                   choices=["zero_vector", "unk_token", "mean_vector"])
    p.add_argument("--out", help="per-variant CSV")
    p.add_argument("--groups", help="grouped-means CSV")
    p.set_defaults(fn=cmd_minimal_pairs)

    p = sub.add_parser("attention", help="attention-weight analyses")
    _add_common(p)
    p.add_argument("--corpus")
    p.add_argument("--model")
    p.add_argument("--glove")
    p.add_argument("--precomputed")
    p.add_argument("--max-len", dest="max_len", type=int)
    p.add_argument("--bootstrap", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--unk-policy", dest="unk_policy",
                   choices=["zero_vector", "unk_token", "mean_vector"])
    p.add_argument("--out", help="position-curve CSV")
    p.add_argument("--of-out", dest="of_out", help="of-token CSV")
    p.add_argument("--summary", help="summary CSV")
    p.set_defaults(fn=cmd_attention)

    p = sub.add_parser("regress", help="original vs extended rating "
                                       "regression")
    _add_common(p)
    p.add_argument("--corpus")
    p.add_argument("--predictions", help="id,score CSV from cv-predict")
    p.add_argument("--bootstrap", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--interactions", help="comma-joined a:b pairs")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_regress)

    p = sub.add_parser("ceiling", help="inter-annotator agreement ceiling")
    _add_common(p)
    p.add_argument("--corpus")
    p.add_argument("--bootstrap", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_ceiling)

    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    started = datetime.now(timezone.utc).isoformat()
    try:
        cfg, inputs, outputs = args.fn(args, argv)
    except USER_ERRORS as exc:
        print(f"sil {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except (NumericError, ArithmeticError, OSError, KeyError) as exc:
        print(f"sil {args.command}: runtime error: {exc}", file=sys.stderr)
        return 2

    manifest_path = Path(args.manifest) if args.manifest else \
        Path(str(outputs[0]) + ".manifest.json")
    seed = cfg.get("seed", 0) if isinstance(cfg.get("seed", 0), int) else 0
    _write_manifest(args.command, argv, cfg, inputs, outputs, seed,
                    started, manifest_path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
