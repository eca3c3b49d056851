"""Command-line surface: exit codes, artifacts, manifests, reproducibility."""

import csv
import hashlib
import json

import numpy as np
import pytest
from conftest import make_records, vocab_of, write_glove

from sil.cli import main
from sil.corpus import parse_corpus, write_corpus
from sil.model import load_checkpoint


def read_csv(path):
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.reader(fh))


def read_dicts(path):
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    records = make_records(24, seed=5, no_context_col=True)
    corpus = root / "corpus.tsv"
    write_corpus(records, corpus)
    glove = root / "vectors.txt"
    write_glove(glove, sorted(vocab_of(records)), dim=8)
    return {"root": root, "corpus": corpus, "glove": glove,
            "records": records}


@pytest.fixture(scope="module")
def trained(workspace):
    out = workspace["root"] / "model.bin"
    rc = main(["train", "--corpus", str(workspace["corpus"]),
               "--glove", str(workspace["glove"]),
               "--hidden-dim", "4", "--epochs", "2", "--batch-size", "8",
               "--seed", "7", "--out", str(out)])
    assert rc == 0
    return out


# ---------------------------------------------------------------------------
# exit codes and argument handling
# ---------------------------------------------------------------------------

def test_no_command_exits_one(capsys):
    assert main([]) == 1
    assert "usage" in capsys.readouterr().err.lower()


def test_unknown_flag_exits_one(capsys):
    assert main(["train", "--bogus"]) == 1


def test_version_flag_exits_zero(capsys):
    assert main(["--version"]) == 0


def test_missing_required_flag_reports_validation(workspace, capsys):
    rc = main(["train", "--corpus", str(workspace["corpus"])])
    assert rc == 1
    assert "requires --out" in capsys.readouterr().err


def test_both_embedding_sources_rejected(workspace, tmp_path, capsys):
    rc = main(["train", "--corpus", str(workspace["corpus"]),
               "--glove", str(workspace["glove"]),
               "--precomputed", str(workspace["glove"]),
               "--out", str(tmp_path / "m.bin")])
    assert rc == 1
    assert "exactly one" in capsys.readouterr().err


def test_corrupt_corpus_exits_one(tmp_path, capsys):
    bad = tmp_path / "bad.tsv"
    bad.write_text("id\tnot_a_real_corpus\n", encoding="utf-8")
    rc = main(["ceiling", "--corpus", str(bad),
               "--out", str(tmp_path / "c.csv")])
    assert rc == 1


def test_missing_input_file_exits_one(tmp_path, capsys):
    rc = main(["ceiling", "--corpus", str(tmp_path / "nope.tsv"),
               "--out", str(tmp_path / "c.csv")])
    assert rc == 1


def test_unwritable_output_exits_two(workspace, tmp_path, capsys):
    blocked = tmp_path / "report.csv"
    blocked.mkdir()  # a directory where the output file should go
    rc = main(["ceiling", "--corpus", str(workspace["corpus"]),
               "--bootstrap", "10", "--out", str(blocked)])
    assert rc == 2
    assert "runtime error" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def test_train_writes_checkpoint_curve_metrics(workspace, trained, capsys):
    params, config = load_checkpoint(trained)
    assert config.hidden_dim == 4
    assert config.input_dim == 8

    curve = read_csv(trained.with_suffix(".curve.csv"))
    assert curve[0] == ["epoch", "train_mse", "valid_r"]
    assert len(curve) == 3  # header + 2 epochs
    assert float(curve[1][1]) > 0

    metrics = dict(read_csv(trained.with_suffix(".metrics.csv"))[1:])
    assert int(metrics["train_items"]) > 0
    assert int(metrics["test_items"]) == 7  # floor(24 * 0.3)
    assert "test_mse" in metrics and "test_pearson_r" in metrics


def test_train_manifest_records_provenance(workspace, trained):
    manifest = json.loads(
        (trained.parent / (trained.name + ".manifest.json"))
        .read_text(encoding="utf-8"))
    assert manifest["command"] == "train"
    assert manifest["config"]["epochs"] == 2
    assert manifest["seed"] == 7
    digest = hashlib.sha256(
        workspace["corpus"].read_bytes()).hexdigest()
    assert manifest["inputs"]["corpus"]["sha256"] == digest
    assert str(trained) in manifest["outputs"]
    assert "--hidden-dim" in manifest["argv"]
    assert manifest["started_at"] <= manifest["finished_at"]


def test_train_leaves_no_temp_files(workspace, trained):
    leftovers = list(workspace["root"].glob("*.tmp"))
    assert leftovers == []


def test_train_is_bit_reproducible(workspace, tmp_path):
    outs = []
    for name in ("a.bin", "b.bin"):
        out = tmp_path / name
        rc = main(["train", "--corpus", str(workspace["corpus"]),
                   "--glove", str(workspace["glove"]),
                   "--hidden-dim", "3", "--epochs", "2",
                   "--batch-size", "8", "--seed", "11", "--out", str(out)])
        assert rc == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_seed_changes_checkpoint(workspace, tmp_path, trained):
    out = tmp_path / "other-seed.bin"
    rc = main(["train", "--corpus", str(workspace["corpus"]),
               "--glove", str(workspace["glove"]),
               "--hidden-dim", "4", "--epochs", "2", "--batch-size", "8",
               "--seed", "8", "--out", str(out)])
    assert rc == 0
    assert out.read_bytes() != trained.read_bytes()


def test_split_manifest_partitions_ids(workspace, tmp_path):
    out = tmp_path / "m.bin"
    split_path = tmp_path / "split.json"
    rc = main(["train", "--corpus", str(workspace["corpus"]),
               "--glove", str(workspace["glove"]),
               "--hidden-dim", "3", "--epochs", "1", "--batch-size", "8",
               "--seed", "0", "--out", str(out),
               "--split-manifest", str(split_path)])
    assert rc == 0
    blob = json.loads(split_path.read_text(encoding="utf-8"))
    all_ids = {r.id for r in workspace["records"]}
    assert set(blob["train_ids"]) | set(blob["test_ids"]) == all_ids
    assert not set(blob["train_ids"]) & set(blob["test_ids"])


# ---------------------------------------------------------------------------
# config file layering
# ---------------------------------------------------------------------------

def test_config_file_supplies_defaults(workspace, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "corpus": str(workspace["corpus"]),
        "glove": str(workspace["glove"]),
        "hidden_dim": 3, "epochs": 3, "batch_size": 8, "seed": 1,
    }), encoding="utf-8")
    out = tmp_path / "m.bin"
    rc = main(["train", "--config", str(cfg), "--out", str(out)])
    assert rc == 0
    assert len(read_csv(out.with_suffix(".curve.csv"))) == 4  # 3 epochs


def test_flags_override_config_file(workspace, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "corpus": str(workspace["corpus"]),
        "glove": str(workspace["glove"]),
        "hidden_dim": 3, "epochs": 3, "batch_size": 8, "seed": 1,
    }), encoding="utf-8")
    out = tmp_path / "m.bin"
    rc = main(["train", "--config", str(cfg), "--epochs", "1",
               "--out", str(out)])
    assert rc == 0
    assert len(read_csv(out.with_suffix(".curve.csv"))) == 2  # 1 epoch
    manifest = json.loads((tmp_path / "m.bin.manifest.json")
                          .read_text(encoding="utf-8"))
    assert manifest["config"]["epochs"] == 1


def test_unknown_config_key_rejected(workspace, tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"epoch": 3}), encoding="utf-8")
    rc = main(["train", "--config", str(cfg),
               "--corpus", str(workspace["corpus"]),
               "--glove", str(workspace["glove"]),
               "--out", str(tmp_path / "m.bin")])
    assert rc == 1
    assert "epoch" in capsys.readouterr().err


def test_manifest_path_flag(workspace, tmp_path):
    out = tmp_path / "c.csv"
    manifest = tmp_path / "run.json"
    rc = main(["ceiling", "--corpus", str(workspace["corpus"]),
               "--bootstrap", "50", "--out", str(out),
               "--manifest", str(manifest)])
    assert rc == 0
    assert json.loads(manifest.read_text(encoding="utf-8"))["command"] == \
        "ceiling"


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

def test_eval_reports_and_predictions(workspace, trained, tmp_path):
    report = tmp_path / "report.csv"
    preds = tmp_path / "preds.csv"
    scatter = tmp_path / "scatter.csv"
    rc = main(["eval", "--model", str(trained),
               "--corpus", str(workspace["corpus"]),
               "--glove", str(workspace["glove"]), "--subset", "all",
               "--out", str(report), "--predictions", str(preds),
               "--scatter", str(scatter)])
    assert rc == 0
    metrics = dict(read_csv(report)[1:])
    assert int(metrics["n_items"]) == 24
    assert float(metrics["mse"]) >= 0
    assert "pearson_r" in metrics

    rows = read_dicts(preds)
    assert len(rows) == 24
    for row in rows:
        assert 0.0 < float(row["score"]) < 1.0
        weights = [float(w) for w in row["attention"].split(";")]
        assert abs(sum(weights) - 1.0) < 1e-6

    scatter_rows = read_dicts(scatter)
    empirical = [float(r["empirical"]) for r in scatter_rows]
    predicted = [float(r["predicted"]) for r in scatter_rows]
    assert all(1.0 <= v <= 7.0 for v in empirical)
    assert all(1.0 <= v <= 7.0 for v in predicted)


def test_eval_subset_sizes_match_split(workspace, trained, tmp_path):
    sizes = {}
    for subset in ("train", "test"):
        report = tmp_path / f"{subset}.csv"
        rc = main(["eval", "--model", str(trained),
                   "--corpus", str(workspace["corpus"]),
                   "--glove", str(workspace["glove"]),
                   "--subset", subset, "--out", str(report)])
        assert rc == 0
        sizes[subset] = int(dict(read_csv(report)[1:])["n_items"])
    assert sizes == {"train": 17, "test": 7}


# ---------------------------------------------------------------------------
# import
# ---------------------------------------------------------------------------

RAW_HEADER = ("tgrep_id,sentence_grammatical,rating,partitive,"
              "strengthsome,redmention,redsubjecthood,redmodification")
RAW_ROWS = [
    'r1,"Some of the dogs barked.",5.5,True,4.2,0,1,0',
    'r2,"Some people like music of quality.",3.0,False,2.0,1,0,1',
    'r3,"The vet saw some cats.",4.25,False,3.5,0,0,0',
]


def test_import_converts_raw_csv(tmp_path):
    raw = tmp_path / "raw.csv"
    raw.write_text(RAW_HEADER + "\n" + "\n".join(RAW_ROWS) + "\n",
                   encoding="utf-8")
    out = tmp_path / "corpus.tsv"
    rc = main(["import", "--input", str(raw), "--output", str(out)])
    assert rc == 0
    records = {r.id: r for r in parse_corpus(out)}
    assert set(records) == {"r1", "r2", "r3"}

    r1 = records["r1"]
    assert r1.tokens == ["some", "of", "the", "dogs", "barked", "."]
    assert r1.some_index == 0
    assert r1.of_partitive_indices == [1]
    assert r1.of_other_indices == []
    assert r1.mean_rating == 5.5
    assert r1.features.partitive == 1
    assert r1.features.subjecthood == 1

    r2 = records["r2"]
    assert r2.of_partitive_indices == []
    assert r2.of_other_indices == [4]
    assert r2.features.linguistic_mention == 1

    r3 = records["r3"]
    assert r3.some_index == 3
    assert r3.features.utterance_length == 6


def test_import_recomputes_mean_from_participants(tmp_path):
    raw = tmp_path / "raw.csv"
    raw.write_text(
        "id,sentence,mean_rating,ratings,partitive,strength,mention,"
        "subjecthood,modification\n"
        'p1,"Some dogs ran.",9.9,"4,5,6",0,3.0,0,0,0\n',
        encoding="utf-8")
    out = tmp_path / "corpus.tsv"
    rc = main(["import", "--input", str(raw), "--output", str(out)])
    assert rc == 0
    record = parse_corpus(out)[0]
    assert record.mean_rating == 5.0  # raw ratings win over a bad mean
    assert record.participant_ratings == [4.0, 5.0, 6.0]


def test_import_missing_feature_column_exits_one(tmp_path, capsys):
    raw = tmp_path / "raw.csv"
    raw.write_text("id,sentence,rating\n"
                   'x,"Some dogs ran.",4.0\n', encoding="utf-8")
    out = tmp_path / "corpus.tsv"
    rc = main(["import", "--input", str(raw), "--output", str(out)])
    assert rc == 1
    err = capsys.readouterr().err
    assert "partitive" in err and "column_map" in err
    assert not out.exists()


def test_import_column_map_override(tmp_path):
    raw = tmp_path / "raw.csv"
    raw.write_text(
        "key,text,score,part,str,men,subj,mod\n"
        'k1,"Some dogs ran.",4.0,1,3.5,0,1,0\n', encoding="utf-8")
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"column_map": {
        "id": "key", "sentence": "text", "mean_rating": "score",
        "partitive": "part", "strength": "str", "mention": "men",
        "subjecthood": "subj", "modification": "mod"}}), encoding="utf-8")
    out = tmp_path / "corpus.tsv"
    rc = main(["import", "--config", str(cfg), "--input", str(raw),
               "--output", str(out)])
    assert rc == 0
    assert parse_corpus(out)[0].id == "k1"


# ---------------------------------------------------------------------------
# tune
# ---------------------------------------------------------------------------

def test_tune_ranks_grid(workspace, tmp_path, monkeypatch):
    monkeypatch.delenv("SIL_WORKERS", raising=False)
    grid = tmp_path / "grid.json"
    grid.write_text(json.dumps([
        {"hidden_dim": 3, "dropout_rate": 0.0},
        {"hidden_dim": 2, "dropout_rate": 0.1},
    ]), encoding="utf-8")
    out = tmp_path / "tune.csv"
    rc = main(["tune", "--corpus", str(workspace["corpus"]),
               "--glove", str(workspace["glove"]), "--grid", str(grid),
               "--k", "2", "--epochs", "1", "--batch-size", "8",
               "--seed", "0", "--out", str(out)])
    assert rc == 0
    rows = read_dicts(out)
    assert len(rows) == 2
    assert {"hidden_dim", "dropout_rate", "pooling", "with_context",
            "embedding", "fold_0_r", "fold_1_r", "mean_r",
            "error"} <= set(rows[0])
    assert float(rows[0]["mean_r"]) >= float(rows[1]["mean_r"])


# ---------------------------------------------------------------------------
# cv-predict + regress + probes + ceiling
# ---------------------------------------------------------------------------

def test_cv_predict_then_regress(workspace, tmp_path):
    preds = tmp_path / "cv.csv"
    rc = main(["cv-predict", "--corpus", str(workspace["corpus"]),
               "--glove", str(workspace["glove"]), "--hidden-dim", "3",
               "--epochs", "1", "--batch-size", "8", "--k", "3",
               "--seed", "0", "--out", str(preds)])
    assert rc == 0
    rows = read_dicts(preds)
    assert [r["id"] for r in rows] == \
        [r.id for r in workspace["records"]]  # corpus order

    coef = tmp_path / "coef.csv"
    rc = main(["regress", "--corpus", str(workspace["corpus"]),
               "--predictions", str(preds), "--bootstrap", "40",
               "--seed", "0", "--out", str(coef)])
    assert rc == 0
    crows = read_dicts(coef)
    names = [r["predictor"] for r in crows]
    assert names[0] == "intercept"
    assert names[-1] == "nn_prediction"
    assert "partitive" in names
    assert crows[-1]["beta_original"] == "nan"
    for row in crows[:-1]:
        assert float(row["ci_orig_lo"]) <= float(row["ci_orig_hi"])


def test_regress_interaction_flag(workspace, tmp_path):
    preds = tmp_path / "p.csv"
    with open(preds, "w", encoding="utf-8", newline="") as fh:
        fh.write("id,score\n")
        for i, r in enumerate(workspace["records"]):
            fh.write(f"{r.id},{0.3 + 0.01 * i}\n")
    out = tmp_path / "coef.csv"
    rc = main(["regress", "--corpus", str(workspace["corpus"]),
               "--predictions", str(preds), "--bootstrap", "0",
               "--interactions", "partitive:strength,mention:subjecthood",
               "--out", str(out)])
    assert rc == 0
    names = [r["predictor"] for r in read_dicts(out)]
    assert "partitive:strength" in names
    assert "mention:subjecthood" in names


def test_regress_bad_interaction_exits_one(workspace, tmp_path, capsys):
    preds = tmp_path / "p.csv"
    with open(preds, "w", encoding="utf-8", newline="") as fh:
        fh.write("id,score\n")
        for r in workspace["records"]:
            fh.write(f"{r.id},0.5\n")
    rc = main(["regress", "--corpus", str(workspace["corpus"]),
               "--predictions", str(preds), "--bootstrap", "0",
               "--interactions", "partitive-strength",
               "--out", str(tmp_path / "c.csv")])
    assert rc == 1
    assert "a:b" in capsys.readouterr().err


def test_minimal_pairs_command(workspace, trained, tmp_path):
    out = tmp_path / "variants.csv"
    groups = tmp_path / "groups.csv"
    rc = main(["minimal-pairs", "--model", str(trained),
               "--glove", str(workspace["glove"]), "--bootstrap", "10",
               "--seed", "0", "--out", str(out), "--groups", str(groups)])
    assert rc == 0
    rows = read_dicts(out)
    assert len(rows) == 800
    assert len({r["variant_id"] for r in rows}) == 800
    sample = rows[0]
    assert sample["text"].endswith(".")
    assert 0.0 < float(sample["score"]) < 1.0
    assert 1.0 <= float(sample["raw_rating"]) <= 7.0

    grows = read_dicts(groups)
    sizes = {(g["grouping"], g["level"]): int(g["n"]) for g in grows}
    assert sizes[("modification", "modified")] == 600
    assert sizes[("modification", "unmodified")] == 200


def test_attention_command(workspace, trained, tmp_path):
    out = tmp_path / "curves.csv"
    of_out = tmp_path / "of.csv"
    summary = tmp_path / "summary.csv"
    rc = main(["attention", "--model", str(trained),
               "--corpus", str(workspace["corpus"]),
               "--glove", str(workspace["glove"]), "--bootstrap", "10",
               "--seed", "0", "--out", str(out), "--of-out", str(of_out),
               "--summary", str(summary)])
    assert rc == 0
    rows = read_dicts(out)
    analyses = {r["analysis"] for r in rows}
    assert analyses == {"some_vs_other", "subjecthood_renormalized"}

    srows = dict(read_csv(summary)[1:])
    assert 0.0 < float(srows["some_mean_weight"]) <= 1.0
    assert int(srows["skipped_missing_some"]) == 0

    of_rows = read_dicts(of_out)
    raw_kinds = {r["kind"] for r in of_rows if r["mode"] == "raw"}
    assert "partitive" in raw_kinds  # synthetic partitives carry one of


def test_attention_requires_attention_model(workspace, tmp_path, capsys):
    out = tmp_path / "fs.bin"
    rc = main(["train", "--corpus", str(workspace["corpus"]),
               "--glove", str(workspace["glove"]), "--hidden-dim", "3",
               "--epochs", "1", "--batch-size", "8",
               "--pooling", "final_state", "--out", str(out)])
    assert rc == 0
    rc = main(["attention", "--model", str(out),
               "--corpus", str(workspace["corpus"]),
               "--glove", str(workspace["glove"]),
               "--out", str(tmp_path / "c.csv")])
    assert rc == 1
    assert "attention" in capsys.readouterr().err


def test_ceiling_command(workspace, tmp_path):
    out = tmp_path / "ceiling.csv"
    rc = main(["ceiling", "--corpus", str(workspace["corpus"]),
               "--bootstrap", "100", "--seed", "0", "--out", str(out)])
    assert rc == 0
    rows = dict(read_csv(out)[1:])
    assert int(rows["n_items"]) == 24
    assert 0.0 < float(rows["ceiling_r"]) <= 1.0
    assert int(rows["n_with_no_context_rating"]) == 24
    assert -1.0 <= float(rows["context_vs_no_context_r"]) <= 1.0


def test_ceiling_deterministic(workspace, tmp_path):
    values = []
    for name in ("a.csv", "b.csv"):
        out = tmp_path / name
        rc = main(["ceiling", "--corpus", str(workspace["corpus"]),
                   "--bootstrap", "100", "--seed", "3", "--out", str(out)])
        assert rc == 0
        values.append(out.read_bytes())
    assert values[0] == values[1]
