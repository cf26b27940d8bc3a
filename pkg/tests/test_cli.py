"""End-to-end CLI coverage: exit codes, artifacts, determinism, hash chains."""

import json

import numpy as np
import pytest

from rnnt_slu.checkpoint import checkpoint_hash, load_checkpoint, save_checkpoint
from rnnt_slu.cli import main
from rnnt_slu.corpus_io import read_corpus, write_corpus
from rnnt_slu.network import init_model

from conftest import small_config


def run_cli(*argv):
    return main([str(a) for a in argv])


def test_usage_error_exit_code_1(capsys):
    with pytest.raises(SystemExit) as exc:
        run_cli("gen-corpus", "--kind", "entity")  # missing --n/--out
    assert exc.value.code == 1
    assert "error" in capsys.readouterr().err


def test_unknown_subcommand_exit_code_1():
    with pytest.raises(SystemExit) as exc:
        run_cli("frobnicate")
    assert exc.value.code == 1


def test_gen_corpus_writes_and_is_deterministic(tmp_path):
    for sub in ("a", "b"):
        code = run_cli("--seed", 9, "gen-corpus", "--kind", "entity", "--n", 12,
                       "--out", tmp_path / sub, "--speakers", 3)
        assert code == 0
    assert (tmp_path / "a" / "entity.jsonl").read_bytes() == \
        (tmp_path / "b" / "entity.jsonl").read_bytes()
    assert (tmp_path / "a" / "entity.feat").read_bytes() == \
        (tmp_path / "b" / "entity.feat").read_bytes()
    corpus = read_corpus(tmp_path / "a" / "entity.jsonl")
    assert len(corpus) == 12 and corpus[0].features is not None


def test_missing_config_exit_code_2(tmp_path, capsys):
    code = run_cli("pretrain", "--config", tmp_path / "nope.json", "--out", tmp_path / "o")
    assert code == 2
    assert "error" in capsys.readouterr().err


def write_plan(tmp_path, stages, model=None):
    cfg = {
        "model": model or {"feature_dim": 8, "enc_layers": 1, "enc_cells": 6,
                           "pred_embed_dim": 4, "pred_cells": 6, "joint_dim": 6},
        "corpora": {"train": {"jsonl": "train.jsonl"}},
        "stages": stages,
    }
    path = tmp_path / "plan.json"
    path.write_text(json.dumps(cfg))
    return path


def test_pretrain_adapt_decode_score_pipeline(tmp_path, intent_corpus_16):
    write_corpus(intent_corpus_16, tmp_path / "train.jsonl")
    dim = intent_corpus_16[0].features.shape[1]
    plan = write_plan(tmp_path, [
        {"name": "pt", "corpus": "train", "setting": "transcript",
         "epochs": 1, "lr": 0.02, "seed": 3},
    ], model={"feature_dim": dim, "enc_layers": 1, "enc_cells": 6,
              "pred_embed_dim": 4, "pred_cells": 6, "joint_dim": 6})
    out1 = tmp_path / "pt"
    assert run_cli("--seed", 5, "pretrain", "--config", plan, "--out", out1) == 0
    ckpt = out1 / "stage-00-pt.ckpt.json"
    assert ckpt.exists()
    epochs = [json.loads(l) for l in (out1 / "stage-00-pt.epochs.jsonl").read_text().splitlines()]
    assert len(epochs) == 1 and "train_loss" in epochs[0] and "wall_clock_s" in epochs[0]

    plan2 = tmp_path / "plan2.json"
    plan2.write_text(json.dumps({
        "corpora": {"train": {"jsonl": "train.jsonl"}},
        "stages": [{"name": "slu", "corpus": "train", "setting": "intent-only",
                    "epochs": 1, "lr": 0.02, "seed": 4, "extend": "auto",
                    "freeze": ["transcription"]}],
    }))
    out2 = tmp_path / "adapt"
    assert run_cli("adapt", "--config", plan2, "--init", ckpt, "--out", out2) == 0
    adapted = out2 / "stage-00-slu.ckpt.json"
    model, prov = load_checkpoint(adapted)
    assert prov.parent_hash == checkpoint_hash(ckpt)
    assert any(s.startswith("INT-") for s in model.vocab.symbols)
    # frozen transcription carried over bit-exactly through save/load
    parent, _ = load_checkpoint(ckpt)
    for name, arr in parent.params.items():
        if name.startswith("transcription."):
            assert model.params[name].tobytes() == arr.tobytes()

    hyp = tmp_path / "hyp.jsonl"
    assert run_cli("decode", "--model", adapted, "--corpus", tmp_path / "train.jsonl",
                   "--out", hyp) == 0
    rows = [json.loads(l) for l in hyp.read_text().splitlines()]
    assert len(rows) == len(intent_corpus_16)
    assert {"id", "symbol_ids", "text", "entities", "intent", "score"} <= set(rows[0])

    report_path = tmp_path / "report.json"
    assert run_cli("score", "--hyp", hyp, "--ref", tmp_path / "train.jsonl",
                   "--out", report_path, "--per-utterance", tmp_path / "per.tsv") == 0
    report = json.loads(report_path.read_text())
    assert report["utterances"] == len(intent_corpus_16)
    assert "intents" in report and "wer" in report
    assert (tmp_path / "per.tsv").read_text().startswith("id\t")


def test_score_perfect_hypotheses(tmp_path, entity_corpus_12):
    write_corpus(entity_corpus_12, tmp_path / "ref.jsonl")
    rows = []
    for u in entity_corpus_12:
        rows.append(json.dumps({
            "id": u.uid,
            "text": u.text,
            "entities": [{"label": e.label, "value": e.value_text} for e in u.entities],
            "intent": u.intent,
        }))
    hyp = tmp_path / "hyp.jsonl"
    hyp.write_text("\n".join(rows) + "\n")
    out = tmp_path / "report.json"
    assert run_cli("score", "--hyp", hyp, "--ref", tmp_path / "ref.jsonl", "--out", out) == 0
    report = json.loads(out.read_text())
    assert report["wer"]["percent"] == 0.0
    assert report["slots"]["f1"] == 1.0
    assert report["intents"]["accuracy"] == 100.0


def test_score_missing_hypothesis_exit_2(tmp_path, entity_corpus_12):
    write_corpus(entity_corpus_12, tmp_path / "ref.jsonl")
    hyp = tmp_path / "hyp.jsonl"
    hyp.write_text("")
    assert run_cli("score", "--hyp", hyp, "--ref", tmp_path / "ref.jsonl",
                   "--out", tmp_path / "r.json") == 2


def test_decode_rejects_featureless_corpus(tmp_path, intent_corpus_16):
    import dataclasses
    bare = [dataclasses.replace(u, features=None) for u in intent_corpus_16[:2]]
    write_corpus(bare, tmp_path / "bare.jsonl")
    model = init_model(small_config(), seed=1)
    ckpt = tmp_path / "m.ckpt.json"
    save_checkpoint(model, ckpt)
    assert run_cli("decode", "--model", ckpt, "--corpus", tmp_path / "bare.jsonl",
                   "--out", tmp_path / "h.jsonl") == 2


def test_gradcheck_fast_passes(capsys):
    assert run_cli("gradcheck", "--fast") == 0
    out = capsys.readouterr().out
    assert "lattice-oracle" in out and "model-gradients" in out
    assert "FAIL" not in out
