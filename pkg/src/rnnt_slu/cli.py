"""Command-line surface: corpus generation, training plans, decoding, scoring,
verification, and one-command trend experiments.

Exit codes: 0 success, 1 usage error, 2 data/config error, 3 verification
failure. All subcommands honor --seed and --threads; threads=1 is the
bit-reproducible mode (with more threads, gradient accumulation still runs in
submission order, but library-level parallelism may reorder float sums).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import verify
from .checkpoint import Provenance, checkpoint_hash, load_checkpoint, save_checkpoint
from .corpus_io import read_corpus, write_corpus
from .decode import greedy_decode
from .experiments import DEFAULT_SCALE, EXPERIMENTS, FAST_SCALE, run_experiment
from .metrics import MetricsError, levenshtein_counts, slot_counts, WerCounts, SlotCounts
from .network import ModelConfig, init_model
from .slu_data import DataError, SerializationSetting, default_asr_grammar, \
    default_intent_grammar, default_slu_grammar, generate_corpus, parse_hypothesis
from .synth import CharacterBank, attach_features, make_speaker_pool
from .training import AdaptationPlan, Stage, TrainingError, run_plan
from .vocab import DEFAULT_CHARSET, VocabError, char_vocab

USAGE_ERROR, DATA_ERROR, VERIFY_ERROR = 1, 2, 3

GRAMMARS = {
    "entity": default_slu_grammar,
    "intent": default_intent_grammar,
    "asr": default_asr_grammar,
}


class CliError(Exception):
    """Data or configuration problem; maps to exit code 2."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(USAGE_ERROR)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rnnt-slu", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--seed", type=int, default=1, help="global base seed")
    parser.add_argument("--threads", type=int, default=None,
                        help="worker threads (default: machine cores; 1 = exact repro)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-corpus", help="generate a toy corpus with synthesized features")
    p.add_argument("--kind", choices=sorted(GRAMMARS), required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--name", default=None, help="file stem (default: the kind)")
    p.add_argument("--speakers", type=int, default=8)
    p.add_argument("--speaker-prefix", default="spk")
    p.add_argument("--pool-seed", type=int, default=None)
    p.add_argument("--feature-dim", type=int, default=16)
    p.add_argument("--no-features", action="store_true", help="annotations only")

    p = sub.add_parser("pretrain", help="train a fresh model through a staged plan")
    p.add_argument("--config", type=Path, required=True, help="plan JSON")
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("adapt", help="continue training from a checkpoint")
    p.add_argument("--config", type=Path, required=True, help="plan JSON")
    p.add_argument("--init", type=Path, required=True, help="starting checkpoint")
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("decode", help="greedy-decode a corpus")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--features", type=Path, default=None)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--max-symbols-per-frame", type=int, default=5)

    p = sub.add_parser("score", help="score hypotheses against a reference corpus")
    p.add_argument("--hyp", type=Path, required=True)
    p.add_argument("--ref", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--per-utterance", type=Path, default=None, help="TSV breakdown")

    p = sub.add_parser("gradcheck", help="run the numerical verification suites")
    p.add_argument("--fast", action="store_true")

    p = sub.add_parser("experiment", help="run a named trend experiment")
    p.add_argument("name", choices=sorted(EXPERIMENTS))
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--num-seeds", type=int, default=3)
    p.add_argument("--scale", choices=["default", "fast"], default="default")
    return parser


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _cmd_gen_corpus(args) -> int:
    grammar = GRAMMARS[args.kind]()
    corpus = generate_corpus(grammar, args.n, seed=args.seed)
    if not args.no_features:
        bank = CharacterBank(DEFAULT_CHARSET, args.feature_dim,
                             seed=args.pool_seed if args.pool_seed is not None else args.seed)
        pool = make_speaker_pool(args.speaker_prefix, args.speakers, bank,
                                 seed=args.pool_seed if args.pool_seed is not None else args.seed)
        corpus = attach_features(corpus, pool)
    args.out.mkdir(parents=True, exist_ok=True)
    stem = args.name or args.kind
    jsonl = args.out / f"{stem}.jsonl"
    write_corpus(corpus, jsonl, None if args.no_features else args.out / f"{stem}.feat")
    print(f"wrote {len(corpus)} utterances to {jsonl}")
    return 0


def _load_plan(path: Path):
    try:
        cfg = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise CliError(f"cannot read plan config {path}: {e}") from None
    stages = []
    for i, raw in enumerate(cfg.get("stages", [])):
        try:
            extend = raw.get("extend")
            stages.append(Stage(
                name=raw.get("name", f"stage-{i}"),
                corpus=raw["corpus"],
                setting=SerializationSetting(raw["setting"]),
                epochs=int(raw["epochs"]),
                lr=float(raw["lr"]),
                momentum=float(raw.get("momentum", 0.9)),
                batch_size=int(raw.get("batch_size", 8)),
                seed=int(raw.get("seed", 0)),
                lr_decay=float(raw.get("lr_decay", 1.0)),
                lr_decay_every=int(raw.get("lr_decay_every", 1)),
                freeze=frozenset(raw.get("freeze", ())),
                extend=tuple(extend) if isinstance(extend, list) else None,
                auto_extend=extend == "auto",
                holdout=raw.get("holdout"),
            ))
        except (KeyError, ValueError) as e:
            raise CliError(f"stage {i} in {path} is invalid: {e}") from None
    if not stages:
        raise CliError(f"plan {path} defines no stages")
    return cfg, AdaptationPlan(stages=tuple(stages))


def _load_corpora(cfg, base: Path):
    corpora = {}
    for name, entry in cfg.get("corpora", {}).items():
        jsonl = base / entry["jsonl"] if not Path(entry["jsonl"]).is_absolute() \
            else Path(entry["jsonl"])
        features = entry.get("features")
        if features is not None:
            features = base / features if not Path(features).is_absolute() else Path(features)
        corpora[name] = read_corpus(jsonl, features)
    if not corpora:
        raise CliError("plan config defines no corpora")
    return corpora


def _model_from_config(cfg, seed: int):
    raw = cfg.get("model", {})
    vocab = char_vocab(raw.get("charset", DEFAULT_CHARSET))
    config = ModelConfig(
        vocab=vocab,
        feature_dim=int(raw.get("feature_dim", 16)),
        enc_layers=int(raw.get("enc_layers", 2)),
        enc_cells=int(raw.get("enc_cells", 32)),
        pred_embed_dim=int(raw.get("pred_embed_dim", 16)),
        pred_cells=int(raw.get("pred_cells", 48)),
        joint_dim=int(raw.get("joint_dim", 32)),
    )
    return init_model(config, seed=raw.get("init_seed", seed))


def _run_plan_command(args, model, parent_hash=None) -> int:
    cfg, plan = _load_plan(args.config)
    corpora = _load_corpora(cfg, args.config.parent)
    args.out.mkdir(parents=True, exist_ok=True)
    threads = args.threads or 1
    hashes = {"parent": parent_hash}

    def on_stage(idx, stage, stage_model, report):
        ckpt = args.out / f"stage-{idx:02d}-{stage.name}.ckpt.json"
        hashes["parent"] = save_checkpoint(
            stage_model, ckpt,
            Provenance(stage=stage.name, seed=stage.seed, parent_hash=hashes["parent"]))
        epochs_path = args.out / f"stage-{idx:02d}-{stage.name}.epochs.jsonl"
        with open(epochs_path, "w", encoding="utf-8") as fh:
            for epoch in report.to_dict()["epochs"]:
                fh.write(json.dumps(epoch, sort_keys=True) + "\n")
        print(f"stage {stage.name}: {stage.epochs} epochs -> {ckpt}")

    run_plan(model, plan, corpora, threads=threads, stage_callback=on_stage)
    return 0


def _cmd_pretrain(args) -> int:
    cfg, _ = _load_plan(args.config)
    model = _model_from_config(cfg, args.seed)
    return _run_plan_command(args, model)


def _cmd_adapt(args) -> int:
    model, _ = load_checkpoint(args.init)
    return _run_plan_command(args, model, parent_hash=checkpoint_hash(args.init))


def _cmd_decode(args) -> int:
    model, _ = load_checkpoint(args.model)
    corpus = read_corpus(args.corpus, args.features)
    rows = []
    for u in corpus:
        if u.features is None:
            raise CliError(f"utterance {u.uid} has no features to decode")
        hyp = greedy_decode(model, u.features, args.max_symbols_per_frame)
        parsed = parse_hypothesis(hyp.symbols, model.vocab)
        rows.append(json.dumps({
            "id": u.uid,
            "symbol_ids": list(hyp.symbols),
            "frames": list(hyp.frames),
            "score": hyp.score,
            "text": " ".join(parsed.words),
            "entities": [{"label": e.label, "value": e.value_text} for e in parsed.entities],
            "intent": parsed.intent,
            "recoveries": list(parsed.recoveries),
        }, sort_keys=True))
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text("\n".join(rows) + ("\n" if rows else ""), encoding="utf-8")
    print(f"decoded {len(rows)} utterances to {args.out}")
    return 0


def _cmd_score(args) -> int:
    refs = read_corpus(args.ref)
    try:
        hyp_rows = [json.loads(line) for line in
                    args.hyp.read_text(encoding="utf-8").splitlines() if line.strip()]
    except json.JSONDecodeError as e:
        raise CliError(f"cannot parse hypotheses {args.hyp}: {e}") from None
    by_id = {row["id"]: row for row in hyp_rows}
    missing = [u.uid for u in refs if u.uid not in by_id]
    if missing:
        raise CliError(f"hypotheses missing for {len(missing)} utterances, e.g. {missing[:3]}")

    wer_total, slots_total = WerCounts(), SlotCounts()
    intents_scored = intents_correct = 0
    saw_wer = saw_slots = False
    per_utt = []
    for u in refs:
        row = by_id[u.uid]
        entry = {"id": u.uid}
        if u.words:
            counts = levenshtein_counts([w.lower() for w in u.words], row.get("text", "").split())
            wer_total.add(counts)
            saw_wer = True
            entry["wer_errors"] = counts.errors
        if u.entities is not None:
            counts = slot_counts(
                [(e["label"], e["value"]) for e in row.get("entities", [])],
                [(e.label, e.value_text) for e in u.entities])
            slots_total.add(counts)
            saw_slots = True
            entry.update(tp=counts.true_positives, fp=counts.false_positives,
                         fn=counts.false_negatives)
        if u.intent is not None:
            intents_scored += 1
            hit = row.get("intent") == u.intent
            intents_correct += int(hit)
            entry["intent_correct"] = int(hit)
        per_utt.append(entry)

    report: dict = {"utterances": len(refs)}
    if saw_wer and wer_total.ref_words:
        report["wer"] = {"percent": wer_total.wer, "hits": wer_total.hits,
                         "substitutions": wer_total.substitutions,
                         "deletions": wer_total.deletions,
                         "insertions": wer_total.insertions,
                         "reference_words": wer_total.ref_words}
    if saw_slots:
        report["slots"] = {"f1": slots_total.f1, "precision": slots_total.precision,
                           "recall": slots_total.recall,
                           "true_positives": slots_total.true_positives,
                           "false_positives": slots_total.false_positives,
                           "false_negatives": slots_total.false_negatives}
    if intents_scored:
        report["intents"] = {"accuracy": 100.0 * intents_correct / intents_scored,
                             "scored": intents_scored, "correct": intents_correct}
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text(json.dumps(report, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    print(json.dumps(report, sort_keys=True))
    if args.per_utterance is not None:
        keys = sorted({k for e in per_utt for k in e} - {"id"})
        lines = ["\t".join(["id"] + keys)]
        for e in per_utt:
            lines.append("\t".join([str(e.get(k, "")) for k in ["id"] + keys]))
        args.per_utterance.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return 0


def _cmd_gradcheck(args) -> int:
    results = verify.run_all(fast=args.fast)
    for r in results:
        print(r.line())
    return 0 if all(r.passed for r in results) else VERIFY_ERROR


def _cmd_experiment(args) -> int:
    seeds = [args.seed + k for k in range(args.num_seeds)]
    scale = FAST_SCALE if args.scale == "fast" else DEFAULT_SCALE
    result = run_experiment(args.name, seeds, scale=scale,
                            threads=args.threads or 1, out_dir=args.out)
    print(result.table())
    return 0


COMMANDS = {
    "gen-corpus": _cmd_gen_corpus,
    "pretrain": _cmd_pretrain,
    "adapt": _cmd_adapt,
    "decode": _cmd_decode,
    "score": _cmd_score,
    "gradcheck": _cmd_gradcheck,
    "experiment": _cmd_experiment,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (CliError, DataError, VocabError, TrainingError, MetricsError,
            FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return DATA_ERROR


if __name__ == "__main__":
    sys.exit(main())
