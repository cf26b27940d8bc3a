"""Corpus persistence: JSON Lines annotations plus a binary feature sidecar.

Each JSONL record holds {id, speaker, text?, entities?, intent?, features_ref?}.
The sidecar starts with an 8-byte little-endian header length, a UTF-8 JSON
index {utterance id -> {offset, T, F}} with byte offsets into the data
section, then the packed little-endian float32 frames.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .slu_data import AnnotatedUtterance, DataError, EntitySpan

_HEADER_LEN = struct.Struct("<Q")


def utterance_to_record(u: AnnotatedUtterance, features_ref: str | None = None) -> dict:
    rec: dict = {"id": u.uid, "speaker": u.speaker}
    if u.words is not None:
        rec["text"] = u.text
    if u.entities is not None:
        rec["entities"] = [
            {"label": e.label, "value": e.value_text, "position": e.position}
            for e in u.entities
        ]
    if u.intent is not None:
        rec["intent"] = u.intent
    if features_ref is not None:
        rec["features_ref"] = features_ref
    return rec


def record_to_utterance(rec: dict, features: np.ndarray | None = None) -> AnnotatedUtterance:
    entities = None
    if "entities" in rec:
        entities = tuple(
            EntitySpan(label=e["label"], value=tuple(e["value"].split()),
                       position=e.get("position", 0))
            for e in rec["entities"]
        )
    return AnnotatedUtterance(
        uid=rec["id"],
        speaker=rec.get("speaker"),
        words=tuple(rec["text"].split()) if "text" in rec else None,
        entities=entities,
        intent=rec.get("intent"),
        features=features,
    )


def write_corpus(corpus, jsonl_path, features_path=None) -> None:
    """Write annotations (and, when any utterance has features, the sidecar)."""
    jsonl_path = Path(jsonl_path)
    with_features = [u for u in corpus if u.features is not None]
    features_ref = None
    if with_features:
        if features_path is None:
            features_path = jsonl_path.with_suffix(".feat")
        features_ref = Path(features_path).name
        _write_features(with_features, features_path)
    lines = [
        json.dumps(
            utterance_to_record(u, features_ref if u.features is not None else None),
            sort_keys=True,
        )
        for u in corpus
    ]
    jsonl_path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def _write_features(corpus, path) -> None:
    index = {}
    offset = 0
    blobs = []
    for u in corpus:
        feats = np.ascontiguousarray(u.features, dtype="<f4")
        t, f = feats.shape
        index[u.uid] = {"offset": offset, "T": t, "F": f}
        blob = feats.tobytes()
        blobs.append(blob)
        offset += len(blob)
    header = json.dumps(index, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_HEADER_LEN.pack(len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def read_features(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        (header_len,) = _HEADER_LEN.unpack(fh.read(_HEADER_LEN.size))
        index = json.loads(fh.read(header_len).decode("utf-8"))
        data = fh.read()
    out = {}
    for uid, entry in index.items():
        t, f = entry["T"], entry["F"]
        start = entry["offset"]
        arr = np.frombuffer(data, dtype="<f4", count=t * f, offset=start)
        out[uid] = arr.reshape(t, f).copy()
    return out


def read_corpus(jsonl_path, features_path=None) -> list[AnnotatedUtterance]:
    """Load a corpus; features are pulled from the referenced (or given) sidecar."""
    jsonl_path = Path(jsonl_path)
    records = [
        json.loads(line)
        for line in jsonl_path.read_text(encoding="utf-8").splitlines()
        if line.strip()
    ]
    features: dict[str, np.ndarray] = {}
    refs = {rec["features_ref"] for rec in records if "features_ref" in rec}
    if features_path is not None:
        features = read_features(features_path)
    elif refs:
        if len(refs) > 1:
            raise DataError(f"corpus references multiple feature files: {sorted(refs)}")
        features = read_features(jsonl_path.parent / refs.pop())
    return [record_to_utterance(rec, features.get(rec["id"])) for rec in records]
