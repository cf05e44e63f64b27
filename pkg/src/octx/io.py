"""Readers and writers for every on-disk format.

Writers are byte-deterministic: JSON is emitted with sorted keys and floats
use ``repr``, so identical inputs give identical files. Readers raise
``MissingInputError`` for absent files and ``MalformedFileError`` with the
offending line number for bad content.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .errors import MalformedFileError, MissingInputError
from .glcm import CSV_COLUMNS, N_FEATURES

FEATURE_HEADER = ("patch_id",) + CSV_COLUMNS + ("score", "label")
SEARCH_HEADER = ("iteration", "peak_value", "low_retrieval", "high_retrieval")
AGENT_HEADER = ("epoch", "stream", "removed", "f1", "reward")
ROC_HEADER = ("fpr", "tpr", "threshold")
SNR_HEADER = ("t", "snr_db")
EVENT_HEADER = ("t", "event", "scheme", "frames", "delivered")
SWEEP_HEADER = ("config", "fps", "accuracy", "index")
PREDICTION_HEADER = ("patch_id", "frame_id", "col", "row", "pred", "score", "gt")


def _exists(path):
    p = Path(path)
    if not p.is_file():
        raise MissingInputError(f"input file not found: {p}")
    return p


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return repr(v) if math.isfinite(v) else str(v)
    if isinstance(v, np.integer):
        return str(int(v))
    return str(v)


def _plain(obj):
    """Convert numpy scalars/arrays and tuples so ``json`` can serialize them."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def write_json(path, obj):
    text = json.dumps(_plain(obj), indent=2, sort_keys=True, allow_nan=True)
    Path(path).write_text(text + "\n")


def read_json(path):
    p = _exists(path)
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise MalformedFileError(exc.msg, p, exc.lineno) from exc


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_cell(v) for v in r])


def read_csv(path, header):
    """Rows as lists of strings after checking the header; line numbers are 1-based."""
    p = _exists(path)
    with open(p, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != tuple(header):
        raise MalformedFileError(f"expected header {','.join(header)}", p, 1)
    out = []
    for n, r in enumerate(rows[1:], start=2):
        if len(r) != len(header):
            raise MalformedFileError(f"expected {len(header)} fields, got {len(r)}", p, n)
        out.append((n, r))
    return p, out


def _num(p, n, text, kind=float):
    try:
        return kind(text)
    except ValueError:
        raise MalformedFileError(f"not a number: {text!r}", p, n) from None


# PGM (binary P5, 8-bit)

def write_pgm(path, img):
    a = np.asarray(img)
    if a.ndim != 2 or a.dtype != np.uint8:
        raise ValueError("PGM writer needs a 2-D uint8 image")
    h, w = a.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(a).tobytes())


def read_pgm(path):
    p = _exists(path)
    data = p.read_bytes()
    tokens = []
    pos = 0
    line = 1
    while len(tokens) < 4:
        if pos >= len(data):
            raise MalformedFileError("truncated PGM header", p, line)
        c = data[pos:pos + 1]
        if c == b"#":
            while pos < len(data) and data[pos:pos + 1] != b"\n":
                pos += 1
        elif c.isspace():
            line += c == b"\n"
            pos += 1
        else:
            start = pos
            while pos < len(data) and not data[pos:pos + 1].isspace():
                pos += 1
            tokens.append(data[start:pos].decode("ascii", "replace"))
    pos += 1  # single whitespace byte after maxval
    if tokens[0] != "P5":
        raise MalformedFileError(f"not a binary PGM (magic {tokens[0]!r})", p, 1)
    try:
        w, h, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise MalformedFileError("non-integer PGM header field", p, line) from None
    if maxval != 255 or w < 1 or h < 1:
        raise MalformedFileError("only 8-bit PGM (maxval 255) is supported", p, line)
    body = data[pos:pos + w * h]
    if len(body) != w * h:
        raise MalformedFileError(f"PGM body has {len(body)} bytes, expected {w * h}", p, line)
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w).copy()


# Patch feature dump

def write_features(path, patch_ids, feats, scores, labels):
    rows = ([int(i)] + [float(v) for v in f] + [float(s), int(bool(g))]
            for i, f, s, g in zip(patch_ids, feats, scores, labels))
    write_csv(path, FEATURE_HEADER, rows)


def read_features(path):
    """``(patch_ids, features (n, 22), scores, labels)``."""
    p, rows = read_csv(path, FEATURE_HEADER)
    ids = np.array([_num(p, n, r[0], int) for n, r in rows], dtype=np.int64)
    feats = np.array([[_num(p, n, v) for v in r[1:1 + N_FEATURES]] for n, r in rows],
                     dtype=np.float64).reshape(len(rows), N_FEATURES)
    scores = np.array([_num(p, n, r[-2]) for n, r in rows], dtype=np.float64)
    labels = np.array([_num(p, n, r[-1], int) for n, r in rows], dtype=np.int64).astype(bool)
    return ids, feats, scores, labels


# Traces and logs

def write_search_trace(path, trace):
    write_csv(path, SEARCH_HEADER, trace)


def read_search_trace(path):
    p, rows = read_csv(path, SEARCH_HEADER)
    return [(_num(p, n, r[0], int), _num(p, n, r[1]), _num(p, n, r[2]), _num(p, n, r[3]))
            for n, r in rows]


def write_agent_trace(path, trace):
    write_csv(path, AGENT_HEADER, trace)


def write_roc(path, fpr, tpr, thr):
    write_csv(path, ROC_HEADER, zip(fpr, tpr, thr))


def read_roc(path):
    p, rows = read_csv(path, ROC_HEADER)
    return tuple(np.array([_num(p, n, r[k]) for n, r in rows]) for k in range(3))


def write_trace(path, trace):
    write_csv(path, SNR_HEADER, zip(trace.t, trace.snr_db))


def read_trace(path):
    from .multirate import ChannelTrace

    p, rows = read_csv(path, SNR_HEADER)
    if not rows:
        from .errors import EmptyTraceError
        raise EmptyTraceError(f"{p}: trace has no samples")
    t = np.array([_num(p, n, r[0]) for n, r in rows])
    s = np.array([_num(p, n, r[1]) for n, r in rows])
    bad = np.nonzero(np.diff(t) <= 0)[0]
    if bad.size:
        raise MalformedFileError("trace times must be strictly increasing", p, rows[bad[0] + 1][0])
    return ChannelTrace(t, s)


def write_events(path, events):
    write_csv(path, EVENT_HEADER, events)


def write_sweep(path, rows):
    write_csv(path, SWEEP_HEADER, rows)


def read_sweep(path):
    p, rows = read_csv(path, SWEEP_HEADER)
    return [(r[0], _num(p, n, r[1]), _num(p, n, r[2]), _num(p, n, r[3])) for n, r in rows]


def write_heatmap(path, field):
    """One CSV per class field: rows of the patch grid, comma-separated values."""
    f = np.asarray(field, dtype=np.float64)
    with open(path, "w") as fh:
        for row in f:
            fh.write(",".join(_cell(v) for v in row) + "\n")


def read_heatmap(path):
    p = _exists(path)
    rows = []
    for n, line in enumerate(p.read_text().splitlines(), start=1):
        rows.append([_num(p, n, v) for v in line.split(",")])
    if len({len(r) for r in rows}) > 1:
        raise MalformedFileError("ragged heatmap grid", p, len(rows))
    return np.array(rows, dtype=np.float64)
