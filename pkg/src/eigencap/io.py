"""CSV and JSON-lines serialization.

Every CSV starts with ``# key=value`` provenance lines (at least the spec
hash) followed by a header row. Floats are written with ``repr`` so that
reading a file back gives the same bits.
"""

from __future__ import annotations

import csv
import io as _io
import json
import math
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .sampling import FeatureMatrix, ShotRecord, from_shot_records, shot_records
from .spectral import SpectralResult


class IngestError(ValueError):
    """Malformed counts file; the message names the offending line."""


def fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(v)


def render_csv(header: Sequence[str], rows: Iterable[Sequence], meta: Mapping[str, object] = ()) -> str:
    buf = _io.StringIO()
    for k, v in dict(meta).items():
        buf.write(f"# {k}={v}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def write_csv(path, header, rows, meta=()) -> Path:
    path = Path(path)
    path.write_text(render_csv(header, rows, meta))
    return path


def read_csv(path) -> tuple[dict, list[str], list[list[str]]]:
    """Returns (meta, header, rows); rows stay as strings."""
    meta, lines = {}, []
    with open(path, newline="") as fh:
        for line in fh:
            if line.startswith("#"):
                k, _, v = line[1:].strip().partition("=")
                meta[k.strip()] = v.strip()
            elif line.strip():
                lines.append(line)
    reader = csv.reader(lines)
    header = next(reader, None)
    if header is None:
        raise ValueError(f"{path}: no header row")
    return meta, header, list(reader)


def write_features(path, F: FeatureMatrix, meta=()) -> Path:
    m = {"spec_hash": F.spec_hash or "none", "shots": "inf" if F.is_expected else F.shots}
    m.update(dict(meta))
    header = ["u"] + [f"X{k}" for k in range(F.K)]
    rows = ([u, *row] for u, row in zip(F.inputs, F.values))
    return write_csv(path, header, rows, m)


def read_features(path) -> FeatureMatrix:
    meta, header, rows = read_csv(path)
    if not header or header[0] != "u" or header[1:] != [f"X{k}" for k in range(len(header) - 1)]:
        raise ValueError(f"{path}: expected header u,X0..X{{K-1}}")
    data = np.array([[float(v) for v in r] for r in rows], dtype=float).reshape(len(rows), len(header))
    shots = meta.get("shots", "inf")
    shots = None if shots in ("inf", "expected", "") else int(shots)
    spec_hash = meta.get("spec_hash", "")
    return FeatureMatrix(data[:, 0], data[:, 1:], shots, "" if spec_hash == "none" else spec_hash)


def record_line(rec: ShotRecord) -> str:
    d = {"u": rec.u, "S": rec.S}
    if rec.K is not None:
        d["K"] = rec.K
    d["counts"] = {str(k): v for k, v in rec.counts.items()}
    return json.dumps(d, separators=(",", ":"))


def write_records(path, records: Sequence[ShotRecord], meta=()) -> Path:
    path = Path(path)
    head = "".join(f"# {k}={v}\n" for k, v in dict(meta).items())
    path.write_text(head + "".join(record_line(r) + "\n" for r in records))
    return path


def _int_field(v, what, lineno):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or v != int(v):
        raise IngestError(f"line {lineno}: {what} must be an integer, got {v!r}")
    return int(v)


def parse_records(lines: Iterable[str], K: int | None = None, source: str = "<input>"):
    """Validate count records; returns (records, meta).

    Blank lines and ``#`` comment lines are skipped. Errors raise
    :class:`IngestError` naming the line.
    """
    records, meta = [], {}
    first_S = None
    for lineno, line in enumerate(lines, 1):
        s = line.strip()
        if not s:
            continue
        if s.startswith("#"):
            k, _, v = s[1:].strip().partition("=")
            meta[k.strip()] = v.strip()
            continue
        where = f"{source}: line {lineno}"
        try:
            d = json.loads(s)
        except json.JSONDecodeError as exc:
            raise IngestError(f"{where}: invalid JSON ({exc.msg})") from None
        if not isinstance(d, dict):
            raise IngestError(f"{where}: expected an object")
        missing = {"u", "S", "counts"} - set(d)
        if missing:
            raise IngestError(f"{where}: missing field(s) {sorted(missing)}")
        extra = set(d) - {"u", "S", "K", "counts"}
        if extra:
            raise IngestError(f"{where}: unknown field(s) {sorted(extra)}")
        if isinstance(d["u"], bool) or not isinstance(d["u"], (int, float)):
            raise IngestError(f"{where}: u must be a number")
        S = _int_field(d["S"], "S", lineno)
        if S < 1:
            raise IngestError(f"{where}: S must be >= 1")
        if first_S is None:
            first_S = (S, lineno)
        elif S != first_S[0]:
            raise IngestError(f"{where}: mixed shot counts, S={S} here but S={first_S[0]} "
                              f"on line {first_S[1]}; all records must share one S")
        rec_K = K
        if "K" in d:
            rec_K = _int_field(d["K"], "K", lineno)
            if K is not None and rec_K != K:
                raise IngestError(f"{where}: K={rec_K} disagrees with K={K}")
            K = rec_K
        if not isinstance(d["counts"], dict):
            raise IngestError(f"{where}: counts must be an object index -> count")
        counts = {}
        for key, c in d["counts"].items():
            try:
                idx = int(key)
            except ValueError:
                raise IngestError(f"{where}: outcome index {key!r} is not an integer") from None
            c = _int_field(c, f"count for index {idx}", lineno)
            if idx < 0 or c < 0:
                raise IngestError(f"{where}: negative index or count ({idx}: {c})")
            if rec_K is not None and idx >= rec_K:
                raise IngestError(f"{where}: outcome index {idx} >= K={rec_K}")
            counts[idx] = counts.get(idx, 0) + c
        total = sum(counts.values())
        if total != S:
            raise IngestError(f"{where}: counts sum to {total}, expected S={S}")
        records.append((lineno, float(d["u"]), counts, S))
    if not records:
        raise IngestError(f"{source}: no records")
    if K is not None:
        for lineno, _, counts, _ in records:
            bad = [i for i in counts if i >= K]
            if bad:
                raise IngestError(f"{source}: line {lineno}: outcome index {max(bad)} >= K={K}")
    out = [ShotRecord(u=u, counts=c, S=S, K=K) for _, u, c, S in records]
    return out, meta


def ingest_counts(path, K: int | None = None) -> tuple[FeatureMatrix, list[ShotRecord]]:
    """Load an external counts file as a sampled FeatureMatrix plus its records."""
    path = Path(path)
    with open(path) as fh:
        records, meta = parse_records(fh, K=K, source=str(path))
    spec_hash = meta.get("spec_hash", "")
    F = from_shot_records(records, K=K, spec_hash="" if spec_hash == "none" else spec_hash)
    return F, records


def export_counts(path, F: FeatureMatrix, meta=()) -> Path:
    m = {"spec_hash": F.spec_hash or "none"}
    m.update(dict(meta))
    return write_records(path, shot_records(F), m)


def spectrum_rows(res: SpectralResult):
    bad = set(res.uncorrectable)
    for k in range(res.K):
        yield [k, res.beta2[k], res.alpha[k], res.corrected, k in bad]


SPECTRUM_HEADER = ["k", "beta2", "alpha", "corrected", "uncorrectable"]


def write_spectrum(path, res: SpectralResult, meta=()) -> Path:
    m = {"spec_hash": res.spec_hash or "none", "N": res.N, "S": fmt(res.S)}
    m.update(dict(meta))
    return write_csv(path, SPECTRUM_HEADER, spectrum_rows(res), m)


def read_spectrum(path) -> dict:
    _, header, rows = read_csv(path)
    cols = {h: [r[i] for r in rows] for i, h in enumerate(header)}
    return {
        "beta2": np.array([float(v) for v in cols["beta2"]]),
        "alpha": np.array([float(v) for v in cols["alpha"]]),
        "uncorrectable": tuple(int(k) for k, v in zip(cols["k"], cols["uncorrectable"]) if v == "1"),
    }


def write_matrix(path, M: np.ndarray, prefix: str, meta=(), index: Sequence | None = None,
                 index_name: str = "row") -> Path:
    M = np.asarray(M, dtype=float)
    header = [index_name] + [f"{prefix}{k}" for k in range(M.shape[1])]
    idx = range(M.shape[0]) if index is None else index
    return write_csv(path, header, ([i, *row] for i, row in zip(idx, M)), meta)
