"""CSV/JSON report writers.  Every writer refuses to overwrite unless ``force``."""

from __future__ import annotations

import csv
import hashlib
import io
import json
from pathlib import Path

import numpy as np

from .aes import SHIFT_ROWS_DST
from .cpa import AttackReport, MtdResult


def key_fingerprint(key) -> str:
    """First 16 hex digits of SHA-256 over the key; identifies a key without revealing it."""
    return hashlib.sha256(bytes(np.asarray(key, dtype=np.uint8))).hexdigest()[:16]


def write_text(path: Path, text: str, force: bool = False) -> Path:
    path = Path(path)
    if path.exists() and not force:
        raise FileExistsError(f"{path} exists (use --force to overwrite)")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path


def _csv(rows: list[list], header: list[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _fmt(x) -> str:
    return "" if x is None else (f"{x:.6f}" if isinstance(x, float) else str(x))


def byte_table(report: AttackReport) -> str:
    """One row per round-10 key byte: recovered value, rank-1 score, margin, per-byte MTD."""
    rows = []
    for q in range(16):
        p = int(np.flatnonzero(SHIFT_ROWS_DST == q)[0])
        c = report.curves[p]
        mtd = report.per_byte_mtd[q] if report.per_byte_mtd is not None else None
        rows.append([q, p, f"{c.winning_guess:02x}", _fmt(float(c.per_guess_max_abs_rho[c.winning_guess])),
                     _fmt(c.rho_margin), _fmt(mtd)])
    return _csv(rows, ["key_byte", "register_byte", "recovered", "rho_rank1", "margin", "mtd"])


def summary(report: AttackReport, **meta) -> str:
    doc = {
        "recovered_round10_key": bytes(report.recovered_round10_key).hex(),
        "recovered_master_key": bytes(report.recovered_master_key).hex(),
        "n_traces": report.n_traces,
        "use_window": report.use_window,
        "bytes_correct": report.bytes_correct,
        "mtd": report.mtd,
        "per_byte_mtd": report.per_byte_mtd,
        "trial_seed": report.trial_seed,
    }
    doc.update(meta)
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def curve_table(res: MtdResult) -> str:
    """Correct-guess and best wrong-guess scores against trace count, one row per (n, register byte)."""
    rows = []
    for gi, n in enumerate(res.grid):
        for p in range(16):
            rows.append([n, p, _fmt(float(res.correct_rho[gi, p])), _fmt(float(res.best_wrong_rho[gi, p])),
                         int(res.correct[gi, p])])
    return _csv(rows, ["n_traces", "register_byte", "correct_rho", "best_wrong_rho", "correct"])


def sweep_table(rows: list[dict]) -> str:
    header = ["axis", "value", "median_mtd", "success_rate", "bytes_recovered", "trial_mtds", "per_sensor_mtds"]
    out = []
    for r in rows:
        out.append([r["axis"], r["value"], _fmt(r["median_mtd"]), _fmt(r["success_rate"]),
                    " ".join(map(str, r["bytes_recovered"])), " ".join(_fmt(m) or "-" for m in r["trial_mtds"]),
                    ";".join(" ".join(_fmt(m) or "-" for m in per) for per in r["per_sensor_mtds"])])
    return _csv(out, header)
