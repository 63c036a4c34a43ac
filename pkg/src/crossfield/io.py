"""Output writers: CSV tables, line-delimited JSON records and the run manifest."""
from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np


def plain(obj):
    """Recursively turn numpy values into JSON-ready Python values."""
    if isinstance(obj, dict):
        return {str(k): plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return plain(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return None if np.isnan(obj) else ("inf" if obj > 0 else "-inf")
    return obj


def write_csv(path: Path, about: str, header: list[str], rows) -> Path:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        fh.write(f"# {about}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def write_jsonl(path: Path, about: str, records) -> Path:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        fh.write(json.dumps({"about": about}) + "\n")
        for rec in records:
            fh.write(json.dumps(plain(rec), sort_keys=True) + "\n")
    return path


def sha256_of(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out_dir: Path, payload: dict, files: list[tuple[Path, str]]) -> Path:
    """``manifest.json`` listing every output with its checksum and the property it probes."""
    out_dir = Path(out_dir)
    entries = [{"file": p.name, "sha256": sha256_of(p), "bytes": p.stat().st_size, "property": about}
               for p, about in files]
    body = dict(payload, outputs=entries)
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(plain(body), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path
