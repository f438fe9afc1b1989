"""JSONL dataset manifests.

One record per line with the fields ``path, split, kind, category, arousal,
valence, dominance, noise_path, snr_db, seed``; absent fields are omitted.
Relative paths are resolved against the manifest's own directory.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Optional

SPLITS = ("train", "val", "test")
KINDS = ("speech", "noise", "mixture")
N_CATEGORIES = 10
ATTR_RANGE = (1.0, 7.0)


@dataclass(frozen=True)
class EmotionLabel:
    category: int
    arousal: float
    valence: float
    dominance: float

    def __post_init__(self):
        if not 0 <= int(self.category) < N_CATEGORIES:
            raise ValueError(f"category {self.category} outside 0..{N_CATEGORIES - 1}")
        lo, hi = ATTR_RANGE
        for name in ("arousal", "valence", "dominance"):
            v = getattr(self, name)
            if not lo <= v <= hi:
                raise ValueError(f"{name}={v} outside [{lo}, {hi}]")

    @property
    def attributes(self):
        return (self.arousal, self.valence, self.dominance)


@dataclass(frozen=True)
class MixSpec:
    target_snr_db: float
    noise_ref: str
    seed: int

    def __post_init__(self):
        if self.target_snr_db != self.target_snr_db or abs(self.target_snr_db) == float("inf"):
            raise ValueError("target SNR must be finite")


@dataclass(frozen=True)
class ManifestRecord:
    path: str
    split: str
    kind: str
    labels: Optional[EmotionLabel] = None
    mix: Optional[MixSpec] = None

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ValueError(f"unknown split {self.split!r}")
        if self.kind not in KINDS:
            raise ValueError(f"unknown kind {self.kind!r}")
        if self.kind == "mixture" and self.mix is None:
            raise ValueError("mixture records must carry a MixSpec")

    @property
    def id(self) -> str:
        return Path(self.path).stem

    def to_json(self, base_dir: Optional[Path] = None) -> dict:
        out = {"path": _relativize(self.path, base_dir), "split": self.split, "kind": self.kind}
        if self.labels is not None:
            out.update(
                category=int(self.labels.category),
                arousal=float(self.labels.arousal),
                valence=float(self.labels.valence),
                dominance=float(self.labels.dominance),
            )
        if self.mix is not None:
            out.update(
                noise_path=_relativize(self.mix.noise_ref, base_dir),
                snr_db=float(self.mix.target_snr_db),
                seed=int(self.mix.seed),
            )
        return out

    @classmethod
    def from_json(cls, obj: dict, base_dir: Optional[Path] = None) -> "ManifestRecord":
        labels = None
        if "category" in obj:
            labels = EmotionLabel(
                int(obj["category"]), float(obj["arousal"]), float(obj["valence"]), float(obj["dominance"])
            )
        mix = None
        if "snr_db" in obj:
            mix = MixSpec(float(obj["snr_db"]), _resolve(obj.get("noise_path", ""), base_dir), int(obj.get("seed", 0)))
        return cls(_resolve(obj["path"], base_dir), obj["split"], obj["kind"], labels, mix)


def _relativize(path: str, base_dir: Optional[Path]) -> str:
    if base_dir is None or not path:
        return str(path)
    try:
        return os.path.relpath(Path(path).resolve(), Path(base_dir).resolve()).replace(os.sep, "/")
    except ValueError:
        return str(path)


def _resolve(path: str, base_dir: Optional[Path]) -> str:
    if not path or base_dir is None or os.path.isabs(path):
        return str(path)
    return os.path.normpath(os.path.join(base_dir, path))


def atomic_write_text(path, text: str):
    """Write via a temp file in the same directory, then rename into place."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_bytes(path, data: bytes):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_manifest(records: Iterable[ManifestRecord], path) -> Path:
    path = Path(path)
    base = path.parent
    lines = [json.dumps(r.to_json(base), sort_keys=False) for r in records]
    atomic_write_text(path, "".join(line + "\n" for line in lines))
    return path


def read_manifest(path) -> List[ManifestRecord]:
    path = Path(path)
    base = path.parent
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(ManifestRecord.from_json(json.loads(line), base))
            except (KeyError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: bad manifest record ({exc})") from exc
    return out


def by_split(records: Iterable[ManifestRecord], split: str) -> List[ManifestRecord]:
    return [r for r in records if r.split == split]
