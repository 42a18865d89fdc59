"""The unified clip manifest: one CSV row per dataset clip.

Column order is part of the external contract. Empty strings stand for
not-applicable fields (negatives have no catalog id, species, or salience).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional

MANIFEST_COLUMNS = [
    "clip_id", "label", "source", "catalog_id", "species", "country", "lat",
    "lon", "quality", "start_s", "salience", "cluster_id", "split", "license",
]


@dataclass
class ClipRecord:
    clip_id: str
    label: int  # 1 = bird present, 0 = absent
    source: str = ""
    catalog_id: Optional[int] = None
    species: str = ""
    country: str = ""
    lat: Optional[float] = None
    lon: Optional[float] = None
    quality: str = ""
    start_s: float = 0.0
    salience: Optional[float] = None
    cluster_id: Optional[int] = None
    split: str = ""
    license: str = ""
    extra: dict = field(default_factory=dict, compare=False)

    def group_key(self) -> str:
        """Clips sharing a source recording must share a split."""
        if self.catalog_id is not None:
            return f"{self.label}:{self.source}:{self.catalog_id}"
        return f"{self.label}:{self.source}:{self.extra.get('source_file', self.clip_id)}"


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.9g}"
    return str(value)


def write_manifest(path, records: list[ClipRecord]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_COLUMNS)
        for r in records:
            writer.writerow([_fmt(getattr(r, col)) for col in MANIFEST_COLUMNS])


def read_manifest(path) -> list[ClipRecord]:
    records = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            records.append(ClipRecord(
                clip_id=row["clip_id"],
                label=int(row["label"]),
                source=row["source"],
                catalog_id=int(row["catalog_id"]) if row["catalog_id"] else None,
                species=row["species"],
                country=row["country"],
                lat=float(row["lat"]) if row["lat"] else None,
                lon=float(row["lon"]) if row["lon"] else None,
                quality=row["quality"],
                start_s=float(row["start_s"]) if row["start_s"] else 0.0,
                salience=float(row["salience"]) if row["salience"] else None,
                cluster_id=int(row["cluster_id"]) if row["cluster_id"] else None,
                split=row["split"],
                license=row["license"],
            ))
    return records
