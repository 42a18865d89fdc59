"""Metadata acquisition from a Xeno-Canto-style HTTP API, plus split generation.

The fetch layer caches every page response on disk, so a run replays
byte-identically offline once its pages are cached. The JSON schema is the
public v3 shape: {"numPages": N, "recordings": [{"id", "gen", "sp", "cnt",
"lat", "lng", "q", "length", "file", "lic"}, ...]}.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import requests

from .audio_io import RecordingMeta
from .errors import MalformedResponse, NetworkFailure
from .manifest import ClipRecord

UNRESOLVED_MARKERS = ("unknown", "mystery", "unidentified")
MIN_DURATION_S = 3.0


@dataclass
class MetadataQuery:
    countries: list[str]
    group_filter: str = "birds"
    page_cursor: Optional[str] = None

    def __post_init__(self):
        if not self.countries:
            raise ValueError("countries must be nonempty")


@dataclass(frozen=True)
class SplitAssignment:
    clip_id: str
    split: str  # train | val | test


def _parse_length(raw) -> float:
    if raw is None or raw == "":
        return 0.0
    text = str(raw)
    if ":" in text:
        parts = [float(p) for p in text.split(":")]
        seconds = 0.0
        for p in parts:
            seconds = seconds * 60.0 + p
        return seconds
    return float(text)


def parse_recording(item: dict) -> RecordingMeta:
    try:
        species = f"{item.get('gen', '').strip()} {item.get('sp', '').strip()}".strip()
        return RecordingMeta(
            catalog_id=int(item["id"]),
            species=species,
            quality_rating=item.get("q") or "unrated",
            latitude=float(item["lat"]) if item.get("lat") not in (None, "") else None,
            longitude=float(item["lng"]) if item.get("lng") not in (None, "") else None,
            country=item.get("cnt", ""),
            license=item.get("lic", ""),
            source_url=item.get("file", ""),
            duration_s=_parse_length(item.get("length")),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedResponse(f"bad recording entry: {exc}") from exc


def _get_with_retry(session, url, params, max_retries: int, backoff_s: float) -> dict:
    last_error = None
    for attempt in range(max_retries + 1):
        try:
            resp = session.get(url, params=params, timeout=30)
            if resp.status_code >= 500:
                raise NetworkFailure(f"HTTP {resp.status_code}")
            if resp.status_code != 200:
                raise MalformedResponse(f"HTTP {resp.status_code} from {url}")
            try:
                return resp.json()
            except ValueError as exc:
                raise MalformedResponse(f"non-JSON response from {url}") from exc
        except (requests.RequestException, NetworkFailure) as exc:
            last_error = exc
            if attempt < max_retries:
                time.sleep(backoff_s * (2 ** attempt))
    raise NetworkFailure(f"{url}: giving up after {max_retries + 1} attempts: {last_error}")


def fetch_metadata(query: MetadataQuery, endpoint: str,
                   cache_dir: Optional[Path] = None,
                   api_key: Optional[str] = None,
                   max_retries: int = 3,
                   backoff_s: float = 0.2,
                   politeness_delay_s: float = 0.0,
                   session: Optional[requests.Session] = None) -> list[RecordingMeta]:
    """Paginate through every country's recordings; cache raw pages on disk."""
    own_session = session is None
    session = session or requests.Session()
    if cache_dir is not None:
        cache_dir = Path(cache_dir)
        cache_dir.mkdir(parents=True, exist_ok=True)
    records: list[RecordingMeta] = []
    try:
        for country in query.countries:
            page = 1
            while True:
                cache_path = None
                payload = None
                if cache_dir is not None:
                    safe = country.lower().replace(" ", "_")
                    cache_path = cache_dir / f"{safe}_page{page}.json"
                    if cache_path.exists():
                        payload = json.loads(cache_path.read_text())
                if payload is None:
                    params = {"query": f'grp:"{query.group_filter}" cnt:"{country}"',
                              "page": page}
                    if api_key:
                        params["key"] = api_key
                    payload = _get_with_retry(session, endpoint, params, max_retries, backoff_s)
                    if cache_path is not None:
                        cache_path.write_text(json.dumps(payload, sort_keys=True))
                    if politeness_delay_s:
                        time.sleep(politeness_delay_s)
                if "recordings" not in payload:
                    raise MalformedResponse(f"page {page} for {country} lacks 'recordings'")
                records.extend(parse_recording(item) for item in payload["recordings"])
                num_pages = int(payload.get("numPages", 1))
                if page >= num_pages:
                    break
                page += 1
    finally:
        if own_session:
            session.close()
    return records


def is_unresolved_species(species: str) -> bool:
    lowered = species.strip().lower()
    if not lowered:
        return True
    return any(marker in lowered for marker in UNRESOLVED_MARKERS)


def filter_metadata(records: list[RecordingMeta]) -> tuple[list[RecordingMeta], dict[str, int]]:
    """Drop unusable records; returns (kept, per-reason exclusion counts)."""
    kept: list[RecordingMeta] = []
    exclusions = {"unresolved_species": 0, "missing_url": 0, "too_short": 0}
    for rec in records:
        if is_unresolved_species(rec.species):
            exclusions["unresolved_species"] += 1
        elif not rec.source_url:
            exclusions["missing_url"] += 1
        elif rec.duration_s < MIN_DURATION_S:
            exclusions["too_short"] += 1
        else:
            kept.append(rec)
    return kept, exclusions


RECORD_COLUMNS = ["catalog_id", "species", "quality", "lat", "lon", "country",
                  "license", "url", "duration_s"]


def write_records(path, records: list[RecordingMeta]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RECORD_COLUMNS)
        for r in records:
            writer.writerow([
                r.catalog_id, r.species, r.quality_rating,
                "" if r.latitude is None else f"{r.latitude:.6f}",
                "" if r.longitude is None else f"{r.longitude:.6f}",
                r.country, r.license, r.source_url, f"{r.duration_s:.3f}",
            ])


def read_records(path) -> list[RecordingMeta]:
    records = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            records.append(RecordingMeta(
                catalog_id=int(row["catalog_id"]),
                species=row["species"],
                quality_rating=row["quality"] or "unrated",
                latitude=float(row["lat"]) if row["lat"] else None,
                longitude=float(row["lon"]) if row["lon"] else None,
                country=row["country"],
                license=row["license"],
                source_url=row["url"],
                duration_s=float(row["duration_s"]),
            ))
    return records


def _integer_targets(n: int, ratios) -> list[int]:
    """Largest-remainder apportionment of n clips over the ratios."""
    raw = [n * r for r in ratios]
    floors = [int(x) for x in raw]
    shortfall = n - sum(floors)
    order = sorted(range(len(ratios)), key=lambda i: (-(raw[i] - floors[i]), i))
    for i in order[:shortfall]:
        floors[i] += 1
    return floors


def make_splits(records: list[ClipRecord], ratios=(0.8, 0.1, 0.1),
                seed: int = 0) -> list[SplitAssignment]:
    """Recording-grouped, label-stratified split assignment.

    All clips of one source recording land in the same split. Within each
    label stratum, groups are placed largest-first into the split with the
    biggest remaining deficit, then singleton groups are shuffled between
    splits until each count is within one clip of its target.
    """
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {ratios}")
    splits = ("train", "val", "test")
    rng = np.random.default_rng(seed)

    assignments: dict[str, str] = {}
    for label in sorted({r.label for r in records}):
        stratum = [r for r in records if r.label == label]
        groups: dict[str, list[ClipRecord]] = {}
        for rec in stratum:
            groups.setdefault(rec.group_key(), []).append(rec)
        keys = sorted(groups)
        rng.shuffle(keys)
        keys.sort(key=lambda k: -len(groups[k]))  # stable: keeps shuffle within sizes

        targets = _integer_targets(len(stratum), ratios)
        assigned = [0, 0, 0]
        placement: dict[str, int] = {}
        for key in keys:
            deficits = [targets[i] - assigned[i] for i in range(3)]
            best = max(range(3), key=lambda i: (deficits[i], -i))
            placement[key] = best
            assigned[best] += len(groups[key])

        # repair with movable singletons until every split is within +-1
        singles = [k for k in keys if len(groups[k]) == 1]
        for _ in range(len(singles) * 3):
            over = [i for i in range(3) if assigned[i] - targets[i] >= 1]
            under = [i for i in range(3) if targets[i] - assigned[i] >= 1]
            if not over or not under:
                break
            moved = False
            for key in singles:
                src = placement[key]
                if src in over:
                    placement[key] = under[0]
                    assigned[src] -= 1
                    assigned[under[0]] += 1
                    moved = True
                    break
            if not moved:
                break
        for key, idx in placement.items():
            for rec in groups[key]:
                assignments[rec.clip_id] = splits[idx]

    return [SplitAssignment(clip_id=r.clip_id, split=assignments[r.clip_id])
            for r in records]
