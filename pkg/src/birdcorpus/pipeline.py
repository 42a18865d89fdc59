"""Stage orchestration: dependency graph, fingerprints, resumable runs.

Each stage is a pure function of its inputs and the config, so a completed
stage whose fingerprint (config subset + upstream fingerprints) is unchanged
is skipped on re-run unless forced. Reports land in <workspace>/reports.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from urllib.parse import urlparse

import requests

from . import audit as audit_mod
from . import balance as balance_mod
from . import catalog, dedup, negatives, segments
from .audio_io import ClipBuffer, decode_and_resample, write_flac, write_wav
from .config import RunConfig
from .errors import EmptyWorkspace, MissingDependency, UndecodableFile, ZeroLengthAudio
from .features import feature_summary, mel_spectrogram
from .manifest import ClipRecord, read_manifest, write_manifest

STAGE_DEPS = {
    "fetch-metadata": [],
    "download": ["fetch-metadata"],
    "dedup": ["download"],
    "extract": ["dedup"],
    "balance": ["extract"],
    "curate-negatives": [],
    "merge": ["balance", "curate-negatives"],
    "split": ["merge"],
    "audit-sample": ["split"],
}


class Workspace:
    def __init__(self, root):
        self.root = Path(root)

    def path(self, *parts) -> Path:
        p = self.root.joinpath(*parts)
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def dir(self, *parts) -> Path:
        p = self.root.joinpath(*parts)
        p.mkdir(parents=True, exist_ok=True)
        return p

    def report_path(self, stage: str) -> Path:
        return self.path("reports", f"{stage.replace('-', '_')}_report.json")

    def flac_path(self, catalog_id: int) -> Path:
        return self.root / "audio" / f"XC{catalog_id}.flac"

    def pos_clip_path(self, clip_id: str) -> Path:
        return self.root / "clips" / "pos" / f"{clip_id}.wav"

    def neg_clip_path(self, clip_id: str) -> Path:
        return self.root / "clips" / "neg" / f"{clip_id}.wav"


def _config_slice(name: str, cfg: RunConfig) -> dict:
    full = cfg.to_dict()
    relevant = {
        "fetch-metadata": ["fetch"],
        "download": ["download"],
        "dedup": ["dedup"],
        "extract": ["extract"],
        "balance": ["balance", "dedup"],
        "curate-negatives": ["negatives"],
        "merge": [],
        "split": ["split"],
        "audit-sample": ["audit"],
    }[name]
    return {key: full[key] for key in relevant} | {"seed": cfg.seed}


def stage_fingerprint(name: str, cfg: RunConfig, ws: Workspace) -> str:
    payload = {"stage": name, "config": _config_slice(name, cfg), "inputs": {}}
    for dep in STAGE_DEPS[name]:
        report = load_report(ws, dep)
        payload["inputs"][dep] = report.get("fingerprint", "") if report else ""
    blob = json.dumps(payload, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def load_report(ws: Workspace, stage: str) -> dict | None:
    path = ws.report_path(stage)
    if not path.exists():
        return None
    return json.loads(path.read_text())


def run_stage(name: str, cfg: RunConfig, force: bool = False) -> dict:
    """Execute one stage if its inputs changed; otherwise report a skip."""
    if name not in STAGE_DEPS:
        raise ValueError(f"unknown stage '{name}' (have: {', '.join(STAGE_DEPS)})")
    ws = Workspace(cfg.workspace)
    for dep in STAGE_DEPS[name]:
        if load_report(ws, dep) is None:
            raise MissingDependency(f"stage '{name}' needs '{dep}' to run first")

    fingerprint = stage_fingerprint(name, cfg, ws)
    existing = load_report(ws, name)
    if existing and existing.get("fingerprint") == fingerprint and not force:
        return {**existing, "skipped": True}

    started = time.time()
    body = _STAGE_FNS[name](cfg, ws)
    report = {
        "stage": name,
        "fingerprint": fingerprint,
        "elapsed_s": round(time.time() - started, 3),
        "skipped": False,
        **body,
    }
    ws.report_path(name).write_text(json.dumps(report, indent=2, sort_keys=True))
    cfg.save(ws.path("reports", "run_config.json"))
    return report


# --- stage bodies -----------------------------------------------------------

def _stage_fetch(cfg: RunConfig, ws: Workspace) -> dict:
    query = catalog.MetadataQuery(countries=cfg.fetch.countries,
                                  group_filter=cfg.fetch.group)
    cache_dir = Path(cfg.fetch.cache_dir) if cfg.fetch.cache_dir else ws.dir("cache", "api")
    records = catalog.fetch_metadata(
        query, cfg.fetch.endpoint, cache_dir=cache_dir,
        api_key=os.environ.get(cfg.fetch.api_key_env),
        politeness_delay_s=cfg.fetch.politeness_delay_s)
    catalog.write_records(ws.path("metadata", "records_raw.csv"), records)
    kept, exclusions = catalog.filter_metadata(records)
    catalog.write_records(ws.path("metadata", "records.csv"), kept)
    return {"n_fetched": len(records), "n_kept": len(kept), "exclusions": exclusions}


def _fetch_audio_bytes(url: str, dest: Path) -> Path:
    parsed = urlparse(url)
    if parsed.scheme in ("", "file"):
        return Path(parsed.path if parsed.scheme == "file" else url)
    resp = requests.get(url, timeout=60)
    resp.raise_for_status()
    dest.write_bytes(resp.content)
    return dest


def _download_one(rec, ws: Workspace) -> tuple[int, str]:
    out = ws.flac_path(rec.catalog_id)
    if out.exists():
        return rec.catalog_id, "cached"
    try:
        tmp_dir = ws.dir("cache", "downloads")
        src = _fetch_audio_bytes(rec.source_url, tmp_dir / f"XC{rec.catalog_id}.bin")
        buf = decode_and_resample(src)
        out.parent.mkdir(parents=True, exist_ok=True)
        write_flac(buf, out)
        return rec.catalog_id, "ok"
    except (UndecodableFile, ZeroLengthAudio, OSError, requests.RequestException) as exc:
        return rec.catalog_id, f"failed: {exc}"


def _stage_download(cfg: RunConfig, ws: Workspace) -> dict:
    records = catalog.read_records(ws.path("metadata", "records.csv"))
    ws.dir("audio")
    statuses = {}
    with ThreadPoolExecutor(max_workers=max(cfg.download.jobs, 1)) as pool:
        for catalog_id, status in pool.map(lambda r: _download_one(r, ws), records):
            statuses[catalog_id] = status
    converted = [r for r in records if not statuses[r.catalog_id].startswith("failed")]
    catalog.write_records(ws.path("metadata", "records_downloaded.csv"), converted)
    failures = {str(k): v for k, v in statuses.items() if v.startswith("failed")}
    return {"n_requested": len(records), "n_converted": len(converted),
            "n_failed": len(failures), "failures": failures}


def _stage_dedup(cfg: RunConfig, ws: Workspace) -> dict:
    records = catalog.read_records(ws.path("metadata", "records_downloaded.csv"))
    embeddings = []
    for rec in records:
        buf = decode_and_resample(ws.flac_path(rec.catalog_id))
        embeddings.append(dedup.embed_recording(buf, rec.catalog_id))
    pairs = dedup.find_duplicates(
        embeddings, k=cfg.dedup.k_neighbors,
        exact_threshold=cfg.dedup.exact_threshold,
        near_threshold=cfg.dedup.near_threshold)
    dedup.write_duplicate_report(ws.path("reports", "duplicates.csv"), pairs)
    kept = dedup.apply_removals(records, pairs)
    catalog.write_records(ws.path("metadata", "records_deduped.csv"), kept)
    n_exact = sum(1 for p in pairs if p.kind == "exact")
    return {"n_in": len(records), "n_exact_pairs": n_exact,
            "n_near_pairs": len(pairs) - n_exact, "n_removed": len(records) - len(kept),
            "n_kept": len(kept)}


def _stage_extract(cfg: RunConfig, ws: Workspace) -> dict:
    records = catalog.read_records(ws.path("metadata", "records_deduped.csv"))
    ws.dir("clips", "pos")
    log_rows = []
    n_repaired = 0
    for rec in records:
        buf = decode_and_resample(ws.flac_path(rec.catalog_id))
        cands = segments.scan_windows(
            buf, rec.catalog_id, window_s=cfg.extract.window_s, step_s=cfg.extract.step_s)
        chosen = segments.select_clips(
            cands, max_clips=cfg.extract.max_clips,
            min_separation_s=cfg.extract.min_separation_s,
            min_rms=cfg.extract.min_rms)
        window_samples = int(round(cfg.extract.window_s * buf.sample_rate))
        for cand in chosen:
            start = int(round(cand.start_s * buf.sample_rate))
            raw_peak = float(abs(buf.samples[start:start + window_samples]).max())
            clipped = raw_peak >= 0.9999
            if clipped:
                n_repaired += 1
            clip = segments.extract(buf, cand, clip_samples=window_samples)
            name = segments.clip_filename(rec.catalog_id, cand.start_s)
            write_wav(clip, ws.pos_clip_path(Path(name).stem))
            log_rows.append([rec.catalog_id, f"{cand.start_s:.1f}", f"{cand.rms:.6g}",
                             int(clipped), str(ws.pos_clip_path(Path(name).stem))])
    segments.write_extraction_log(ws.path("reports", "extraction_log.csv"), log_rows)
    return {"n_recordings": len(records), "n_clips": len(log_rows),
            "n_clipping_repaired": n_repaired}


def _read_extraction_log(ws: Workspace) -> list[dict]:
    import csv as _csv

    with open(ws.path("reports", "extraction_log.csv"), newline="") as fh:
        return list(_csv.DictReader(fh))


def _stage_balance(cfg: RunConfig, ws: Workspace) -> dict:
    import csv as _csv

    records = {r.catalog_id: r for r in
               catalog.read_records(ws.path("metadata", "records_deduped.csv"))}
    rows = _read_extraction_log(ws)
    scored = []
    with open(ws.path("reports", "clip_features.csv"), "w", newline="") as fh:
        feature_writer = _csv.writer(fh)
        feature_writer.writerow(["clip_id", "rms", "peak", "dynamic_range",
                                 "mean_centroid", "mean_contrast", "salience"])
        for row in rows:
            catalog_id = int(row["catalog_id"])
            rec = records[catalog_id]
            clip_id = Path(row["clip_path"]).stem
            buf = decode_and_resample(row["clip_path"])
            summary = feature_summary(buf)
            emb = dedup.embed(mel_spectrogram(buf, n_mels=cfg.dedup.n_mels,
                                              fft_size=cfg.dedup.fft_size,
                                              hop=cfg.dedup.hop), catalog_id)
            clip_salience = balance_mod.salience(summary, buf.sample_rate)
            feature_writer.writerow([
                clip_id, f"{summary.rms:.12g}", f"{summary.peak:.12g}",
                f"{summary.dynamic_range:.12g}", f"{summary.mean_centroid:.12g}",
                f"{summary.mean_contrast:.12g}", f"{clip_salience:.12g}"])
            scored.append(balance_mod.ScoredClip(
                clip_id=clip_id,
                species=rec.species,
                salience=clip_salience,
                quality_rating=rec.quality_rating,
                embedding=emb.vector,
            ))
    selected, report = balance_mod.balance_corpus(
        scored, n_target=min(cfg.balance.n_target, len(scored)),
        k_clusters=cfg.balance.k_clusters, seed=cfg.seed)
    report.to_json(ws.path("reports", "balance_report.json"))

    start_by_clip = {Path(r["clip_path"]).stem: float(r["start_s"]) for r in rows}
    manifest_rows = []
    for clip in selected:
        catalog_id = int(clip.clip_id.split("_")[0][2:])
        rec = records[catalog_id]
        manifest_rows.append(ClipRecord(
            clip_id=clip.clip_id, label=1, source="xeno-canto",
            catalog_id=catalog_id, species=rec.species, country=rec.country,
            lat=rec.latitude, lon=rec.longitude, quality=rec.quality_rating,
            start_s=start_by_clip[clip.clip_id], salience=clip.salience,
            cluster_id=clip.cluster_id, license=rec.license))
    write_manifest(ws.path("manifests", "positive_selected.csv"), manifest_rows)
    return {"n_candidates": len(scored), "n_selected": len(selected),
            "gini_before": report.gini_before, "gini_after": report.gini_after,
            "n_species": report.n_species}


def _stage_negatives(cfg: RunConfig, ws: Workspace) -> dict:
    ws.dir("clips", "neg")
    per_source: dict[str, list[negatives.NegativeClip]] = {}
    counts = {}
    for spec in cfg.negatives.sources:
        candidates = negatives.load_source(spec)
        kept = []
        n_failed_gate = 0
        for cand in candidates:
            try:
                raw = decode_and_resample(cand.path)
            except (UndecodableFile, ZeroLengthAudio):
                n_failed_gate += 1
                continue
            clip, start_s = negatives.segment_negative(raw, spec.segmentation_policy)
            passed, summary = negatives.quality_filter(clip, cfg.negatives.gate)
            if not passed:
                n_failed_gate += 1
                continue
            clip_id = f"{spec.name}-{cand.path.stem}-{int(round(start_s * 1000))}"
            kept.append(negatives.NegativeClip(
                clip_id=clip_id, source_dataset=spec.name,
                source_file=str(cand.path), class_label=cand.class_label,
                policy=spec.segmentation_policy, start_s=start_s,
                rms=summary.rms, peak=summary.peak))
        per_source[spec.name] = kept
        counts[spec.name] = {"candidates": len(candidates), "passed_gate": len(kept),
                             "failed_gate": n_failed_gate}

    allocated = negatives.allocate_and_diversify(per_source, cfg.negatives.sources,
                                                 seed=cfg.seed)
    for clip in allocated:
        raw = decode_and_resample(clip.source_file)
        cut, _ = negatives.segment_negative(raw, clip.policy)
        write_wav(cut, ws.neg_clip_path(clip.clip_id))
    for clip in allocated:
        counts[clip.source_dataset]["allocated"] = (
            counts[clip.source_dataset].get("allocated", 0) + 1)
    negatives.write_negative_manifest(ws.path("manifests", "negative.csv"), allocated)
    return {"n_allocated": len(allocated), "per_source": counts}


def _read_negative_manifest(ws: Workspace) -> list[ClipRecord]:
    import csv as _csv

    rows = []
    with open(ws.path("manifests", "negative.csv"), newline="") as fh:
        for row in _csv.DictReader(fh):
            rows.append(ClipRecord(
                clip_id=row["clip_id"], label=0, source=row["source_dataset"],
                start_s=float(row["start_s"]),
                extra={"source_file": row["source_file"],
                       "class_label": row["class_label"]}))
    return rows


def _stage_merge(cfg: RunConfig, ws: Workspace) -> dict:
    positives = read_manifest(ws.path("manifests", "positive_selected.csv"))
    neg_rows = _read_negative_manifest(ws)
    n = min(len(positives), len(neg_rows))
    trimmed = {"positives": len(positives) - n, "negatives": len(neg_rows) - n}
    if len(positives) > n:
        scored = [balance_mod.ScoredClip(r.clip_id, r.species, r.salience or 0.0)
                  for r in positives]
        keep_ids = {c.clip_id for c in balance_mod.global_trim(scored, n)}
        positives = [r for r in positives if r.clip_id in keep_ids]
    if len(neg_rows) > n:
        neg_rows = sorted(neg_rows, key=lambda r: r.clip_id)[:n]
    merged = positives + neg_rows
    write_manifest(ws.path("manifests", "merged.csv"), merged)
    return {"n_positive": len(positives), "n_negative": len(neg_rows),
            "n_total": len(merged), "trimmed": trimmed}


def _stage_split(cfg: RunConfig, ws: Workspace) -> dict:
    merged = read_manifest(ws.path("manifests", "merged.csv"))
    # group negatives by source file so multi-clip sources stay together
    neg_meta = {r.clip_id: r for r in _read_negative_manifest(ws)}
    for record in merged:
        if record.label == 0 and record.clip_id in neg_meta:
            record.extra = neg_meta[record.clip_id].extra
    assignments = catalog.make_splits(merged, ratios=cfg.split.ratios, seed=cfg.seed)
    split_of = {a.clip_id: a.split for a in assignments}
    for record in merged:
        record.split = split_of[record.clip_id]
    write_manifest(ws.path("manifests", "final.csv"), merged)
    marginals: dict[str, dict[str, int]] = {}
    for record in merged:
        marginals.setdefault(record.split, {"pos": 0, "neg": 0})
        marginals[record.split]["pos" if record.label else "neg"] += 1
    return {"n_total": len(merged), "marginals": marginals}


def _stage_audit_sample(cfg: RunConfig, ws: Workspace) -> dict:
    manifest = read_manifest(ws.path("manifests", "final.csv"))
    positive_ids = [r.clip_id for r in manifest if r.label == 1]
    rounds = []
    for round_id, seed in enumerate(cfg.audit.round_seeds, start=1):
        plan = audit_mod.plan_audit(
            cfg.audit.p_hat, cfg.audit.margin, cfg.audit.z,
            population=len(positive_ids), seed=seed, clip_ids=positive_ids,
            round_id=round_id)
        if cfg.audit.round_size and cfg.audit.round_size < len(plan.sampled_clip_ids):
            plan.sampled_clip_ids = plan.sampled_clip_ids[:cfg.audit.round_size]
        round_dir = ws.dir("audit", f"round_{round_id}")
        (round_dir / "plan.json").write_text(json.dumps(plan.to_dict(), indent=2))
        page_size = audit_mod.GRID_ROWS * audit_mod.GRID_COLS
        n_pages = 0
        for page_start in range(0, len(plan.sampled_clip_ids), page_size):
            page_ids = plan.sampled_clip_ids[page_start:page_start + page_size]
            paths = [ws.pos_clip_path(cid) for cid in page_ids]
            audit_mod.render_grid(paths, round_dir / f"grid_{n_pages:03d}.png",
                                  page=n_pages, labels=page_ids)
            n_pages += 1
        rounds.append({"round": round_id, "seed": seed,
                       "n_sampled": len(plan.sampled_clip_ids), "n_pages": n_pages})
    return {"rounds": rounds}


_STAGE_FNS = {
    "fetch-metadata": _stage_fetch,
    "download": _stage_download,
    "dedup": _stage_dedup,
    "extract": _stage_extract,
    "balance": _stage_balance,
    "curate-negatives": _stage_negatives,
    "merge": _stage_merge,
    "split": _stage_split,
    "audit-sample": _stage_audit_sample,
}


def dataset_report(workspace) -> dict:
    """Summary statistics of the most complete manifest in the workspace."""
    ws = Workspace(workspace)
    manifest_path = None
    for name in ("final.csv", "merged.csv", "positive_selected.csv"):
        candidate = ws.root / "manifests" / name
        if candidate.exists():
            manifest_path = candidate
            break
    if manifest_path is None:
        raise EmptyWorkspace(f"no manifests under {ws.root}")
    records = read_manifest(manifest_path)
    positives = [r for r in records if r.label == 1]
    negatives_ = [r for r in records if r.label == 0]
    species_counts: dict[str, int] = {}
    quality_counts: dict[str, int] = {}
    country_counts: dict[str, int] = {}
    for r in positives:
        species_counts[r.species] = species_counts.get(r.species, 0) + 1
        quality_counts[r.quality or "unrated"] = quality_counts.get(r.quality or "unrated", 0) + 1
        if r.country:
            country_counts[r.country] = country_counts.get(r.country, 0) + 1
    n_pos = len(positives)
    summary = {
        "manifest": str(manifest_path),
        "total_clips": len(records),
        "positive_clips": n_pos,
        "negative_clips": len(negatives_),
        "unique_species": len(species_counts),
        "clip_duration_s": 3.0,
        "sample_rate_hz": 16000,
        "bit_depth": 16,
        "format": "WAV (16-bit PCM)",
        "mean_samples_per_species": (n_pos / len(species_counts)) if species_counts else 0.0,
        "gini_coefficient": balance_mod.gini(species_counts) if species_counts else None,
        "quality_rating_share": {k: v / n_pos for k, v in sorted(quality_counts.items())}
        if n_pos else {},
        "country_share": {k: v / n_pos for k, v in sorted(country_counts.items())}
        if n_pos else {},
    }
    balance_report = ws.root / "reports" / "balance_report.json"
    if balance_report.exists():
        summary["balance"] = json.loads(balance_report.read_text())
    out = ws.path("reports", "summary.json")
    out.write_text(json.dumps(summary, indent=2, sort_keys=True))
    return summary
