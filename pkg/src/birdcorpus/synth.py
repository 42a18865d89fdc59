"""Deterministic synthetic corpora for offline runs and tests.

Generates bird-like positive recordings (frequency-modulated chirps per
species over a quiet background), six mock negative-source layouts in their
published label formats, and API page fixtures in the catalog JSON schema.
Everything derives from a seed, so fixtures are reproducible and never
shipped as binary blobs.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np
from scipy.io import wavfile
from scipy.signal import lfilter

from ._mp3 import encode_mp3, mp3_encode_available
from .negatives import DATASEC_EXCLUDED, ESC50_EXCLUDED, FSC22_EXCLUDED

COUNTRIES = ("Malaysia", "Indonesia", "Singapore", "Brunei", "Thailand")
LICENSES = ("CC BY-NC-SA 4.0", "CC BY-SA 4.0", "CC BY-NC-ND 4.0")
QUALITIES = ("A", "B", "C", "D", "E")


def species_name(idx: int) -> str:
    return f"Synthornis cantor{idx:03d}"


def _chirp(rng, sr: int, f0: float) -> np.ndarray:
    dur = rng.uniform(0.3, 0.8)
    n = int(dur * sr)
    t = np.arange(n) / sr
    f1 = f0 * rng.uniform(1.1, 1.5)
    phase = 2 * np.pi * (f0 * t + (f1 - f0) * t ** 2 / (2 * dur))
    tone = np.sin(phase) + 0.3 * np.sin(2 * phase)
    return rng.uniform(0.25, 0.7) * np.hanning(n) * tone


def make_recording(catalog_id: int, species_idx: int, duration_s: float,
                   sr: int = 16000, seed: int = 0) -> np.ndarray:
    """One synthetic recording: species-pitched chirps over low noise."""
    rng = np.random.default_rng([seed, catalog_id])
    n = int(duration_s * sr)
    samples = rng.normal(0.0, 0.003, n)
    f0 = 900.0 + 217.0 * (species_idx % 24) + rng.uniform(-40, 40)
    for _ in range(int(rng.integers(2, 6))):
        burst = _chirp(rng, sr, f0)
        if len(burst) >= n:
            burst = burst[:n]
        start = int(rng.integers(0, max(n - len(burst), 1)))
        samples[start:start + len(burst)] += burst
    return np.clip(samples, -1.0, 1.0)


def _write_wav(path: Path, samples: np.ndarray, sr: int) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    pcm = np.clip(np.round(samples * 32768.0), -32768, 32767).astype(np.int16)
    wavfile.write(str(path), sr, pcm)


def write_positive_fixture(root: Path, n_recordings: int = 200, n_species: int = 20,
                           seed: int = 0, page_size: int = 100,
                           country: str = "Fixtureland",
                           use_mp3: bool = False) -> dict:
    """Audio files plus catalog API pages; returns generation stats.

    Includes two recordings duplicated under new catalog ids (dedup fodder)
    and a handful of unusable metadata rows (unresolved species, missing
    URL, sub-3-second durations) to exercise the filter stage.
    """
    root = Path(root)
    audio_dir = root / "recordings"
    api_dir = root / "api"
    api_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    use_mp3 = use_mp3 and mp3_encode_available()

    entries = []
    stats = {"usable": 0, "duplicates": 2, "unresolved": 3, "missing_url": 2, "too_short": 2}
    next_id = 100001
    first_ids = []
    for i in range(n_recordings):
        catalog_id = next_id
        next_id += 1
        species_idx = int(rng.integers(0, n_species))
        duration = float(rng.uniform(4.0, 16.0))
        sr = int(rng.choice([16000, 22050, 32000]))
        samples = make_recording(catalog_id, species_idx, duration, sr, seed)
        suffix = "mp3" if (use_mp3 and i % 17 == 0) else "wav"
        path = audio_dir / f"XC{catalog_id}.{suffix}"
        if suffix == "mp3":
            path.parent.mkdir(parents=True, exist_ok=True)
            encode_mp3(path, samples, sr)
        else:
            _write_wav(path, samples, sr)
        entries.append({
            "id": str(catalog_id),
            "gen": "Synthornis",
            "sp": f"cantor{species_idx:03d}",
            "cnt": country,
            "lat": f"{rng.uniform(-9.9, 19.9):.4f}",
            "lng": f"{rng.uniform(95.4, 124.8):.4f}",
            "q": str(rng.choice(QUALITIES)),
            "length": f"{int(duration // 60)}:{duration % 60:04.1f}",
            "file": str(path),
            "lic": str(rng.choice(LICENSES)),
        })
        stats["usable"] += 1
        if len(first_ids) < stats["duplicates"]:
            first_ids.append((catalog_id, path, species_idx, duration))

    # exact duplicates: same bytes, later catalog ids
    import shutil
    for catalog_id, path, species_idx, duration in first_ids:
        dup_id = next_id
        next_id += 1
        dup_path = audio_dir / f"XC{dup_id}{path.suffix}"
        shutil.copyfile(path, dup_path)
        src = next(e for e in entries if e["id"] == str(catalog_id))
        entries.append({**src, "id": str(dup_id), "file": str(dup_path)})

    for _ in range(stats["unresolved"]):
        entries.append({"id": str(next_id), "gen": "Identity", "sp": "unknown",
                        "cnt": country, "lat": "", "lng": "", "q": "",
                        "length": "0:10.0", "file": "", "lic": ""})
        next_id += 1
    for _ in range(stats["missing_url"]):
        entries.append({"id": str(next_id), "gen": "Synthornis", "sp": "cantor000",
                        "cnt": country, "lat": "", "lng": "", "q": "C",
                        "length": "0:08.0", "file": "", "lic": LICENSES[0]})
        next_id += 1
    for _ in range(stats["too_short"]):
        entries.append({"id": str(next_id), "gen": "Synthornis", "sp": "cantor001",
                        "cnt": country, "lat": "", "lng": "", "q": "B",
                        "length": "0:02.0", "file": str(audio_dir / "nonexistent.wav"),
                        "lic": LICENSES[0]})
        next_id += 1

    pages = [entries[i:i + page_size] for i in range(0, len(entries), page_size)] or [[]]
    for page_no, page_entries in enumerate(pages, start=1):
        payload = {
            "numRecordings": str(len(entries)),
            "numSpecies": str(n_species),
            "page": page_no,
            "numPages": len(pages),
            "recordings": page_entries,
        }
        safe = country.lower().replace(" ", "_")
        (api_dir / f"{safe}_page{page_no}.json").write_text(json.dumps(payload, sort_keys=True))

    stats["total_entries"] = len(entries)
    stats["n_pages"] = len(pages)
    return stats


# --- negative-source sound beds -------------------------------------------

def _lowpass_noise(rng, n, pole=0.98):
    return lfilter([1 - pole], [1, -pole], rng.standard_normal(n))


def _slow_envelope(rng, n, sr):
    knots = rng.uniform(0.4, 1.0, max(int(n / sr * 2), 2))
    return np.interp(np.arange(n), np.linspace(0, n - 1, len(knots)), knots)


def negative_bed(kind: str, rng, duration_s: float, sr: int = 16000) -> np.ndarray:
    n = int(duration_s * sr)
    t = np.arange(n) / sr
    if kind == "wind":
        base = _lowpass_noise(rng, n, 0.995)
    elif kind == "rain":
        base = rng.standard_normal(n) * (0.5 + 0.5 * (rng.random(n) < 0.3))
    elif kind == "hum":
        base = (np.sin(2 * np.pi * 50 * t) + 0.4 * np.sin(2 * np.pi * 150 * t)
                + 0.2 * rng.standard_normal(n))
    elif kind == "voices":
        base = _lowpass_noise(rng, n, 0.9) * (0.6 + 0.4 * np.sin(2 * np.pi * 3.1 * t))
    elif kind == "insects":
        f = rng.uniform(4500, 6500)
        base = np.sin(2 * np.pi * f * t) * (0.7 + 0.3 * np.sin(2 * np.pi * 11 * t))
        base += 0.3 * rng.standard_normal(n)
    else:  # generic machinery / traffic
        base = _lowpass_noise(rng, n, 0.97) + 0.2 * np.sin(2 * np.pi * rng.uniform(80, 240) * t)
    base = base / (np.max(np.abs(base)) + 1e-9)
    samples = base * _slow_envelope(rng, n, sr) * rng.uniform(0.25, 0.6)
    return np.clip(samples, -1.0, 1.0)


def _planted_rejects(rng, sr: int, duration_s: float) -> dict[str, np.ndarray]:
    n = int(duration_s * sr)
    t = np.arange(n) / sr
    return {
        "silent": np.zeros(n),
        "clipped": np.sign(np.sin(2 * np.pi * 97 * t)),
        "drone": 0.15 * np.sin(2 * np.pi * 440 * t),
    }


def write_negative_fixture(root: Path, seed: int = 0,
                           dcase_sizes: dict | None = None,
                           esc50_per_class: int = 2,
                           fsc22_per_class: int = 3,
                           datasec_per_class: int = 6) -> dict:
    """Six miniature dataset layouts matching the published label formats."""
    root = Path(root)
    rng = np.random.default_rng(seed)
    sr = 16000
    dcase_sizes = dcase_sizes or {"birdvox": 120, "freefield1010": 80, "warblr": 50}
    stats = {}

    kinds = ("wind", "rain", "hum", "voices", "insects", "machinery")
    for name, n_neg in dcase_sizes.items():
        src_root = root / name
        wav_dir = src_root / "wav"
        rows = []
        item = 1
        for i in range(n_neg):
            samples = negative_bed(kinds[i % len(kinds)], rng, 10.0, sr)
            _write_wav(wav_dir / f"{name}-{item:05d}.wav", samples, sr)
            rows.append((f"{name}-{item:05d}", 0))
            item += 1
        for _ in range(max(n_neg // 4, 3)):  # hasbird=1 rows the adapter must skip
            samples = make_recording(item, int(rng.integers(0, 8)), 10.0, sr, seed)
            _write_wav(wav_dir / f"{name}-{item:05d}.wav", samples, sr)
            rows.append((f"{name}-{item:05d}", 1))
            item += 1
        for reject_name, samples in _planted_rejects(rng, sr, 10.0).items():
            _write_wav(wav_dir / f"{name}-{reject_name}.wav", samples, sr)
            rows.append((f"{name}-{reject_name}", 0))
        src_root.mkdir(parents=True, exist_ok=True)
        with open(src_root / f"{name}_metadata.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["itemid", "hasbird"])
            writer.writerows(rows)
        stats[name] = n_neg

    # ESC-50: meta/esc50.csv, 5 s clips, bird classes present but excluded
    esc_root = root / "esc50"
    esc_classes = ["rain", "wind", "sea_waves", "crackling_fire", "engine",
                   "footsteps", "helicopter", "chainsaw"] + ESC50_EXCLUDED
    (esc_root / "meta").mkdir(parents=True, exist_ok=True)
    with open(esc_root / "meta" / "esc50.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["filename", "fold", "target", "category", "esc10", "src_file", "take"])
        for target, category in enumerate(esc_classes):
            for take in range(esc50_per_class):
                filename = f"1-{100000 + target * 100 + take}-A-{target}.wav"
                if category in ESC50_EXCLUDED:
                    samples = make_recording(target * 100 + take, target, 5.0, sr, seed)
                else:
                    samples = negative_bed(kinds[target % len(kinds)], rng, 5.0, sr)
                _write_wav(esc_root / "audio" / filename, samples, sr)
                writer.writerow([filename, 1, target, category, "False", filename, take])
    stats["esc50"] = esc50_per_class * (len(esc_classes) - len(ESC50_EXCLUDED))

    # FSC-22: metadata.csv with published column names
    fsc_root = root / "fsc22"
    fsc_classes = ["Rain", "Wind", "Thunderstorm", "WaterDrops", "Fire", "Insect",
                   "Frog", "VehicleEngine", "Footsteps"] + FSC22_EXCLUDED
    fsc_root.mkdir(parents=True, exist_ok=True)
    with open(fsc_root / "metadata.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["Dataset File Name", "Class ID", "Class Name"])
        for class_id, label in enumerate(fsc_classes, start=1):
            for k in range(fsc22_per_class):
                filename = f"{class_id}_{k + 1:04d}.wav"
                if label in FSC22_EXCLUDED:
                    samples = make_recording(class_id * 50 + k, class_id, 5.0, sr, seed)
                else:
                    samples = negative_bed(kinds[class_id % len(kinds)], rng, 5.0, sr)
                _write_wav(fsc_root / "audio" / filename, samples, sr)
                writer.writerow([filename, class_id, label])
    stats["fsc22"] = fsc22_per_class * (len(fsc_classes) - len(FSC22_EXCLUDED))

    # DataSEC: variable durations; short clips exercise padding and the
    # oversized speech category exercises the per-category cap
    ds_root = root / "datasec"
    ds_classes = ["Vehicles", "Aircraft", "Machinery", "Sirens", "Thunder", "Bells",
                  "Insects", "Cats", "Dogs", "Human speech"] + DATASEC_EXCLUDED
    ds_root.mkdir(parents=True, exist_ok=True)
    with open(ds_root / "metadata.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["filename", "category"])
        for class_idx, label in enumerate(ds_classes):
            count = datasec_per_class * (3 if label == "Human speech" else 1)
            for k in range(count):
                filename = f"ds_{class_idx:02d}_{k:03d}.wav"
                duration = float(rng.uniform(1.0, 8.0))
                if label in DATASEC_EXCLUDED:
                    samples = make_recording(9000 + class_idx * 20 + k,
                                             class_idx, max(duration, 3.2), sr, seed)
                else:
                    samples = negative_bed(kinds[class_idx % len(kinds)], rng, duration, sr)
                _write_wav(ds_root / "audio" / filename, samples, sr)
                writer.writerow([filename, label])
    stats["datasec"] = datasec_per_class * (len(ds_classes) - len(DATASEC_EXCLUDED) + 2)
    return stats


def write_fixture_config(root: Path, n_target: int = 252, seed: int = 42,
                         country: str = "Fixtureland") -> Path:
    """Run config wired to the fixture layout; quotas fit the default supplies."""
    root = Path(root).resolve()
    quotas = {"birdvox": 100, "freefield1010": 60, "warblr": 40,
              "fsc22": 15, "esc50": 12, "datasec": 25}
    config = {
        "profile": "fixture",
        "seed": seed,
        "fetch": {
            "endpoint": "https://fixture.invalid/api",
            "countries": [country],
            "cache_dir": str(root / "positive" / "api"),
            "politeness_delay_s": 0.0,
        },
        "balance": {"n_target": n_target, "k_clusters": 5},
        "negatives": {
            "sources": [
                {"name": "birdvox", "root": str(root / "negative" / "birdvox"),
                 "quota": quotas["birdvox"], "policy": "center_crop",
                 "excluded": [], "priority": []},
                {"name": "freefield1010", "root": str(root / "negative" / "freefield1010"),
                 "quota": quotas["freefield1010"], "policy": "center_crop",
                 "excluded": [], "priority": []},
                {"name": "warblr", "root": str(root / "negative" / "warblr"),
                 "quota": quotas["warblr"], "policy": "center_crop",
                 "excluded": [], "priority": []},
                {"name": "fsc22", "root": str(root / "negative" / "fsc22"),
                 "quota": quotas["fsc22"], "policy": "center_crop",
                 "excluded": list(FSC22_EXCLUDED),
                 "priority": ["Rain", "Wind", "Thunderstorm", "WaterDrops", "Fire",
                              "Insect", "Frog"]},
                {"name": "esc50", "root": str(root / "negative" / "esc50"),
                 "quota": quotas["esc50"], "policy": "center_crop",
                 "excluded": list(ESC50_EXCLUDED),
                 "priority": ["rain", "wind", "sea_waves", "crackling_fire"]},
                {"name": "datasec", "root": str(root / "negative" / "datasec"),
                 "quota": quotas["datasec"], "policy": "highest_rms_window",
                 "excluded": list(DATASEC_EXCLUDED),
                 "priority": ["Thunder", "Insects", "Vehicles", "Aircraft", "Machinery",
                              "Bells", "Sirens", "Cats", "Dogs", "Human speech"]},
            ],
        },
        "audit": {"round_seeds": [42, 43], "round_size": 40},
    }
    import yaml

    path = root / "fixture_config.yaml"
    path.write_text(yaml.safe_dump(config, sort_keys=False))
    return path
