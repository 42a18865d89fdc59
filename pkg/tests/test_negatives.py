import csv

import numpy as np
import pytest

from birdcorpus.audio_io import ClipBuffer
from birdcorpus.errors import InsufficientSupply, MissingLabelFile, UnknownLayout
from birdcorpus.negatives import (DATASEC_EXCLUDED, ESC50_EXCLUDED,
                                  FSC22_EXCLUDED, NegativeClip,
                                  NegativeSourceSpec, QualityGate, load_source,
                                  allocate_and_diversify, quality_filter,
                                  segment_negative)
from birdcorpus.synth import write_negative_fixture

SR = 16000


@pytest.fixture(scope="module")
def layouts(tmp_path_factory):
    root = tmp_path_factory.mktemp("negfix")
    write_negative_fixture(root, seed=3,
                           dcase_sizes={"birdvox": 20, "freefield1010": 12, "warblr": 8})
    return root


class TestAdapters:
    def test_dcase_yields_only_hasbird_zero(self, layouts):
        spec = NegativeSourceSpec(name="birdvox", root_path=layouts / "birdvox")
        cands = load_source(spec)
        # 20 negatives + 3 planted reject rows, never the hasbird=1 rows
        assert len(cands) == 23
        assert all(c.class_label == "nobird" for c in cands)

    def test_esc50_exclusions(self, layouts):
        spec = NegativeSourceSpec(name="esc50", root_path=layouts / "esc50",
                                  excluded_classes=list(ESC50_EXCLUDED))
        cands = load_source(spec)
        assert all(c.class_label not in ESC50_EXCLUDED for c in cands)
        assert len(cands) == 16  # 8 non-bird classes x 2

    def test_esc50_published_scale_arithmetic(self, tmp_path):
        # full-size metadata (50 classes x 40 takes): exclusions leave 1840
        root = tmp_path / "esc50full"
        (root / "meta").mkdir(parents=True)
        classes = [f"class_{i:02d}" for i in range(46)] + list(ESC50_EXCLUDED)
        with open(root / "meta" / "esc50.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["filename", "fold", "target", "category", "esc10", "src_file", "take"])
            for target, cat in enumerate(classes):
                for take in range(40):
                    writer.writerow([f"{target}-{take}.wav", 1, target, cat, "F", "x", take])
        spec = NegativeSourceSpec(name="esc50", root_path=root,
                                  excluded_classes=list(ESC50_EXCLUDED))
        assert len(load_source(spec)) == 1840

    def test_fsc22_published_scale_arithmetic(self, tmp_path):
        # 27 non-bird classes with ~69.4 usable apiece is the published 1875
        root = tmp_path / "fsc22full"
        root.mkdir()
        with open(root / "metadata.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["Dataset File Name", "Class ID", "Class Name"])
            row = 0
            for class_id in range(27):
                count = 70 if class_id < 12 else 69
                for k in range(count):
                    writer.writerow([f"{class_id}_{k}.wav", class_id, f"cls{class_id}"])
                    row += 1
            for class_id, name in enumerate(FSC22_EXCLUDED, start=27):
                for k in range(75):
                    writer.writerow([f"{class_id}_{k}.wav", class_id, name])
        spec = NegativeSourceSpec(name="fsc22", root_path=root,
                                  excluded_classes=list(FSC22_EXCLUDED))
        assert len(load_source(spec)) == 1875

    def test_empty_directory_raises(self, tmp_path):
        spec = NegativeSourceSpec(name="esc50", root_path=tmp_path / "empty")
        with pytest.raises(MissingLabelFile):
            load_source(spec)

    def test_unknown_source_rejected(self, tmp_path):
        with pytest.raises(UnknownLayout):
            NegativeSourceSpec(name="mystery", root_path=tmp_path)

    def test_datasec_excludes_music(self, layouts):
        spec = NegativeSourceSpec(name="datasec", root_path=layouts / "datasec",
                                  excluded_classes=list(DATASEC_EXCLUDED))
        cands = load_source(spec)
        assert all(c.class_label not in DATASEC_EXCLUDED for c in cands)


class TestSegmentNegative:
    def test_center_crop_10s(self):
        samples = np.arange(10 * SR, dtype=float) / (10 * SR)
        clip, start = segment_negative(ClipBuffer(samples, SR), "center_crop")
        assert clip.duration_samples == 48000
        assert start == pytest.approx(3.5)
        assert np.array_equal(clip.samples, samples[int(3.5 * SR):int(6.5 * SR)])

    def test_highest_rms_window_finds_burst(self):
        samples = np.random.default_rng(1).normal(0, 0.001, 7 * SR)
        samples[5 * SR:int(5.5 * SR)] += 0.6
        clip, start = segment_negative(ClipBuffer(samples, SR), "highest_rms_window")
        # exhaustive window oracle
        best, best_rms = 0.0, -1.0
        for s in range(0, 7 * SR - 48000 + 1, SR // 10):
            seg = samples[s:s + 48000]
            value = float(np.sqrt(np.mean(seg * seg)))
            if value > best_rms:
                best, best_rms = s / SR, value
        assert start == pytest.approx(best)
        assert start <= 5.0 <= start + 3.0

    def test_short_clip_zero_padded(self):
        samples = np.ones(2 * SR) * 0.3
        clip, start = segment_negative(ClipBuffer(samples, SR), "pad_or_crop")
        assert clip.duration_samples == 48000
        assert start == 0.0
        assert np.all(clip.samples[:8000] == 0.0)
        assert np.all(clip.samples[-8000:] == 0.0)

    def test_short_clip_padded_under_any_policy(self):
        samples = np.ones(SR) * 0.2
        for policy in ("center_crop", "highest_rms_window", "pad_or_crop"):
            clip, _ = segment_negative(ClipBuffer(samples, SR), policy)
            assert clip.duration_samples == 48000


class TestQualityGate:
    def test_digital_silence_fails(self):
        ok, summary = quality_filter(ClipBuffer(np.zeros(48000), SR), QualityGate())
        assert not ok and summary.rms == 0.0

    def test_hard_clipped_fails(self):
        t = np.arange(48000) / SR
        ok, summary = quality_filter(
            ClipBuffer(np.sign(np.sin(2 * np.pi * 100 * t)), SR), QualityGate())
        assert not ok and summary.peak > 0.98

    def test_low_dynamic_range_drone_fails(self):
        t = np.arange(48000) / SR
        ok, summary = quality_filter(
            ClipBuffer(0.2 * np.sin(2 * np.pi * 440 * t), SR), QualityGate())
        assert not ok and summary.dynamic_range < 0.1

    def test_pink_noise_passes(self):
        rng = np.random.default_rng(8)
        spectrum = rng.standard_normal(24001) + 1j * rng.standard_normal(24001)
        spectrum /= np.sqrt(np.maximum(np.arange(24001), 1.0))
        samples = np.fft.irfft(spectrum, 48000)
        samples *= 0.5 / np.max(np.abs(samples))
        ok, summary = quality_filter(ClipBuffer(samples, SR), QualityGate())
        assert ok
        assert summary.rms >= 0.0001 and summary.peak <= 0.98


def _mk_clips(source, category, n):
    return [NegativeClip(clip_id=f"{source}-{category}-{i:04d}", source_dataset=source,
                         source_file=f"{category}/{i}.wav", class_label=category,
                         policy="center_crop", start_s=0.0, rms=0.1, peak=0.5)
            for i in range(n)]


class TestAllocation:
    def test_zero_quota_source_contributes_nothing(self):
        spec = NegativeSourceSpec(name="esc50", root_path=".", quota=0)
        out = allocate_and_diversify({"esc50": _mk_clips("esc50", "rain", 5)}, [spec])
        assert out == []

    def test_published_totals_sum_to_25000(self):
        # metadata-level reproduction of the published per-source totals
        sizes = {"birdvox": 9983, "freefield1010": 5755, "warblr": 1950,
                 "fsc22": 1875, "esc50": 1840, "datasec": 3597}
        candidates = {name: _mk_clips(name, "env", size) for name, size in sizes.items()}
        specs = [NegativeSourceSpec(name=name, root_path=".", quota=size)
                 for name, size in sizes.items()]
        out = allocate_and_diversify(candidates, specs, seed=0)
        per_source = {}
        for clip in out:
            per_source[clip.source_dataset] = per_source.get(clip.source_dataset, 0) + 1
        assert per_source == sizes
        assert len(out) == 25000

    def test_category_priority_and_cap(self):
        cands = (_mk_clips("datasec", "Thunder", 10) + _mk_clips("datasec", "Human speech", 50)
                 + _mk_clips("datasec", "Vehicles", 10))
        spec = NegativeSourceSpec(
            name="datasec", root_path=".", quota=24,
            category_priority=["Thunder", "Vehicles", "Human speech"],
            per_category_cap=10)
        out = allocate_and_diversify({"datasec": cands}, [spec], seed=1)
        by_cat = {}
        for clip in out:
            by_cat[clip.class_label] = by_cat.get(clip.class_label, 0) + 1
        assert by_cat == {"Thunder": 10, "Vehicles": 10, "Human speech": 4}

    def test_seed_determinism(self):
        cands = {"esc50": _mk_clips("esc50", "rain", 100)}
        spec = NegativeSourceSpec(name="esc50", root_path=".", quota=30)
        a = allocate_and_diversify(cands, [spec], seed=5)
        b = allocate_and_diversify(cands, [spec], seed=5)
        c = allocate_and_diversify(cands, [spec], seed=6)
        assert [x.clip_id for x in a] == [x.clip_id for x in b]
        assert [x.clip_id for x in a] != [x.clip_id for x in c]

    def test_insufficient_supply_raises(self):
        spec = NegativeSourceSpec(name="warblr", root_path=".", quota=10)
        with pytest.raises(InsufficientSupply):
            allocate_and_diversify({"warblr": _mk_clips("warblr", "nobird", 4)}, [spec])

    def test_excluded_class_in_candidates_rejected(self):
        spec = NegativeSourceSpec(name="esc50", root_path=".", quota=1,
                                  excluded_classes=["crow"])
        with pytest.raises(ValueError):
            allocate_and_diversify({"esc50": _mk_clips("esc50", "crow", 2)}, [spec])
