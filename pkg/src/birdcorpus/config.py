"""Run configuration: one document drives every stage.

The checked-in paper profile carries the published constants; a custom
config overrides any subset of it. The resolved config is serialized next to
every stage output so a run can be replayed.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import yaml

from .errors import ConfigInvalid
from .negatives import NegativeSourceSpec, QualityGate


@dataclass
class FetchConfig:
    endpoint: str = "https://xeno-canto.org/api/3/recordings"
    group: str = "birds"
    countries: list[str] = field(default_factory=lambda: ["Malaysia"])
    api_key_env: str = "XC_API_KEY"
    politeness_delay_s: float = 0.0
    cache_dir: Optional[str] = None  # default: <workspace>/cache/api


@dataclass
class DownloadConfig:
    jobs: int = 4


@dataclass
class DedupConfig:
    k_neighbors: int = 6
    exact_threshold: float = 1e-7
    near_threshold: float = 1e-3
    n_mels: int = 128
    fft_size: int = 512
    hop: int = 128


@dataclass
class ExtractConfig:
    window_s: float = 3.0
    step_s: float = 0.1
    min_rms: float = 0.001
    min_separation_s: float = 1.5
    skip_head_threshold_s: float = 12.0
    skip_head_s: float = 3.0
    max_clips: Optional[int] = None


@dataclass
class BalanceConfig:
    n_target: int = 25000
    k_clusters: int = 5


@dataclass
class NegativesConfig:
    gate: QualityGate = field(default_factory=QualityGate)
    sources: list[NegativeSourceSpec] = field(default_factory=list)


@dataclass
class SplitConfig:
    ratios: tuple = (0.8, 0.1, 0.1)


@dataclass
class AuditConfig:
    p_hat: float = 0.04
    margin: float = 0.015
    z: float = 1.96
    round_seeds: list[int] = field(default_factory=lambda: [42, 43])
    round_size: Optional[int] = 500


@dataclass
class RunConfig:
    workspace: Path = Path("workspace")
    seed: int = 42
    profile: str = "paper"
    fetch: FetchConfig = field(default_factory=FetchConfig)
    download: DownloadConfig = field(default_factory=DownloadConfig)
    dedup: DedupConfig = field(default_factory=DedupConfig)
    extract: ExtractConfig = field(default_factory=ExtractConfig)
    balance: BalanceConfig = field(default_factory=BalanceConfig)
    negatives: NegativesConfig = field(default_factory=NegativesConfig)
    split: SplitConfig = field(default_factory=SplitConfig)
    audit: AuditConfig = field(default_factory=AuditConfig)

    def to_dict(self) -> dict:
        data = asdict(self)
        data["workspace"] = str(self.workspace)
        data["split"]["ratios"] = list(self.split.ratios)
        data["negatives"]["sources"] = [
            {**s, "root_path": str(s["root_path"])} for s in data["negatives"]["sources"]
        ]
        return data

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)


def _merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def _paper_profile() -> dict:
    text = resources.files("birdcorpus.profiles").joinpath("paper.yaml").read_text()
    return yaml.safe_load(text)


def _build_sources(raw_sources: list[dict]) -> list[NegativeSourceSpec]:
    sources = []
    for raw in raw_sources or []:
        try:
            sources.append(NegativeSourceSpec(
                name=raw["name"],
                root_path=Path(raw.get("root") or raw.get("root_path") or ""),
                excluded_classes=list(raw.get("excluded", raw.get("excluded_classes", []))),
                quota=int(raw.get("quota", 0)),
                segmentation_policy=raw.get("policy", raw.get("segmentation_policy",
                                                              "center_crop")),
                category_priority=list(raw.get("priority", raw.get("category_priority", []))),
                per_category_cap=raw.get("per_category_cap"),
            ))
        except (KeyError, ValueError, TypeError) as exc:
            raise ConfigInvalid(f"bad negative source entry {raw}: {exc}") from exc
    return sources


def load_config(path=None, workspace=None, seed=None, overrides: dict | None = None) -> RunConfig:
    """Resolve profile + optional user YAML + CLI overrides into a RunConfig."""
    data = _paper_profile()
    if path is not None:
        with open(path) as fh:
            user = yaml.safe_load(fh) or {}
        data = _merge(data, user)
    if overrides:
        data = _merge(data, overrides)

    try:
        cfg = RunConfig(
            workspace=Path(workspace if workspace is not None else data.get("workspace", "workspace")),
            seed=int(seed if seed is not None else data.get("seed", 42)),
            profile=str(data.get("profile", "custom")),
            fetch=FetchConfig(
                endpoint=data["fetch"]["endpoint"],
                group=data["fetch"].get("group", "birds"),
                countries=list(data["fetch"]["countries"]),
                api_key_env=data["fetch"].get("api_key_env", "XC_API_KEY"),
                politeness_delay_s=float(data["fetch"].get("politeness_delay_s", 0.0)),
                cache_dir=data["fetch"].get("cache_dir"),
            ),
            download=DownloadConfig(jobs=int(data["download"].get("jobs", 4))),
            dedup=DedupConfig(
                k_neighbors=int(data["dedup"]["k_neighbors"]),
                exact_threshold=float(data["dedup"]["exact_threshold"]),
                near_threshold=float(data["dedup"]["near_threshold"]),
                n_mels=int(data["dedup"]["n_mels"]),
                fft_size=int(data["dedup"]["fft_size"]),
                hop=int(data["dedup"]["hop"]),
            ),
            extract=ExtractConfig(
                window_s=float(data["extract"]["window_s"]),
                step_s=float(data["extract"]["step_s"]),
                min_rms=float(data["extract"]["min_rms"]),
                min_separation_s=float(data["extract"]["min_separation_s"]),
                skip_head_threshold_s=float(data["extract"]["skip_head_threshold_s"]),
                skip_head_s=float(data["extract"]["skip_head_s"]),
                max_clips=(None if data["extract"].get("max_clips") in (None, "null")
                           else int(data["extract"]["max_clips"])),
            ),
            balance=BalanceConfig(
                n_target=int(data["balance"]["n_target"]),
                k_clusters=int(data["balance"]["k_clusters"]),
            ),
            negatives=NegativesConfig(
                gate=QualityGate(
                    min_rms=float(data["negatives"]["gate"]["min_rms"]),
                    max_peak=float(data["negatives"]["gate"]["max_peak"]),
                    min_dynamic_range=float(data["negatives"]["gate"]["min_dynamic_range"]),
                ),
                sources=_build_sources(data["negatives"].get("sources", [])),
            ),
            split=SplitConfig(ratios=tuple(float(r) for r in data["split"]["ratios"])),
            audit=AuditConfig(
                p_hat=float(data["audit"]["p_hat"]),
                margin=float(data["audit"]["margin"]),
                z=float(data["audit"]["z"]),
                round_seeds=list(data["audit"].get("round_seeds", [42, 43])),
                round_size=(None if data["audit"].get("round_size") in (None, "null")
                            else int(data["audit"]["round_size"])),
            ),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigInvalid(f"invalid configuration: {exc}") from exc

    validate_config(cfg)
    return cfg


def validate_config(cfg: RunConfig) -> None:
    if abs(sum(cfg.split.ratios) - 1.0) > 1e-9:
        raise ConfigInvalid(f"split ratios must sum to 1, got {cfg.split.ratios}")
    if cfg.balance.n_target < 1:
        raise ConfigInvalid("balance.n_target must be positive")
    if cfg.balance.k_clusters < 1:
        raise ConfigInvalid("balance.k_clusters must be positive")
    if cfg.extract.min_rms < 0 or cfg.extract.step_s <= 0 or cfg.extract.window_s <= 0:
        raise ConfigInvalid("extract thresholds must be positive")
    gate = cfg.negatives.gate
    if gate.min_rms <= 0 or gate.max_peak <= 0 or gate.min_dynamic_range <= 0:
        raise ConfigInvalid("quality gate thresholds must be strictly positive")
    if gate.min_rms >= gate.max_peak:
        raise ConfigInvalid("gate.min_rms must be below gate.max_peak")
    if not 0.0 < cfg.audit.p_hat < 1.0:
        raise ConfigInvalid("audit.p_hat must be in (0, 1)")
    for source in cfg.negatives.sources:
        if source.quota < 0:
            raise ConfigInvalid(f"negative quota must be >= 0 ({source.name})")
