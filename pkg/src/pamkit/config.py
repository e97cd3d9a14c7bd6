"""Pipeline configuration: species band table, processing parameters, paths.

One hierarchical YAML file drives every command. Loading validates against a
schema that rejects unknown keys and reports the offending key path; a digest
of the normalized config is embedded in all outputs so mixed-provenance
inputs can be refused.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .augment import MaskParams
from .cluster import DensityParams, ReductionParams
from .detect import BandSpec
from .errors import ConfigError
from .features import LF_CONFIG, MF_CONFIG, MelConfig


@dataclass(frozen=True)
class SpeciesEntry:
    band: BandSpec
    mel_config: str  # LF | MF
    note: str = ""


@dataclass
class PipelineConfig:
    species: list[SpeciesEntry]
    detection_win_s: float = 1.0
    detection_hop_s: float = 0.125
    detection_threshold_db: float = 3.0
    detection_rate_hz: int = 8000
    mel: dict[str, MelConfig] = field(default_factory=lambda: dict(LF=LF_CONFIG, MF=MF_CONFIG))
    mask_params: MaskParams = field(default_factory=MaskParams)
    alpha_range_db_per_hz: tuple[float, float] = (0.002, 0.004)
    alpha_units: str = "db_per_hz"  # literal paper text reads db_per_khz; see docs
    snr_range_db: tuple[float, float] = (3.0, 15.0)
    p_base: float = 0.1
    p_max: float = 0.8
    mask_stage: str = "pre_normalization"
    reduction: ReductionParams = field(default_factory=ReductionParams)
    density: DensityParams = field(default_factory=DensityParams)
    split_train_fraction: float = 0.8
    split_stratified: bool = False
    eval_threshold_lo: float = 1e-7
    eval_threshold_hi: float = 1.0
    eval_threshold_count: int = 200
    excerpt_dur_s: float = 10.0
    crossfade_dur_s: float = 0.05
    seed: int = 0
    jobs: int = 1
    data_root: str = "."
    service_port: int = 8777

    @property
    def species_order(self) -> tuple[str, ...]:
        return tuple(e.band.species_id for e in self.species)

    @property
    def lf_species(self) -> frozenset[str]:
        return frozenset(e.band.species_id for e in self.species if e.mel_config == "LF")

    def alpha_range_hz(self) -> tuple[float, float]:
        """Attenuation slope range in dB/Hz under the configured unit reading."""
        lo, hi = self.alpha_range_db_per_hz
        if self.alpha_units == "db_per_khz":
            return (lo / 1000.0, hi / 1000.0)
        return (lo, hi)

    def band_specs(self) -> list[BandSpec]:
        return [e.band for e in self.species]

    def to_dict(self) -> dict:
        return {
            "species": [
                {
                    "species_id": e.band.species_id,
                    "f_low_hz": e.band.f_low_hz,
                    "f_high_hz": e.band.f_high_hz,
                    "min_dur_s": e.band.min_dur_s,
                    "max_dur_s": e.band.max_dur_s,
                    "mel_config": e.mel_config,
                    "note": e.note,
                }
                for e in self.species
            ],
            "detection": {
                "win_s": self.detection_win_s,
                "hop_s": self.detection_hop_s,
                "threshold_db": self.detection_threshold_db,
                "analysis_rate_hz": self.detection_rate_hz,
            },
            "mel": {
                name: {
                    "sample_rate_hz": c.sample_rate_hz,
                    "win_s": c.win_s,
                    "hop_s": c.hop_s,
                    "n_mels": c.n_mels,
                    "f_min_hz": c.f_min_hz,
                    "f_max_hz": c.f_max_hz,
                    "target_frames": c.target_frames,
                }
                for name, c in sorted(self.mel.items())
            },
            "augment": {
                "masks": {
                    "n_time_masks": self.mask_params.n_time_masks,
                    "max_time_frac": self.mask_params.max_time_frac,
                    "n_freq_masks": self.mask_params.n_freq_masks,
                    "max_freq_bands": self.mask_params.max_freq_bands,
                },
                "alpha_range_db_per_hz": list(self.alpha_range_db_per_hz),
                "alpha_units": self.alpha_units,
                "snr_range_db": list(self.snr_range_db),
                "p_base": self.p_base,
                "p_max": self.p_max,
                "mask_stage": self.mask_stage,
            },
            "reduction": {
                "n_neighbors": self.reduction.n_neighbors,
                "min_dist": self.reduction.min_dist,
                "out_dim": self.reduction.out_dim,
                "n_epochs": self.reduction.n_epochs,
                "rng_seed": self.reduction.rng_seed,
            },
            "density": {
                "min_cluster_size": self.density.min_cluster_size,
                "min_samples": self.density.min_samples,
                "selection": self.density.selection,
                "selection_epsilon": self.density.selection_epsilon,
                "metric": self.density.metric,
            },
            "split": {
                "train_fraction": self.split_train_fraction,
                "stratified": self.split_stratified,
            },
            "eval": {
                "threshold_lo": self.eval_threshold_lo,
                "threshold_hi": self.eval_threshold_hi,
                "threshold_count": self.eval_threshold_count,
            },
            "excerpt": {
                "dur_s": self.excerpt_dur_s,
                "crossfade_dur_s": self.crossfade_dur_s,
            },
            "seed": self.seed,
            "jobs": self.jobs,
            "data_root": self.data_root,
            "service": {"port": self.service_port},
        }

    def digest(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:12]


# Illustrative default bands; tune per deployment from field literature.
DEFAULT_SPECIES = [
    SpeciesEntry(
        band=BandSpec("elephant_rumble", 5.0, 250.0, 1.0, 30.0),
        mel_config="LF",
        note="illustrative default band, set per deployment",
    ),
    SpeciesEntry(
        band=BandSpec("chimpanzee", 300.0, 2000.0, 0.5, 15.0),
        mel_config="MF",
        note="illustrative default band, set per deployment",
    ),
    SpeciesEntry(
        band=BandSpec("hornbill", 400.0, 1200.0, 0.5, 10.0),
        mel_config="MF",
        note="illustrative default band, set per deployment",
    ),
]


def default_config() -> PipelineConfig:
    return PipelineConfig(species=list(DEFAULT_SPECIES))


_SCHEMA = {
    "species": list,
    "detection": {"win_s": float, "hop_s": float, "threshold_db": float,
                  "analysis_rate_hz": int},
    "mel": dict,
    "augment": {"masks": {"n_time_masks": int, "max_time_frac": float,
                          "n_freq_masks": int, "max_freq_bands": int},
                "alpha_range_db_per_hz": list, "alpha_units": str,
                "snr_range_db": list, "p_base": float, "p_max": float,
                "mask_stage": str},
    "reduction": {"n_neighbors": int, "min_dist": float, "out_dim": int,
                  "n_epochs": int, "rng_seed": int},
    "density": {"min_cluster_size": int, "min_samples": int, "selection": str,
                "selection_epsilon": float, "metric": str},
    "split": {"train_fraction": float, "stratified": bool},
    "eval": {"threshold_lo": float, "threshold_hi": float, "threshold_count": int},
    "excerpt": {"dur_s": float, "crossfade_dur_s": float},
    "seed": int,
    "jobs": int,
    "data_root": str,
    "service": {"port": int},
}

_SPECIES_KEYS = {"species_id", "f_low_hz", "f_high_hz", "min_dur_s", "max_dur_s",
                 "mel_config", "note"}
_MEL_KEYS = {"sample_rate_hz", "win_s", "hop_s", "n_mels", "f_min_hz", "f_max_hz",
             "target_frames"}


def _check_keys(data: dict, schema: dict, path: str) -> None:
    for key in data:
        if key not in schema:
            raise ConfigError(f"unknown key {path}{key}")
    for key, sub in schema.items():
        if key in data and isinstance(sub, dict):
            if not isinstance(data[key], dict):
                raise ConfigError(f"{path}{key} must be a mapping")
            _check_keys(data[key], sub, f"{path}{key}.")


def load_config(path: str | Path) -> PipelineConfig:
    """Parse and validate a YAML config file; unknown keys are rejected."""
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    _check_keys(data, _SCHEMA, "")

    base = default_config().to_dict()

    def merged(section: str) -> dict:
        out = dict(base[section])
        out.update(data.get(section, {}))
        return out

    species: list[SpeciesEntry] = []
    for i, entry in enumerate(data.get("species", base["species"])):
        extra = set(entry) - _SPECIES_KEYS
        if extra:
            raise ConfigError(f"species[{i}]: unknown keys {sorted(extra)}")
        try:
            species.append(
                SpeciesEntry(
                    band=BandSpec(
                        species_id=entry["species_id"],
                        f_low_hz=float(entry["f_low_hz"]),
                        f_high_hz=float(entry["f_high_hz"]),
                        min_dur_s=float(entry["min_dur_s"]),
                        max_dur_s=float(entry["max_dur_s"]),
                    ),
                    mel_config=entry.get("mel_config", "MF"),
                    note=entry.get("note", ""),
                )
            )
        except KeyError as exc:
            raise ConfigError(f"species[{i}]: missing key {exc}") from exc

    mel: dict[str, MelConfig] = {}
    for name, vals in {**base["mel"], **data.get("mel", {})}.items():
        extra = set(vals) - _MEL_KEYS
        if extra:
            raise ConfigError(f"mel.{name}: unknown keys {sorted(extra)}")
        merged_vals = {**base["mel"].get(name, {}), **vals}
        mel[name] = MelConfig(name=name, **merged_vals)

    det = merged("detection")
    aug = merged("augment")
    if aug["alpha_units"] not in ("db_per_hz", "db_per_khz"):
        raise ConfigError(f"augment.alpha_units must be db_per_hz or db_per_khz, "
                          f"got {aug['alpha_units']!r}")
    if aug["mask_stage"] not in ("pre_normalization", "post_normalization"):
        raise ConfigError(f"augment.mask_stage must be pre_normalization or "
                          f"post_normalization, got {aug['mask_stage']!r}")
    masks = {**base["augment"]["masks"], **data.get("augment", {}).get("masks", {})}
    red = merged("reduction")
    den = merged("density")
    spl = merged("split")
    ev = merged("eval")
    exc_ = merged("excerpt")
    svc = merged("service")

    try:
        return PipelineConfig(
            species=species,
            detection_win_s=float(det["win_s"]),
            detection_hop_s=float(det["hop_s"]),
            detection_threshold_db=float(det["threshold_db"]),
            detection_rate_hz=int(det["analysis_rate_hz"]),
            mel=mel,
            mask_params=MaskParams(
                n_time_masks=int(masks["n_time_masks"]),
                max_time_frac=float(masks["max_time_frac"]),
                n_freq_masks=int(masks["n_freq_masks"]),
                max_freq_bands=int(masks["max_freq_bands"]),
            ),
            alpha_range_db_per_hz=tuple(float(x) for x in aug["alpha_range_db_per_hz"]),
            alpha_units=str(aug["alpha_units"]),
            snr_range_db=tuple(float(x) for x in aug["snr_range_db"]),
            p_base=float(aug["p_base"]),
            p_max=float(aug["p_max"]),
            mask_stage=str(aug["mask_stage"]),
            reduction=ReductionParams(
                n_neighbors=int(red["n_neighbors"]),
                min_dist=float(red["min_dist"]),
                out_dim=int(red["out_dim"]),
                n_epochs=int(red["n_epochs"]),
                rng_seed=int(red["rng_seed"]),
            ),
            density=DensityParams(
                min_cluster_size=int(den["min_cluster_size"]),
                min_samples=int(den["min_samples"]),
                selection=str(den["selection"]),
                selection_epsilon=float(den["selection_epsilon"]),
                metric=str(den["metric"]),
            ),
            split_train_fraction=float(spl["train_fraction"]),
            split_stratified=bool(spl["stratified"]),
            eval_threshold_lo=float(ev["threshold_lo"]),
            eval_threshold_hi=float(ev["threshold_hi"]),
            eval_threshold_count=int(ev["threshold_count"]),
            excerpt_dur_s=float(exc_["dur_s"]),
            crossfade_dur_s=float(exc_["crossfade_dur_s"]),
            seed=int(data.get("seed", base["seed"])),
            jobs=int(data.get("jobs", base["jobs"])),
            data_root=str(data.get("data_root", base["data_root"])),
            service_port=int(svc["port"]),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
