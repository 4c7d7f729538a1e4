"""Forward dust model: transmission maps, reflexivity and atmospheric light
estimation, dusty-image synthesis, and paired dataset generation.

A dusty image is the per-pixel convex blend

    H(x, c) = C(x, c) * T(x) + L(c) * (1 - T(x))

where the transmission map T = 1 - alpha * M comes from a Perlin field M and
a strength alpha, and the atmospheric light L(c) = phi(c) * max(C) scales the
scene maximum by the per-channel dust reflexivity phi.  T carries no channel
dependence by construction; wavelength enters only through L.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import EstimationError, ManifestError, ValidationError
from .metrics import dust_index
from .noise import DEFAULT_RANGES, NoiseField, ParamRanges, PerlinParams, perlin2d, sample_params
from .raster import Image, PatchRegion, crop_patch, load_image, save_image
from .rng import mix64, shuffled

logger = logging.getLogger(__name__)

# Dust strengths used by the synthesis protocol: one map per alpha, each value
# used exactly once per clean image.
ALPHA_SET = (0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0)


@dataclass(frozen=True)
class TransmissionMap:
    """Fraction of ground light reaching the sensor; 1 = clear, 0 = opaque."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValidationError(f"transmission map must be 2-D, got shape {arr.shape}")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValidationError("transmission values outside [0, 1]")
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class Reflexivity:
    """Per-channel dust reflectance relative to the brightest channel."""

    phi: tuple[float, ...]

    def __post_init__(self):
        if not self.phi:
            raise ValidationError("reflexivity needs at least one channel")
        for v in self.phi:
            if not 0 < v <= 1:
                raise ValidationError(f"reflexivity values must be in (0, 1], got {v}")


@dataclass(frozen=True)
class AtmosphericLight:
    """Per-channel intensity of light scattered toward the sensor by dust."""

    values: tuple[float, ...]

    def __post_init__(self):
        if not self.values:
            raise ValidationError("atmospheric light needs at least one channel")
        for v in self.values:
            if not 0 <= v <= 1:
                raise ValidationError(f"light values must be in [0, 1], got {v}")


def _check_alpha(alpha: float) -> None:
    if not 0 < alpha <= 1:
        raise ValidationError(f"alpha must be in (0, 1], got {alpha}")


def make_transmission(noise: NoiseField, alpha: float) -> TransmissionMap:
    """T = 1 - alpha * M, elementwise; output lies in [1 - alpha, 1]."""
    _check_alpha(alpha)
    return TransmissionMap(1.0 - alpha * noise.values)


def estimate_reflexivity(patches: Sequence[Image]) -> Reflexivity:
    """Average, over patches then pixels, of each channel over the per-pixel
    channel maximum.  Pixels whose channel maximum is zero are skipped (black
    sensor artifacts); a patch with no usable pixels is dropped entirely.
    """
    if not patches:
        raise EstimationError("empty patch set")
    channels = patches[0].channels
    contributions = []
    skipped = 0
    for patch in patches:
        if patch.channels != channels:
            raise ValidationError("patches must share a channel count")
        arr = patch.data
        pixmax = arr.max(axis=2)
        mask = pixmax > 0.0
        skipped += int(mask.size - mask.sum())
        if not mask.any():
            continue
        ratios = arr[mask] / pixmax[mask][:, None]
        contributions.append(ratios.mean(axis=0))
    if skipped:
        logger.warning("estimate_reflexivity: skipped %d zero-maximum pixels", skipped)
    if not contributions:
        raise EstimationError("all patches are fully black; cannot estimate reflexivity")
    phi = np.mean(np.stack(contributions), axis=0)
    return Reflexivity(tuple(float(v) for v in phi))


def estimate_atmospheric_light(img: Image, phi: Reflexivity) -> AtmosphericLight:
    """L(c) = phi(c) * global maximum sample of the image."""
    if len(phi.phi) != img.channels:
        raise ValidationError(
            f"reflexivity has {len(phi.phi)} channels, image has {img.channels}"
        )
    peak = float(img.data.max())
    return AtmosphericLight(tuple(p * peak for p in phi.phi))


def synthesize_dusty(img: Image, tmap: TransmissionMap, light: AtmosphericLight) -> Image:
    """Blend the clean image toward the atmospheric light, weighted by 1 - T."""
    if (tmap.height, tmap.width) != (img.height, img.width):
        raise ValidationError(
            f"transmission {tmap.width}x{tmap.height} does not match image "
            f"{img.width}x{img.height}"
        )
    if len(light.values) != img.channels:
        raise ValidationError(
            f"light has {len(light.values)} channels, image has {img.channels}"
        )
    t = tmap.values[:, :, None]
    low = np.asarray(light.values, dtype=np.float64)
    out = img.data * t + low * (1.0 - t)
    np.clip(out, 0.0, 1.0, out=out)
    return Image(out)


def auto_select_dusty_patches(img: Image, tile: int = 32, count: int = 8) -> list[Image]:
    """Pick the densest-looking square tiles of an image as stand-in heavy-dust
    patches (manual selections take precedence wherever they are available)."""
    if img.width < tile or img.height < tile:
        return [img]
    scored = []
    for ty in range(img.height // tile):
        for tx in range(img.width // tile):
            patch = crop_patch(img, PatchRegion(tx * tile, ty * tile, tile, tile))
            scored.append((dust_index(patch), ty, tx, patch))
    scored.sort(key=lambda item: (-item[0], item[1], item[2]))
    return [item[3] for item in scored[:count]]


@dataclass(frozen=True)
class PairRecord:
    """One clean/dusty pair plus everything needed to re-synthesize it."""

    clean: str
    dusty: str
    scale: float
    octaves: int
    lacunarity: float
    persistence: float
    alpha: float
    light: tuple[float, ...]
    seed: int

    @property
    def perlin_params(self) -> PerlinParams:
        return PerlinParams(self.scale, self.octaves, self.lacunarity, self.persistence, self.seed)


def _fmt17(v: float) -> str:
    return format(float(v), ".17g")


def _record_to_line(rec: PairRecord) -> str:
    light = "[" + ",".join(_fmt17(v) for v in rec.light) + "]"
    return (
        "{"
        f'"clean":{json.dumps(rec.clean)},'
        f'"dusty":{json.dumps(rec.dusty)},'
        f'"scale":{_fmt17(rec.scale)},'
        f'"octaves":{rec.octaves},'
        f'"lacunarity":{_fmt17(rec.lacunarity)},'
        f'"persistence":{_fmt17(rec.persistence)},'
        f'"alpha":{_fmt17(rec.alpha)},'
        f'"light":{light},'
        f'"seed":{rec.seed}'
        "}"
    )


_RECORD_KEYS = {
    "clean", "dusty", "scale", "octaves", "lacunarity", "persistence",
    "alpha", "light", "seed",
}


@dataclass
class DatasetManifest:
    """Ordered pair records, serialized as one JSON object per line."""

    records: list[PairRecord]

    def save(self, path) -> None:
        lines = [_record_to_line(rec) for rec in self.records]
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
        records = []
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"{path}:{lineno}: malformed JSON ({exc})") from exc
            if set(obj) != _RECORD_KEYS:
                raise ManifestError(
                    f"{path}:{lineno}: unexpected record keys {sorted(obj)}"
                )
            records.append(
                PairRecord(
                    clean=obj["clean"],
                    dusty=obj["dusty"],
                    scale=float(obj["scale"]),
                    octaves=int(obj["octaves"]),
                    lacunarity=float(obj["lacunarity"]),
                    persistence=float(obj["persistence"]),
                    alpha=float(obj["alpha"]),
                    light=tuple(float(v) for v in obj["light"]),
                    seed=int(obj["seed"]),
                )
            )
        return cls(records)

    def by_dusty_name(self) -> dict[str, PairRecord]:
        return {Path(rec.dusty).name: rec for rec in self.records}


def replay_dusty(record: PairRecord) -> Image:
    """Re-synthesize a dusty image from its manifest tuple, bit-exactly."""
    clean = load_image(record.clean)
    field = perlin2d(record.perlin_params, clean.width, clean.height)
    tmap = make_transmission(field, record.alpha)
    return synthesize_dusty(clean, tmap, AtmosphericLight(record.light))


def generate_pairs(
    clean_dir,
    phi: Reflexivity,
    maps_per_image: int = 7,
    alpha_set: Sequence[float] = ALPHA_SET,
    seed: int = 0,
    out_dir=None,
    ranges: ParamRanges = DEFAULT_RANGES,
    bit_depth: int = 16,
    jobs: int = 1,
) -> DatasetManifest:
    """Synthesize ``maps_per_image`` dusty variants for every clean PNG.

    Per image i, the map seeds are mix64(mix64(seed, i), j + 1) and the alpha
    values are a seeded permutation of ``alpha_set`` consumed in order: when
    maps_per_image equals the set size, each alpha is used exactly once.
    Parallel and serial runs produce identical bytes because all randomness is
    keyed by the image index, never by scheduling.
    """
    if out_dir is None:
        raise ValidationError("out_dir is required")
    if maps_per_image < 1:
        raise ValidationError(f"maps_per_image must be >= 1, got {maps_per_image}")
    alphas = sorted(set(alpha_set))
    if not alphas:
        raise ValidationError("alpha_set is empty")
    for a in alphas:
        _check_alpha(a)
    clean_paths = sorted(p for p in Path(clean_dir).iterdir() if p.suffix.lower() == ".png")
    if not clean_paths:
        raise ValidationError(f"no PNG images found in {clean_dir}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    def synth_one(index: int, clean_path: Path) -> list[PairRecord]:
        clean = load_image(clean_path)
        light = estimate_atmospheric_light(clean, phi)
        img_seed = mix64(seed, index)
        alpha_order = shuffled(alphas, mix64(img_seed, 0))
        records = []
        for j in range(maps_per_image):
            params = sample_params(mix64(img_seed, j + 1), ranges)
            alpha = alpha_order[j % len(alpha_order)]
            field = perlin2d(params, clean.width, clean.height)
            dusty = synthesize_dusty(clean, make_transmission(field, alpha), light)
            dusty_path = out_dir / f"{clean_path.stem}_d{j:02d}.png"
            save_image(dusty, dusty_path, bit_depth)
            records.append(
                PairRecord(
                    clean=str(clean_path),
                    dusty=str(dusty_path),
                    scale=params.scale,
                    octaves=params.octaves,
                    lacunarity=params.lacunarity,
                    persistence=params.persistence,
                    alpha=alpha,
                    light=light.values,
                    seed=params.seed,
                )
            )
        return records

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(synth_one, range(len(clean_paths)), clean_paths))
    else:
        chunks = [synth_one(i, p) for i, p in enumerate(clean_paths)]
    records = [rec for chunk in chunks for rec in chunk]
    logger.info("generated %d dusty images from %d clean", len(records), len(clean_paths))
    return DatasetManifest(records)
