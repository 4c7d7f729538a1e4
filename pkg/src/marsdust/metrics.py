"""Image quality measures: a no-reference dust-density index plus PSNR/SSIM.

The dust index is a documented surrogate for fog-density scoring, not a
reimplementation of any published metric: it blends inverted local RMS
contrast with dark-channel brightness, both of which rise monotonically as
dust thickens.  Reports label the column "dust_index (FADE-surrogate)".
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DecodeError, ValidationError
from .raster import Image, load_image

logger = logging.getLogger(__name__)

# Mean tile contrast at which the contrast term of the dust index saturates;
# typical clean-terrain tiles sit at or above this.
CONTRAST_NORM = 0.2

_DARK_WINDOW = 7


def _luminance(img: Image) -> np.ndarray:
    if img.channels == 1:
        return img.data[:, :, 0]
    r, g, b = img.data[:, :, 0], img.data[:, :, 1], img.data[:, :, 2]
    return 0.299 * r + 0.587 * g + 0.114 * b


def _min_filter2d(arr: np.ndarray, size: int) -> np.ndarray:
    """Windowed minimum with the window clipped at the image border."""
    half = size // 2
    out = arr
    for axis in (0, 1):
        pad = [(0, 0), (0, 0)]
        pad[axis] = (half, half)
        padded = np.pad(out, pad, mode="constant", constant_values=np.inf)
        stacked = np.stack(
            [np.take(padded, np.arange(arr.shape[axis]) + k, axis=axis) for k in range(size)]
        )
        out = stacked.min(axis=0)
    return out


def dark_channel(img: Image, window: int = _DARK_WINDOW) -> np.ndarray:
    """Per-pixel channel minimum followed by a windowed spatial minimum."""
    return _min_filter2d(img.data.min(axis=2), window)


def dust_index(img: Image, tile: int = 8) -> float:
    """No-reference dust density in [0, 1]; higher means more dust.

    0.5 * (1 - min(1, mean_tile_rms_contrast / 0.2)) + 0.5 * mean_dark_channel.
    Trailing rows/columns that do not fill a full tile are ignored by the
    contrast term.  All means use exactly-rounded summation so the score is
    bit-stable under 90-degree rotations of square images.
    """
    if tile < 2:
        raise ValidationError(f"tile must be >= 2, got {tile}")
    if img.width < tile or img.height < tile:
        raise ValidationError(
            f"image {img.width}x{img.height} smaller than tile {tile}"
        )
    lum = _luminance(img)
    th, tw = img.height // tile, img.width // tile
    tiles = lum[: th * tile, : tw * tile].reshape(th, tile, tw, tile)
    contrasts = []
    for ty in range(th):
        for tx in range(tw):
            vals = tiles[ty, :, tx, :].ravel().tolist()
            mean = math.fsum(vals) / len(vals)
            var = math.fsum((v - mean) ** 2 for v in vals) / len(vals)
            contrasts.append(math.sqrt(var))
    cbar = math.fsum(contrasts) / len(contrasts)
    dark = dark_channel(img)
    dbar = math.fsum(dark.ravel().tolist()) / dark.size
    return 0.5 * (1.0 - min(1.0, cbar / CONTRAST_NORM)) + 0.5 * dbar


def psnr(a: Image, b: Image) -> float:
    """Peak signal-to-noise ratio in dB with MAX=1; math.inf for identical images."""
    if a.data.shape != b.data.shape:
        raise ValidationError(f"shape mismatch: {a.data.shape} vs {b.data.shape}")
    mse = float(np.mean((a.data - b.data) ** 2))
    if mse == 0.0:
        return math.inf
    return -10.0 * math.log10(mse)


_SSIM_WINDOW = 11
_SSIM_SIGMA = 1.5
_SSIM_K1 = 0.01
_SSIM_K2 = 0.03


def _gaussian_kernel1d(size: int, sigma: float) -> np.ndarray:
    offsets = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    k = np.exp(-(offsets**2) / (2.0 * sigma**2))
    return k / k.sum()


def _filter_valid(arr: np.ndarray, k: np.ndarray) -> np.ndarray:
    """Separable correlation, valid mode (no padding)."""
    size = k.size
    h = arr.shape[0] - size + 1
    rows = np.zeros((h, arr.shape[1]))
    for i in range(size):
        rows += k[i] * arr[i : i + h, :]
    w = arr.shape[1] - size + 1
    out = np.zeros((h, w))
    for j in range(size):
        out += k[j] * rows[:, j : j + w]
    return out


def _ssim_channel(x: np.ndarray, y: np.ndarray) -> float:
    k = _gaussian_kernel1d(_SSIM_WINDOW, _SSIM_SIGMA)
    c1 = (_SSIM_K1 * 1.0) ** 2
    c2 = (_SSIM_K2 * 1.0) ** 2
    mu_x = _filter_valid(x, k)
    mu_y = _filter_valid(y, k)
    xx = _filter_valid(x * x, k) - mu_x * mu_x
    yy = _filter_valid(y * y, k) - mu_y * mu_y
    xy = _filter_valid(x * y, k) - mu_x * mu_y
    num = (2.0 * mu_x * mu_y + c1) * (2.0 * xy + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (xx + yy + c2)
    return float(np.mean(num / den))


def ssim(a: Image, b: Image) -> float:
    """Mean structural similarity (11x11 Gaussian window, sigma 1.5, K1/K2 = 0.01/0.03)."""
    if a.data.shape != b.data.shape:
        raise ValidationError(f"shape mismatch: {a.data.shape} vs {b.data.shape}")
    if a.width < _SSIM_WINDOW or a.height < _SSIM_WINDOW:
        raise ValidationError(
            f"image {a.width}x{a.height} smaller than the {_SSIM_WINDOW}px SSIM window"
        )
    scores = [
        _ssim_channel(a.data[:, :, c], b.data[:, :, c]) for c in range(a.channels)
    ]
    return math.fsum(scores) / len(scores)


@dataclass
class SetSummary:
    label: str
    n: int
    dust_index_mean: float
    dust_index_std: float
    psnr_mean: float | None = None
    ssim_mean: float | None = None


@dataclass
class CorpusReport:
    sets: list[SetSummary] = field(default_factory=list)
    rows: list[dict] = field(default_factory=list)
    skipped: int = 0

    def to_json(self) -> str:
        def enc(v):
            if isinstance(v, float) and math.isinf(v):
                return "inf"
            return v

        payload = {
            "sets": [
                {k: enc(v) for k, v in vars(s).items() if v is not None}
                for s in self.sets
            ],
            "rows": [{k: enc(v) for k, v in row.items()} for row in self.rows],
        }
        return json.dumps(payload, indent=2)

    def to_table(self) -> str:
        header = f"{'set':<10} {'n':>5} {'dust_index (FADE-surrogate)':>28} {'psnr':>10} {'ssim':>8}"
        lines = [header, "-" * len(header)]
        for s in self.sets:
            di = f"{s.dust_index_mean:.4f} +/- {s.dust_index_std:.4f}"
            ps = "-" if s.psnr_mean is None else f"{s.psnr_mean:.2f}"
            ss = "-" if s.ssim_mean is None else f"{s.ssim_mean:.4f}"
            lines.append(f"{s.label:<10} {s.n:>5} {di:>28} {ps:>10} {ss:>8}")
        return "\n".join(lines)


def _mean_std(values: list[float]) -> tuple[float, float]:
    mean = math.fsum(values) / len(values)
    var = math.fsum((v - mean) ** 2 for v in values) / len(values)
    return mean, math.sqrt(var)


def corpus_report(sets: dict, pairs=None, tile: int = 8, jobs: int = 1) -> CorpusReport:
    """Per-set dust-index statistics, plus PSNR/SSIM where a pairing is known.

    ``sets`` maps label -> directory (or explicit list of paths).  When a
    manifest is given, images whose filename matches a manifest dusty entry
    are scored against their clean counterpart.  Unreadable images are
    skipped with a warning and counted in ``report.skipped``.  With jobs > 1
    images are scored in a thread pool; rows keep input order either way.
    """
    clean_for: dict[str, str] = {}
    if pairs is not None:
        for rec in pairs.records:
            clean_for[Path(rec.dusty).name] = rec.clean

    def score_one(label, path):
        try:
            img = load_image(path)
        except DecodeError as exc:
            logger.warning("skipping unreadable image %s: %s", path, exc)
            return None
        row = {"set": label, "path": str(path), "dust_index": dust_index(img, tile)}
        ref_path = clean_for.get(path.name)
        if ref_path is not None and label != "clean":
            ref = load_image(ref_path)
            if ref.data.shape == img.data.shape:
                row["psnr"] = psnr(ref, img)
                row["ssim"] = ssim(ref, img)
        return row

    report = CorpusReport()
    for label, source in sets.items():
        if isinstance(source, (str, Path)):
            paths = sorted(Path(source).glob("*.png"))
        else:
            paths = [Path(p) for p in source]
        if not paths:
            raise ValidationError(f"set '{label}' is empty")
        if jobs > 1:
            from concurrent.futures import ThreadPoolExecutor

            with ThreadPoolExecutor(max_workers=jobs) as pool:
                rows = list(pool.map(lambda p: score_one(label, p), paths))
        else:
            rows = [score_one(label, p) for p in paths]
        dust_vals: list[float] = []
        psnr_vals: list[float] = []
        ssim_vals: list[float] = []
        for row in rows:
            if row is None:
                report.skipped += 1
                continue
            dust_vals.append(row["dust_index"])
            if "psnr" in row:
                psnr_vals.append(row["psnr"])
                ssim_vals.append(row["ssim"])
            report.rows.append(row)
        if not dust_vals:
            raise ValidationError(f"set '{label}' has no readable images")
        mean, std = _mean_std(dust_vals)
        summary = SetSummary(label, len(dust_vals), mean, std)
        if psnr_vals:
            summary.psnr_mean = math.fsum(psnr_vals) / len(psnr_vals)
            summary.ssim_mean = math.fsum(ssim_vals) / len(ssim_vals)
        report.sets.append(summary)
    return report
