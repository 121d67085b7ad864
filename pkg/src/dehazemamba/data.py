"""Synthetic paired data: scenes, haze masks, compositing, and statistics.

Clear optical scenes are smoothed multi-octave noise fields with geometric
structures (rectangles, strips, disks) at varied albedo, kept dark enough
that a thin haze layer can stay under the thin/moderate density boundary.
SAR frames are an edge-response transform of the clear scene with
multiplicative speckle, so they stay haze-free but structurally correlated.

Haze masks are thresholded, feathered multi-octave noise whose opacity band
is chosen per requested density class; the threshold is bisected until the
covered fraction lands within the tolerance. Compositing is the affine
blend hazy = (1 - m) * clear + m * haze_color, which leaves mask == 0
pixels bit-identical to the clear scene.

Density statistics follow the survey taxonomy: the density value is the
mean of the brightest 30% luminance pixels (8-bit scale) inside the region
mask > 0.05, and classes split at thin <= 105 < moderate <= 175 < dense.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .errors import AlignmentError, ConfigError, DataError
from .metrics import luminance
from .ppm import dequantize, quantize, read_image, write_pgm, write_ppm

__all__ = [
    "ImagePair", "HazeStats", "REGION_THRESHOLD", "DENSITY_THIN_MAX",
    "DENSITY_MODERATE_MAX", "classify_density", "haze_stats", "gen_mask",
    "composite", "gen_clear_scene", "gen_sar_scene", "make_pair",
    "generate_dataset", "load_dataset", "load_manifest", "dataset_report",
    "COVERAGE_TOLERANCE",
]

REGION_THRESHOLD = 0.05
DENSITY_THIN_MAX = 105.0
DENSITY_MODERATE_MAX = 175.0
COVERAGE_TOLERANCE = 0.05
BRIGHT_FRACTION = 0.30

# Opacity bands per density class, calibrated against the procedural
# scenes below (dark-ish reflectance) and the default haze color.
_OPACITY_BANDS = {
    "thin": (0.06, 0.12),
    "moderate": (0.34, 0.50),
    "dense": (0.75, 0.95),
}
DENSITY_CLASSES = ("thin", "moderate", "dense")


@dataclass
class ImagePair:
    """One co-registered sample: clear/hazy RGB, SAR, and the haze mask."""

    clear: np.ndarray  # [3,H,W] float32 in [0,1]
    sar: np.ndarray    # [1,H,W]
    hazy: np.ndarray   # [3,H,W]
    mask: np.ndarray   # [1,H,W]
    index: int = 0
    seed: int = 0

    def validate(self) -> None:
        h, w = self.clear.shape[1:]
        for name, plane, c in (("clear", self.clear, 3), ("sar", self.sar, 1),
                               ("hazy", self.hazy, 3), ("mask", self.mask, 1)):
            if plane.shape != (c, h, w):
                raise AlignmentError(
                    f"pair {self.index}: {name} has shape {plane.shape}, "
                    f"expected {(c, h, w)}")
            if plane.min() < 0.0 or plane.max() > 1.0:
                raise DataError(
                    f"pair {self.index}: {name} leaves [0,1]")
        clean = self.mask[0] == 0.0
        if not np.array_equal(self.hazy[:, clean], self.clear[:, clean]):
            raise DataError(
                f"pair {self.index}: hazy differs from clear outside the mask")


@dataclass
class HazeStats:
    coverage: float
    density_value: float | None
    density_class: str


def classify_density(value: float) -> str:
    if value <= DENSITY_THIN_MAX:
        return "thin"
    if value <= DENSITY_MODERATE_MAX:
        return "moderate"
    return "dense"


def haze_stats(hazy: np.ndarray, mask: np.ndarray) -> HazeStats:
    """Coverage and brightest-30% density of a hazy image under its mask."""
    hazy = np.asarray(hazy, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.float64)
    if mask.ndim == 3:
        mask = mask[0]
    if hazy.shape[-2:] != mask.shape:
        raise AlignmentError(
            f"haze_stats: image {hazy.shape} and mask {mask.shape} differ")
    region = mask > REGION_THRESHOLD
    coverage = float(region.mean())
    if not region.any():
        return HazeStats(coverage, None, "none")
    lum = luminance(hazy) * 255.0
    values = np.sort(lum[region])
    k = max(1, int(np.ceil(BRIGHT_FRACTION * values.size)))
    density = float(values[-k:].mean())
    return HazeStats(coverage, density, classify_density(density))


# ---------------------------------------------------------------------------
# procedural fields

def _bilinear(grid: np.ndarray, height: int, width: int) -> np.ndarray:
    gh, gw = grid.shape
    ys = np.linspace(0.0, gh - 1.0, height)
    xs = np.linspace(0.0, gw - 1.0, width)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, gh - 1)
    x1 = np.minimum(x0 + 1, gw - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    top = grid[np.ix_(y0, x0)] * (1 - fx) + grid[np.ix_(y0, x1)] * fx
    bot = grid[np.ix_(y1, x0)] * (1 - fx) + grid[np.ix_(y1, x1)] * fx
    return top * (1 - fy) + bot * fy


def octave_noise(rng: np.random.Generator, height: int, width: int,
                 octaves: int = 4, base: int = 4) -> np.ndarray:
    """Sum of bilinearly upsampled random grids, normalized to [0, 1]."""
    field = np.zeros((height, width))
    amp = 1.0
    cells = base
    for _ in range(octaves):
        field += amp * _bilinear(rng.random((cells + 1, cells + 1)),
                                 height, width)
        amp *= 0.5
        cells *= 2
    lo, hi = field.min(), field.max()
    if hi > lo:
        field = (field - lo) / (hi - lo)
    return field


def _smoothstep(t: np.ndarray) -> np.ndarray:
    t = np.clip(t, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def gen_mask(height: int, width: int, seed, coverage_target: float,
             density_target: str | None = None) -> np.ndarray:
    """Multi-octave haze opacity mask [1,H,W], deterministic per seed.

    The covered fraction (mask > 0.05) lands within +-5 percentage points
    of coverage_target. The opacity band inside the region follows the
    requested density class. coverage_target == 0 yields an all-zero mask
    and is incompatible with a density class; opacities below 1/255 are
    snapped to exact zero so 8-bit quantization cannot blur the region
    boundary.
    """
    if not (0.0 <= coverage_target <= 1.0):
        raise ConfigError(
            f"coverage_target must lie in [0,1], got {coverage_target}")
    if density_target is not None and density_target not in _OPACITY_BANDS:
        raise ConfigError(
            f"unknown density class {density_target!r}; choose from "
            f"{sorted(_OPACITY_BANDS)} or None")
    if coverage_target == 0.0:
        if density_target is not None:
            raise ConfigError(
                f"coverage 0 cannot satisfy density class {density_target!r}")
        return np.zeros((1, height, width), dtype=np.float32)
    rng = np.random.default_rng(seed)
    field = octave_noise(rng, height, width)
    lo, hi = _OPACITY_BANDS[density_target or "moderate"]
    feather = 0.08

    def build(tau: float) -> np.ndarray:
        edge = _smoothstep((field - tau) / feather)
        m = edge * (lo + (hi - lo) * field)
        m[m < 1.0 / 255.0] = 0.0
        return m

    t_lo, t_hi = -0.2, 1.2  # coverage 1 at t_lo, coverage 0 at t_hi
    if coverage_target == 1.0:
        # Full coverage demands the band floor everywhere, not just a
        # covered fraction near 1, so skip the threshold search and let
        # the edge term saturate: m = lo + (hi - lo) * field >= lo.
        return build(t_lo)[None].astype(np.float32)
    for _ in range(40):
        mid = 0.5 * (t_lo + t_hi)
        cov = float((build(mid) > REGION_THRESHOLD).mean())
        if abs(cov - coverage_target) <= 0.5 * COVERAGE_TOLERANCE:
            t_lo = t_hi = mid
            break
        if cov > coverage_target:
            t_lo = mid
        else:
            t_hi = mid
    mask = build(0.5 * (t_lo + t_hi))
    return mask[None].astype(np.float32)


def composite(clear: np.ndarray, mask: np.ndarray,
              haze_color: np.ndarray | float | None = None,
              rng: np.random.Generator | None = None) -> np.ndarray:
    """Affine haze blend: (1 - m) * clear + m * haze_color.

    The default haze color is a bright gray-white around 0.92 with mild
    spatial noise (shared across channels). Pixels with mask exactly 0
    come out bit-identical to the clear scene.
    """
    clear = np.asarray(clear, dtype=np.float32)
    mask = np.asarray(mask, dtype=np.float32)
    if mask.ndim == 2:
        mask = mask[None]
    if clear.shape[-2:] != mask.shape[-2:]:
        raise AlignmentError(
            f"composite: clear {clear.shape} and mask {mask.shape} differ")
    if haze_color is None:
        h, w = clear.shape[-2:]
        if rng is not None:
            noise = rng.standard_normal((h, w)).astype(np.float32)
        else:
            noise = np.zeros((h, w), dtype=np.float32)
        haze_color = np.clip(0.92 + 0.02 * noise, 0.86, 0.98)[None]
    hazy = (1.0 - mask) * clear + mask * np.asarray(haze_color,
                                                    dtype=np.float32)
    return hazy.astype(np.float32)


def gen_clear_scene(height: int, width: int,
                    rng: np.random.Generator) -> np.ndarray:
    """Dark-ish clear scene [3,H,W]: smoothed fields plus geometry."""
    base = octave_noise(rng, height, width)
    img = 0.05 + 0.26 * base
    img = np.repeat(img[None], 3, axis=0)
    for c in range(3):
        tint = octave_noise(rng, height, width, octaves=2, base=2)
        img[c] += 0.04 * (tint - 0.5)
    for _ in range(int(rng.integers(2, 7))):  # rectangular structures
        hh = int(rng.integers(max(2, height // 10), max(3, height // 3)))
        ww = int(rng.integers(max(2, width // 10), max(3, width // 3)))
        y0 = int(rng.integers(0, height - hh + 1))
        x0 = int(rng.integers(0, width - ww + 1))
        img[:, y0:y0 + hh, x0:x0 + ww] += rng.uniform(-0.12, 0.15)
    for _ in range(int(rng.integers(1, 4))):  # road-like strips
        thickness = int(rng.integers(1, 3))
        albedo = float(rng.choice([0.05, 0.36]))
        if rng.random() < 0.5:
            y0 = int(rng.integers(0, height - thickness + 1))
            img[:, y0:y0 + thickness, :] = albedo
        else:
            x0 = int(rng.integers(0, width - thickness + 1))
            img[:, :, x0:x0 + thickness] = albedo
    for _ in range(int(rng.integers(0, 3))):  # disk footprints
        cy, cx = rng.integers(0, height), rng.integers(0, width)
        rad = int(rng.integers(2, max(3, min(height, width) // 6)))
        yy, xx = np.ogrid[:height, :width]
        disk = (yy - cy) ** 2 + (xx - cx) ** 2 <= rad * rad
        img[:, disk] += rng.uniform(-0.10, 0.12)
    return np.clip(img, 0.02, 0.42).astype(np.float32)


def gen_sar_scene(clear: np.ndarray,
                  rng: np.random.Generator) -> np.ndarray:
    """Edge-response transform plus multiplicative speckle, [1,H,W]."""
    lum = luminance(clear)
    gy, gx = np.gradient(lum)
    edges = np.sqrt(gy * gy + gx * gx)
    scale = np.quantile(edges, 0.99)
    if scale > 0:
        edges = np.clip(edges / scale, 0.0, 1.0)
    response = 0.12 + 0.66 * edges + 0.18 * (lum / max(lum.max(), 1e-6))
    speckle = rng.gamma(shape=4.0, scale=0.25, size=lum.shape)
    return np.clip(response * speckle, 0.0, 1.0)[None].astype(np.float32)


def make_pair(height: int, width: int, seed: int, coverage_target: float,
              density_target: str | None, index: int = 0) -> ImagePair:
    """Build one sample; every plane is quantized to 8-bit resolution so
    in-memory values match what the image files will round-trip."""
    ss = np.random.SeedSequence(seed)
    r_scene, r_sar, r_mask, r_haze = [np.random.default_rng(s)
                                      for s in ss.spawn(4)]
    clear = dequantize(quantize(gen_clear_scene(height, width, r_scene)))
    sar = dequantize(quantize(gen_sar_scene(clear, r_sar)))
    mask = gen_mask(height, width, r_mask, coverage_target, density_target)
    mask = dequantize(quantize(mask))
    hazy = dequantize(quantize(composite(clear, mask, rng=r_haze)))
    pair = ImagePair(clear=clear, sar=sar, hazy=hazy, mask=mask,
                     index=index, seed=seed)
    pair.validate()
    return pair


# ---------------------------------------------------------------------------
# dataset directory layout

_MANIFEST_HEADER = "index\tseed\tcoverage\tdensity_value\tdensity_class"


def _pair_paths(root: str, index: int) -> dict[str, str]:
    stem = os.path.join(root, "pairs", f"{index:05d}")
    return {
        "clear": stem + "_clear.ppm",
        "hazy": stem + "_hazy.ppm",
        "sar": stem + "_sar.pgm",
        "mask": stem + "_mask.pgm",
    }


def generate_dataset(root: str, count: int, height: int, width: int,
                     seed: int, coverage_min: float = 0.15,
                     coverage_max: float = 0.90,
                     density: str = "mixed") -> list[HazeStats]:
    """Write `count` pairs plus manifest.tsv under `root`; returns stats.

    Coverage targets are spread evenly across [coverage_min, coverage_max];
    density classes cycle through thin/moderate/dense when `density` is
    "mixed", otherwise every pair uses the named class.
    """
    if count < 1:
        raise ConfigError(f"dataset count must be >= 1, got {count}")
    if not (0.0 <= coverage_min <= coverage_max <= 1.0):
        raise ConfigError(
            f"bad coverage range [{coverage_min}, {coverage_max}]")
    if density != "mixed" and density not in DENSITY_CLASSES:
        raise ConfigError(
            f"density must be one of {DENSITY_CLASSES + ('mixed',)}, "
            f"got {density!r}")
    os.makedirs(os.path.join(root, "pairs"), exist_ok=True)
    targets = np.linspace(coverage_min, coverage_max, count)
    rows = []
    stats_out = []
    for i in range(count):
        cls = DENSITY_CLASSES[i % 3] if density == "mixed" else density
        pair_seed = int(np.random.SeedSequence((seed, i)).generate_state(1)[0])
        pair = make_pair(height, width, pair_seed, float(targets[i]), cls,
                         index=i)
        paths = _pair_paths(root, i)
        write_ppm(paths["clear"], pair.clear)
        write_ppm(paths["hazy"], pair.hazy)
        write_pgm(paths["sar"], pair.sar)
        write_pgm(paths["mask"], pair.mask)
        st = haze_stats(pair.hazy, pair.mask)
        stats_out.append(st)
        value = "nan" if st.density_value is None else f"{st.density_value:.4f}"
        rows.append(f"{i}\t{pair_seed}\t{st.coverage:.6f}\t{value}\t"
                    f"{st.density_class}")
    with open(os.path.join(root, "manifest.tsv"), "w") as f:
        f.write(_MANIFEST_HEADER + "\n")
        f.write("\n".join(rows) + "\n")
    return stats_out


def load_dataset(root: str) -> list[ImagePair]:
    """Read every pair listed in manifest.tsv back into memory."""
    manifest = load_manifest(root)
    pairs = []
    for index, seed, _stats in manifest:
        paths = _pair_paths(root, index)
        for p in paths.values():
            if not os.path.exists(p):
                raise DataError(f"dataset {root} is missing {p}")
        pair = ImagePair(
            clear=read_image(paths["clear"]),
            sar=read_image(paths["sar"]),
            hazy=read_image(paths["hazy"]),
            mask=read_image(paths["mask"]),
            index=index, seed=seed)
        pair.validate()
        pairs.append(pair)
    return pairs


def load_manifest(root: str) -> list[tuple[int, int, HazeStats]]:
    path = os.path.join(root, "manifest.tsv")
    try:
        with open(path) as f:
            lines = [ln.rstrip("\n") for ln in f if ln.strip()]
    except OSError as e:
        raise DataError(f"cannot read manifest {path}: {e}") from e
    if not lines or lines[0] != _MANIFEST_HEADER:
        raise DataError(f"{path}: bad or missing manifest header")
    out = []
    for ln in lines[1:]:
        parts = ln.split("\t")
        if len(parts) != 5:
            raise DataError(f"{path}: malformed row {ln!r}")
        index, seed = int(parts[0]), int(parts[1])
        coverage = float(parts[2])
        value = None if parts[3] == "nan" else float(parts[3])
        out.append((index, seed, HazeStats(coverage, value, parts[4])))
    return out


def dataset_report(stats: list[HazeStats]) -> str:
    """Coverage histogram (10% bins) and density histogram as TSV tables."""
    lines = ["coverage_lo\tcoverage_hi\tpercent"]
    coverages = [s.coverage for s in stats]
    edges = np.linspace(0.0, 1.0, 11)
    if coverages:
        counts, _ = np.histogram(coverages, bins=edges)
        for lo, hi, n in zip(edges[:-1], edges[1:], counts):
            lines.append(f"{lo * 100:.0f}\t{hi * 100:.0f}\t"
                         f"{100.0 * n / len(coverages):.2f}")
    lines.append("")
    lines.append("density_lo\tdensity_hi\tpercent")
    values = [s.density_value for s in stats if s.density_value is not None]
    dedges = list(np.arange(0.0, 251.0, 25.0)) + [255.0]
    if values:
        counts, _ = np.histogram(values, bins=dedges)
        for lo, hi, n in zip(dedges[:-1], dedges[1:], counts):
            lines.append(f"{lo:.0f}\t{hi:.0f}\t{100.0 * n / len(values):.2f}")
    lines.append("")
    lines.append("density_class\tpercent")
    if stats:
        for cls in DENSITY_CLASSES + ("none",):
            n = sum(1 for s in stats if s.density_class == cls)
            lines.append(f"{cls}\t{100.0 * n / len(stats):.2f}")
    return "\n".join(lines) + "\n"
