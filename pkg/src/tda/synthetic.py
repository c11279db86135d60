"""Synthetic paired day/night sequences with planted moving objects.

Each scene renders a smooth textured background plus 1..N bright moving
shapes (squares or ellipses) following constant per-object velocities.
The night member of a pair is a pixelwise darkening of the day member:
``night = clip(brightness * day ** gamma + gaussian_noise(sigma))``,
so geometry and ground truth are identical across the pair.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy.ndimage import gaussian_filter

from .config import SceneConfig
from .core import BoundingBox, DomainLabel, FrameTensor
from .errors import ContractError

ATTRIBUTE_NAMES = ("ARC", "FM", "IV", "LAI", "SV")
CATEGORIES = ("square", "ellipse")


@dataclass
class SyntheticSequence:
    """A rendered sequence plus full ground truth for every planted object."""

    name: str
    domain: DomainLabel
    frames: np.ndarray  # (T, 3, H, W) float32 in [0, 1]
    boxes: np.ndarray  # (num_objects, T, 4) as x, y, w, h
    categories: list[str]  # per object

    def __len__(self) -> int:
        return self.frames.shape[0]

    def frame(self, t: int) -> FrameTensor:
        return FrameTensor(pixels=self.frames[t], frame_index=t)

    def object_box(self, obj: int, t: int) -> BoundingBox:
        x, y, w, h = self.boxes[obj, t]
        return BoundingBox(float(x), float(y), float(w), float(h))

    @property
    def primary_boxes(self) -> np.ndarray:
        """Per-frame boxes of the tracked (first) object, shape (T, 4)."""
        return self.boxes[0]

    @property
    def attributes(self) -> list[str]:
        return ["LAI"] if self.domain is DomainLabel.TARGET_NIGHT else []


def _render_background(rng: np.random.Generator, size: int) -> np.ndarray:
    """Smooth textured backdrop with wide per-scene illumination diversity.

    Day scenes deliberately span bright noon to dusk so that the darkest
    days overlap the brightest darkened nights, as they do in real
    footage; the domain gap then lies in the transform's tonal curve and
    noise signature rather than a bare brightness offset.
    """
    base = rng.uniform(0.0, 1.0, size=(size, size))
    smooth = gaussian_filter(base, sigma=rng.uniform(2.0, 6.0))
    lo, hi = smooth.min(), smooth.max()
    span = hi - lo if hi > lo else 1.0
    level = rng.uniform(0.12, 0.62)
    amplitude = rng.uniform(0.05, 0.3)
    gray = level + amplitude * ((smooth - lo) / span - 0.5)
    tint = rng.uniform(0.85, 1.15, size=3)
    return np.clip(gray[None, :, :] * tint[:, None, None], 0.0, 1.0)


def _object_mask(shape: str, box: np.ndarray, size: int) -> np.ndarray:
    x, y, w, h = box
    yy, xx = np.mgrid[0:size, 0:size]
    px = xx + 0.5
    py = yy + 0.5
    if shape == "square":
        return (px >= x) & (px < x + w) & (py >= y) & (py < y + h)
    cx, cy = x + w / 2.0, y + h / 2.0
    return ((px - cx) / (w / 2.0)) ** 2 + ((py - cy) / (h / 2.0)) ** 2 <= 1.0


def _plan_motion(rng: np.random.Generator, spec: SceneConfig, length: int):
    """Sample sizes, colors, and linear trajectories that stay inside frame."""
    size = spec.image_size
    objects = []
    count = int(rng.integers(1, spec.num_objects + 1))
    for obj in range(count):
        w = float(rng.uniform(spec.min_object_size, spec.max_object_size))
        h = float(rng.uniform(spec.min_object_size, spec.max_object_size))
        for _ in range(64):
            vx = float(rng.uniform(-spec.max_speed, spec.max_speed))
            vy = float(rng.uniform(-spec.max_speed, spec.max_speed))
            x_lo = max(0.0, -vx * (length - 1))
            x_hi = size - w - max(0.0, vx * (length - 1))
            y_lo = max(0.0, -vy * (length - 1))
            y_hi = size - h - max(0.0, vy * (length - 1))
            if x_hi > x_lo and y_hi > y_lo:
                break
        else:
            vx = vy = 0.0
            x_lo, x_hi = 0.0, size - w
            y_lo, y_hi = 0.0, size - h
        x0 = float(rng.uniform(x_lo, x_hi))
        y0 = float(rng.uniform(y_lo, y_hi))
        color = rng.uniform(0.5, 0.95, size=3)
        color[rng.integers(0, 3)] = rng.uniform(0.8, 0.98)
        category = CATEGORIES[int(rng.integers(0, len(CATEGORIES)))]
        objects.append(dict(w=w, h=h, x0=x0, y0=y0, vx=vx, vy=vy, color=color, category=category))
    return objects


def _darken(day: np.ndarray, spec: SceneConfig, rng: np.random.Generator) -> np.ndarray:
    night = day
    if spec.gamma != 1.0:
        night = night**spec.gamma
    if spec.brightness != 1.0:
        night = spec.brightness * night
    if spec.noise_sigma > 0.0:
        night = night + rng.normal(0.0, spec.noise_sigma, size=night.shape)
    return np.clip(night, 0.0, 1.0).astype(np.float32)


def generate_pair(
    spec: SceneConfig, length: int | None = None, seed: int = 0, name: str = "seq"
) -> tuple[SyntheticSequence, SyntheticSequence]:
    """Render one day sequence and its darkened night twin."""
    spec.validate()
    if length is None:
        length = spec.length
    if length < 3:
        raise ContractError(f"sequence length must be >= 3, got {length}")
    rng = np.random.default_rng([seed, 0xDA])
    size = spec.image_size
    background = _render_background(rng, size)
    objects = _plan_motion(rng, spec, length)

    frames = np.empty((length, 3, size, size), dtype=np.float32)
    boxes = np.empty((len(objects), length, 4), dtype=np.float64)
    for t in range(length):
        canvas = background.copy()
        for k, obj in enumerate(objects):
            box = np.array(
                [obj["x0"] + obj["vx"] * t, obj["y0"] + obj["vy"] * t, obj["w"], obj["h"]]
            )
            boxes[k, t] = box
            mask = _object_mask(obj["category"], box, size)
            canvas[:, mask] = obj["color"][:, None]
        frames[t] = np.clip(canvas, 0.0, 1.0)

    night_rng = np.random.default_rng([seed, 0x217])
    night_frames = _darken(frames, spec, night_rng)
    categories = [obj["category"] for obj in objects]
    day = SyntheticSequence(name, DomainLabel.SOURCE_DAY, frames, boxes, categories)
    night = SyntheticSequence(name, DomainLabel.TARGET_NIGHT, night_frames, boxes.copy(), categories)
    return day, night


# ---------------------------------------------------------------------------
# On-disk layout: <root>/<domain>/{seqs,anno,att,objects}
# ---------------------------------------------------------------------------


def _domain_dir(root: Path, domain: DomainLabel) -> Path:
    return Path(root) / ("day" if domain is DomainLabel.SOURCE_DAY else "night")


def save_sequence(seq: SyntheticSequence, root: str | Path) -> dict[str, Path]:
    """Write frames as PNGs plus annotation, attribute, and object files."""
    base = _domain_dir(Path(root), seq.domain)
    frames_dir = base / "seqs" / seq.name
    frames_dir.mkdir(parents=True, exist_ok=True)
    for t in range(len(seq)):
        arr = (np.round(seq.frames[t] * 255.0)).astype(np.uint8).transpose(1, 2, 0)
        Image.fromarray(arr).save(frames_dir / f"{t + 1:06d}.png")

    anno_dir = base / "anno"
    anno_dir.mkdir(parents=True, exist_ok=True)
    anno_path = anno_dir / f"{seq.name}.txt"
    with open(anno_path, "w") as fh:
        for t in range(len(seq)):
            x, y, w, h = seq.primary_boxes[t]
            fh.write(f"{x!r},{y!r},{w!r},{h!r}\n")

    att_dir = base / "att"
    att_dir.mkdir(parents=True, exist_ok=True)
    att_path = att_dir / f"{seq.name}.txt"
    flags = [1 if name in seq.attributes else 0 for name in ATTRIBUTE_NAMES]
    att_path.write_text(",".join(str(f) for f in flags) + "\n")

    obj_dir = base / "objects"
    obj_dir.mkdir(parents=True, exist_ok=True)
    obj_path = obj_dir / f"{seq.name}.csv"
    with open(obj_path, "w") as fh:
        fh.write("frame,object_id,x,y,w,h,category\n")
        for t in range(len(seq)):
            for k in range(seq.boxes.shape[0]):
                x, y, w, h = seq.boxes[k, t]
                fh.write(f"{t + 1},{k},{x!r},{y!r},{w!r},{h!r},{seq.categories[k]}\n")

    return {"frames": frames_dir, "anno": anno_path, "att": att_path, "objects": obj_path}


def load_frames(frames_dir: str | Path) -> np.ndarray:
    """Load a directory of numbered PNGs back into a (T, 3, H, W) float array."""
    paths = sorted(Path(frames_dir).glob("*.png"))
    if not paths:
        raise ContractError(f"no frames found in {frames_dir}")
    frames = []
    for p in paths:
        arr = np.asarray(Image.open(p), dtype=np.float32) / 255.0
        frames.append(arr.transpose(2, 0, 1))
    return np.stack(frames)


def load_objects_file(path: str | Path) -> dict[int, list[tuple[BoundingBox, str]]]:
    """Parse an objects CSV into {0-based frame index: [(box, category), ...]}."""
    per_frame: dict[int, list[tuple[BoundingBox, str]]] = {}
    with open(path) as fh:
        header = fh.readline()
        if not header.startswith("frame,"):
            raise ContractError(f"malformed objects file {path}")
        for line in fh:
            line = line.strip()
            if not line:
                continue
            frame_s, _obj, x, y, w, h, category = line.split(",")
            idx = int(frame_s) - 1
            box = BoundingBox(float(x), float(y), float(w), float(h))
            per_frame.setdefault(idx, []).append((box, category))
    return per_frame


def load_primary_boxes(anno_path: str | Path) -> np.ndarray:
    rows = []
    with open(anno_path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append([float(v) for v in line.split(",")])
    return np.asarray(rows, dtype=np.float64)


def list_sequences(root: str | Path, domain: DomainLabel) -> list[str]:
    seq_dir = _domain_dir(Path(root), domain) / "seqs"
    if not seq_dir.is_dir():
        return []
    return sorted(p.name for p in seq_dir.iterdir() if p.is_dir())
