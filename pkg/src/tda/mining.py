"""Prompt-driven object mining: text-conditioned detection behind a pluggable
interface, IoU association into trajectories, and centered template/search
patch cropping.

Two detector implementations ship with the package: an HTTP client for an
external grounded-detection service, and a synthetic oracle that replays
planted ground truth with configurable jitter so the whole pipeline runs
hermetically.
"""

from __future__ import annotations

import base64
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import numpy as np
from scipy.optimize import linear_sum_assignment

from .config import MiningConfig
from .core import BoundingBox, FrameTensor
from .errors import ContractError, DetectorProtocolError, DetectorTransportError
from .evaluation import iou

INFEASIBLE_COST = 1e6


@dataclass(frozen=True)
class Detection:
    box: BoundingBox
    score: float
    category: str
    frame_index: int

    def __post_init__(self):
        if not (0.0 <= self.score <= 1.0):
            raise ContractError(f"detection score must lie in [0, 1], got {self.score}")


@dataclass
class Trajectory:
    """An identity-consistent series of (frame, box, score) entries."""

    track_id: int
    category: str
    entries: list[tuple[int, BoundingBox, float]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def frames(self) -> list[int]:
        return [f for f, _, _ in self.entries]

    def validate(self, max_gap: int | None = None):
        frames = self.frames
        if any(b <= a for a, b in zip(frames, frames[1:])):
            raise ContractError(f"track {self.track_id}: frame indices must strictly increase")
        if max_gap is not None and any(b - a - 1 > max_gap for a, b in zip(frames, frames[1:])):
            raise ContractError(f"track {self.track_id}: gap exceeds {max_gap}")


@dataclass(frozen=True)
class PatchPair:
    template: np.ndarray  # (3, z_size, z_size)
    search: np.ndarray  # (3, x_size, x_size)
    source_box: BoundingBox
    frame_index: int
    track_id: int


class Detector(Protocol):
    def detect(self, frame: FrameTensor, prompt: str) -> list[Detection]: ...


def prompt_matches(prompt: str, category: str) -> bool:
    """A category matches when it appears as a word of the prompt."""
    tokens = prompt.lower().replace(",", " ").split()
    return category.lower() in tokens


class OracleDetector:
    """Replays planted ground truth, jittered by up to ``noise_px`` per value.

    ``objects_per_frame`` maps a 0-based frame index to (box, category)
    pairs, the format produced by the synthetic data writer. Jitter is a
    pure function of (seed, frame index, object slot), so detection results
    do not depend on call order.
    """

    def __init__(
        self,
        objects_per_frame: dict[int, list[tuple[BoundingBox, str]]],
        noise_px: float = 0.0,
        seed: int = 0,
    ):
        if noise_px < 0:
            raise ContractError("noise_px must be >= 0")
        self.objects_per_frame = objects_per_frame
        self.noise_px = float(noise_px)
        self.seed = int(seed)

    def detect(self, frame: FrameTensor, prompt: str) -> list[Detection]:
        if not prompt.strip():
            raise ContractError("prompt must be non-empty")
        detections = []
        for slot, (box, category) in enumerate(self.objects_per_frame.get(frame.frame_index, [])):
            if not prompt_matches(prompt, category):
                continue
            rng = np.random.default_rng([self.seed, frame.frame_index, slot])
            jitter = rng.uniform(-self.noise_px, self.noise_px, size=4)
            jittered = BoundingBox(
                box.x + jitter[0],
                box.y + jitter[1],
                max(box.w + jitter[2], 1e-3),
                max(box.h + jitter[3], 1e-3),
            )
            score = float(rng.uniform(0.7, 1.0))
            detections.append(Detection(jittered, score, category, frame.frame_index))
        return detections


class HttpDetector:
    """Client for an external detection endpoint.

    Request: HTTP POST of a JSON object ``{"prompt": str, "frame_index": int,
    "image_png_base64": str}`` where the image is the frame encoded as PNG.
    Response: JSON ``{"detections": [{"x", "y", "w", "h", "score",
    "category"}, ...]}`` in pixel units. Connection failures and 5xx
    responses are retried ``retries`` times before raising
    DetectorTransportError; malformed responses raise DetectorProtocolError.
    """

    def __init__(self, endpoint: str, retries: int = 2, timeout_s: float = 10.0):
        if not endpoint:
            raise ContractError("endpoint must be non-empty")
        self.endpoint = endpoint
        self.retries = int(retries)
        self.timeout_s = float(timeout_s)

    @staticmethod
    def _encode_frame(frame: FrameTensor) -> str:
        from PIL import Image

        arr = (np.round(frame.pixels * 255.0)).astype(np.uint8).transpose(1, 2, 0)
        buf = io.BytesIO()
        Image.fromarray(arr).save(buf, format="PNG")
        return base64.b64encode(buf.getvalue()).decode("ascii")

    def detect(self, frame: FrameTensor, prompt: str) -> list[Detection]:
        import requests

        if not prompt.strip():
            raise ContractError("prompt must be non-empty")
        payload = {
            "prompt": prompt,
            "frame_index": frame.frame_index,
            "image_png_base64": self._encode_frame(frame),
        }
        last_error: Exception | None = None
        for _ in range(self.retries + 1):
            try:
                response = requests.post(self.endpoint, json=payload, timeout=self.timeout_s)
            except requests.RequestException as exc:
                last_error = exc
                continue
            if response.status_code >= 500:
                last_error = DetectorTransportError(f"server error {response.status_code}")
                continue
            if response.status_code != 200:
                raise DetectorProtocolError(f"unexpected status {response.status_code}")
            return self._parse(response.text, frame.frame_index)
        raise DetectorTransportError(f"endpoint unreachable after retries: {last_error}")

    @staticmethod
    def _parse(text: str, frame_index: int) -> list[Detection]:
        try:
            body = json.loads(text)
            records = body["detections"]
            out = []
            for rec in records:
                box = BoundingBox(
                    float(rec["x"]), float(rec["y"]), float(rec["w"]), float(rec["h"])
                )
                out.append(Detection(box, float(rec["score"]), str(rec["category"]), frame_index))
            return out
        except (json.JSONDecodeError, KeyError, TypeError, ValueError, ContractError) as exc:
            raise DetectorProtocolError(f"malformed detection response: {exc}") from exc


def make_detector(
    cfg: MiningConfig, objects_per_frame: dict[int, list[tuple[BoundingBox, str]]] | None = None
) -> Detector:
    if cfg.detector == "oracle":
        if objects_per_frame is None:
            raise ContractError("oracle detector needs planted ground truth")
        return OracleDetector(objects_per_frame, noise_px=cfg.noise_px, seed=cfg.detector_seed)
    return HttpDetector(cfg.endpoint, retries=cfg.retries, timeout_s=cfg.timeout_s)


# ---------------------------------------------------------------------------
# Association
# ---------------------------------------------------------------------------


@dataclass
class _Track:
    track_id: int
    category: str
    entries: list[tuple[int, BoundingBox, float]]
    last_slot: int

    @property
    def last_box(self) -> BoundingBox:
        return self.entries[-1][1]


def associate(
    detections: list[list[Detection]],
    iou_min: float = 0.3,
    max_gap: int = 10,
    min_len: int = 16,
) -> list[Trajectory]:
    """Link per-frame detections into trajectories by IoU assignment.

    Slot ``i`` of ``detections`` holds frame ``i`` of the video. Matching
    minimizes ``1 - IoU`` between each active track's last box and the new
    detections (optimal assignment); pairs with IoU below ``iou_min`` or a
    category mismatch are infeasible. Unmatched detections open new tracks,
    tracks unmatched for more than ``max_gap`` consecutive slots terminate,
    and tracks shorter than ``min_len`` are discarded.
    """
    active: list[_Track] = []
    finished: list[_Track] = []
    next_id = 1
    for slot, frame_dets in enumerate(detections):
        still_active = []
        for track in active:
            if slot - track.last_slot - 1 > max_gap:
                finished.append(track)
            else:
                still_active.append(track)
        active = still_active

        matched_tracks, matched_dets = set(), set()
        if active and frame_dets:
            cost = np.full((len(active), len(frame_dets)), INFEASIBLE_COST)
            for ti, track in enumerate(active):
                for di, det in enumerate(frame_dets):
                    if det.category != track.category:
                        continue
                    overlap = iou(track.last_box, det.box)
                    if overlap >= iou_min:
                        cost[ti, di] = 1.0 - overlap
            rows, cols = linear_sum_assignment(cost)
            for ti, di in zip(rows, cols):
                if cost[ti, di] >= INFEASIBLE_COST:
                    continue
                det = frame_dets[di]
                active[ti].entries.append((det.frame_index, det.box, det.score))
                active[ti].last_slot = slot
                matched_tracks.add(ti)
                matched_dets.add(di)

        for di, det in enumerate(frame_dets):
            if di not in matched_dets:
                active.append(
                    _Track(next_id, det.category, [(det.frame_index, det.box, det.score)], slot)
                )
                next_id += 1

    finished.extend(active)
    finished.sort(key=lambda t: t.track_id)
    out = []
    for track in finished:
        if len(track.entries) < min_len:
            continue
        traj = Trajectory(track.track_id, track.category, track.entries)
        traj.validate(max_gap=max_gap)
        out.append(traj)
    return out


# ---------------------------------------------------------------------------
# Patch cropping
# ---------------------------------------------------------------------------


def template_side(box: BoundingBox) -> float:
    """Context-padded square side: sqrt((w + p)(h + p)) with p = (w + h) / 2."""
    pad = (box.w + box.h) / 2.0
    return math.sqrt((box.w + pad) * (box.h + pad))


def patch_to_source(v: float, center: float, side: float, out_size: int) -> float:
    """Map a continuous patch coordinate to the source coordinate axis."""
    return center - side / 2.0 + v * (side / out_size)


def source_to_patch(u: float, center: float, side: float, out_size: int) -> float:
    return (u - (center - side / 2.0)) * (out_size / side)


def _crop_square(pixels: np.ndarray, cx: float, cy: float, side: float, out_size: int) -> np.ndarray:
    """Nearest-neighbor resample of a centered square window.

    Pixels sampled outside the frame take the per-channel frame mean, so
    padding is exact rather than blended.
    """
    _, height, width = pixels.shape
    means = pixels.reshape(3, -1).mean(axis=1)
    grid = np.arange(out_size) + 0.5
    src_x = np.floor(cx - side / 2.0 + grid * (side / out_size)).astype(np.int64)
    src_y = np.floor(cy - side / 2.0 + grid * (side / out_size)).astype(np.int64)
    ok_x = (src_x >= 0) & (src_x < width)
    ok_y = (src_y >= 0) & (src_y < height)
    out = np.empty((3, out_size, out_size), dtype=pixels.dtype)
    out[:] = means[:, None, None]
    if ok_x.any() and ok_y.any():
        yy = src_y[ok_y]
        xx = src_x[ok_x]
        out[np.ix_(range(3), np.flatnonzero(ok_y), np.flatnonzero(ok_x))] = pixels[:, yy][:, :, xx]
    return out


def crop_pair(
    frame: FrameTensor, box: BoundingBox, z_size: int = 127, x_size: int = 287, track_id: int = 0
) -> PatchPair:
    """Cut the object-centered template and search patches for one box.

    The template window side is ``template_side(box)``; the search window
    scales it by ``x_size / z_size``. The box center maps exactly to the
    patch center in both crops.
    """
    if not (
        box.x < frame.width and box.x2 > 0 and box.y < frame.height and box.y2 > 0
    ):
        raise ContractError("box does not intersect the frame")
    s_z = template_side(box)
    s_x = s_z * (x_size / z_size)
    template = _crop_square(frame.pixels, box.cx, box.cy, s_z, z_size)
    search = _crop_square(frame.pixels, box.cx, box.cy, s_x, x_size)
    return PatchPair(template, search, box, frame.frame_index, track_id)


# ---------------------------------------------------------------------------
# Pipeline and trajectory persistence
# ---------------------------------------------------------------------------


def mine(
    frames: list[FrameTensor],
    prompt: str,
    detector: Detector,
    cfg: MiningConfig | None = None,
) -> tuple[list[PatchPair], list[Trajectory]]:
    """Detect per frame, associate, then crop one patch pair per entry."""
    cfg = cfg or MiningConfig()
    if not prompt.strip():
        raise ContractError("prompt must be non-empty")
    per_frame = [detector.detect(frame, prompt) for frame in frames]
    trajectories = associate(
        per_frame, iou_min=cfg.iou_min, max_gap=cfg.max_gap, min_len=cfg.min_len
    )
    frame_by_index = {f.frame_index: f for f in frames}
    patches = []
    for traj in trajectories:
        for frame_index, box, _score in traj.entries:
            patches.append(
                crop_pair(
                    frame_by_index[frame_index],
                    box,
                    z_size=cfg.z_size,
                    x_size=cfg.x_size,
                    track_id=traj.track_id,
                )
            )
    return patches, trajectories


def write_trajectories(path: str | Path, trajectories: list[Trajectory]):
    """One line per entry: ``frame,track_id,x,y,w,h,score,category``, 1-based frames."""
    with open(path, "w") as fh:
        for traj in trajectories:
            for frame_index, box, score in traj.entries:
                fh.write(
                    f"{frame_index + 1},{traj.track_id},{box.x!r},{box.y!r},"
                    f"{box.w!r},{box.h!r},{score!r},{traj.category}\n"
                )


def read_trajectories(path: str | Path) -> list[Trajectory]:
    by_id: dict[int, Trajectory] = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            frame_s, tid_s, x, y, w, h, score, category = line.split(",")
            tid = int(tid_s)
            traj = by_id.setdefault(tid, Trajectory(tid, category))
            if traj.category != category:
                raise ContractError(f"track {tid} has conflicting categories in {path}")
            box = BoundingBox(float(x), float(y), float(w), float(h))
            traj.entries.append((int(frame_s) - 1, box, float(score)))
    out = sorted(by_id.values(), key=lambda t: t.track_id)
    for traj in out:
        traj.validate()
    return out
