"""Deterministic synthetic stick-figure world with labeled anomalies.

Each video shows articulated stick figures walking through a textured
scene.  Train videos contain only behaviors allowed in their scene; test
videos may carry one injected anomaly event: out-of-range motion
(velocity burst or joint jitter), an out-of-distribution appearance blob,
or a behavior performed in a scene whose allowed set excludes it.

The dataset directory holds ``manifest.json`` plus per-video MGTD tensor
files; generation is a pure function of :class:`~latentvad.config.WorldConfig`.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from . import seeds, tensorio
from .config import WorldConfig

# Joint layout: head, neck, hip, left/right hand, left/right foot, chest.
HEAD, NECK, HIP, L_HAND, R_HAND, L_FOOT, R_FOOT, CHEST = range(8)
BONES = [(HEAD, NECK), (NECK, CHEST), (CHEST, HIP),
         (NECK, L_HAND), (NECK, R_HAND), (HIP, L_FOOT), (HIP, R_FOOT)]

# Gait programs: px units are relative to a 64-pixel frame and get scaled.
BEHAVIOR_CATALOG = {
    0: dict(name="stroll", speed=1.2, freq=0.10, arm=3.5, leg=4.0, height=1.0, bob=0.8),
    1: dict(name="sprint", speed=3.0, freq=0.22, arm=6.5, leg=7.0, height=1.0, bob=1.4),
    2: dict(name="crouch", speed=0.8, freq=0.08, arm=2.0, leg=2.5, height=0.62, bob=0.5),
}

POSE_NOISE = 0.2       # px std added to every joint, every frame
JITTER_AMP = 2.4       # px half-range of the jitter anomaly
BLOB_RADIUS = 4.2      # px radius of the appearance anomaly patch
BLOB_COLOR = (0.95, 0.10, 0.85)

ANOMALY_TYPES = ("motion", "appearance", "scene_mismatch")


class DatasetError(RuntimeError):
    """Missing or structurally invalid dataset directory."""


class CorruptDatasetError(DatasetError):
    """Tensor data does not match the manifest (checksum or shape)."""


def skeleton_adjacency(v: int = 8) -> np.ndarray:
    """Binary V x V adjacency with self-loops; chain graph for non-default V."""
    adj = np.eye(v, dtype=np.float64)
    if v == 8:
        bones = BONES
    else:
        bones = [(i, i + 1) for i in range(v - 1)]
    for a, b in bones:
        adj[a, b] = adj[b, a] = 1.0
    return adj


def _gait_joints(x: float, ground_y: float, direction: float, phase: float,
                 g: dict, scale: float) -> np.ndarray:
    """World-space joint positions of one actor at one frame."""
    h = g["height"] * scale
    swing = math.sin(2.0 * math.pi * phase)
    lift = math.sin(2.0 * math.pi * phase)
    bob = g["bob"] * scale * 0.5 * (1.0 + math.cos(4.0 * math.pi * phase))
    lean = 0.25 * g["speed"] * scale * direction

    y0 = ground_y - bob
    hip = (x, y0 - 12.0 * h)
    chest = (x + 0.4 * lean, y0 - 17.0 * h)
    neck = (x + 0.8 * lean, y0 - 22.0 * h)
    head = (x + lean, y0 - 26.0 * h)
    arm = g["arm"] * scale
    leg = g["leg"] * scale
    l_hand = (neck[0] + direction * arm * swing, neck[1] + 7.0 * h)
    r_hand = (neck[0] - direction * arm * swing, neck[1] + 7.0 * h)
    l_foot = (hip[0] + direction * leg * swing, y0 - max(0.0, lift) * 0.45 * leg)
    r_foot = (hip[0] - direction * leg * swing, y0 - max(0.0, -lift) * 0.45 * leg)

    out = np.empty((8, 2), dtype=np.float64)
    for idx, pt in ((HEAD, head), (NECK, neck), (HIP, hip), (L_HAND, l_hand),
                    (R_HAND, r_hand), (L_FOOT, l_foot), (R_FOOT, r_foot), (CHEST, chest)):
        out[idx] = pt
    return out


def _vary(g: dict, rng: np.random.Generator) -> dict:
    """Per-actor +-8% variation of the gait parameters."""
    out = dict(g)
    for key in ("speed", "freq", "arm", "leg", "bob"):
        out[key] = g[key] * float(rng.uniform(0.92, 1.08))
    return out


def _simulate_actor(length: int, rng: np.random.Generator, behavior: int,
                    event: dict | None, world_hw: tuple[int, int],
                    scale: float) -> np.ndarray:
    """Simulate one actor's pose track (length x 8 x 2, world pixels)."""
    wh, ww = world_hw
    x_lo, x_hi = ww / 2 - 12.0 * scale, ww / 2 + 12.0 * scale
    ground = wh / 2 + float(rng.uniform(8.0, 24.0)) * scale

    base = _vary(BEHAVIOR_CATALOG[behavior], rng)
    alt = None
    if event is not None and event["type"] == "scene_mismatch":
        alt = _vary(BEHAVIOR_CATALOG[event["params"]["behavior"]], rng)

    x = float(rng.uniform(x_lo, x_hi))
    direction = float(rng.choice((-1.0, 1.0)))
    phase = float(rng.uniform(0.0, 1.0))

    track = np.empty((length, 8, 2), dtype=np.float64)
    for f in range(length):
        in_event = event is not None and event["start"] <= f < event["end"]
        g = base
        speed = base["speed"] * scale
        freq = base["freq"]
        if in_event:
            if event["type"] == "scene_mismatch":
                g = alt
                speed = alt["speed"] * scale
                freq = alt["freq"]
            elif event["type"] == "motion" and event["params"]["mode"] == "speed":
                speed = event["params"]["speed"] * scale
                freq = base["freq"] * 2.0
        joints = _gait_joints(x, ground, direction, phase, g, scale)
        if in_event and event["type"] == "motion" and event["params"]["mode"] == "jitter":
            joints = joints + rng.uniform(-JITTER_AMP * scale, JITTER_AMP * scale, (8, 2))
        joints = joints + rng.normal(0.0, POSE_NOISE * scale, (8, 2))
        track[f] = joints

        x += direction * speed
        if x < x_lo:
            x = 2 * x_lo - x
            direction = 1.0
        elif x > x_hi:
            x = 2 * x_hi - x
            direction = -1.0
        phase += freq
    return track


def _render_background(texture: str, world_hw: tuple[int, int],
                       rng: np.random.Generator) -> np.ndarray:
    """Dim procedural texture so the bright actor dominates the crop."""
    wh, ww = world_hw
    ys, xs = np.mgrid[0:wh, 0:ww].astype(np.float64)
    lo = rng.uniform(0.08, 0.12, 3)
    hi = rng.uniform(0.22, 0.30, 3)
    if texture == "checker":
        pattern = ((xs // 8 + ys // 8) % 2)
    elif texture == "stripes":
        pattern = (((xs + ys) // 6) % 2)
    elif texture == "dots":
        pattern = (((xs % 12 - 6) ** 2 + (ys % 12 - 6) ** 2) < 9).astype(np.float64)
    else:  # rings
        r = np.hypot(xs - ww / 2, ys - wh / 2)
        pattern = ((r // 7) % 2)
    img = lo[None, None, :] + pattern[..., None] * (hi - lo)[None, None, :]
    return img.astype(np.float32)


def _blend(img: np.ndarray, y0: int, x0: int, alpha: np.ndarray, color) -> None:
    region = img[y0:y0 + alpha.shape[0], x0:x0 + alpha.shape[1]]
    a = alpha[..., None]
    region *= 1.0 - a
    region += a * np.asarray(color, dtype=np.float32)


def _draw_segment(img: np.ndarray, p, q, color, width: float) -> None:
    wh, ww = img.shape[:2]
    x_lo = max(int(math.floor(min(p[0], q[0]) - width - 1)), 0)
    x_hi = min(int(math.ceil(max(p[0], q[0]) + width + 1)) + 1, ww)
    y_lo = max(int(math.floor(min(p[1], q[1]) - width - 1)), 0)
    y_hi = min(int(math.ceil(max(p[1], q[1]) + width + 1)) + 1, wh)
    if x_lo >= x_hi or y_lo >= y_hi:
        return
    ys, xs = np.mgrid[y_lo:y_hi, x_lo:x_hi].astype(np.float64)
    dx, dy = q[0] - p[0], q[1] - p[1]
    seg_sq = dx * dx + dy * dy
    if seg_sq < 1e-12:
        t = np.zeros_like(xs)
    else:
        t = np.clip(((xs - p[0]) * dx + (ys - p[1]) * dy) / seg_sq, 0.0, 1.0)
    dist = np.hypot(xs - (p[0] + t * dx), ys - (p[1] + t * dy))
    alpha = np.clip(width + 0.6 - dist, 0.0, 1.0)
    _blend(img, y_lo, x_lo, alpha, color)


def _draw_disc(img: np.ndarray, center, radius: float, color) -> None:
    wh, ww = img.shape[:2]
    x_lo = max(int(math.floor(center[0] - radius - 1)), 0)
    x_hi = min(int(math.ceil(center[0] + radius + 1)) + 1, ww)
    y_lo = max(int(math.floor(center[1] - radius - 1)), 0)
    y_hi = min(int(math.ceil(center[1] + radius + 1)) + 1, wh)
    if x_lo >= x_hi or y_lo >= y_hi:
        return
    ys, xs = np.mgrid[y_lo:y_hi, x_lo:x_hi].astype(np.float64)
    dist = np.hypot(xs - center[0], ys - center[1])
    alpha = np.clip(radius + 0.5 - dist, 0.0, 1.0)
    _blend(img, y_lo, x_lo, alpha, color)


def _render_video(background: np.ndarray, tracks: list[np.ndarray],
                  colors: list[np.ndarray], blob_windows: list[tuple[int, int, tuple]],
                  scale: float) -> np.ndarray:
    length = tracks[0].shape[0]
    frames = np.repeat(background[None], length, axis=0).copy()
    width = 0.9 * scale
    for f in range(length):
        img = frames[f]
        for actor, track in enumerate(tracks):
            joints = track[f]
            color = colors[actor]
            for a, b in BONES:
                _draw_segment(img, joints[a], joints[b], color, width)
            _draw_disc(img, joints[HEAD], 2.2 * scale, color)
            start, end, offset = blob_windows[actor]
            if start <= f < end:
                center = joints[CHEST] + np.asarray(offset) * scale
                _draw_disc(img, center, BLOB_RADIUS * scale, BLOB_COLOR)
    return np.clip(frames, 0.0, 1.0)


def _mismatch_candidates(cfg: WorldConfig, scene_id: int) -> list[int]:
    here = set(cfg.scenes[scene_id].allowed)
    elsewhere: set[int] = set()
    for sid, spec in enumerate(cfg.scenes):
        if sid != scene_id:
            elsewhere.update(spec.allowed)
    return sorted(elsewhere - here)


def _make_event(cfg: WorldConfig, kind: str, scene_id: int, base_behavior: dict,
                length: int, rng: np.random.Generator) -> dict:
    duration = length // 2
    start = int(rng.integers(2, length - duration - 1))
    params: dict = {}
    if kind == "motion":
        mode = str(rng.choice(["speed", "jitter"]))
        params["mode"] = mode
        if mode == "speed":
            params["speed"] = float(min(max(2.6 * base_behavior["speed"], 4.6), 5.6))
    elif kind == "appearance":
        params["offset"] = [float(rng.uniform(-2.0, 2.0)), float(rng.uniform(-3.0, 1.0))]
    elif kind == "scene_mismatch":
        candidates = _mismatch_candidates(cfg, scene_id)
        if not candidates:
            raise ValueError(
                f"scene {scene_id} has no excluded-but-elsewhere-allowed behavior; "
                "cannot inject a scene mismatch"
            )
        params["behavior"] = int(rng.choice(candidates))
    else:
        raise ValueError(f"unknown anomaly type {kind!r}")
    return {"type": kind, "start": start, "end": start + duration, "params": params}


def _assign_test_anomalies(cfg: WorldConfig, rng: np.random.Generator) -> list[str | None]:
    order = rng.permutation(cfg.test_videos).tolist()
    assignment: list[str | None] = [None] * cfg.test_videos
    cursor = 0
    for kind in ANOMALY_TYPES:
        count = int(round(cfg.anomaly_rates.get(kind, 0.0) * cfg.test_videos))
        for slot in order[cursor:cursor + count]:
            assignment[slot] = kind
        cursor += count
    return assignment


def generate_world(cfg: WorldConfig, out_dir: str | Path):
    """Generate and persist the dataset; returns the loaded DatasetHandle."""
    cfg.validate()
    for name, rate in cfg.train_anomaly_rates.items():
        if rate > 0:
            raise ValueError(f"anomaly rate {name}={rate} > 0 requested for train split")
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DatasetError(f"cannot create dataset directory {out_dir}: {exc}") from exc

    h, w = cfg.frame_size
    scale = min(h, w) / 64.0
    world_hw = (h + h // 2, w + w // 2)
    split_rng = seeds.generator(cfg.seed, "anomaly-assignment")
    test_kinds = _assign_test_anomalies(cfg, split_rng)

    backgrounds = [
        _render_background(spec.texture, world_hw, seeds.generator(cfg.seed, "scene", sid))
        for sid, spec in enumerate(cfg.scenes)
    ]

    videos = []
    events = []
    vid = 0
    for split, count in (("train", cfg.train_videos), ("test", cfg.test_videos)):
        for idx in range(count):
            rng = seeds.generator(cfg.seed, "video", vid)
            scene_id = idx % cfg.num_scenes
            allowed = cfg.scenes[scene_id].allowed
            kind = test_kinds[idx] if split == "test" else None

            behaviors = []
            tracks = []
            colors = []
            blob_windows = []
            video_events = []
            event_actor = int(rng.integers(0, cfg.actors_per_video)) if kind else -1
            for actor in range(cfg.actors_per_video):
                if split == "train":
                    behavior = allowed[(idx // cfg.num_scenes + actor) % len(allowed)]
                else:
                    behavior = int(rng.choice(allowed))
                event = None
                if actor == event_actor:
                    event = _make_event(cfg, kind, scene_id,
                                        BEHAVIOR_CATALOG[behavior], cfg.video_length, rng)
                    video_events.append({"video_id": vid, "actor": actor, **event})
                track = _simulate_actor(cfg.video_length, rng, behavior, event,
                                        world_hw, scale)
                behaviors.append(int(behavior))
                tracks.append(track)
                colors.append(rng.uniform(0.75, 0.95, 3).astype(np.float32))
                if event is not None and event["type"] == "appearance":
                    blob_windows.append((event["start"], event["end"],
                                         tuple(event["params"]["offset"])))
                else:
                    blob_windows.append((cfg.video_length, cfg.video_length, (0.0, 0.0)))

            frames = _render_video(backgrounds[scene_id], tracks, colors,
                                   blob_windows, scale)
            pose = np.stack(tracks).astype(np.float32)

            flags = np.zeros(cfg.video_length, dtype=np.int64)
            types = ["none"] * cfg.video_length
            for ev in video_events:
                flags[ev["start"]:ev["end"]] = 1
                for f in range(ev["start"], ev["end"]):
                    types[f] = ev["type"]
            events.extend(video_events)

            video_dir = out_dir / "videos" / str(vid)
            video_dir.mkdir(parents=True, exist_ok=True)
            tensorio.write_tensor(video_dir / "rgb.bin", frames)
            tensorio.write_tensor(video_dir / "pose.bin", pose)
            tensorio.write_tensor(video_dir / "scene.bin", backgrounds[scene_id])
            videos.append({
                "id": vid,
                "split": split,
                "scene_id": scene_id,
                "length": cfg.video_length,
                "actors": cfg.actors_per_video,
                "behaviors": behaviors,
                "anomaly": kind or "none",
                "labels": {"flags": flags.tolist(), "types": types},
                "files": {name: f"videos/{vid}/{name}.bin" for name in ("rgb", "pose", "scene")},
                "checksums": {
                    name: tensorio.sha256_file(video_dir / f"{name}.bin")
                    for name in ("rgb", "pose", "scene")
                },
                "shapes": {
                    "rgb": list(frames.shape),
                    "pose": list(pose.shape),
                    "scene": list(backgrounds[scene_id].shape),
                },
            })
            vid += 1

    manifest = {
        "format": "latentvad-dataset-v1",
        "config": dataclasses.asdict(cfg),
        "world_size": list(world_hw),
        "behaviors": BEHAVIOR_CATALOG,
        "videos": videos,
        "events": events,
    }
    (out_dir / "manifest.json").write_text(tensorio.canonical_json(manifest))
    return load_dataset(out_dir)


@dataclass
class ClipSample:
    """One human-centric clip: RGB crop, matching pose, and scene context."""
    rgb: np.ndarray          # T x H x W x 3 in [0, 1]
    pose: np.ndarray         # T x V x 2, coordinates normalized to [0, 1]
    scene_image: np.ndarray  # H x W x 3 background crop, no actors
    scene_id: int
    video_id: int
    actor_id: int
    start_frame: int
    labels: np.ndarray       # T binary flags
    label_types: list[str]   # per-frame anomaly tags ("none" when normal)


class DatasetHandle:
    """Read-only view of a generated dataset directory."""

    def __init__(self, path: Path, manifest: dict):
        self.path = path
        self.manifest = manifest
        self.config = manifest["config"]
        self._cache: dict[tuple[int, str], np.ndarray] = {}

    @property
    def frame_size(self) -> tuple[int, int]:
        return tuple(self.config["frame_size"])

    def videos(self, split: str | None = None) -> list[dict]:
        records = self.manifest["videos"]
        if split is None:
            return records
        return [v for v in records if v["split"] == split]

    def video_record(self, video_id: int) -> dict:
        return self.manifest["videos"][video_id]

    def _tensor(self, video_id: int, name: str) -> np.ndarray:
        key = (video_id, name)
        if key not in self._cache:
            if len(self._cache) > 3:
                self._cache.clear()
            record = self.video_record(video_id)
            self._cache[key] = tensorio.read_tensor(self.path / record["files"][name])
        return self._cache[key]

    def video_rgb(self, video_id: int) -> np.ndarray:
        return self._tensor(video_id, "rgb")

    def video_pose(self, video_id: int) -> np.ndarray:
        return self._tensor(video_id, "pose")

    def scene_render(self, video_id: int) -> np.ndarray:
        return self._tensor(video_id, "scene")

    def frame_labels(self, video_id: int) -> tuple[np.ndarray, list[str]]:
        labels = self.video_record(video_id)["labels"]
        return np.asarray(labels["flags"], dtype=np.int64), list(labels["types"])

    def manifest_hash(self) -> str:
        return hashlib.sha256((self.path / "manifest.json").read_bytes()).hexdigest()


def load_dataset(path: str | Path) -> DatasetHandle:
    """Open a dataset directory, verifying checksums and tensor shapes."""
    path = Path(path)
    manifest_path = path / "manifest.json"
    if not manifest_path.is_file():
        raise DatasetError(f"no manifest.json under {path}")
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("format") != "latentvad-dataset-v1":
        raise DatasetError(f"unrecognized dataset format in {manifest_path}")
    for record in manifest["videos"]:
        for name, rel in record["files"].items():
            file_path = path / rel
            if not file_path.is_file():
                raise CorruptDatasetError(f"missing tensor file {file_path}")
            if tensorio.sha256_file(file_path) != record["checksums"][name]:
                raise CorruptDatasetError(f"checksum mismatch for {file_path}")
            tensor = tensorio.read_tensor(file_path)
            if list(tensor.shape) != record["shapes"][name]:
                raise CorruptDatasetError(
                    f"{file_path}: shape {tensor.shape} != manifest {record['shapes'][name]}"
                )
    return DatasetHandle(path, manifest)


def iterate_clips(dataset: DatasetHandle, clip_len: int, stride: int,
                  split: str = "test") -> Iterator[ClipSample]:
    """Sliding person-centric windows ordered by (video_id, start_frame)."""
    if clip_len % 2:
        raise ValueError("clip length must be even")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    h, w = dataset.frame_size
    for record in dataset.videos(split):
        length = record["length"]
        if clip_len > length:
            raise ValueError(f"clip length {clip_len} exceeds video length {length}")
        vid = record["id"]
        rgb = dataset.video_rgb(vid)
        pose = dataset.video_pose(vid)
        scene = dataset.scene_render(vid)
        flags, types = dataset.frame_labels(vid)
        world_h, world_w = rgb.shape[1:3]
        for start in range(0, length - clip_len + 1, stride):
            for actor in range(record["actors"]):
                window = pose[actor, start:start + clip_len]
                center = window[:, CHEST].mean(axis=0)
                ox = int(np.clip(round(center[0] - w / 2), 0, world_w - w))
                oy = int(np.clip(round(center[1] - h / 2), 0, world_h - h))
                crop = rgb[start:start + clip_len, oy:oy + h, ox:ox + w]
                scene_crop = scene[oy:oy + h, ox:ox + w]
                local = (window - np.array([ox, oy], dtype=np.float32))
                local = local / np.array([w, h], dtype=np.float32)
                yield ClipSample(
                    rgb=np.ascontiguousarray(crop),
                    pose=local.astype(np.float32),
                    scene_image=np.ascontiguousarray(scene_crop),
                    scene_id=record["scene_id"],
                    video_id=vid,
                    actor_id=actor,
                    start_frame=start,
                    labels=flags[start:start + clip_len].copy(),
                    label_types=types[start:start + clip_len],
                )


def clip_stream_hash(dataset: DatasetHandle, clip_len: int, stride: int,
                     split: str = "test") -> str:
    """Hash of the streamed clip tensors; equal streams hash identically."""
    digest = hashlib.sha256()
    for clip in iterate_clips(dataset, clip_len, stride, split):
        digest.update(clip.rgb.tobytes())
        digest.update(clip.pose.tobytes())
        digest.update(clip.scene_image.tobytes())
    return digest.hexdigest()
