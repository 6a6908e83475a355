"""Dataset manifest and synthetic dataset emission.

A dataset directory holds degraded 8-bit training PNGs, paired normal-light
reference PNGs and a `manifest.json` describing camera intrinsics, per-frame
poses (row-major 4x4), split tags and the degradation parameters used.
Reference images are never part of the training split; they exist only for
evaluation.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .images import byte_to_float, read_png, write_png
from .isp import DegradationParams, degrade, encode_reference
from .rendering import Camera
from .rng import rng_for
from .scene import ProceduralScene, render_reference

MANIFEST_NAME = "manifest.json"


@dataclass(frozen=True)
class FrameRecord:
    file: str
    transform: tuple[float, ...]  # 16 floats, row-major 4x4 camera-to-world
    split: str                    # "train" | "test"

    def camera(self, width: int, height: int, focal: float) -> Camera:
        mat = np.asarray(self.transform, dtype=np.float64).reshape(4, 4)
        return Camera(width=width, height=height, focal=focal, pose=mat[:3, :])


@dataclass
class DatasetManifest:
    width: int
    height: int
    focal: float
    near: float
    far: float
    frames: list[FrameRecord]
    gt_frames: list[FrameRecord]
    degradation: dict

    def to_dict(self) -> dict:
        return {
            "width": self.width, "height": self.height, "focal": self.focal,
            "near": self.near, "far": self.far,
            "frames": [{"file": f.file, "transform": list(f.transform), "split": f.split}
                       for f in self.frames],
            "gt_frames": [{"file": f.file, "transform": list(f.transform), "split": f.split}
                          for f in self.gt_frames],
            "degradation": self.degradation,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetManifest":
        def records(items):
            return [FrameRecord(file=i["file"], transform=tuple(i["transform"]),
                                split=i["split"]) for i in items]
        return cls(width=d["width"], height=d["height"], focal=d["focal"],
                   near=d["near"], far=d["far"], frames=records(d["frames"]),
                   gt_frames=records(d["gt_frames"]), degradation=d["degradation"])

    def save(self, directory: str) -> str:
        path = os.path.join(directory, MANIFEST_NAME)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        return path

    @classmethod
    def load(cls, directory: str) -> "DatasetManifest":
        path = directory if directory.endswith(".json") else os.path.join(directory, MANIFEST_NAME)
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def split_frames(self, split: str) -> list[FrameRecord]:
        return [f for f in self.frames if f.split == split]

    def split_gt_frames(self, split: str) -> list[FrameRecord]:
        return [f for f in self.gt_frames if f.split == split]


def _pose_to_transform(cam: Camera) -> tuple[float, ...]:
    mat = np.vstack([cam.pose, [0.0, 0.0, 0.0, 1.0]])
    return tuple(float(v) for v in mat.reshape(-1))


def emit_dataset(scene: ProceduralScene, cameras: list[Camera],
                 params: DegradationParams, out_dir: str, seed: int,
                 test_count: int = 0, near: float = 2.0, far: float = 6.0,
                 reference_samples: int = 96) -> DatasetManifest:
    """Render and write degraded train images plus clean references.

    The last `test_count` cameras are tagged as the held-out split.  Every
    view gets both a degraded image and a normal-light reference.
    """
    os.makedirs(out_dir, exist_ok=True)
    if not cameras:
        raise ValueError("need at least one camera")
    frames: list[FrameRecord] = []
    gt_frames: list[FrameRecord] = []
    first = cameras[0]
    for index, cam in enumerate(cameras):
        if (cam.width, cam.height, cam.focal) != (first.width, first.height, first.focal):
            raise ValueError("all cameras in one dataset must share intrinsics")
        split = "test" if index >= len(cameras) - test_count else "train"
        linear = render_reference(scene, cam, n_samples=reference_samples,
                                  near=near, far=far)
        degraded = degrade(linear, params, rng_for(seed, f"degrade/{index}"))
        dark_name = f"view_{index:03d}.png"
        gt_name = f"gt_{index:03d}.png"
        write_png(os.path.join(out_dir, dark_name), degraded)
        write_png(os.path.join(out_dir, gt_name), encode_reference(linear))
        transform = _pose_to_transform(cam)
        frames.append(FrameRecord(file=dark_name, transform=transform, split=split))
        gt_frames.append(FrameRecord(file=gt_name, transform=transform, split=split))
    manifest = DatasetManifest(width=first.width, height=first.height,
                               focal=first.focal, near=near, far=far,
                               frames=frames, gt_frames=gt_frames,
                               degradation=params.to_dict())
    manifest.save(out_dir)
    return manifest


@dataclass
class LoadedDataset:
    """Manifest plus decoded images, ready for training or evaluation."""

    manifest: DatasetManifest
    directory: str
    cameras: list[Camera]           # training cameras
    images: np.ndarray              # (V, H, W, 3) float32 in [0, 1], train split

    @property
    def near(self) -> float:
        return self.manifest.near

    @property
    def far(self) -> float:
        return self.manifest.far

    def test_views(self):
        """(camera, reference float image) pairs for the held-out split."""
        m = self.manifest
        out = []
        for rec in m.split_gt_frames("test"):
            cam = rec.camera(m.width, m.height, m.focal)
            img = byte_to_float(read_png(os.path.join(self.directory, rec.file)))
            out.append((cam, img))
        return out


def load_dataset(directory: str) -> LoadedDataset:
    manifest = DatasetManifest.load(directory)
    cams = []
    imgs = []
    for rec in manifest.split_frames("train"):
        cams.append(rec.camera(manifest.width, manifest.height, manifest.focal))
        imgs.append(byte_to_float(read_png(os.path.join(directory, rec.file))))
    if len(cams) < 2:
        raise ValueError(f"dataset at {directory} has {len(cams)} training frames, need >= 2")
    return LoadedDataset(manifest=manifest, directory=directory,
                         cameras=cams, images=np.stack(imgs, axis=0))
