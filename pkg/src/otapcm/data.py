"""Datasets and per-sensor view synthesis.

MNIST is read from IDX files (optionally gzip-compressed). Each sensor
observes its own randomly rotated copy of a sample.
"""
from __future__ import annotations

import gzip
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
DATA_ROOT_ENV = "OTAPCM_DATA_ROOT"

MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


class IdxLengthError(FormatError):
    pass


@dataclass
class Dataset:
    images: np.ndarray  # (N, H, W) in [0, 1]
    labels: np.ndarray  # (N,) int
    split: str = ""

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise ValueError(f"{len(self.images)} images but {len(self.labels)} labels")

    def __len__(self):
        return len(self.labels)

    def subset(self, idx, split: str | None = None) -> "Dataset":
        return Dataset(self.images[idx], self.labels[idx], self.split if split is None else split)


@dataclass
class ViewSet:
    views: np.ndarray   # (M, ...) one view per sensor
    angles: np.ndarray  # degrees, shape (M, ...)


def _open(path):
    path = Path(path)
    if path.suffix == ".gz":
        return gzip.open(path, "rb")
    return open(path, "rb")


def read_idx(path) -> np.ndarray:
    """Raw unsigned-byte IDX array (images magic 0x803 or labels magic 0x801)."""
    with _open(path) as fh:
        raw = fh.read()
    if len(raw) < 4:
        raise FormatError(f"{path}: file too short for an IDX header")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic == IMAGE_MAGIC:
        ndim = 3
    elif magic == LABEL_MAGIC:
        ndim = 1
    else:
        raise FormatError(f"{path}: bad IDX magic 0x{magic:08x}")
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise IdxLengthError(f"{path}: header needs {header} bytes, file has {len(raw)}")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    expected = int(np.prod(dims))
    actual = len(raw) - header
    if actual < expected:
        raise IdxLengthError(f"{path}: expected {expected} payload bytes, got {actual}")
    return np.frombuffer(raw, dtype=np.uint8, count=expected, offset=header).reshape(dims)


def load_idx(path) -> np.ndarray:
    """IDX file as float images scaled to [0, 1] or int64 labels."""
    arr = read_idx(path)
    if arr.ndim == 3:
        return arr.astype(np.float64) / 255.0
    return arr.astype(np.int64)


def write_idx(path, array) -> None:
    array = np.asarray(array)
    if array.ndim not in (1, 3):
        raise ValueError("IDX writer supports label vectors and (N, H, W) image stacks")
    if array.dtype != np.uint8:
        if array.min() < 0 or array.max() > 255:
            raise ValueError("values must fit in unsigned bytes")
        array = array.astype(np.uint8)
    magic = IMAGE_MAGIC if array.ndim == 3 else LABEL_MAGIC
    payload = struct.pack(f">I{array.ndim}I", magic, *array.shape) + array.tobytes()
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "wb") as fh:
        fh.write(payload)


def resolve_root(root: str | os.PathLike | None) -> Path:
    root = root or os.environ.get(DATA_ROOT_ENV)
    if not root:
        raise FileNotFoundError(f"no dataset root given (flag or ${DATA_ROOT_ENV})")
    return Path(root)


def _find(root: Path, stem: str) -> Path:
    for name in (stem, stem + ".gz"):
        if (root / name).exists():
            return root / name
    raise FileNotFoundError(f"{stem}[.gz] not found under {root}")


def load_mnist(root=None, split: str = "train", limit: int | None = None) -> Dataset:
    root = resolve_root(root)
    img_name, lbl_name = MNIST_FILES[split]
    images = load_idx(_find(root, img_name))
    labels = load_idx(_find(root, lbl_name))
    if len(images) != len(labels):
        raise FormatError(f"{split}: {len(images)} images vs {len(labels)} labels")
    if limit is not None:
        images, labels = images[:limit], labels[:limit]
    return Dataset(images, labels, split)


def rotate_batch(images: np.ndarray, angles_deg, order: int = 1) -> np.ndarray:
    """Rotate square images counter-clockwise about their centre.

    ``order=1`` is bilinear, ``order=0`` nearest neighbour. Samples that fall
    outside the source grid read as zero.
    """
    images = np.asarray(images, dtype=np.float64)
    if images.ndim == 2:
        return rotate_batch(images[None], np.atleast_1d(angles_deg), order)[0]
    n, h, w = images.shape
    if h != w:
        raise ValueError(f"rotation needs square images, got {h}x{w}")
    theta = np.deg2rad(np.broadcast_to(np.asarray(angles_deg, dtype=np.float64), (n,)))
    c = (h - 1) / 2.0
    rr, cc = np.meshgrid(np.arange(h) - c, np.arange(w) - c, indexing="ij")
    cos, sin = np.cos(theta)[:, None, None], np.sin(theta)[:, None, None]
    # inverse map: output pixel -> source location
    src_r = cos * rr + sin * cc + c
    src_c = -sin * rr + cos * cc + c
    # snap values that are integral up to rounding so right angles are exact
    src_r = np.where(np.abs(src_r - np.round(src_r)) < 1e-9, np.round(src_r), src_r)
    src_c = np.where(np.abs(src_c - np.round(src_c)) < 1e-9, np.round(src_c), src_c)
    batch = np.arange(n)[:, None, None]

    def sample(r, col):
        ok = (r >= 0) & (r < h) & (col >= 0) & (col < w)
        return np.where(ok, images[batch, np.clip(r, 0, h - 1), np.clip(col, 0, w - 1)], 0.0)

    if order == 0:
        out = sample(np.round(src_r).astype(int), np.round(src_c).astype(int))
    elif order == 1:
        r0 = np.floor(src_r).astype(int)
        c0 = np.floor(src_c).astype(int)
        fr, fc = src_r - r0, src_c - c0
        out = ((1 - fr) * (1 - fc) * sample(r0, c0) + (1 - fr) * fc * sample(r0, c0 + 1)
               + fr * (1 - fc) * sample(r0 + 1, c0) + fr * fc * sample(r0 + 1, c0 + 1))
    else:
        raise ValueError("interpolation order must be 0 or 1")
    return np.clip(out, 0.0, 1.0)


def rotate(image: np.ndarray, angle: float, order: int = 1) -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2 or image.shape[0] != image.shape[1]:
        raise ValueError(f"rotate needs a square 2-D image, got shape {image.shape}")
    return rotate_batch(image[None], [angle], order)[0]


def draw_angles(rng: np.random.Generator, shape, max_deg: float = 180.0) -> np.ndarray:
    return rng.uniform(0.0, max_deg, size=shape)


def make_views(sample: np.ndarray, n_sensors: int, rng: np.random.Generator,
               order: int = 1, max_deg: float = 180.0) -> ViewSet:
    """Independent random rotation per sensor of a single image."""
    if n_sensors < 1:
        raise ValueError("need at least one sensor")
    angles = draw_angles(rng, n_sensors, max_deg)
    views = rotate_batch(np.broadcast_to(sample, (n_sensors,) + np.shape(sample)), angles, order)
    return ViewSet(views, angles)


def make_views_batch(images: np.ndarray, n_sensors: int, rng: np.random.Generator,
                     rotate_views: bool = True, order: int = 1, max_deg: float = 180.0) -> ViewSet:
    """Views for a whole batch: ``views.shape == (M, N, H, W)``."""
    if n_sensors < 1:
        raise ValueError("need at least one sensor")
    n = len(images)
    if not rotate_views:
        return ViewSet(np.broadcast_to(images, (n_sensors,) + images.shape).copy(),
                       np.zeros((n_sensors, n)))
    angles = draw_angles(rng, (n_sensors, n), max_deg)
    views = np.empty((n_sensors,) + images.shape)
    for m in range(n_sensors):
        views[m] = rotate_batch(images, angles[m], order)
    return ViewSet(views, angles)


def synthetic_blobs(n: int, classes: int, side: int, seed: int, separation: float = 4.0) -> Dataset:
    """Gaussian class clusters on ``side x side`` images, clipped to [0, 1].

    Class centres are uniform in the unit cube; per-pixel noise has standard
    deviation ``1 / separation``. Classes are balanced up to one sample.
    """
    if n < 1 or classes < 1 or side < 1 or separation <= 0:
        raise ValueError("synthetic_blobs needs positive sizes and separation")
    rng = np.random.default_rng(seed)
    centres = rng.uniform(0.0, 1.0, (classes, side, side))
    labels = rng.permutation(np.arange(n) % classes)
    images = centres[labels] + rng.standard_normal((n, side, side)) / separation
    return Dataset(np.clip(images, 0.0, 1.0), labels.astype(np.int64), "synthetic")
