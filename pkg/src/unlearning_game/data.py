"""Dataset sources: seeded Gaussian blobs, IDX image/label pairs, target/shadow partition."""
from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from .errors import EmptySelection, InvalidParameter, MalformedIdx
from .game import Dataset

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass(frozen=True)
class SyntheticSpec:
    num_points: int
    dim: int
    num_classes: int = 2
    cluster_separation: float = 4.0
    noise_sigma: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.num_classes < 2:
            raise InvalidParameter("need at least two classes", "num_classes")
        if self.num_points < 3 * self.num_classes:
            raise InvalidParameter("num_points must be >= 3 * num_classes", "num_points")
        if self.dim < self.num_classes - 1:
            raise InvalidParameter("dim must be >= num_classes - 1 to host the class simplex", "dim")
        if not self.cluster_separation > 0 or not self.noise_sigma > 0:
            raise InvalidParameter("separation and noise must be positive")


def simplex_means(num_classes: int, dim: int, separation: float) -> np.ndarray:
    """Vertices of a regular simplex with pairwise distance ``separation``, centered at 0."""
    V = np.eye(num_classes) - 1.0 / num_classes
    _, _, Vt = np.linalg.svd(V)
    coords = V @ Vt[: num_classes - 1].T
    coords *= separation / np.sqrt(2.0)
    out = np.zeros((num_classes, dim))
    out[:, : num_classes - 1] = coords
    return out


def generate_synthetic(spec: SyntheticSpec) -> Dataset:
    rng = np.random.default_rng(spec.seed)
    labels = rng.permutation(np.arange(spec.num_points) % spec.num_classes)
    means = simplex_means(spec.num_classes, spec.dim, spec.cluster_separation)
    X = means[labels] + spec.noise_sigma * rng.standard_normal((spec.num_points, spec.dim))
    return Dataset(X, labels, spec.num_classes)


def _read(path: str | Path) -> bytes:
    raw = Path(path).read_bytes()
    return gzip.decompress(raw) if raw[:2] == b"\x1f\x8b" else raw


def read_idx(path: str | Path, magic: int) -> np.ndarray:
    """Unsigned-byte IDX payload reshaped to its declared dimensions."""
    buf = _read(path)
    if len(buf) < 8:
        raise MalformedIdx(f"{path}: file too short", str(path))
    got = struct.unpack(">I", buf[:4])[0]
    if got != magic:
        raise MalformedIdx(f"{path}: magic {got:#010x}, expected {magic:#010x}", str(path))
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(buf) < header:
        raise MalformedIdx(f"{path}: truncated header", str(path))
    dims = struct.unpack(f">{ndim}I", buf[4:header])
    size = int(np.prod(dims))
    if len(buf) - header != size:
        raise MalformedIdx(f"{path}: expected {size} data bytes, found {len(buf) - header}", str(path))
    return np.frombuffer(buf, dtype=np.uint8, offset=header).reshape(dims)


def write_idx(path: str | Path, array: np.ndarray) -> None:
    array = np.asarray(array, dtype=np.uint8)
    magic = 0x00000800 | array.ndim
    Path(path).write_bytes(struct.pack(f">I{array.ndim}I", magic, *array.shape) + array.tobytes())


def load_idx_pair(images_path, labels_path, keep_labels) -> Dataset:
    """Flattened images scaled to [0, 1]; kept labels remapped to 0..k-1 by ascending value."""
    keep = sorted(set(int(k) for k in keep_labels))
    if not keep:
        raise EmptySelection("keep_labels is empty", "keep_labels")
    images = read_idx(images_path, IDX_IMAGES_MAGIC)
    labels = read_idx(labels_path, IDX_LABELS_MAGIC)
    if images.shape[0] != labels.shape[0]:
        raise MalformedIdx("image and label counts differ", str(labels_path))
    sel = np.flatnonzero(np.isin(labels, keep))
    if len(sel) == 0:
        raise EmptySelection(f"no points with labels {keep}", "keep_labels")
    remap = np.full(256, -1)
    remap[keep] = np.arange(len(keep))
    X = images[sel].reshape(len(sel), -1).astype(np.float64) / 255.0
    return Dataset(X, remap[labels[sel]], len(keep), sel)


def partition_target_shadow(dataset: Dataset, fraction=Fraction(1, 2), seed: int = 0) -> tuple[Dataset, Dataset]:
    """Seeded disjoint split; ``source_ids`` of each part carry the parent's source ids."""
    fraction = Fraction(fraction)
    if not 0 < fraction < 1:
        raise InvalidParameter("fraction must lie in (0, 1)", "fraction")
    n = len(dataset)
    k = int(fraction * n)
    if k == 0 or k == n:
        raise InvalidParameter("both parts must be nonempty", "fraction")
    perm = np.random.default_rng(seed).permutation(n)
    target_ids, shadow_ids = np.sort(perm[:k]), np.sort(perm[k:])
    return dataset.take(target_ids), dataset.take(shadow_ids)


def subsample(dataset: Dataset, size: int, seed: int) -> Dataset:
    """Uniform subset of ``size`` points (dataset-size sweeps)."""
    if not 0 < size <= len(dataset):
        raise InvalidParameter("size must lie in [1, len(dataset)]", "size")
    ids = np.sort(np.random.default_rng(seed).choice(len(dataset), size, replace=False))
    return dataset.take(ids)
