"""Synthetic domain-pair generation and digit-image ingestion.

Synthetic pairs draw source and target from the same generative family
with a controlled shift (rotation or translation) applied to the target,
so the amount of distribution mismatch is a knob. Digit tasks ingest the
big-endian IDX container format; a writer is included so conversions and
round-trip tests stay inside one parser surface.
"""

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage
from sklearn.datasets import make_blobs, make_moons

from ._validation import check_random_seed

MOONS_ROTATE = "moons_rotate"
BLOBS_SHIFT = "blobs_shift"
IDX_DIGITS = "idx_digits"


@dataclass(frozen=True)
class DomainPairSpec:
    """Recipe for one source/target pair from a shared generative family."""

    kind: str
    num_classes: int = 2
    n_source: int = 1000
    n_target: int = 1000
    n_target_eval: int = 1000
    rotation_degrees: float = 0.0
    translation: tuple = (0.0, 0.0)
    noise_scale: float = 0.1
    standardize: bool = False

    def __post_init__(self):
        if self.kind not in (MOONS_ROTATE, BLOBS_SHIFT):
            raise ValueError(f"unknown synthetic pair kind {self.kind!r}")
        if min(self.n_source, self.n_target, self.n_target_eval) <= 0:
            raise ValueError("sample counts must be positive")
        if self.kind == MOONS_ROTATE and self.num_classes != 2:
            raise ValueError("the two-moons family has exactly 2 classes")
        if self.num_classes < 2:
            raise ValueError("need at least 2 classes")


def _rotate(X, degrees):
    theta = np.deg2rad(degrees)
    rot = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    return X @ rot.T


def _draw_domain(spec, n, shifted, seed):
    if spec.kind == MOONS_ROTATE:
        X, y = make_moons(n_samples=n, noise=spec.noise_scale, random_state=seed)
        if shifted:
            X = _rotate(X, spec.rotation_degrees) + np.asarray(spec.translation)
    else:
        # both domains share fixed class centers on a circle; the target
        # shift is a translation of the whole cloud
        angles = 2 * np.pi * np.arange(spec.num_classes) / spec.num_classes
        centers = 3.0 * np.column_stack([np.cos(angles), np.sin(angles)])
        X, y = make_blobs(
            n_samples=n,
            centers=centers,
            cluster_std=max(spec.noise_scale, 1e-6) * 5,
            random_state=seed,
        )
        if shifted:
            X = X + np.asarray(spec.translation)
    return X, y


def make_synthetic_pair(spec, seed):
    """Draw (source labeled, target labeled-for-eval, target unlabeled view).

    The unlabeled adaptation view and the labeled evaluation split are
    disjoint draws of the target distribution. Deterministic per seed.
    """
    seed = check_random_seed(seed)
    seeds = np.random.SeedSequence([seed, 0xDA7A]).generate_state(3)
    src_X, src_y = _draw_domain(spec, spec.n_source, shifted=False, seed=int(seeds[0]) % 2**31)
    tgt_X, _ = _draw_domain(spec, spec.n_target, shifted=True, seed=int(seeds[1]) % 2**31)
    eval_X, eval_y = _draw_domain(
        spec, spec.n_target_eval, shifted=True, seed=int(seeds[2]) % 2**31
    )
    if spec.standardize:
        mu, sd = src_X.mean(axis=0), src_X.std(axis=0) + 1e-12
        src_X, tgt_X, eval_X = (src_X - mu) / sd, (tgt_X - mu) / sd, (eval_X - mu) / sd
    return (src_X, src_y), (eval_X, eval_y), tgt_X


_IDX_DTYPES = {
    0x08: np.dtype(">u1"),
    0x09: np.dtype(">i1"),
    0x0B: np.dtype(">i2"),
    0x0C: np.dtype(">i4"),
    0x0D: np.dtype(">f4"),
    0x0E: np.dtype(">f8"),
}
_MAX_IDX_ELEMENTS = 2**33


def _open_maybe_gzip(path, mode):
    path = Path(path)
    if path.suffix == ".gz":
        return gzip.open(path, mode)
    return open(path, mode)


def load_idx(path):
    """Decode one big-endian IDX file (gzip-transparent) to a numpy array."""
    with _open_maybe_gzip(path, "rb") as fh:
        header = fh.read(4)
        if len(header) < 4:
            raise ValueError(f"{path}: truncated IDX header")
        zero1, zero2, dtype_code, ndim = struct.unpack(">BBBB", header)
        if zero1 != 0 or zero2 != 0 or dtype_code not in _IDX_DTYPES:
            raise ValueError(f"{path}: bad IDX magic number {header.hex()}")
        dim_bytes = fh.read(4 * ndim)
        if len(dim_bytes) < 4 * ndim:
            raise ValueError(f"{path}: truncated IDX dimension header")
        dims = struct.unpack(f">{ndim}I", dim_bytes)
        count = int(np.prod(dims, dtype=np.int64)) if dims else 1
        if count > _MAX_IDX_ELEMENTS:
            raise ValueError(f"{path}: IDX dimension overflow, {dims} declares {count} elements")
        dtype = _IDX_DTYPES[dtype_code]
        payload = fh.read(count * dtype.itemsize)
        if len(payload) < count * dtype.itemsize:
            raise ValueError(
                f"{path}: truncated IDX payload, expected {count * dtype.itemsize} bytes, "
                f"got {len(payload)}"
            )
        return np.frombuffer(payload, dtype=dtype).reshape(dims).astype(dtype.newbyteorder("="))


def save_idx(array, path):
    """Write an array as a big-endian IDX file (gzip if the path ends in .gz)."""
    array = np.asarray(array)
    code = {v.newbyteorder("="): k for k, v in _IDX_DTYPES.items()}.get(
        array.dtype.newbyteorder("=")
    )
    if code is None:
        raise ValueError(f"dtype {array.dtype} has no IDX type code")
    if array.ndim > 255:
        raise ValueError("IDX supports at most 255 dimensions")
    with _open_maybe_gzip(path, "wb") as fh:
        fh.write(struct.pack(">BBBB", 0, 0, code, array.ndim))
        fh.write(struct.pack(f">{array.ndim}I", *array.shape))
        fh.write(array.astype(array.dtype.newbyteorder(">"), copy=False).tobytes())


@dataclass(frozen=True)
class ImageBatchSpec:
    """How raw digit images become model-ready arrays."""

    height: int
    width: int
    channels: int = 1
    resize_to: tuple | None = None
    mean: float = 0.5
    std: float = 0.5

    def __post_init__(self):
        if min(self.height, self.width, self.channels) <= 0:
            raise ValueError("image dimensions must be positive")
        if self.resize_to is not None:
            object.__setattr__(self, "resize_to", tuple(int(v) for v in self.resize_to))
            if min(self.resize_to) <= 0:
                raise ValueError("resize target must be positive")
        if self.std <= 0:
            raise ValueError("std must be positive")

    @property
    def output_hw(self):
        return self.resize_to if self.resize_to is not None else (self.height, self.width)


def preprocess(images, spec):
    """Scale to [0, 1], bilinear-resize when required, then normalize.

    Accepts (n, H, W) or (n, C, H, W) batches whose spatial dimensions
    match either the spec's input size or its resize target (so running
    the output through again keeps the shape fixed). Returns float32
    (n, C, H', W').
    """
    x = np.asarray(images)
    if x.ndim == 3:
        x = x[:, None, :, :]
    if x.ndim != 4 or x.shape[1] != spec.channels:
        raise ValueError(
            f"expected (n, {spec.channels}, H, W) or (n, H, W) images, got {x.shape}"
        )
    hw = x.shape[2:]
    if hw not in ((spec.height, spec.width), spec.output_hw):
        raise ValueError(
            f"image size {hw} matches neither the declared input "
            f"({spec.height}, {spec.width}) nor the resize target {spec.output_hw}"
        )
    x = x.astype(np.float64)
    if np.issubdtype(np.asarray(images).dtype, np.integer):
        x = x / 255.0
    if hw != spec.output_hw:
        zoom = (1, 1, spec.output_hw[0] / hw[0], spec.output_hw[1] / hw[1])
        x = ndimage.zoom(x, zoom, order=1)
        if x.shape[2:] != spec.output_hw:
            raise ValueError(f"resize produced {x.shape[2:]}, wanted {spec.output_hw}")
    return ((x - spec.mean) / spec.std).astype(np.float32)


_IDX_FILE_CANDIDATES = {
    ("train", "images"): ["train-images-idx3-ubyte", "train-images.idx3-ubyte"],
    ("train", "labels"): ["train-labels-idx1-ubyte", "train-labels.idx1-ubyte"],
    ("test", "images"): ["t10k-images-idx3-ubyte", "test-images-idx3-ubyte",
                          "t10k-images.idx3-ubyte"],
    ("test", "labels"): ["t10k-labels-idx1-ubyte", "test-labels-idx1-ubyte",
                          "t10k-labels.idx1-ubyte"],
}


def load_digit_domain(data_root, name, split):
    """Load one digit domain (e.g. data_root/mnist, train split) from IDX files."""
    root = Path(data_root) / name
    if split not in ("train", "test"):
        raise ValueError(f"split must be train or test, got {split!r}")
    found = {}
    for part in ("images", "labels"):
        for stem in _IDX_FILE_CANDIDATES[(split, part)]:
            for suffix in ("", ".gz"):
                candidate = root / (stem + suffix)
                if candidate.exists():
                    found[part] = candidate
                    break
            if part in found:
                break
        if part not in found:
            tried = ", ".join(_IDX_FILE_CANDIDATES[(split, part)])
            raise FileNotFoundError(
                f"no {split} {part} IDX file for domain {name!r} under {root} "
                f"(tried {tried}, each optionally .gz)"
            )
    images = load_idx(found["images"])
    labels = load_idx(found["labels"])
    if images.ndim != 3 or labels.ndim != 1 or len(images) != len(labels):
        raise ValueError(f"domain {name!r} {split} files disagree: "
                         f"images {images.shape}, labels {labels.shape}")
    return images, labels.astype(np.int64)


def make_digit_pair(data_root, source="mnist", target="usps", n_source=None,
                    image_size=28, seed=0):
    """Assemble a digit adaptation task: source train, target train, target test.

    Both domains are resized to ``image_size`` squared, scaled to [0, 1],
    and normalized to mean 0.5 / std 0.5. ``n_source`` subsamples the
    source train split deterministically.
    """
    src_X, src_y = load_digit_domain(data_root, source, "train")
    tgt_X, _ = load_digit_domain(data_root, target, "train")
    eval_X, eval_y = load_digit_domain(data_root, target, "test")
    if n_source is not None and n_source < len(src_X):
        keep = np.random.default_rng(check_random_seed(seed)).choice(
            len(src_X), size=n_source, replace=False
        )
        src_X, src_y = src_X[keep], src_y[keep]

    def prep(images):
        h, w = images.shape[1:]
        spec = ImageBatchSpec(height=h, width=w, resize_to=(image_size, image_size))
        return preprocess(images, spec)

    return (prep(src_X), src_y), (prep(eval_X), eval_y), prep(tgt_X)
