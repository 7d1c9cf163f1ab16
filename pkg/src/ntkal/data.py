"""Dataset ingestion and synthesis.

Provides the MNIST-style IDX binary loader (plus a writer so tests can
round-trip files), seeded 2-D synthetic generators for desk-scale
experiments, splitting, and one-hot encoding. Datasets are immutable
value objects; every generator is a pure function of its arguments.
"""

import struct
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, FormatError

__all__ = [
    "Dataset",
    "one_hot_encode",
    "load_mnist_idx",
    "write_idx_images",
    "write_idx_labels",
    "gen_two_gaussians",
    "gen_spirals",
    "split",
    "to_csv",
]

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801


@dataclass(frozen=True)
class Dataset:
    """Labeled classification data: inputs, integer labels, one-hot targets."""

    inputs: np.ndarray  # (N, n_0) float64
    labels: np.ndarray  # (N,) int64 in [0, class_count)
    one_hot: np.ndarray  # (N, class_count) float64
    class_count: int
    name: str = ""

    def __post_init__(self):
        if self.inputs.ndim != 2 or len(self.inputs) < 1:
            raise ContractError("dataset needs a nonempty 2-D input matrix")
        if len(self.labels) != len(self.inputs):
            raise ContractError("label count does not match input count")
        if not np.all(np.isfinite(self.inputs)):
            raise ContractError("dataset inputs contain non-finite values")
        if self.labels.min() < 0 or self.labels.max() >= self.class_count:
            raise ContractError("labels outside [0, class_count)")

    def __len__(self):
        return len(self.inputs)

    @property
    def input_dim(self):
        return self.inputs.shape[1]

    def subset(self, indices):
        """New Dataset restricted to ``indices`` (order preserved)."""
        idx = np.asarray(indices, dtype=np.intp)
        return Dataset(
            inputs=self.inputs[idx],
            labels=self.labels[idx],
            one_hot=self.one_hot[idx],
            class_count=self.class_count,
            name=self.name,
        )


def one_hot_encode(labels, class_count):
    """One-hot rows in {0,1} for integer labels."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.min() < 0 or labels.max() >= class_count:
        raise ContractError("labels outside [0, class_count)")
    out = np.zeros((len(labels), class_count), dtype=np.float64)
    out[np.arange(len(labels)), labels] = 1.0
    return out


def make_dataset(inputs, labels, class_count, name=""):
    """Assemble a Dataset from raw inputs and integer labels."""
    inputs = np.asarray(inputs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    return Dataset(
        inputs=inputs,
        labels=labels,
        one_hot=one_hot_encode(labels, class_count),
        class_count=class_count,
        name=name,
    )


# --- IDX binary format -------------------------------------------------
#
# Big-endian: 4-byte magic (0x00000803 images / 0x00000801 labels),
# 4-byte count, for images 4-byte rows and cols, then raw unsigned bytes.


def _read_be32(f, what):
    raw = f.read(4)
    if len(raw) != 4:
        raise FormatError(f"truncated IDX header while reading {what}")
    return struct.unpack(">I", raw)[0]


def load_mnist_idx(images_path, labels_path):
    """Parse an IDX image/label file pair into a Dataset.

    Pixels are scaled to [0, 1] and images flattened row-major, so 28x28
    digits become 784-dimensional inputs.
    """
    with open(images_path, "rb") as f:
        magic = _read_be32(f, "image magic")
        if magic != IDX_IMAGE_MAGIC:
            raise FormatError(
                f"bad image magic: got 0x{magic:08x}, want 0x{IDX_IMAGE_MAGIC:08x}"
            )
        n = _read_be32(f, "image count")
        rows = _read_be32(f, "row count")
        cols = _read_be32(f, "col count")
        payload = f.read()
    if len(payload) < n * rows * cols:
        raise FormatError(
            f"truncated image payload: have {len(payload)} bytes, "
            f"need {n * rows * cols}"
        )
    pixels = np.frombuffer(payload[: n * rows * cols], dtype=np.uint8)
    images = pixels.reshape(n, rows * cols).astype(np.float64) / 255.0

    with open(labels_path, "rb") as f:
        magic = _read_be32(f, "label magic")
        if magic != IDX_LABEL_MAGIC:
            raise FormatError(
                f"bad label magic: got 0x{magic:08x}, want 0x{IDX_LABEL_MAGIC:08x}"
            )
        n_labels = _read_be32(f, "label count")
        label_payload = f.read()
    if len(label_payload) < n_labels:
        raise FormatError(
            f"truncated label payload: have {len(label_payload)} bytes, "
            f"need {n_labels}"
        )
    if n_labels != n:
        raise FormatError(f"image/label count mismatch: {n} images, {n_labels} labels")
    labels = np.frombuffer(label_payload[:n_labels], dtype=np.uint8).astype(np.int64)
    return make_dataset(images, labels, class_count=10, name="mnist")


def write_idx_images(path, images_u8):
    """Write a (N, rows, cols) uint8 array as an IDX image file."""
    images_u8 = np.asarray(images_u8, dtype=np.uint8)
    n, rows, cols = images_u8.shape
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGE_MAGIC, n, rows, cols))
        f.write(images_u8.tobytes())


def write_idx_labels(path, labels_u8):
    """Write a (N,) uint8 array as an IDX label file."""
    labels_u8 = np.asarray(labels_u8, dtype=np.uint8)
    with open(path, "wb") as f:
        f.write(struct.pack(">II", IDX_LABEL_MAGIC, len(labels_u8)))
        f.write(labels_u8.tobytes())


# --- synthetic 2-D generators ------------------------------------------


def gen_two_gaussians(n_per_class, separation, seed):
    """Two unit-variance Gaussian blobs centered at (+-separation/2, 0)."""
    if n_per_class < 1:
        raise ContractError("n_per_class must be >= 1")
    rng = np.random.default_rng(seed)
    half = separation / 2.0
    x0 = rng.standard_normal((n_per_class, 2)) + np.array([-half, 0.0])
    x1 = rng.standard_normal((n_per_class, 2)) + np.array([half, 0.0])
    inputs = np.vstack([x0, x1])
    labels = np.repeat([0, 1], n_per_class)
    perm = rng.permutation(len(inputs))
    return make_dataset(inputs[perm], labels[perm], 2, name="two_gaussians")


def gen_spirals(n_per_class, noise, seed):
    """Two interleaved spiral arms with Gaussian perturbation ``noise``."""
    if n_per_class < 1:
        raise ContractError("n_per_class must be >= 1")
    rng = np.random.default_rng(seed)
    t = np.sqrt(rng.uniform(0.25, 1.0, size=n_per_class)) * 3.0 * np.pi
    arms = []
    for cls in range(2):
        phase = cls * np.pi
        x = t * np.cos(t + phase) + rng.standard_normal(n_per_class) * noise
        y = t * np.sin(t + phase) + rng.standard_normal(n_per_class) * noise
        arms.append(np.column_stack([x, y]) / np.pi)
    inputs = np.vstack(arms)
    labels = np.repeat([0, 1], n_per_class)
    perm = rng.permutation(len(inputs))
    return make_dataset(inputs[perm], labels[perm], 2, name="spirals")


def split(data, fractions, seed):
    """Seeded shuffle then partition into len(fractions) datasets.

    Fractions must be positive and sum to 1; sizes are rounded so the
    parts exactly cover the data.
    """
    fractions = [float(f) for f in fractions]
    if any(f <= 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise ContractError(f"fractions must be positive and sum to 1, got {fractions}")
    n = len(data)
    perm = np.random.default_rng(seed).permutation(n)
    bounds = np.cumsum([int(round(f * n)) for f in fractions[:-1]])
    parts = np.split(perm, bounds)
    return tuple(data.subset(p) for p in parts)


def to_csv(data, path):
    """Export as CSV with header x0,...,xd,label."""
    d = data.input_dim
    header = ",".join([f"x{i}" for i in range(d)] + ["label"])
    body = np.column_stack([data.inputs, data.labels.astype(np.float64)])
    np.savetxt(path, body, delimiter=",", header=header, comments="")
