"""Dataset ingestion (CSV, IDX) and synthetic generators."""

from __future__ import annotations

import csv
import hashlib
import io
import struct
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .core import ContractError, Dataset, RngStream

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class DataFormatError(ValueError):
    """Malformed input file. ``line``/``offset`` locate the problem when known."""

    def __init__(self, msg, line=None, offset=None):
        where = f"line {line}: " if line is not None else f"byte offset {offset}: " if offset is not None else ""
        super().__init__(where + msg)
        self.line = line
        self.offset = offset


@dataclass(frozen=True)
class GaussianComponent:
    mean: Tuple[float, ...]
    cov: Tuple[Tuple[float, ...], ...]
    count: int


@dataclass(frozen=True)
class GaussianMixtureSpec:
    components: Tuple[GaussianComponent, ...]


@dataclass(frozen=True, eq=False)
class NoisyCentroidSpec:
    centroids: np.ndarray
    per_center_count: int
    noise_sigma: float = 0.25


# Four 2-D clusters of 1000 points each; EM from PAPER_2D_INIT stalls at a
# local minimum with two centers inside the lower-left cluster.
PAPER_2D_GAUSSIAN = GaussianMixtureSpec((
    GaussianComponent((-5.0, -3.0), ((0.8, 0.1), (0.1, 0.8)), 1000),
    GaussianComponent((5.0, -3.0), ((1.2, 0.6), (0.6, 0.7)), 1000),
    GaussianComponent((0.0, 5.0), ((0.5, 0.05), (0.05, 1.6)), 1000),
    GaussianComponent((2.5, 4.0), ((1.5, 0.05), (0.05, 0.6)), 1000),
))

PAPER_2D_INIT = np.array([
    [-5.5989, -2.7090],
    [-4.4572, -4.0614],
    [-0.1082, 5.2889],
    [2.3485, 3.5286],
])


def _cov_factor(cov: np.ndarray) -> np.ndarray:
    cov = np.asarray(cov, dtype=np.float64)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise ContractError("covariance must be square")
    if not np.allclose(cov, cov.T, rtol=0, atol=1e-12):
        raise ContractError("covariance must be symmetric")
    w, v = np.linalg.eigh(cov)
    scale = max(1.0, float(np.abs(w).max()))
    if w.min() < -1e-12 * scale:
        raise ContractError(f"covariance is not positive semidefinite (eigenvalue {w.min():.3g})")
    return v * np.sqrt(np.clip(w, 0, None))


def generate_gaussian(spec: GaussianMixtureSpec, rng: RngStream) -> Dataset:
    """Draw each component's points as ``mean + F z`` with ``F F^T = cov``."""
    blocks, labels = [], []
    factors = []
    for comp in spec.components:
        if comp.count < 1:
            raise ContractError("component counts must be >= 1")
        mean = np.asarray(comp.mean, dtype=np.float64)
        f = _cov_factor(comp.cov)
        if f.shape[0] != mean.shape[0]:
            raise ContractError("mean and covariance dimensions differ")
        factors.append((mean, f, comp.count))
    for j, (mean, f, count) in enumerate(factors):
        z = rng.generator.standard_normal((count, mean.shape[0]))
        blocks.append(mean + z @ f.T)
        labels.append(np.full(count, j))
    return Dataset(np.vstack(blocks), labels=np.concatenate(labels), source="synthetic")


def generate_noisy_centroids(spec: NoisyCentroidSpec, rng: RngStream) -> Dataset:
    """``per_center_count`` copies of every base point plus isotropic noise.

    Values are not clipped, so pixel-valued bases may leave [0, 1].
    """
    base = np.asarray(spec.centroids, dtype=np.float64)
    if base.ndim != 2 or spec.per_center_count < 1 or spec.noise_sigma < 0:
        raise ContractError("invalid noisy-centroid spec")
    k, d = base.shape
    pts = np.repeat(base, spec.per_center_count, axis=0)
    pts += spec.noise_sigma * rng.generator.standard_normal((k * spec.per_center_count, d))
    return Dataset(pts, labels=np.repeat(np.arange(k), spec.per_center_count), source="synthetic")


def standin_digit_bases(k: int = 8, rng: Optional[RngStream] = None, side: int = 28) -> np.ndarray:
    """Synthetic 28x28 "digit-like" base images in [0, 1], one per row.

    Each image is two to four thick random strokes with soft edges. Used
    when no MNIST images are available locally.
    """
    rng = rng if rng is not None else RngStream(2017, 0)
    g = rng.generator
    yy, xx = np.mgrid[0:side, 0:side] + 0.5
    out = np.zeros((k, side * side))
    for b in range(k):
        img = np.zeros((side, side))
        for _ in range(g.integers(2, 5)):
            p0 = g.uniform(5, side - 5, 2)
            p1 = g.uniform(5, side - 5, 2)
            seg = p1 - p0
            t = ((xx - p0[0]) * seg[0] + (yy - p0[1]) * seg[1]) / max(seg @ seg, 1e-9)
            t = np.clip(t, 0, 1)
            dist = np.hypot(xx - p0[0] - t * seg[0], yy - p0[1] - t * seg[1])
            img = np.maximum(img, np.clip(2.0 - dist, 0, 1))
        out[b] = img.ravel()
    return out


# ------------------------------------------------------------------- CSV

def load_csv(path, has_header: bool = False, label_column: Optional[int] = None) -> Dataset:
    """Read a comma-separated numeric file, one point per row.

    ``label_column`` (0-based, negative allowed) is stripped off into
    ``Dataset.labels`` and may hold any numeric code.
    """
    with open(path, newline="") as fh:
        text = fh.read()
    rows: List[List[float]] = []
    labels: List[float] = []
    width = None
    for lineno, row in enumerate(csv.reader(io.StringIO(text)), start=1):
        if has_header and lineno == 1:
            continue
        if not row or all(not cell.strip() for cell in row):
            continue
        if width is None:
            width = len(row)
            if label_column is not None and not -width <= label_column < width:
                raise DataFormatError(f"label column {label_column} out of range for {width} columns", line=lineno)
        elif len(row) != width:
            raise DataFormatError(f"expected {width} columns, found {len(row)}", line=lineno)
        try:
            vals = [float(cell) for cell in row]
        except ValueError as exc:
            raise DataFormatError(f"non-numeric cell ({exc})", line=lineno) from None
        if not all(np.isfinite(vals)):
            raise DataFormatError("non-finite value", line=lineno)
        if label_column is not None:
            labels.append(vals.pop(label_column))
            if not vals:
                raise DataFormatError("no feature columns left after removing the label", line=lineno)
        rows.append(vals)
    if not rows:
        raise DataFormatError("file contains no data rows")
    lab = np.asarray(labels) if label_column is not None else None
    return Dataset(np.asarray(rows, dtype=np.float64), labels=lab, source="csv")


def format_rows(matrix: np.ndarray, header: Optional[Sequence[str]] = None) -> str:
    """Shortest round-trip decimal text for a 2-D float array."""
    lines = [",".join(header)] if header else []
    for row in np.asarray(matrix, dtype=np.float64):
        lines.append(",".join(repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"


def save_csv(path, matrix: np.ndarray, header: Optional[Sequence[str]] = None) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(format_rows(matrix, header))


# ------------------------------------------------------------------- IDX

def _read_header(buf: bytes, magic: int, ndims: int):
    need = 4 + 4 * ndims
    if len(buf) < 4:
        raise DataFormatError("file shorter than the 4-byte magic number", offset=0)
    (got,) = struct.unpack(">I", buf[:4])
    if got != magic:
        raise DataFormatError(f"bad magic 0x{got:08x}, expected 0x{magic:08x}", offset=0)
    if len(buf) < need:
        raise DataFormatError("truncated header", offset=len(buf))
    return struct.unpack(">" + "I" * ndims, buf[4:need]), need


def load_idx(images_path) -> Dataset:
    """Read an IDX3 unsigned-byte image file; pixels are scaled by 1/255."""
    with open(images_path, "rb") as fh:
        buf = fh.read()
    (n, r, c), off = _read_header(buf, IDX_IMAGES_MAGIC, 3)
    size = n * r * c
    if len(buf) < off + size:
        raise DataFormatError(f"truncated payload: need {size} pixel bytes, have {len(buf) - off}",
                              offset=len(buf))
    pix = np.frombuffer(buf, dtype=np.uint8, count=size, offset=off)
    return Dataset(pix.reshape(n, r * c).astype(np.float64) / 255.0, source="idx")


def load_idx_labels(labels_path) -> np.ndarray:
    with open(labels_path, "rb") as fh:
        buf = fh.read()
    (n,), off = _read_header(buf, IDX_LABELS_MAGIC, 1)
    if len(buf) < off + n:
        raise DataFormatError(f"truncated payload: need {n} label bytes", offset=len(buf))
    return np.frombuffer(buf, dtype=np.uint8, count=n, offset=off).copy()


def write_idx_images(path, images: np.ndarray) -> None:
    """Write a uint8 array of shape (N, rows, cols) as IDX3."""
    images = np.asarray(images, dtype=np.uint8)
    n, r, c = images.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, n, r, c))
        fh.write(images.tobytes())


def write_idx_labels(path, labels: np.ndarray) -> None:
    labels = np.asarray(labels, dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABELS_MAGIC, labels.shape[0]))
        fh.write(labels.tobytes())


def load_any(path, has_header: bool = False, label_column: Optional[int] = None) -> Dataset:
    """Dispatch on the leading bytes: IDX3 magic, otherwise CSV."""
    with open(path, "rb") as fh:
        head = fh.read(4)
    if len(head) == 4 and struct.unpack(">I", head)[0] == IDX_IMAGES_MAGIC:
        return load_idx(path)
    return load_csv(path, has_header=has_header, label_column=label_column)


def fingerprint(data: Dataset) -> str:
    """64-bit BLAKE2b digest of the point matrix, as 16 hex digits."""
    h = hashlib.blake2b(digest_size=8)
    h.update(struct.pack("<QQ", data.n, data.dim))
    h.update(data.points.tobytes())
    return h.hexdigest()


# ---------------------------------------------------------------- presets

PRESETS = ("paper-sec3.1-gaussian", "paper-sec3.3-noisy-mnist")


def preset(name: str, rng: RngStream, bases: Optional[np.ndarray] = None,
           sigma: float = 0.25, per_center: int = 7500) -> Dataset:
    """Build a named dataset.

    ``paper-sec3.3-noisy-mnist`` uses ``bases`` (K x 784) when given and
    synthetic stand-in digits otherwise.
    """
    if name == "paper-sec3.1-gaussian":
        return generate_gaussian(PAPER_2D_GAUSSIAN, rng)
    if name == "paper-sec3.3-noisy-mnist":
        if bases is None:
            bases = standin_digit_bases(8, RngStream(rng.seed, 2**63))
        return generate_noisy_centroids(NoisyCentroidSpec(bases, per_center, sigma), rng)
    raise ContractError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}")
