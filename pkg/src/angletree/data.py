"""Datasets: synthetic generators matching low intrinsic dimension test beds, and file I/O.

Binary layout (little-endian)::

    b"ATDS"  u32 version=1  u32 N  u32 D  N*D float64 row-major

CSV layout: one point per line, comma separated, optional first line
``# D=<int>``.
"""
from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

DATASET_MAGIC = b"ATDS"
DATASET_VERSION = 1
_HEADER = struct.Struct("<4sIII")


class DatasetFormatError(ValueError):
    """Malformed dataset file."""


@dataclass(frozen=True)
class Dataset:
    points: np.ndarray
    name: str = "dataset"
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64, copy=True)
        if pts.ndim != 2:
            raise ValueError(f"points must be an N x D matrix, got shape {pts.shape}")
        if pts.shape[0] < 1 or pts.shape[1] < 1:
            raise ValueError("dataset must have N >= 1 and D >= 1")
        if not np.all(np.isfinite(pts)):
            raise ValueError("dataset contains non-finite coordinates")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.n


@dataclass
class DatasetSpec:
    kind: str
    n: int
    ambient_dim: int | None = None
    intrinsic_dim: int | None = None
    noise_sigma: float = 0.0
    epsilon: float = 0.0
    alpha: float = math.pi / 2
    seed: int = 0
    path: str | None = None


def random_orthonormal(dim_out: int, dim_in: int, rng: np.random.Generator) -> np.ndarray:
    """A ``dim_out x dim_in`` matrix with orthonormal columns."""
    if dim_in > dim_out:
        raise ValueError(f"cannot embed {dim_in} dimensions into {dim_out}")
    g = rng.standard_normal((dim_out, dim_in))
    q, r = np.linalg.qr(g)
    # fix column signs so the map is a deterministic function of the draw
    return q * np.sign(np.diag(r))


def uniform_ball(n: int, dim: int, radius: float, rng: np.random.Generator) -> np.ndarray:
    """Uniform samples in a ``dim``-ball: Gaussian direction, radius ~ U^(1/dim)."""
    if dim == 0:
        return np.zeros((n, 0))
    g = rng.standard_normal((n, dim))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    r = radius * rng.random(n) ** (1.0 / dim)
    return g * r[:, None]


def gen_sphere(n: int, d: int, D: int, noise_sigma: float = 0.0, seed: int = 0) -> Dataset:
    """Points uniform on the unit ``d``-sphere (in R^{d+1}), rotated into R^D."""
    if d < 1 or d + 1 > D:
        raise ValueError(f"sphere of intrinsic dimension {d} needs D >= {d + 1}, got {D}")
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, d + 1))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    basis = random_orthonormal(D, d + 1, rng)
    pts = x @ basis.T
    if noise_sigma > 0:
        pts = pts + noise_sigma * rng.standard_normal(pts.shape)
    return Dataset(pts, name=f"sphere{d}d_in{D}", meta={"kind": "sphere", "intrinsic_dim": d, "basis": basis, "seed": seed})


def gen_affine_flat(n: int, d: int, D: int, noise_sigma: float = 0.0, seed: int = 0) -> Dataset:
    """Uniform points in ``[-1, 1]^d`` mapped onto a random affine d-flat of R^D.

    ``meta["basis"]`` (D x d, orthonormal columns) and ``meta["offset"]``
    describe the flat exactly.
    """
    if d < 1 or d > D:
        raise ValueError(f"need 1 <= d <= D, got d={d}, D={D}")
    rng = np.random.default_rng(seed)
    u = rng.uniform(-1.0, 1.0, size=(n, d))
    basis = random_orthonormal(D, d, rng)
    offset = rng.standard_normal(D)
    pts = u @ basis.T + offset
    if noise_sigma > 0:
        pts = pts + noise_sigma * rng.standard_normal(pts.shape)
    return Dataset(pts, name=f"flat{d}d_in{D}", meta={"kind": "affine_flat", "intrinsic_dim": d, "basis": basis, "offset": offset, "seed": seed})


def gen_sin3d(n: int, seed: int = 0) -> Dataset:
    """Reconstructed 2-d surface ``(x, y, sin x + cos y)`` over ``[0, 2pi]^2``."""
    rng = np.random.default_rng(seed)
    xy = rng.uniform(0.0, 2 * math.pi, size=(n, 2))
    z = np.sin(xy[:, 0]) + np.cos(xy[:, 1])
    return Dataset(np.column_stack([xy, z]), name="sin3d", meta={"kind": "sin3d", "intrinsic_dim": 2, "reconstruction": True, "seed": seed})


def hypercylinder_radii(d: int, D: int, epsilon: float) -> tuple[float, float]:
    """Radii ``(a, b)`` of the in-plane ball and the noise ball."""
    if not 1 <= d < D:
        raise ValueError(f"need 1 <= d < D, got d={d}, D={D}")
    return math.sqrt(3.0 / d), math.sqrt(3.0 * epsilon / (D - d))


def gen_hypercylinder(params, n: int, seed: int = 0, model: str = "ball") -> Dataset:
    """Points uniform in the hypercylinder (d-ball of radius a) x ((D-d)-ball of radius b).

    ``model="box"`` instead draws every coordinate uniformly on ``[-a, a]``
    resp. ``[-b, b]``, the distribution under which the radii give an
    average in-plane squared distance of exactly 1.
    """
    d, D = params.intrinsic_dim, params.ambient_dim
    a, b = hypercylinder_radii(d, D, params.epsilon)
    rng = np.random.default_rng(seed)
    if model == "ball":
        u = uniform_ball(n, d, a, rng)
        w = uniform_ball(n, D - d, b, rng) if b > 0 else np.zeros((n, D - d))
    elif model == "box":
        u = rng.uniform(-a, a, size=(n, d))
        w = rng.uniform(-b, b, size=(n, D - d)) if b > 0 else np.zeros((n, D - d))
    else:
        raise ValueError(f"unknown model {model!r}")
    return Dataset(np.hstack([u, w]), name=f"hypercyl{d}d_in{D}", meta={"kind": "hypercylinder", "intrinsic_dim": d, "a": a, "b": b, "model": model, "seed": seed})


def generate(spec: DatasetSpec) -> Dataset:
    kind = spec.kind
    if kind == "sphere":
        return gen_sphere(spec.n, spec.intrinsic_dim, spec.ambient_dim, spec.noise_sigma, spec.seed)
    if kind in ("affine_flat", "flat"):
        return gen_affine_flat(spec.n, spec.intrinsic_dim, spec.ambient_dim, spec.noise_sigma, spec.seed)
    if kind == "sin3d":
        return gen_sin3d(spec.n, spec.seed)
    if kind == "hypercylinder":
        from .analysis import GeometryParams

        params = GeometryParams(spec.ambient_dim, spec.intrinsic_dim, spec.epsilon, spec.alpha)
        return gen_hypercylinder(params, spec.n, spec.seed)
    if kind == "file":
        return load_dataset(spec.path)
    raise ValueError(f"unknown dataset kind {kind!r}")


def _infer_format(path, fmt):
    if fmt is not None:
        return fmt
    return "csv" if str(path).lower().endswith(".csv") else "bin"


def save_dataset(data: Dataset, path, fmt: str | None = None) -> None:
    fmt = _infer_format(path, fmt)
    pts = data.points
    if fmt == "bin":
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(DATASET_MAGIC, DATASET_VERSION, pts.shape[0], pts.shape[1]))
            fh.write(np.ascontiguousarray(pts, dtype="<f8").tobytes())
    elif fmt == "csv":
        with open(path, "w", newline="") as fh:
            fh.write(f"# D={pts.shape[1]}\n")
            writer = csv.writer(fh)
            for row in pts:
                writer.writerow([repr(float(x)) for x in row])
    else:
        raise ValueError(f"unknown format {fmt!r}")


def load_dataset(path, fmt: str | None = None) -> Dataset:
    fmt = _infer_format(path, fmt)
    name = Path(path).stem
    if fmt == "bin":
        return Dataset(_load_bin(path), name=name)
    if fmt == "csv":
        return Dataset(_load_csv(path), name=name)
    raise ValueError(f"unknown format {fmt!r}")


def _load_bin(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise DatasetFormatError(f"{path}: file too short for header ({len(raw)} bytes)")
    magic, version, n, dim = _HEADER.unpack_from(raw)
    if magic != DATASET_MAGIC:
        raise DatasetFormatError(f"{path}: bad magic {magic!r}")
    if version != DATASET_VERSION:
        raise DatasetFormatError(f"{path}: unsupported version {version}")
    if n < 1 or dim < 1:
        raise DatasetFormatError(f"{path}: empty dataset (N={n}, D={dim})")
    expected = _HEADER.size + 8 * n * dim
    if len(raw) != expected:
        raise DatasetFormatError(f"{path}: expected {expected} bytes for N={n}, D={dim}, got {len(raw)}")
    pts = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).reshape(n, dim).astype(np.float64)
    bad = np.argwhere(~np.isfinite(pts))
    if bad.size:
        r, c = bad[0]
        raise DatasetFormatError(f"{path}: non-finite value at row {r}, column {c}")
    return pts


def _load_csv(path) -> np.ndarray:
    rows = []
    dim = None
    with open(path, newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped:
                continue
            if stripped.startswith("#"):
                if lineno != 1 or rows:
                    raise DatasetFormatError(f"{path}: line {lineno}: header only allowed on the first line")
                body = stripped[1:].strip()
                if not body.startswith("D="):
                    raise DatasetFormatError(f"{path}: line {lineno}: malformed header {stripped!r}")
                try:
                    dim = int(body[2:])
                except ValueError:
                    raise DatasetFormatError(f"{path}: line {lineno}: malformed header {stripped!r}") from None
                if dim < 1:
                    raise DatasetFormatError(f"{path}: line {lineno}: D must be positive")
                continue
            fields = next(csv.reader([stripped]))
            if dim is None:
                dim = len(fields)
            if len(fields) != dim:
                raise DatasetFormatError(f"{path}: row {len(rows)} (line {lineno}): expected {dim} columns, got {len(fields)}")
            row = []
            for col, tok in enumerate(fields):
                try:
                    x = float(tok)
                except ValueError:
                    raise DatasetFormatError(f"{path}: row {len(rows)} (line {lineno}), column {col}: cannot parse {tok!r}") from None
                if not math.isfinite(x):
                    raise DatasetFormatError(f"{path}: row {len(rows)} (line {lineno}), column {col}: non-finite value {tok!r}")
                row.append(x)
            rows.append(row)
    if not rows:
        raise DatasetFormatError(f"{path}: no data rows")
    return np.array(rows, dtype=np.float64)
