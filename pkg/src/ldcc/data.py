"""Task containers, the on-disk task format, and the synthetic generator.

A task is a few-shot classification episode: C classes, each holding N_c
feature vectors of a shared dimension D.  Collections are stored as one
little-endian binary file per task plus a JSON manifest:

    magic 'LDCC' (4 bytes) | version u16 = 1 | C u32 | D u32
    then per class: N_c u32 | N_c * D float32, row-major

Feature blocks are kept as float32 in memory, mirroring the file format, so
save/load round-trips are bit-exact.  Numerical work elsewhere promotes to
float64 at the task boundary.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import TYPE_CHECKING, Iterable

import numpy as np

from .errors import DataError, FormatError
from .streams import task_stream

if TYPE_CHECKING:
    from .model import ThemeModel

_MAGIC = b"LDCC"
_VERSION = 1
_HEADER = struct.Struct("<4sHII")
_COUNT = struct.Struct("<I")


class Task:
    """One classification episode: per-class sample blocks of equal width."""

    def __init__(self, task_id: str, classes: Iterable[np.ndarray]):
        if not isinstance(task_id, str) or not task_id:
            raise DataError("task id must be a non-empty string")
        blocks = []
        for block in classes:
            arr = np.ascontiguousarray(block, dtype=np.float32)
            if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
                raise DataError(
                    f"task {task_id!r}: each class needs a non-empty 2-d sample block"
                )
            if not np.isfinite(arr).all():
                raise DataError(f"task {task_id!r}: sample values must be finite")
            blocks.append(arr)
        if not blocks:
            raise DataError(f"task {task_id!r}: at least one class required")
        widths = {b.shape[1] for b in blocks}
        if len(widths) != 1:
            raise DataError(f"task {task_id!r}: classes disagree on dimension {widths}")
        self.id = task_id
        self.classes = tuple(blocks)
        self._stacked = None

    @property
    def dimension(self) -> int:
        return self.classes[0].shape[1]

    @property
    def num_classes(self) -> int:
        return len(self.classes)

    @property
    def counts(self) -> tuple[int, ...]:
        return tuple(b.shape[0] for b in self.classes)

    @property
    def total_samples(self) -> int:
        return sum(self.counts)

    def stacked(self) -> tuple[np.ndarray, np.ndarray]:
        """All samples as one float64 (T, D) array plus class start offsets."""
        if self._stacked is None:
            x = np.concatenate(self.classes).astype(np.float64)
            offsets = np.concatenate([[0], np.cumsum(self.counts)])
            self._stacked = (x, offsets)
        return self._stacked

    def __eq__(self, other):
        return (
            isinstance(other, Task)
            and self.id == other.id
            and len(self.classes) == len(other.classes)
            and all(np.array_equal(a, b) for a, b in zip(self.classes, other.classes))
        )

    def __repr__(self):
        return f"Task(id={self.id!r}, C={self.num_classes}, D={self.dimension})"


class TaskCollection:
    """An ordered set of tasks sharing one feature dimension, with unique ids."""

    def __init__(self, tasks: Iterable[Task]):
        tasks = list(tasks)
        if not tasks:
            raise DataError("a task collection cannot be empty")
        dims = {t.dimension for t in tasks}
        if len(dims) != 1:
            raise DataError(f"tasks disagree on feature dimension: {sorted(dims)}")
        ids = [t.id for t in tasks]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise DataError(f"duplicate task ids: {dupes}")
        self.tasks = tasks
        self.dimension = tasks[0].dimension

    def __len__(self):
        return len(self.tasks)

    def __iter__(self):
        return iter(self.tasks)

    def __getitem__(self, index) -> Task:
        return self.tasks[index]

    @property
    def ids(self) -> list[str]:
        return [t.id for t in self.tasks]

    def __eq__(self, other):
        return (
            isinstance(other, TaskCollection)
            and len(self) == len(other)
            and all(a == b for a, b in zip(self.tasks, other.tasks))
        )


class LatentRecord:
    """Ground-truth latents emitted alongside synthetic tasks.

    phi: (M, L) task-theme mixtures; y: (M, C) class theme assignments;
    z: (M, C, N) per-sample image-theme assignments.
    """

    def __init__(self, phi, y, z):
        self.phi = np.asarray(phi, dtype=np.float64)
        self.y = np.asarray(y, dtype=np.int64)
        self.z = np.asarray(z, dtype=np.int64)
        if self.phi.ndim != 2 or self.y.ndim != 2 or self.z.ndim != 3:
            raise DataError("latent record arrays have wrong rank")
        if not (self.phi.shape[0] == self.y.shape[0] == self.z.shape[0]):
            raise DataError("latent record arrays disagree on task count")
        if self.y.shape[1] != self.z.shape[1]:
            raise DataError("latent record arrays disagree on class count")
        sums = self.phi.sum(axis=1)
        if (self.phi < 0).any() or not np.allclose(sums, 1.0, atol=1e-9):
            raise DataError("phi rows must lie on the simplex")

    @property
    def task_themes(self) -> np.ndarray:
        """Dominant task theme per task (argmax of phi)."""
        return self.phi.argmax(axis=1)

    def __eq__(self, other):
        return (
            isinstance(other, LatentRecord)
            and np.array_equal(self.phi, other.phi)
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.z, other.z)
        )


def _dirichlet(rng: np.random.Generator, concentration: np.ndarray) -> np.ndarray:
    # Normalized independent gamma draws.  With very small concentrations the
    # draws can all underflow to zero; redraw rather than emit NaN.
    for _ in range(100):
        g = rng.standard_gamma(concentration)
        s = g.sum()
        if s > 0:
            return g / s
    raise DataError("dirichlet sampling underflowed repeatedly; concentration too small")


def generate_synthetic(
    model: "ThemeModel", num_tasks: int, num_classes: int, shots: int, seed: int
) -> tuple[TaskCollection, LatentRecord]:
    """Sample tasks from the generative process.

    For each task: a task-theme mixture phi ~ Dir(delta); for each class a
    theme y ~ Cat(phi) and an image-theme mixture theta ~ Dir(alpha_y); for
    each of `shots` samples an image theme z ~ Cat(theta) and a feature
    vector x ~ N(mu_z, Sigma_z).

    Each task draws from its own counter-based stream keyed by (seed, task
    index), so generation is order-independent and parallelizable.
    """
    if num_tasks < 1 or num_classes < 1 or shots < 1:
        raise ValueError("num_tasks, num_classes, and shots must all be >= 1")
    L, K, D = model.L, model.K, model.D
    tasks = []
    phis = np.empty((num_tasks, L))
    ys = np.empty((num_tasks, num_classes), dtype=np.int64)
    zs = np.empty((num_tasks, num_classes, shots), dtype=np.int64)
    for d in range(num_tasks):
        rng = task_stream(seed, d)
        phi = _dirichlet(rng, model.delta)
        blocks = []
        for c in range(num_classes):
            y = int(rng.choice(L, p=phi))
            theta = _dirichlet(rng, model.alpha[y])
            z = rng.choice(K, size=shots, p=theta)
            eps = rng.standard_normal((shots, D))
            x = model.mu[z] + np.einsum("nij,nj->ni", model.chol_factors[z], eps)
            blocks.append(x)
            ys[d, c] = y
            zs[d, c] = z
        phis[d] = phi
        tasks.append(Task(f"task_{d:05d}", blocks))
    return TaskCollection(tasks), LatentRecord(phis, ys, zs)


def save_tasks(collection: TaskCollection, out_dir, manifest_name="manifest.json") -> Path:
    """Write one binary file per task plus a manifest; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for task in collection:
        filename = f"{task.id}.task"
        with open(out_dir / filename, "wb") as fh:
            fh.write(_HEADER.pack(_MAGIC, _VERSION, task.num_classes, task.dimension))
            for block in task.classes:
                fh.write(_COUNT.pack(block.shape[0]))
                fh.write(np.ascontiguousarray(block, dtype="<f4").tobytes())
        entries.append({"id": task.id, "path": filename})
    manifest_path = out_dir / manifest_name
    manifest = {"dimension": collection.dimension, "tasks": entries}
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return manifest_path


def _read_exact(fh, n, offset, what):
    buf = fh.read(n)
    if len(buf) != n:
        raise FormatError(f"truncated task file while reading {what}", offset)
    return buf


def load_task_file(path, task_id: str, expected_dim=None) -> Task:
    """Parse one binary task file, validating structure as it goes."""
    with open(path, "rb") as fh:
        header = _read_exact(fh, _HEADER.size, 0, "header")
        magic, version, num_classes, dim = _HEADER.unpack(header)
        if magic != _MAGIC:
            raise FormatError(f"bad magic {magic!r}, expected {_MAGIC!r}", 0)
        if version != _VERSION:
            raise FormatError(f"unsupported version {version}, expected {_VERSION}", 4)
        if num_classes < 1:
            raise FormatError("class count must be >= 1", 6)
        if dim < 1:
            raise FormatError("dimension must be >= 1", 10)
        if expected_dim is not None and dim != expected_dim:
            raise FormatError(
                f"dimension {dim} does not match manifest dimension {expected_dim}", 10
            )
        offset = _HEADER.size
        blocks = []
        for c in range(num_classes):
            raw = _read_exact(fh, _COUNT.size, offset, f"count of class {c}")
            (n_c,) = _COUNT.unpack(raw)
            offset += _COUNT.size
            if n_c < 1:
                raise FormatError(f"class {c} sample count must be >= 1", offset - 4)
            nbytes = 4 * n_c * dim
            raw = _read_exact(fh, nbytes, offset, f"samples of class {c}")
            block = np.frombuffer(raw, dtype="<f4").reshape(n_c, dim)
            if not np.isfinite(block).all():
                raise FormatError(f"non-finite value in class {c}", offset)
            offset += nbytes
            blocks.append(block)
        trailing = fh.read(1)
        if trailing:
            raise FormatError("trailing bytes after final class block", offset)
    return Task(task_id, blocks)


def load_tasks(manifest_path) -> TaskCollection:
    """Load a collection from its manifest."""
    manifest_path = Path(manifest_path)
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"manifest is not valid JSON: {exc}") from exc
    if (
        not isinstance(manifest, dict)
        or "dimension" not in manifest
        or "tasks" not in manifest
        or not isinstance(manifest["tasks"], list)
    ):
        raise FormatError("manifest must be an object with 'dimension' and 'tasks'")
    dim = manifest["dimension"]
    if not isinstance(dim, int) or dim < 1:
        raise FormatError(f"manifest dimension must be a positive integer, got {dim!r}")
    tasks = []
    for entry in manifest["tasks"]:
        if not isinstance(entry, dict) or "id" not in entry or "path" not in entry:
            raise FormatError(f"manifest task entries need 'id' and 'path': {entry!r}")
        path = manifest_path.parent / entry["path"]
        tasks.append(load_task_file(path, entry["id"], expected_dim=dim))
    return TaskCollection(tasks)


def save_latents(record: LatentRecord, path) -> None:
    payload = {
        "phi": record.phi.tolist(),
        "y": record.y.tolist(),
        "z": record.z.tolist(),
    }
    Path(path).write_text(json.dumps(payload) + "\n", encoding="utf-8")


def load_latents(path) -> LatentRecord:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"latent record is not valid JSON: {exc}") from exc
    for key in ("phi", "y", "z"):
        if key not in payload:
            raise FormatError(f"latent record missing field {key!r}")
    return LatentRecord(payload["phi"], payload["y"], payload["z"])
