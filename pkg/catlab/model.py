"""
LSA-E model: linear self-attention over a linearly embedded ICL input.

Parameters are kept as blocks so the structured initialization (zero off-diagonal
blocks) is exact. All prediction functions accept a single task or a batch.
"""

import dataclasses
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Optional

import numpy as np

from catlab.errors import DimensionError, PreconditionError
from catlab.mathcore import as_matrix
from catlab.records import read_blocks, write_blocks
from catlab.tasks import IclInput, TaskSample

BLOCK_NAMES = ("we", "kq11", "kq12", "kq21", "kq22", "v11", "v12", "v21", "v22")


@dataclass(frozen=True)
class LsaeParams:
    """Block-structured parameters (W^E, W^KQ, W^V).

    W^KQ = [[kq11, kq12], [kq21^T, kq22]] and W^V = [[v11, v12], [v21^T, v22]].
    """
    we: np.ndarray
    kq11: np.ndarray
    kq12: np.ndarray
    kq21: np.ndarray
    kq22: float
    v11: np.ndarray
    v12: np.ndarray
    v21: np.ndarray
    v22: float

    def __post_init__(self):
        d, d0 = as_matrix(self.we, "we").shape
        shapes = {
            "we": (d, d0),
            "kq11": (d, d),
            "kq12": (d,),
            "kq21": (d,),
            "kq22": (),
            "v11": (d, d),
            "v12": (d,),
            "v21": (d,),
            "v22": (),
        }
        for name, shape in shapes.items():
            arr = np.array(getattr(self, name), dtype=float)
            if arr.shape != shape:
                raise DimensionError(f"{name} has shape {arr.shape}, expected {shape}")
            if shape:
                arr.setflags(write=False)
                object.__setattr__(self, name, arr)
            else:
                object.__setattr__(self, name, float(arr))

    @classmethod
    def zeros(cls, d: int, d0: int) -> "LsaeParams":
        return cls(
            we=np.zeros((d, d0)),
            kq11=np.zeros((d, d)),
            kq12=np.zeros(d),
            kq21=np.zeros(d),
            kq22=0.0,
            v11=np.zeros((d, d)),
            v12=np.zeros(d),
            v21=np.zeros(d),
            v22=0.0,
        )

    @property
    def d(self) -> int:
        return self.we.shape[0]

    @property
    def d0(self) -> int:
        return self.we.shape[1]

    def replace(self, **changes) -> "LsaeParams":
        return dataclasses.replace(self, **changes)

    def wkq(self) -> np.ndarray:
        """Full (d+1) x (d+1) key-query matrix."""
        top = np.column_stack([self.kq11, self.kq12])
        return np.vstack([top, np.append(self.kq21, self.kq22)])

    def wv(self) -> np.ndarray:
        """Full (d+1) x (d+1) value matrix."""
        top = np.column_stack([self.v11, self.v12])
        return np.vstack([top, np.append(self.v21, self.v22)])

    def value_row(self) -> np.ndarray:
        """(v21^T, v22), the only row of W^V reaching the prediction."""
        return np.append(self.v21, self.v22)

    def blocks(self) -> list[tuple[str, np.ndarray]]:
        return [(name, np.asarray(getattr(self, name))) for name in BLOCK_NAMES]


@dataclass(frozen=True)
class EmbeddedInput:
    """The (d+1) x (N+1) embedded matrix E(Z)."""
    e: np.ndarray

    @property
    def top(self) -> np.ndarray:
        return self.e[:-1]

    @property
    def labels(self) -> np.ndarray:
        return self.e[-1]


class PerturbationSpace(str, Enum):
    EMBEDDING = "embedding"
    SUFFIX = "input-suffix"


@dataclass(frozen=True)
class Perturbation:
    """Column-bounded perturbation, d x N in embedding space or d0 x M on the input suffix.

    ``loss`` holds the attacked squared error when the perturbation comes from PGD.
    """
    delta: np.ndarray
    radius: float
    space: PerturbationSpace
    loss: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.radius < 0:
            raise ValueError(f"radius must be nonnegative, got {self.radius}")
        delta = np.asarray(self.delta, dtype=float)
        if delta.ndim < 2:
            raise DimensionError(f"delta must be at least 2-D, got shape {delta.shape}")
        if delta.size:
            worst = float(np.linalg.norm(delta, axis=-2).max())
            if worst > self.radius * (1.0 + 1e-9):
                raise PreconditionError(
                    f"perturbation column norm {worst:.6g} exceeds radius {self.radius:.6g}"
                )
        object.__setattr__(self, "delta", delta)

    @property
    def m(self) -> int:
        return self.delta.shape[-1]

    @classmethod
    def zeros(cls, shape: tuple, radius: float, space: PerturbationSpace) -> "Perturbation":
        return cls(delta=np.zeros(shape), radius=radius, space=space)


def _check_task(p: LsaeParams, s: TaskSample) -> None:
    if s.d0 != p.d0:
        raise DimensionError(f"task has d0={s.d0}, parameters expect d0={p.d0}")


def embed(p: LsaeParams, z: IclInput) -> EmbeddedInput:
    """E(Z) = [[W^E X, W^E xq], [Y, 0]]."""
    if z.d0 != p.d0:
        raise DimensionError(f"ICL input has d0={z.d0}, parameters expect d0={p.d0}")
    return EmbeddedInput(e=np.vstack([p.we @ z.z[:-1], z.z[-1:]]))


def forward_full(p: LsaeParams, z: IclInput) -> np.ndarray:
    """E + W^V E (E^T W^KQ E) / N."""
    e = embed(p, z).e
    return e + p.wv() @ e @ (e.T @ p.wkq() @ e) / z.n


def embedded_matrix(p: LsaeParams, s: TaskSample, delta: Optional[np.ndarray] = None) -> np.ndarray:
    """E(Z) for a task or batch, with ``delta`` added to the context embeddings."""
    _check_task(p, s)
    top = np.einsum("ij,...jn->...in", p.we, s.x)
    if delta is not None:
        top = top + delta
    u = s.xq @ p.we.T
    top = np.concatenate([top, u[..., :, None]], axis=-1)
    labels = np.concatenate([s.y, np.zeros(s.batch_shape + (1,))], axis=-1)
    return np.concatenate([top, labels[..., None, :]], axis=-2)


def query_key(p: LsaeParams, s: TaskSample) -> np.ndarray:
    """W^KQ applied to the embedded query column, (kq11 W^E xq; kq21^T W^E xq)."""
    u = s.xq @ p.we.T
    return np.concatenate([u @ p.kq11.T, (u @ p.kq21)[..., None]], axis=-1)


def bilinear_prediction(p: LsaeParams, e: np.ndarray, k: np.ndarray) -> np.ndarray:
    """(v21^T, v22) (E E^T / N) k."""
    n = e.shape[-1] - 1
    left = np.einsum("i,...in->...n", p.value_row(), e)
    right = np.einsum("...in,...i->...n", e, k)
    return np.sum(left * right, axis=-1) / n


def bilinear_grad(p: LsaeParams, e: np.ndarray, k: np.ndarray) -> np.ndarray:
    """Derivative of :func:`bilinear_prediction` with respect to E at fixed k."""
    n = e.shape[-1] - 1
    v = p.value_row()
    left = np.einsum("i,...in->...n", v, e)
    right = np.einsum("...in,...i->...n", e, k)
    return (v[:, None] * right[..., None, :] + k[..., :, None] * left[..., None, :]) / n


def predict(p: LsaeParams, s: TaskSample) -> np.ndarray:
    """Clean prediction y_hat for a task or batch."""
    return bilinear_prediction(p, embedded_matrix(p, s), query_key(p, s))


def predict_adv_embedding(p: LsaeParams, s: TaskSample, pert: Perturbation) -> np.ndarray:
    """Prediction with the context embeddings shifted by an embedding-space perturbation."""
    if pert.space != PerturbationSpace.EMBEDDING:
        raise ValueError(f"expected an embedding perturbation, got {pert.space.value}")
    expected = (p.d, s.n)
    if pert.delta.shape[-2:] != expected:
        raise DimensionError(f"delta has shape {pert.delta.shape[-2:]}, expected {expected}")
    return bilinear_prediction(p, embedded_matrix(p, s, pert.delta), query_key(p, s))


def suffix_context(s: TaskSample, delta: np.ndarray) -> TaskSample:
    """Shift the last M context points by ``delta`` (d0 x M); labels stay frozen."""
    m = delta.shape[-1]
    if delta.shape[-2] != s.d0:
        raise DimensionError(f"suffix delta has {delta.shape[-2]} rows, expected d0={s.d0}")
    if m > s.n:
        raise DimensionError(f"suffix length {m} exceeds context length {s.n}")
    if m == 0:
        return s
    x = s.x.copy()
    x[..., s.n - m :] += delta
    return s.with_context(x)


def predict_suffix_perturbed(p: LsaeParams, s: TaskSample, pert: Perturbation) -> np.ndarray:
    """Prediction on Z with its last M context points perturbed in input space."""
    if pert.space != PerturbationSpace.SUFFIX:
        raise ValueError(f"expected an input-suffix perturbation, got {pert.space.value}")
    return predict(p, suffix_context(s, pert.delta))


def squared_error(prediction, target) -> np.ndarray:
    return 0.5 * (np.asarray(prediction) - np.asarray(target)) ** 2


def save_params(p: LsaeParams, path: Path, deterministic: bool = True) -> Path:
    return write_blocks(path, p.blocks(), deterministic)


def load_params(path: Path) -> LsaeParams:
    """Read parameters written by :func:`save_params`."""
    blocks = read_blocks(path)
    missing = [name for name in BLOCK_NAMES if name not in blocks]
    if missing:
        raise ValueError(f"{path}: missing parameter blocks {', '.join(missing)}")
    values = {}
    for name in BLOCK_NAMES:
        arr = blocks[name]
        if name in ("kq22", "v22"):
            values[name] = float(arr[0, 0])
        elif name in ("kq12", "kq21", "v12", "v21"):
            values[name] = arr[:, 0]
        else:
            values[name] = arr
    return LsaeParams(**values)
