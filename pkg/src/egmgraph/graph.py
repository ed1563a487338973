"""Electrode-grid graph, Laplacian and graph Fourier basis."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import EmptyGraphError, InvalidParameterError

_NEIGHBOUR_OFFSETS = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ElectrodeGraph:
    """Weighted undirected graph over the active electrodes of a rectangular array.

    Vertex ``k`` of the graph is the ``k``-th active electrode in row-major
    grid order; ``active_index[k]`` gives its position in the full grid.
    """

    rows: int
    cols: int
    pitch_mm: float
    inactive: tuple[int, ...]
    active_index: np.ndarray
    positions: np.ndarray
    weights: np.ndarray

    def __post_init__(self) -> None:
        for name in ("active_index", "positions", "weights"):
            object.__setattr__(self, name, _readonly(getattr(self, name)))

    @property
    def vertex_count(self) -> int:
        return int(self.active_index.size)

    @property
    def active_mask(self) -> np.ndarray:
        mask = np.zeros(self.rows * self.cols, dtype=bool)
        mask[self.active_index] = True
        return mask

    @property
    def degree(self) -> np.ndarray:
        return self.weights.sum(axis=1)

    def edges(self) -> list[tuple[int, int, float]]:
        """Edge list ``(i, j, w)`` with ``i < j`` in active-vertex indices."""
        i, j = np.nonzero(np.triu(self.weights, k=1))
        return [(int(a), int(b), float(self.weights[a, b])) for a, b in zip(i, j)]

    @property
    def edge_count(self) -> int:
        return int(np.count_nonzero(np.triu(self.weights, k=1)))

    def to_dict(self) -> dict:
        return {
            "rows": self.rows,
            "cols": self.cols,
            "pitch_mm": self.pitch_mm,
            "inactive": list(self.inactive),
            "weights": [[i, j, w] for i, j, w in self.edges()],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ElectrodeGraph":
        g = build_grid_graph(int(doc["rows"]), int(doc["cols"]), float(doc["pitch_mm"]),
                             doc.get("inactive", ()))
        if "weights" not in doc:
            return g
        K = g.vertex_count
        W = np.zeros((K, K))
        for i, j, w in doc["weights"]:
            i, j = int(i), int(j)
            if not (0 <= i < K and 0 <= j < K) or i == j or w < 0:
                raise InvalidParameterError(f"invalid weight triplet ({i}, {j}, {w})")
            W[i, j] = W[j, i] = float(w)
        return cls(g.rows, g.cols, g.pitch_mm, g.inactive, g.active_index, g.positions, W)


@dataclass(frozen=True, eq=False)
class LaplacianSpectrum:
    """Orthonormal eigenvectors (columns of ``U``) and ascending eigenvalues."""

    U: np.ndarray
    lambdas: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "U", _readonly(self.U))
        object.__setattr__(self, "lambdas", _readonly(self.lambdas))

    @property
    def size(self) -> int:
        return int(self.lambdas.size)

    def mode(self, k: int) -> np.ndarray:
        return self.U[:, k]


def build_grid_graph(rows: int, cols: int, pitch_mm: float = 2.0,
                     inactive: Iterable[int] = ()) -> ElectrodeGraph:
    """Connect every active electrode to its active 8-neighbours.

    Weights are ``alpha / d`` with ``alpha = pitch_mm``, so axis neighbours get
    weight 1 and diagonal neighbours ``1/sqrt(2)``.
    """
    if int(rows) != rows or int(cols) != cols or rows < 1 or cols < 1:
        raise InvalidParameterError(f"grid shape must be positive integers, got {rows}x{cols}")
    rows, cols = int(rows), int(cols)
    if not np.isfinite(pitch_mm) or pitch_mm <= 0:
        raise InvalidParameterError(f"pitch_mm must be positive, got {pitch_mm}")
    n = rows * cols
    dead = sorted({int(i) for i in inactive})
    if any(i < 0 or i >= n for i in dead):
        raise InvalidParameterError(f"inactive indices must lie in [0, {n})")
    if len(dead) == n:
        raise EmptyGraphError("all vertices are inactive")

    mask = np.ones(n, dtype=bool)
    mask[dead] = False
    active = np.flatnonzero(mask)
    local = -np.ones(n, dtype=np.int64)
    local[active] = np.arange(active.size)

    r, c = np.divmod(active, cols)
    positions = np.column_stack([c * pitch_mm, r * pitch_mm]).astype(float)

    alpha = float(pitch_mm)
    W = np.zeros((active.size, active.size))
    for k, (ri, ci) in enumerate(zip(r, c)):
        for dr, dc in _NEIGHBOUR_OFFSETS:
            rr, cc = ri + dr, ci + dc
            if 0 <= rr < rows and 0 <= cc < cols:
                j = local[rr * cols + cc]
                if j >= 0:
                    d = pitch_mm * np.hypot(dr, dc)
                    W[k, j] = alpha / d
    return ElectrodeGraph(rows, cols, float(pitch_mm), tuple(dead), active, positions, W)


def laplacian(g: ElectrodeGraph) -> np.ndarray:
    """Combinatorial Laplacian ``D - W``."""
    return np.diag(g.degree) - g.weights


def _canonical_basis(Q: np.ndarray) -> np.ndarray:
    """Deterministic orthonormal basis of span(Q), independent of the input basis.

    Repeatedly projects the coordinate vector with the largest projection
    (ties broken by lowest vertex index) and deflates.
    """
    P = Q @ Q.T
    out = np.empty_like(Q)
    for m in range(Q.shape[1]):
        norms = np.sqrt(np.clip(np.diag(P), 0.0, None))
        i = int(np.flatnonzero(norms >= norms.max() - 1e-10)[0])
        v = P[:, i] / norms[i]
        out[:, m] = v
        P = P - np.outer(v, v)
    return out


def eigendecompose(L: np.ndarray) -> LaplacianSpectrum:
    """Eigendecomposition with a reproducible eigenvector choice.

    Degenerate eigenspaces are re-expressed in a basis that depends only on the
    subspace, and every eigenvector's first nonzero entry is made positive.
    """
    L = np.asarray(L, dtype=float)
    if L.ndim != 2 or L.shape[0] != L.shape[1]:
        raise InvalidParameterError(f"Laplacian must be square, got shape {L.shape}")
    scale = max(1.0, float(np.abs(L).max(initial=0.0)))
    if not np.allclose(L, L.T, rtol=0.0, atol=1e-12 * scale):
        raise InvalidParameterError("Laplacian must be symmetric")

    lam, U = np.linalg.eigh(L)
    lam = np.where(np.abs(lam) < 1e-12 * scale, 0.0, lam)
    lam = np.clip(lam, 0.0, None)

    tol = 1e-9 * max(1.0, float(lam[-1]))
    start = 0
    for k in range(1, lam.size + 1):
        if k == lam.size or lam[k] - lam[k - 1] > tol:
            if k - start > 1:
                U[:, start:k] = _canonical_basis(U[:, start:k])
            start = k

    for k in range(U.shape[1]):
        nz = np.flatnonzero(np.abs(U[:, k]) > 1e-9)
        if nz.size and U[nz[0], k] < 0:
            U[:, k] = -U[:, k]
    return LaplacianSpectrum(U, lam)


def graph_spectrum(g: ElectrodeGraph) -> LaplacianSpectrum:
    return eigendecompose(laplacian(g))
