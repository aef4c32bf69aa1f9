"""Graph Laplacians built from point clouds.

Three constructions, each L = scale * (D - W) with a family-specific kernel
and prefactor:

* dense Gaussian:  W_ij = exp(-|x_i - x_j|^2 / eps) / (n * eps^(1 + d/2)),
  scale 1, dense storage;
* neighborhood (epsilon) graph: edge iff |x_i - x_j| <= eps, weight
  eta(|x_i - x_j| / eps), scale c_eta / (n * eps^(d + 2)), sparse storage;
* symmetric k-NN: edge iff either endpoint is among the other's k nearest,
  weight eta(|x_i - x_j| / r_k) with r_k the larger of the two k-th
  neighbor distances, scale (c_eta / n) * (n * c_d / k)^(1 + 2/d).

c_eta is the second moment of the kernel profile, c_d the volume of the
d-dimensional unit ball.  Neighbor search is exact brute force; this module
targets desk scale (n <= 4096).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.integrate
import scipy.sparse
import scipy.sparse.csgraph

from .errors import ContractError

_KERNEL_KINDS = ("indicator", "truncated_linear")

#: volume of the unit ball in dimension d
UNIT_BALL_VOLUME = {1: 2.0, 2: math.pi}


@dataclass(frozen=True)
class KernelSpec:
    """Radial edge-weight profile eta on [0, 1].

    ``indicator`` is 1 on [0, 1]; ``truncated_linear`` is 1 on [0, 1/2] and
    falls linearly to 0 at 1, i.e. min(1, 2(1 - t)) clipped below at 0.
    Both are nonincreasing, supported on [0, 1], Lipschitz there, and
    positive at 1/2.
    """

    kind: str = "indicator"

    def __post_init__(self):
        if self.kind not in _KERNEL_KINDS:
            raise ContractError(f"unknown kernel kind {self.kind!r}")

    def __call__(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.kind == "indicator":
            return (t <= 1.0).astype(float)
        return np.clip(2.0 * (1.0 - t), 0.0, 1.0)


@dataclass
class GraphLaplacian:
    """Symmetric PSD operator scale * (D - W) with construction metadata."""

    matrix: object               # ndarray or scipy.sparse.csr_matrix
    family: str                  # dense_gaussian | epsilon | knn
    n: int
    scale: float
    params: dict = field(default_factory=dict)
    disconnected: bool = False

    @property
    def is_sparse(self) -> bool:
        return scipy.sparse.issparse(self.matrix)

    def toarray(self) -> np.ndarray:
        if self.is_sparse:
            return self.matrix.toarray()
        return np.asarray(self.matrix)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self.matrix @ x

    def adjacency(self):
        """Recover the weight matrix W from L = scale * (D - W)."""
        if self.is_sparse:
            A = (-self.matrix / self.scale).tolil()
            A.setdiag(0.0)
            return A.tocsr()
        A = -self.toarray() / self.scale
        np.fill_diagonal(A, 0.0)
        return A


def _points_of(cloud) -> np.ndarray:
    pts = getattr(cloud, "points", cloud)
    pts = np.asarray(pts, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    return pts


def _pairwise_distances(pts: np.ndarray) -> np.ndarray:
    sq = np.sum(pts**2, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (pts @ pts.T)
    np.maximum(d2, 0.0, out=d2)
    return np.sqrt(d2)


def laplacian_from_weights(W, scale: float = 1.0):
    """Assemble scale * (D - W) for a symmetric weight matrix (no loops)."""
    if scipy.sparse.issparse(W):
        deg = np.asarray(W.sum(axis=1)).ravel()
        return (scipy.sparse.diags(deg) - W).tocsr() * scale
    deg = W.sum(axis=1)
    return scale * (np.diag(deg) - W)


def kernel_constant(kernel: KernelSpec, d: int) -> float:
    """Second moment c_eta = int_{R^d} y_1^2 eta(|y|) dy.

    Closed form c_d / (d + 2) for the indicator; adaptive 1-D quadrature
    (relative tolerance 1e-10) for other profiles.
    """
    if d not in (1, 2):
        raise ContractError("kernel constant implemented for d in {1, 2}")
    if kernel.kind == "indicator":
        return UNIT_BALL_VOLUME[d] / (d + 2)
    if d == 1:
        integrand = lambda r: r * r * float(kernel(r))
        val, _ = scipy.integrate.quad(integrand, 0.0, 1.0, epsrel=1e-10, epsabs=0.0)
        return 2.0 * val
    integrand = lambda r: r**3 * float(kernel(r))
    val, _ = scipy.integrate.quad(integrand, 0.0, 1.0, epsrel=1e-10, epsabs=0.0)
    return math.pi * val


def bandwidth_schedule(family: str, n, d: int, c: float | None = None):
    """Bandwidth (eps) or neighbor count (k) as a function of n.

    dense: c * n^(-2/(d+6)); epsilon: c * (log n / n)^(1/(d+4));
    knn: round(c * (log n)^(d/(d+4)) * n^(4/(d+4))) clamped to [2, n-1].
    Default proportionality constants: 1.0 / 2.0 / 0.5.
    """
    if n < 2:
        raise ContractError("schedule requires n >= 2")
    if family in ("dense", "dense_gaussian"):
        c = 1.0 if c is None else c
        return c * float(n) ** (-2.0 / (d + 6))
    if family == "epsilon":
        c = 2.0 if c is None else c
        return c * (math.log(n) / n) ** (1.0 / (d + 4))
    if family == "knn":
        c = 0.5 if c is None else c
        k = round(c * math.log(n) ** (d / (d + 4)) * float(n) ** (4.0 / (d + 4)))
        return int(min(max(k, 2), int(n) - 1))
    raise ContractError(f"unknown graph family {family!r}")


def build_dense_gaussian(cloud, eps: float, d: int) -> GraphLaplacian:
    """Gaussian-kernel graph Laplacian D - W, dense storage."""
    pts = _points_of(cloud)
    n = pts.shape[0]
    if n < 2:
        raise ContractError("need at least two points")
    if eps <= 0:
        raise ContractError("eps must be positive")
    dist = _pairwise_distances(pts)
    W = np.exp(-(dist**2) / eps) / (n * eps ** (1.0 + d / 2.0))
    np.fill_diagonal(W, 0.0)
    return GraphLaplacian(matrix=laplacian_from_weights(W), family="dense_gaussian",
                          n=n, scale=1.0, params={"eps": eps, "d": d})


def _connected(adj: scipy.sparse.csr_matrix) -> bool:
    ncomp, _ = scipy.sparse.csgraph.connected_components(adj, directed=False)
    return ncomp == 1


def build_epsilon(cloud, eps: float, d: int,
                  kernel: KernelSpec = KernelSpec("indicator")) -> GraphLaplacian:
    """Neighborhood graph Laplacian (c_eta / (n eps^(d+2))) * (D - W)."""
    pts = _points_of(cloud)
    n = pts.shape[0]
    if n < 2:
        raise ContractError("need at least two points")
    if eps <= 0:
        raise ContractError("eps must be positive")
    dist = _pairwise_distances(pts)
    mask = dist <= eps
    np.fill_diagonal(mask, False)
    W = np.where(mask, kernel(dist / eps), 0.0)
    Ws = scipy.sparse.csr_matrix(W)
    scale = kernel_constant(kernel, d) / (n * eps ** (d + 2))
    return GraphLaplacian(matrix=laplacian_from_weights(Ws, scale), family="epsilon",
                          n=n, scale=scale,
                          params={"eps": eps, "d": d, "kernel": kernel.kind},
                          disconnected=not _connected(Ws))


def build_knn(cloud, k: int, d: int,
              kernel: KernelSpec = KernelSpec("indicator")) -> GraphLaplacian:
    """Symmetric k-NN graph Laplacian (c_eta/n) (n c_d / k)^(1+2/d) (D - W).

    Neighbor ties are broken by ascending point index, so the construction
    is deterministic.  Edge weights use r_k = max of the two endpoints'
    k-th neighbor distances; with the indicator kernel every edge weight
    is 1 because |x_i - x_j| <= r_k by construction.
    """
    pts = _points_of(cloud)
    n = pts.shape[0]
    if n < 2:
        raise ContractError("need at least two points")
    if not (1 <= k < n):
        raise ContractError("need 1 <= k < n")
    dist = _pairwise_distances(pts)
    np.fill_diagonal(dist, np.inf)
    # stable order: distance first, index as tiebreak
    order = np.lexsort((np.broadcast_to(np.arange(n), (n, n)), dist), axis=1)
    nearest = order[:, :k]
    eps_k = dist[np.arange(n)[:, None], nearest][:, -1]

    rows = np.repeat(np.arange(n), k)
    cols = nearest.ravel()
    directed = scipy.sparse.csr_matrix((np.ones(n * k), (rows, cols)), shape=(n, n))
    adj = directed.maximum(directed.T)
    adj_coo = adj.tocoo()
    i, j = adj_coo.row, adj_coo.col
    r_k = np.maximum(eps_k[i], eps_k[j])
    weights = kernel(dist[i, j] / r_k)
    Ws = scipy.sparse.csr_matrix((weights, (i, j)), shape=(n, n))
    scale = (kernel_constant(kernel, d) / n) * (n * UNIT_BALL_VOLUME[d] / k) ** (1.0 + 2.0 / d)
    return GraphLaplacian(matrix=laplacian_from_weights(Ws, scale), family="knn",
                          n=n, scale=scale,
                          params={"k": int(k), "d": d, "kernel": kernel.kind},
                          disconnected=not _connected(Ws))
