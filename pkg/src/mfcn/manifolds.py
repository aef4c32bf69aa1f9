"""Analytic manifolds with closed-form Laplacian spectra.

Three model spaces are supported, each embedded in Euclidean space with a
known orthonormal eigenbasis of the Laplace-Beltrami operator:

* unit circle in R^2 (intrinsic coordinate: angle theta),
* unit sphere in R^3 (intrinsic coordinates: polar theta, azimuth phi),
* flat torus in R^4, the product of two unit circles (coordinates u, v).

Eigenfunctions are normalized against the *probability* measure of the
sampling density, so the constant function is always eigenfunction 1 with
value 1.  Point clouds are i.i.d. draws from that density; the normalized
evaluation operator maps a function to its vertex values divided by
sqrt(n), so that discrete inner products estimate continuum ones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ContractError

TWO_PI = 2.0 * math.pi

_AMBIENT_DIM = {"circle": 2, "sphere": 3, "flat_torus": 4}
_INTRINSIC_DIM = {"circle": 1, "sphere": 2, "flat_torus": 2}
# Riemannian volume of each manifold (circumference / area).
_VOLUME = {"circle": TWO_PI, "sphere": 2.0 * TWO_PI, "flat_torus": TWO_PI**2}

_MANIFOLD_KINDS = tuple(_AMBIENT_DIM)
_DENSITY_KINDS = ("uniform", "cosine_tilt")

# Default quadrature resolutions; exact for the trigonometric band spanned
# by products of implemented eigenfunctions.
CIRCLE_QUAD_NODES = 2048
SPHERE_QUAD_NODES = (64, 128)   # Gauss-Legendre in cos(theta) x trapezoid in phi
TORUS_QUAD_NODES = (128, 128)


@dataclass(frozen=True)
class DensitySpec:
    """Sampling density on a manifold.

    ``uniform`` is the normalized volume measure.  ``cosine_tilt`` is
    proportional to ``1 + tilt * cos(first intrinsic coordinate)``; the
    normalizer is the manifold volume for every supported manifold because
    the cosine factor integrates to zero.
    """

    kind: str = "uniform"
    tilt: float = 0.0

    def __post_init__(self):
        if self.kind not in _DENSITY_KINDS:
            raise ContractError(f"unknown density kind {self.kind!r}")
        if self.kind == "cosine_tilt" and not (0.0 <= self.tilt <= 0.9):
            raise ContractError("cosine_tilt requires 0 <= tilt <= 0.9")
        if self.kind == "uniform" and self.tilt != 0.0:
            raise ContractError("uniform density takes no tilt")

    def label(self) -> str:
        return "uniform" if self.kind == "uniform" else f"cosine:{self.tilt:g}"


@dataclass(frozen=True)
class ManifoldSpec:
    """A supported manifold together with its sampling density."""

    kind: str
    density: DensitySpec = field(default_factory=DensitySpec)

    def __post_init__(self):
        if self.kind not in _MANIFOLD_KINDS:
            raise ContractError(f"unknown manifold kind {self.kind!r}")

    @property
    def ambient_dim(self) -> int:
        return _AMBIENT_DIM[self.kind]

    @property
    def intrinsic_dim(self) -> int:
        return _INTRINSIC_DIM[self.kind]

    @property
    def volume(self) -> float:
        return _VOLUME[self.kind]

    def density_values(self, coords: np.ndarray) -> np.ndarray:
        """Density w.r.t. the Riemannian volume form, evaluated pointwise."""
        coords = np.atleast_2d(np.asarray(coords, dtype=float))
        base = 1.0 / self.volume
        if self.density.kind == "uniform":
            return np.full(coords.shape[0], base)
        return base * (1.0 + self.density.tilt * np.cos(coords[:, 0]))


@dataclass(frozen=True)
class PointCloud:
    """n sample points with both ambient and intrinsic coordinates."""

    points: np.ndarray          # (n, D)
    intrinsic_coords: np.ndarray  # (n, d)
    spec: ManifoldSpec
    seed: int

    @property
    def n(self) -> int:
        return self.points.shape[0]


def embed(kind: str, coords: np.ndarray) -> np.ndarray:
    """Map intrinsic coordinates to ambient Euclidean coordinates."""
    coords = np.atleast_2d(np.asarray(coords, dtype=float))
    if kind == "circle":
        t = coords[:, 0]
        return np.stack([np.cos(t), np.sin(t)], axis=1)
    if kind == "sphere":
        th, ph = coords[:, 0], coords[:, 1]
        st = np.sin(th)
        return np.stack([st * np.cos(ph), st * np.sin(ph), np.cos(th)], axis=1)
    if kind == "flat_torus":
        u, v = coords[:, 0], coords[:, 1]
        return np.stack([np.cos(u), np.sin(u), np.cos(v), np.sin(v)], axis=1)
    raise ContractError(f"unknown manifold kind {kind!r}")


def _tilted_angle_from_uniform(u: np.ndarray, a: float) -> np.ndarray:
    # Invert the CDF (theta + a*sin(theta)) / (2*pi) with safeguarded Newton.
    if a == 0.0:
        return TWO_PI * u
    target = TWO_PI * u
    theta = target.copy()
    for _ in range(60):
        f = theta + a * np.sin(theta) - target
        theta = theta - f / (1.0 + a * np.cos(theta))
        theta = np.clip(theta, 0.0, TWO_PI)
        if np.max(np.abs(f)) < 1e-14:
            break
    return theta


def sample_points(spec: ManifoldSpec, n: int, seed: int) -> PointCloud:
    """Draw n i.i.d. points from the manifold's density.

    Deterministic for fixed (spec, n, seed).  The circle uses inverse-CDF
    sampling (exact), sphere/torus use rejection sampling with the constant
    envelope (1 + tilt); the acceptance rate is at least 1/(1 + tilt).
    """
    if n < 1:
        raise ContractError("n must be >= 1")
    rng = np.random.default_rng(seed)
    kind, dens = spec.kind, spec.density

    if kind == "circle":
        u = rng.random(n)
        theta = TWO_PI * u if dens.kind == "uniform" else _tilted_angle_from_uniform(u, dens.tilt)
        coords = theta[:, None]
    elif kind == "sphere":
        coords = _rejection_sample(rng, n, dens, _sphere_uniform_draw)
    elif kind == "flat_torus":
        coords = _rejection_sample(rng, n, dens, _torus_uniform_draw)
    else:  # pragma: no cover - guarded in ManifoldSpec
        raise ContractError(f"unsupported manifold {kind!r}")

    return PointCloud(points=embed(kind, coords), intrinsic_coords=coords,
                      spec=spec, seed=seed)


def _sphere_uniform_draw(rng: np.random.Generator, m: int) -> np.ndarray:
    u = rng.random((m, 2))
    theta = np.arccos(1.0 - 2.0 * u[:, 0])
    phi = TWO_PI * u[:, 1]
    return np.stack([theta, phi], axis=1)


def _torus_uniform_draw(rng: np.random.Generator, m: int) -> np.ndarray:
    return TWO_PI * rng.random((m, 2))


def _rejection_sample(rng, n, dens: DensitySpec, draw) -> np.ndarray:
    if dens.kind == "uniform":
        return draw(rng, n)
    a = dens.tilt
    out = np.empty((0, 2))
    while out.shape[0] < n:
        m = max(2 * (n - out.shape[0]), 64)
        cand = draw(rng, m)
        accept = rng.random(m) * (1.0 + a) <= 1.0 + a * np.cos(cand[:, 0])
        out = np.concatenate([out, cand[accept]], axis=0)
    return out[:n]


def equispaced_circle_cloud(n: int) -> PointCloud:
    """Deterministic equispaced circle grid (seed recorded as -1).

    Not an i.i.d. sample; used as an exactness oracle because trapezoid
    sums over this grid integrate low-order trigonometric polynomials
    exactly.
    """
    theta = TWO_PI * np.arange(n) / n
    spec = ManifoldSpec("circle")
    return PointCloud(points=embed("circle", theta[:, None]),
                      intrinsic_coords=theta[:, None], spec=spec, seed=-1)


# --------------------------------------------------------------------------
# Eigenfunctions
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class EigenFunction:
    """Closed-form Laplace-Beltrami eigenpair on intrinsic coordinates."""

    kind: str
    index: int
    eigenvalue: float
    fn: Callable[[np.ndarray], np.ndarray]

    def __call__(self, coords: np.ndarray) -> np.ndarray:
        coords = np.atleast_2d(np.asarray(coords, dtype=float))
        return self.fn(coords)


def _circle_eigenfunction(i: int) -> EigenFunction:
    if i == 1:
        return EigenFunction("circle", 1, 0.0, lambda c: np.ones(c.shape[0]))
    k = i // 2
    if i % 2 == 0:
        fn = lambda c, k=k: math.sqrt(2.0) * np.cos(k * c[:, 0])
    else:
        fn = lambda c, k=k: math.sqrt(2.0) * np.sin(k * c[:, 0])
    return EigenFunction("circle", i, float(k * k), fn)


def _sphere_xyz(c: np.ndarray):
    th, ph = c[:, 0], c[:, 1]
    st = np.sin(th)
    return st * np.cos(ph), st * np.sin(ph), np.cos(th)


def _sphere_table():
    """Real spherical harmonics through degree 3, as polynomials in (x, y, z).

    Normalized so that the mean of the square over the sphere is 1.  Within
    each degree the order is m = 0, then (cos-type, sin-type) for ascending
    |m|.
    """
    s = math.sqrt
    entries = [
        (0.0, lambda x, y, z: np.ones_like(z)),
        # degree 1
        (2.0, lambda x, y, z: s(3) * z),
        (2.0, lambda x, y, z: s(3) * x),
        (2.0, lambda x, y, z: s(3) * y),
        # degree 2
        (6.0, lambda x, y, z: s(5) / 2 * (3 * z * z - 1)),
        (6.0, lambda x, y, z: s(15) * x * z),
        (6.0, lambda x, y, z: s(15) * y * z),
        (6.0, lambda x, y, z: s(15) / 2 * (x * x - y * y)),
        (6.0, lambda x, y, z: s(15) * x * y),
        # degree 3
        (12.0, lambda x, y, z: s(7) / 2 * (5 * z**3 - 3 * z)),
        (12.0, lambda x, y, z: s(21 / 8) * x * (5 * z * z - 1)),
        (12.0, lambda x, y, z: s(21 / 8) * y * (5 * z * z - 1)),
        (12.0, lambda x, y, z: s(105) / 2 * z * (x * x - y * y)),
        (12.0, lambda x, y, z: s(105) * x * y * z),
        (12.0, lambda x, y, z: s(35 / 8) * (x**3 - 3 * x * y * y)),
        (12.0, lambda x, y, z: s(35 / 8) * (3 * x * x * y - y**3)),
    ]
    return entries


_SPHERE_TABLE = _sphere_table()

_TORUS_MAX_FREQ = 4


def _torus_table():
    """Product basis cos/sin(k*u) x cos/sin(m*v) for 0 <= k, m <= 4.

    Sorted by eigenvalue k^2 + m^2, then lexicographically by (k, m), with
    cosine before sine in each factor.
    """
    entries = []
    r2 = math.sqrt(2.0)
    for k in range(_TORUS_MAX_FREQ + 1):
        for m in range(_TORUS_MAX_FREQ + 1):
            lam = float(k * k + m * m)
            if k == 0 and m == 0:
                entries.append((lam, k, m, 0, lambda c: np.ones(c.shape[0])))
                continue
            if m == 0:
                entries.append((lam, k, m, 0, lambda c, k=k: r2 * np.cos(k * c[:, 0])))
                entries.append((lam, k, m, 1, lambda c, k=k: r2 * np.sin(k * c[:, 0])))
                continue
            if k == 0:
                entries.append((lam, k, m, 0, lambda c, m=m: r2 * np.cos(m * c[:, 1])))
                entries.append((lam, k, m, 1, lambda c, m=m: r2 * np.sin(m * c[:, 1])))
                continue
            for vi, (f1, f2) in enumerate(
                [(np.cos, np.cos), (np.cos, np.sin), (np.sin, np.cos), (np.sin, np.sin)]
            ):
                entries.append(
                    (lam, k, m, vi,
                     lambda c, k=k, m=m, f1=f1, f2=f2: 2.0 * f1(k * c[:, 0]) * f2(m * c[:, 1]))
                )
    entries.sort(key=lambda e: (e[0], e[1], e[2], e[3]))
    return entries


_TORUS_TABLE = _torus_table()


def implemented_basis_size(kind: str) -> int:
    """Number of eigenfunctions available (circle is unbounded)."""
    if kind == "circle":
        return 10**9
    if kind == "sphere":
        return len(_SPHERE_TABLE)
    return len(_TORUS_TABLE)


def manifold_eigenpair(spec: ManifoldSpec, i: int) -> EigenFunction:
    """i-th Laplace-Beltrami eigenpair (1-based, ascending eigenvalue).

    Only defined for the uniform density, where the closed-form basis is
    orthonormal.  Degenerate clusters are ordered by a fixed convention
    (cosine before sine per frequency on the circle; m = 0 then
    cos/sin pairs on the sphere; lexicographic (k, m) on the torus).
    """
    if spec.density.kind != "uniform":
        raise ContractError("analytic eigenbasis requires the uniform density")
    if i < 1:
        raise ContractError("eigenfunction index is 1-based")
    kind = spec.kind
    if kind == "circle":
        return _circle_eigenfunction(i)
    table = _SPHERE_TABLE if kind == "sphere" else None
    if table is not None:
        if i > len(table):
            raise ContractError(f"sphere basis implemented through index {len(table)}")
        lam, poly = table[i - 1]
        return EigenFunction("sphere", i, lam,
                             lambda c, poly=poly: poly(*_sphere_xyz(c)))
    if i > len(_TORUS_TABLE):
        raise ContractError(f"torus basis implemented through index {len(_TORUS_TABLE)}")
    lam, _, _, _, fn = _TORUS_TABLE[i - 1]
    return EigenFunction("flat_torus", i, lam, fn)


def eigenbasis(spec: ManifoldSpec, kappa: int) -> list[EigenFunction]:
    return [manifold_eigenpair(spec, i) for i in range(1, kappa + 1)]


def eigenfunction_matrix(spec: ManifoldSpec, kappa: int, coords: np.ndarray) -> np.ndarray:
    """(m, kappa) matrix of the first kappa eigenfunctions at given coords."""
    coords = np.atleast_2d(np.asarray(coords, dtype=float))
    return np.stack([manifold_eigenpair(spec, i)(coords)
                     for i in range(1, kappa + 1)], axis=1)


# --------------------------------------------------------------------------
# Evaluation operator and quadrature
# --------------------------------------------------------------------------

def evaluate_Pn(f: Callable[[np.ndarray], np.ndarray], cloud: PointCloud) -> np.ndarray:
    """Vertex values of f divided by sqrt(n)."""
    vals = np.asarray(f(cloud.intrinsic_coords), dtype=float).reshape(cloud.n)
    return vals / math.sqrt(cloud.n)


def _quad_grid(spec: ManifoldSpec, nodes):
    """Quadrature nodes (m, d) and weights summing to 1 for the density."""
    kind = spec.kind
    if kind == "circle":
        K = nodes if nodes is not None else CIRCLE_QUAD_NODES
        theta = TWO_PI * np.arange(K) / K
        coords = theta[:, None]
        w = np.full(K, TWO_PI / K)
    elif kind == "sphere":
        K1, K2 = nodes if nodes is not None else SPHERE_QUAD_NODES
        t, wt = np.polynomial.legendre.leggauss(K1)   # t = cos(theta)
        theta = np.arccos(t)
        phi = TWO_PI * np.arange(K2) / K2
        TH, PH = np.meshgrid(theta, phi, indexing="ij")
        coords = np.stack([TH.ravel(), PH.ravel()], axis=1)
        w = (wt[:, None] * np.full(K2, TWO_PI / K2)[None, :]).ravel()
    else:
        K1, K2 = nodes if nodes is not None else TORUS_QUAD_NODES
        u = TWO_PI * np.arange(K1) / K1
        v = TWO_PI * np.arange(K2) / K2
        U, V = np.meshgrid(u, v, indexing="ij")
        coords = np.stack([U.ravel(), V.ravel()], axis=1)
        w = np.full(coords.shape[0], (TWO_PI / K1) * (TWO_PI / K2))
    # fold in the density so weights integrate the probability measure
    w = w * spec.density_values(coords)
    return coords, w


def integrate(spec: ManifoldSpec, g: Callable[[np.ndarray], np.ndarray],
              nodes=None) -> float:
    """Signed integral of g against the probability measure."""
    coords, w = _quad_grid(spec, nodes)
    return float(np.dot(w, np.asarray(g(coords), dtype=float).reshape(-1)))


def quadrature(spec: ManifoldSpec, g: Callable[[np.ndarray], np.ndarray],
               q: float, nodes=None) -> float:
    """L^q norm of g w.r.t. the probability measure, (int |g|^q dmu)^(1/q)."""
    if q < 1:
        raise ContractError("q must be >= 1")
    coords, w = _quad_grid(spec, nodes)
    vals = np.abs(np.asarray(g(coords), dtype=float).reshape(-1)) ** q
    return float(np.dot(w, vals) ** (1.0 / q))


# --------------------------------------------------------------------------
# Spectral scale modes and continuum filtering
# --------------------------------------------------------------------------

SCALE_MODES = ("LB", "eps_uniform", "knn_uniform")


def scale_factor(spec: ManifoldSpec, mode: str) -> float:
    """Multiplier turning Laplace-Beltrami eigenvalues into the limit
    operator's eigenvalues for each graph family, at uniform density.

    With rho = 1/vol the constant density w.r.t. the volume form:
    identity for the dense-Gaussian limit, rho/2 for the neighborhood-graph
    limit, rho^(-2/d)/2 for the k-NN limit.
    """
    if mode == "LB":
        return 1.0
    rho = 1.0 / spec.volume
    if mode == "eps_uniform":
        return rho / 2.0
    if mode == "knn_uniform":
        return rho ** (-2.0 / spec.intrinsic_dim) / 2.0
    raise ContractError(f"unknown scale mode {mode!r}")


def scaled_eigenvalues(spec: ManifoldSpec, kappa: int, mode: str = "LB") -> np.ndarray:
    fac = scale_factor(spec, mode)
    return np.array([manifold_eigenpair(spec, i).eigenvalue * fac
                     for i in range(1, kappa + 1)])


def continuum_filter_value(spec: ManifoldSpec, w, coeffs: Sequence[float],
                           coords: np.ndarray, scale_mode: str = "LB",
                           calibration: float = 1.0) -> np.ndarray:
    """Exact pointwise output of a spectral filter on a bandlimited function.

    ``coeffs[i-1]`` is the coefficient against eigenfunction i; the filter w
    is evaluated at the scaled (optionally calibrated) eigenvalues.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    kappa = coeffs.size
    if kappa > implemented_basis_size(spec.kind):
        raise ContractError("coefficient list exceeds the implemented eigenbasis")
    coords = np.atleast_2d(np.asarray(coords, dtype=float))
    lam = scaled_eigenvalues(spec, kappa, scale_mode) * calibration
    gains = np.asarray(w(lam), dtype=float) * coeffs
    out = np.zeros(coords.shape[0])
    for i in range(kappa):
        if gains[i] != 0.0:
            out += gains[i] * manifold_eigenpair(spec, i + 1)(coords)
    return out
