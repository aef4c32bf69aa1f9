"""Filter-combine network layers and derived feature pipelines.

A layer maps an n x C feature matrix through five steps: per-channel
spectral filtering (J filters), a linear combine across channels (C -> C',
one matrix per filter index), a linear map across filter outputs
(J -> J', one matrix per combined channel), a pointwise non-expansive
activation, and a reshape stacking the (j, k) grid into J' * C' output
channels.  Also provided: the error budget calculators for composed
layers, geometric scattering moments (spectral and random-walk
approximated), and the renormalized-adjacency convolution network.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse

from .errors import ContractError
from .spectral import EigenSystem, FilterSpec, apply_filter, wavelet_bank

ACTIVATIONS = {
    "relu": lambda v: np.maximum(v, 0.0),
    "abs": np.abs,
    "identity": lambda v: v,
}


@dataclass
class LayerSpec:
    """One filter-combine layer.

    ``filters`` is either a shared bank (list of J filters) or a J x C grid
    of per-channel filters.  ``theta`` holds one C x C' combine matrix per
    filter index j (a single matrix is shared across j); ``alpha`` holds one
    J' x J cross-filter matrix per combined channel k (a single matrix is
    shared across k).
    """

    filters: object
    theta: np.ndarray
    alpha: np.ndarray
    activation: str = "identity"
    channels_in: int | None = None

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ContractError(f"activation must be one of {sorted(ACTIVATIONS)}")
        self.theta = np.asarray(self.theta, dtype=float)
        self.alpha = np.asarray(self.alpha, dtype=float)
        if isinstance(self.filters, FilterSpec):
            self.filters = [self.filters]
        self._per_channel = bool(self.filters) and isinstance(self.filters[0], (list, tuple))
        J = len(self.filters)
        if self.theta.ndim == 2:
            self.theta = np.broadcast_to(self.theta, (J,) + self.theta.shape).copy()
        if self.theta.ndim != 3 or self.theta.shape[0] != J:
            raise ContractError("theta must be (J, C, C') or a shared (C, C') matrix")
        C = self.theta.shape[1]
        if self.channels_in is None:
            self.channels_in = C
        if self.channels_in != C:
            raise ContractError("theta row count must equal the input channel count")
        if self._per_channel and any(len(row) != C for row in self.filters):
            raise ContractError("per-channel filter grid must be J x C")
        Cp = self.theta.shape[2]
        if self.alpha.ndim == 2:
            self.alpha = np.broadcast_to(self.alpha, (Cp,) + self.alpha.shape).copy()
        if self.alpha.ndim != 3 or self.alpha.shape[0] != Cp or self.alpha.shape[2] != J:
            raise ContractError("alpha must be (C', J', J) or a shared (J', J) matrix")

    @property
    def J(self) -> int:
        return len(self.filters)

    @property
    def C(self) -> int:
        return int(self.theta.shape[1])

    @property
    def Cp(self) -> int:
        return int(self.theta.shape[2])

    @property
    def Jp(self) -> int:
        return int(self.alpha.shape[1])

    @property
    def channels_out(self) -> int:
        return self.Jp * self.Cp

    def filter_at(self, j: int, k: int) -> FilterSpec:
        return self.filters[j][k] if self._per_channel else self.filters[j]

    @staticmethod
    def identity_layer(channels: int) -> "LayerSpec":
        return LayerSpec(filters=[FilterSpec.poly_exp((1, 0, 0, 0, 0))],
                         theta=np.eye(channels), alpha=np.eye(1),
                         activation="identity")


@dataclass
class NetworkSpec:
    """An ordered stack of layers with a declared input width."""

    layers: list
    input_channels: int

    def __post_init__(self):
        c = self.input_channels
        for i, layer in enumerate(self.layers):
            if layer.C != c:
                raise ContractError(f"layer {i} expects {layer.C} channels, got {c}")
            c = layer.channels_out

    @property
    def output_channels(self) -> int:
        c = self.input_channels
        for layer in self.layers:
            c = layer.channels_out
        return c


def layer_forward(layer: LayerSpec, es: EigenSystem, X: np.ndarray) -> np.ndarray:
    """Apply one layer to an n x C feature matrix."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, C = X.shape
    if C != layer.C:
        raise ContractError(f"expected {layer.C} input channels, got {C}")
    if n != es.n:
        raise ContractError("feature matrix does not match the eigensystem")

    J, Cp, Jp = layer.J, layer.Cp, layer.Jp
    filtered = np.empty((J, n, C))
    if layer._per_channel:
        for j in range(J):
            for k in range(C):
                filtered[j, :, k] = apply_filter(es, layer.filter_at(j, k), X[:, k])
    else:
        for j in range(J):
            filtered[j] = apply_filter(es, layer.filters[j], X)

    combined = np.einsum("jnc,jcp->jnp", filtered, layer.theta)
    # alpha[k] mixes filter outputs within channel k: out[j', :, k] = sum_i alpha[k, j', i] * combined[i, :, k]
    crossed = np.einsum("kji,ink->jnk", layer.alpha, combined)
    activated = ACTIVATIONS[layer.activation](crossed)
    # column (j - 1) * C' + k  <-  grid entry (j, k), both 1-based
    return activated.transpose(1, 0, 2).reshape(n, Jp * Cp)


def network_forward(net: NetworkSpec, es: EigenSystem, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    for layer in net.layers:
        X = layer_forward(layer, es, X)
    return X


def weight_sums(layer: LayerSpec) -> tuple[float, float]:
    """Worst-case absolute column/row sums of the combine maps.

    First value: max over (j, k) of sum_i |theta[j][i, k]| (largest column
    sum).  Second: max over (k, j') of sum_i |alpha[k][j', i]| (largest row
    sum).  These control how per-layer filter errors propagate.
    """
    a1 = float(np.max(np.abs(layer.theta).sum(axis=1)))
    a2 = float(np.max(np.abs(layer.alpha).sum(axis=2)))
    return a1, a2


def composed_error_bound(a1_list, a2_list, eps_list) -> float:
    """Accumulated output error for per-layer filter discrepancies eps_i.

    sum_{i=0}^{L-1} (prod_{j=i}^{L-1} A1_j * A2_j) * eps_i.
    """
    a1 = list(map(float, a1_list))
    a2 = list(map(float, a2_list))
    eps = list(map(float, eps_list))
    if not (len(a1) == len(a2) == len(eps)):
        raise ContractError("A1, A2 and eps lists must have equal length")
    total = 0.0
    for i in range(len(eps)):
        prod = 1.0
        for j in range(i, len(eps)):
            prod *= a1[j] * a2[j]
        total += prod * eps[i]
    return total


def filter_error_bound(kappa: int, a_lip: float, alpha_n: float, beta_n: float,
                       gamma_n: float, norm2_f: float, norm4_f: float) -> float:
    """Spectral-filter discretization error budget for bandlimited input:
    6 * kappa * ((A_Lip * alpha + beta) * ||f||_2 + gamma * ||f||_4)."""
    return 6.0 * kappa * ((a_lip * alpha_n + beta_n) * norm2_f + gamma_n * norm4_f)


# --------------------------------------------------------------------------
# Scattering moments
# --------------------------------------------------------------------------

def vertex_moments(v: np.ndarray, q: int, weights: np.ndarray | None = None) -> float:
    """Empirical q-th moment of the vertex values behind a 1/sqrt(n) vector.

    v is assumed normalized like an evaluation-operator output, so the
    underlying vertex values are sqrt(n) * v; the default weights 1/n make
    this an unbiased estimate of the continuum moment int |f|^q dmu.
    """
    v = np.asarray(v, dtype=float)
    n = v.shape[0]
    w = np.full(n, 1.0 / n) if weights is None else np.asarray(weights, dtype=float)
    return float(np.dot(w, np.abs(math.sqrt(n) * v) ** q))


def scattering_feature_names(J: int, Q: int) -> list[str]:
    names = [f"S0[q={q}]" for q in range(1, Q + 1)]
    names += [f"S1[j={j},q={q}]" for j in range(J + 1) for q in range(1, Q + 1)]
    names += [f"S2[j={j},j'={jp},q={q}]"
              for j in range(J + 1) for jp in range(j + 1, J + 1)
              for q in range(1, Q + 1)]
    return names


def scattering_moments(es: EigenSystem, x: np.ndarray, J: int, Q: int,
                       measure_weights: np.ndarray | None = None) -> np.ndarray:
    """Zeroth-, first-, and second-order wavelet scattering moments.

    Feature order matches scattering_feature_names: plain moments of x for
    q = 1..Q, then moments of each wavelet output W_j x, then moments of
    W_j' |W_j x| for j < j'.  Length Q + (J+1) Q + (J+1) J / 2 * Q.
    """
    if J < 0 or Q < 1:
        raise ContractError("need J >= 0 and Q >= 1")
    if not es.complete:
        warnings.warn("partial eigensystem: scattering uses spectrally "
                      "truncated filters", stacklevel=2)
    x = np.asarray(x, dtype=float).reshape(es.n)
    bank = wavelet_bank(J)
    first = [apply_filter(es, w, x) for w in bank]
    feats = [vertex_moments(x, q, measure_weights) for q in range(1, Q + 1)]
    for u in first:
        feats += [vertex_moments(u, q, measure_weights) for q in range(1, Q + 1)]
    for j in range(J + 1):
        absu = np.abs(first[j])
        for jp in range(j + 1, J + 1):
            v = apply_filter(es, bank[jp], absu)
            feats += [vertex_moments(v, q, measure_weights) for q in range(1, Q + 1)]
    return np.array(feats)


# --------------------------------------------------------------------------
# Lazy random walk and approximate scattering
# --------------------------------------------------------------------------

def lazy_walk_power(A, t: int, x: np.ndarray) -> np.ndarray:
    """P^t x by repeated multiplication, P = (I + A D^{-1}) / 2.

    Vertices with zero degree contribute nothing through A D^{-1}; the
    identity half keeps their mass in place.
    """
    if t < 0:
        raise ContractError("power must be >= 0")
    x = np.asarray(x, dtype=float)
    deg = np.asarray(A.sum(axis=1)).ravel() if scipy.sparse.issparse(A) else A.sum(axis=1)
    inv = np.where(deg > 0, 1.0 / np.where(deg > 0, deg, 1.0), 0.0)
    out = x.copy()
    for _ in range(t):
        scaled = out * inv if out.ndim == 1 else out * inv[:, None]
        out = 0.5 * (out + A @ scaled)
    return out


def lazy_wavelet_apply(A, x: np.ndarray, j: int) -> np.ndarray:
    """Random-walk wavelet: x - P x for j = 0, else P^(2^(j-1)) x - P^(2^j) x."""
    if j == 0:
        return x - lazy_walk_power(A, 1, x)
    half = lazy_walk_power(A, 2 ** (j - 1), x)
    return half - lazy_walk_power(A, 2 ** (j - 1), half)


def scattering_moments_approx(A, x: np.ndarray, J: int, Q: int,
                              measure_weights: np.ndarray | None = None) -> np.ndarray:
    """Scattering moments with wavelets built from lazy-walk powers.

    Same feature layout as the spectral variant; no eigendecomposition is
    used.
    """
    if J < 0 or Q < 1:
        raise ContractError("need J >= 0 and Q >= 1")
    x = np.asarray(x, dtype=float).ravel()
    first = [lazy_wavelet_apply(A, x, j) for j in range(J + 1)]
    feats = [vertex_moments(x, q, measure_weights) for q in range(1, Q + 1)]
    for u in first:
        feats += [vertex_moments(u, q, measure_weights) for q in range(1, Q + 1)]
    for j in range(J + 1):
        absu = np.abs(first[j])
        for jp in range(j + 1, J + 1):
            v = lazy_wavelet_apply(A, absu, jp)
            feats += [vertex_moments(v, q, measure_weights) for q in range(1, Q + 1)]
    return np.array(feats)


# --------------------------------------------------------------------------
# Renormalized-adjacency convolution (no eigendecomposition)
# --------------------------------------------------------------------------

def renormalized_adjacency(A) -> np.ndarray:
    """(D + I)^(-1/2) (A + I) (D + I)^(-1/2) for a nonnegative symmetric A."""
    A = A.toarray() if scipy.sparse.issparse(A) else np.asarray(A, dtype=float)
    if np.any(A < 0):
        raise ContractError("adjacency must be nonnegative")
    if float(np.max(np.abs(A - A.T))) > 1e-12 * max(1.0, float(np.max(np.abs(A)))):
        raise ContractError("adjacency must be symmetric")
    deg = A.sum(axis=1)
    s = 1.0 / np.sqrt(deg + 1.0)
    return s[:, None] * (A + np.eye(A.shape[0])) * s[None, :]


def mcn_forward(A, X: np.ndarray, theta_list, activation: str = "relu") -> np.ndarray:
    """Stack of layers X <- sigma(A_hat X Theta) on the renormalized adjacency."""
    act = ACTIVATIONS[activation]
    A_hat = renormalized_adjacency(A)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    for theta in theta_list:
        X = act(A_hat @ X @ np.asarray(theta, dtype=float))
    return X


def dlf_poly_filterbank(coeff_table) -> list[FilterSpec]:
    """One exp-polynomial filter per row of a J x 5 coefficient table."""
    table = np.asarray(coeff_table, dtype=float)
    if table.ndim != 2 or table.shape[1] != 5:
        raise ContractError("coefficient table must be J x 5")
    return [FilterSpec.poly_exp(row) for row in table]
