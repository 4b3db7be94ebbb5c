"""Constellations and DAFT-domain detectors: exhaustive ML, Gaussian-approximation MP, LMMSE."""

from __future__ import annotations

from dataclasses import dataclass
import itertools

import numpy as np

ML_SEARCH_LIMIT = 2**20


@dataclass(frozen=True)
class Constellation:
    """Gray-labelled alphabet with unit average energy.

    ``labels[i]`` holds the bits of ``points[i]``, MSB first.
    """

    name: str
    points: np.ndarray
    labels: np.ndarray

    @property
    def size(self) -> int:
        return len(self.points)

    @property
    def bits_per_symbol(self) -> int:
        return self.labels.shape[1]

    def modulate(self, bits) -> np.ndarray:
        bits = np.asarray(bits, dtype=np.int64).reshape(-1, self.bits_per_symbol)
        idx = bits @ (1 << np.arange(self.bits_per_symbol - 1, -1, -1))
        return self.points[self._index_of_label[idx]]

    @property
    def _index_of_label(self) -> np.ndarray:
        weights = 1 << np.arange(self.bits_per_symbol - 1, -1, -1)
        inv = np.empty(self.size, dtype=np.int64)
        inv[self.labels @ weights] = np.arange(self.size)
        return inv

    def nearest(self, z) -> np.ndarray:
        """Index of the closest point for each soft symbol."""
        z = np.asarray(z)
        return np.argmin(np.abs(z[..., None] - self.points) ** 2, axis=-1)

    def slice(self, z) -> np.ndarray:
        return self.points[self.nearest(z)]

    def bits_of(self, symbols) -> np.ndarray:
        """Bits of (exact or sliced) symbols, shape ``(..., bits_per_symbol)``."""
        return self.labels[self.nearest(symbols)]


def _gray_pam(bits_per_axis: int) -> tuple[np.ndarray, np.ndarray]:
    n = 1 << bits_per_axis
    levels = 2 * np.arange(n) - (n - 1)
    gray = np.arange(n) ^ (np.arange(n) >> 1)
    labels = ((gray[:, None] >> np.arange(bits_per_axis - 1, -1, -1)) & 1).astype(np.int64)
    return levels.astype(float), labels


def make_constellation(name: str) -> Constellation:
    key = name.upper().replace("-", "")
    if key == "BPSK":
        return Constellation("BPSK", np.array([1.0 + 0j, -1.0 + 0j]), np.array([[0], [1]]))
    if key in ("4QAM", "QPSK", "16QAM"):
        per_axis = 1 if key != "16QAM" else 2
        levels, labels = _gray_pam(per_axis)
        pts, labs = [], []
        for (i, li), (q, lq) in itertools.product(zip(levels, labels), repeat=2):
            pts.append(i + 1j * q)
            labs.append(np.concatenate([li, lq]))
        pts = np.array(pts)
        pts /= np.sqrt(np.mean(np.abs(pts) ** 2))
        return Constellation("16QAM" if per_axis == 2 else "4QAM", pts, np.array(labs))
    raise ValueError(f"unknown constellation {name!r}")


@dataclass(frozen=True)
class DetectorConfig:
    kind: str = "MP"
    n_iter: int = 20
    damping: float = 0.6
    tol: float = 1e-4

    def __post_init__(self):
        if self.kind not in ("ML", "MP", "LMMSE"):
            raise ValueError(f"unknown detector {self.kind!r}")
        if not 0.0 < self.damping <= 1.0:
            raise ValueError("damping must lie in (0, 1]")
        if self.n_iter < 0:
            raise ValueError("n_iter must be non-negative")


# --- ML ---------------------------------------------------------------------


def _candidates(constellation: Constellation, K: int) -> np.ndarray:
    """All ``|A|^K`` vectors as columns, shape ``(K, |A|^K)``."""
    if K == 0:
        return np.zeros((0, 1), dtype=np.complex128)
    idx = np.indices((constellation.size,) * K).reshape(K, -1)
    return constellation.points[idx]


def detect_ml(H, y, constellation: Constellation, batch: int | None = None) -> np.ndarray:
    """Exhaustive ``argmin_x ||y - H x||^2``.

    ``H`` may carry leading batch dimensions: ``(..., R, K)`` with ``y`` of
    shape ``(..., R)``.  The search is still over every candidate, but the
    unknowns are split into halves ``x = [u; v]`` so the metric becomes
    ``a(u) + b(v) + 2 Re(u^H G12 v)`` (``G = H^H H``), a table of
    ``|A|^K1 x |A|^K2`` entries filled by two small products.
    """
    H = np.asarray(H, dtype=np.complex128)
    y = np.asarray(y, dtype=np.complex128)
    lead = H.shape[:-2]
    R, K = H.shape[-2:]
    if constellation.size**K > ML_SEARCH_LIMIT:
        raise ValueError(f"ML search space {constellation.size}^{K} exceeds {ML_SEARCH_LIMIT}")
    K1 = (K + 1) // 2
    U = _candidates(constellation, K1)
    V = _candidates(constellation, K - K1)
    real_alphabet = not np.any(constellation.points.imag)
    if real_alphabet:
        # x real: x^H G x = x^T Re(G) x and Re(b^H x) = Re(b)^T x
        U, V = U.real, V.real
    # u^H G u = sum_ij G_ij conj(u_i) u_j as a product with the outer products
    UU = (U.conj()[:, None, :] * U[None, :, :]).reshape(K1 * K1, U.shape[1])
    VV = (V.conj()[:, None, :] * V[None, :, :]).reshape((K - K1) ** 2, V.shape[1])
    U_parts = U if real_alphabet else np.concatenate([U.real, U.imag])
    Hb = H.reshape(-1, R, K)
    yb = y.reshape(-1, R)
    if batch is None:
        # small batches keep the metric table in cache
        batch = max(1, 2**17 // (U.shape[1] * V.shape[1]))
    out = np.empty((Hb.shape[0], K), dtype=np.complex128)
    for s in range(0, Hb.shape[0], batch):
        Hs = Hb[s : s + batch]
        Hh = Hs.conj().transpose(0, 2, 1)
        G = Hh @ Hs
        b = (Hh @ yb[s : s + batch, :, None])[..., 0]
        if real_alphabet:
            G, b = G.real, b.real
        G11, G12, G22 = G[:, :K1, :K1], G[:, :K1, K1:], G[:, K1:, K1:]
        n = G.shape[0]
        a = (G11.reshape(n, -1) @ UU).real - 2.0 * (b[:, :K1].conj() @ U).real
        c = (G22.reshape(n, -1) @ VV).real - 2.0 * (b[:, K1:].conj() @ V).real
        W = 2.0 * (G12.reshape(n * K1, K - K1) @ V).reshape(n, K1, V.shape[1])
        # one real GEMM per trial: [Re u, Im u, a, 1] . [Re W; Im W; 1; c]
        left = np.concatenate([np.broadcast_to(U_parts.T, (n,) + U_parts.T.shape), a[:, :, None], np.ones((n, U.shape[1], 1))], axis=2)
        W_parts = W.real if real_alphabet else np.concatenate([W.real, W.imag], axis=1)
        right = np.concatenate([W_parts, np.ones((n, 1, V.shape[1])), c[:, None, :]], axis=1)
        metric = left @ right
        flat = np.argmin(metric.reshape(metric.shape[0], -1), axis=1)
        iu, iv = np.divmod(flat, V.shape[1])
        out[s : s + batch, :K1] = U[:, iu].T
        out[s : s + batch, K1:] = V[:, iv].T
    return out.reshape(*lead, K)


# --- message passing --------------------------------------------------------


@dataclass(frozen=True)
class SparseSystem:
    """Bipartite graph of a linear system: ``y[obs[e]] += coef[e] * x[var[e]]``."""

    obs: np.ndarray
    var: np.ndarray
    coef: np.ndarray
    n_obs: int
    n_var: int

    @property
    def max_degree(self) -> int:
        return int(np.bincount(self.obs, minlength=self.n_obs).max()) if self.obs.size else 0

    @classmethod
    def from_dense(cls, H, tol: float = 0.0) -> "SparseSystem":
        H = np.asarray(H)
        obs, var = np.nonzero(np.abs(H) > tol)
        return cls(obs, var, H[obs, var], H.shape[0], H.shape[1])

    def dense(self) -> np.ndarray:
        H = np.zeros((self.n_obs, self.n_var), dtype=np.complex128)
        np.add.at(H, (self.obs, self.var), self.coef)
        return H


@dataclass
class MpResult:
    symbols: np.ndarray
    converged: bool
    iterations: int
    operations: int
    posterior: np.ndarray


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    np.exp(z, out=z)
    z /= z.sum(axis=1, keepdims=True)
    return z


def detect_mp(
    system: SparseSystem,
    y,
    constellation: Constellation,
    noise_var: float,
    config: DetectorConfig = DetectorConfig(),
) -> MpResult:
    """Gaussian-approximation message passing over a sparse channel graph.

    Each observation treats the interference of all other connected symbols as
    Gaussian with matched mean and variance; symbol nodes combine the extrinsic
    likelihoods from their observations.  Outgoing symbol messages are damped
    and iteration stops once the largest posterior change drops below
    ``config.tol``.  ``operations`` counts edge-symbol updates, ``3 E |A|`` per
    iteration.
    """
    y = np.asarray(y, dtype=np.complex128)
    if y.shape != (system.n_obs,):
        raise ValueError("observation vector does not match the system")
    a = constellation.points
    M = a.size
    E = system.obs.size
    h = system.coef
    obs, var = system.obs, system.var
    p = np.full((E, M), 1.0 / M)
    post = np.full((system.n_var, M), 1.0 / M)
    energy = np.abs(a) ** 2
    habs2 = np.abs(h) ** 2
    y_e = y[obs]
    ha = h[:, None] * a[None, :]
    ops = 0
    converged = False
    it = 0
    for it in range(1, config.n_iter + 1):
        mean_e = h * (p @ a)
        var_e = np.maximum(habs2 * (p @ energy) - np.abs(mean_e) ** 2, 0.0)
        mu = np.bincount(obs, mean_e.real, system.n_obs) + 1j * np.bincount(obs, mean_e.imag, system.n_obs)
        s2 = np.bincount(obs, var_e, system.n_obs) + noise_var
        mu_ex = mu[obs] - mean_e
        s2_ex = np.maximum(s2[obs] - var_e, 1e-300)
        resid = (y_e - mu_ex)[:, None] - ha
        llr = -(resid.real**2 + resid.imag**2) / s2_ex[:, None]
        # float cast: bincount of an empty edge set is int64
        total = np.stack([np.bincount(var, llr[:, j], system.n_var) for j in range(M)], axis=1).astype(np.float64)
        new_post = _softmax_rows(total.copy())
        p = config.damping * _softmax_rows(total[var] - llr) + (1.0 - config.damping) * p
        ops += 3 * E * M
        change = np.max(np.abs(new_post - post)) if new_post.size else 0.0
        post = new_post
        if change < config.tol:
            converged = True
            break
    if config.n_iter == 0:
        it = 0
    return MpResult(a[np.argmax(post, axis=1)], converged, it, ops, post)


# --- LMMSE ------------------------------------------------------------------


def detect_lmmse(H, y, noise_var: float, constellation: Constellation) -> np.ndarray:
    """``H^H (H H^H + N0 I)^{-1} y`` followed by nearest-point slicing."""
    if noise_var <= 0:
        raise ValueError("LMMSE needs a positive noise variance")
    H = H.dense() if isinstance(H, SparseSystem) else np.asarray(H, dtype=np.complex128)
    y = np.asarray(y, dtype=np.complex128)
    G = H @ H.conj().T + noise_var * np.eye(H.shape[0])
    soft = H.conj().T @ np.linalg.solve(G, y)
    return constellation.slice(soft)
