"""EPA-DR channel estimation: transform factors, threshold detection, diagonal reconstruction.

Band storage convention used throughout: ``band[m, k] = H[m, (m + d_k) mod N]``
with ``d_k = params.band_offsets[k]`` running from ``-(alpha_max + k_nu)`` to
``L - (alpha_max + k_nu)``.  A cyclic diagonal of H is a column of ``band``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .daft import AfdmParams
from .framing import EpaLayout, pilot_rx_range


def _factor_phase(params: AfdmParams, l, m, mp):
    """Phase ``theta`` (in units of 2 pi / N) of the transform factor, all four cases."""
    N, c2 = params.N, params.c2
    m = np.asarray(m, dtype=np.float64)
    mp = np.asarray(mp, dtype=np.float64)
    last = N - 1
    interior = -l + 2 * N * c2 * (mp - m)
    row_wrap = -l + N * c2 * (m * m + 2 * mp + 1)
    col_wrap = -l - N * c2 * (mp * mp + 2 * m + 1)
    corner = -np.asarray(l, dtype=np.float64) + 0.0 * m
    return np.where(
        m < last,
        np.where(mp < last, interior, col_wrap),
        np.where(mp < last, row_wrap, corner),
    )


def transform_factor(params: AfdmParams, l: int, m, m_prime):
    """Ratio ``H[(m+1)_N, (m'+1)_N] / H[m, m']`` for any path with delay ``l``.

    Independent of the Doppler shift.  Vectorized over ``m`` and ``m_prime``.
    """
    theta = _factor_phase(params, l, m, m_prime)
    out = np.exp(2j * np.pi * theta / params.N)
    return out[()] if out.ndim == 0 else out


def delay_block_of(params: AfdmParams, m: int, m_prime: int) -> int:
    """Delay whose block contains the in-band coordinate ``(m, m')``.

    Guard coordinates between blocks go to the nearest block.

    Raises:
        ValueError: if ``(m, m')`` lies outside the ``L+1`` band.
    """
    g = params.guard
    shifted = (m_prime - m + g) % params.N
    if shifted > params.L:
        raise ValueError(f"({m}, {m_prime}) is outside the channel band")
    return min(shifted // params.spacing, params.l_max)


def offset_delays(params: AfdmParams) -> np.ndarray:
    """Delay block of each band offset ``d_k``."""
    return np.minimum(np.arange(params.L + 1) // params.spacing, params.l_max)


class TransformFactorTable:
    """Precomputed transform factors for every band offset.

    Along the diagonal with offset ``d`` the factor only takes four values:
    interior with raw difference ``d``, interior after one index wraps
    (``d -/+ N``), the row-wrap case (``m = N-1``) and the column-wrap case
    (``m' = N-1``).  For ``d = 0`` all coincide with ``exp(-j 2 pi l / N)``.
    That is ``4L + 1`` entries in total, built once per ``(N, c1, c2)``.
    """

    def __init__(self, params: AfdmParams):
        self.params = params
        self.offsets = params.band_offsets
        self.delays = offset_delays(params)
        N = params.N
        self.entries: dict[tuple, complex] = {}
        for d, l in zip(self.offsets, self.delays):
            d, l = int(d), int(l)
            if d == 0:
                self.entries[(0, "interior", 0)] = transform_factor(params, l, 0, 0)
                continue
            wrapped = d - N if d > 0 else d + N
            # interior factors depend on m' - m only
            self.entries[(d, "interior", d)] = transform_factor(params, l, 0, d)
            self.entries[(d, "interior", wrapped)] = transform_factor(params, l, 0, wrapped)
            self.entries[(d, "row", None)] = transform_factor(params, l, N - 1, (N - 1 + d) % N)
            self.entries[(d, "col", None)] = transform_factor(params, l, (N - 1 - d) % N, N - 1)
        self._sequences: dict[tuple[int, int], np.ndarray] = {}

    def __len__(self) -> int:
        return len(self.entries)

    def lookup(self, m: int, m_prime: int) -> complex:
        """Factor at an in-band coordinate, selected by case."""
        N = self.params.N
        d = (m_prime - m + self.params.guard) % N - self.params.guard
        if d == 0:
            return self.entries[(0, "interior", 0)]
        if m == N - 1:
            return self.entries[(d, "row", None)]
        if m_prime == N - 1:
            return self.entries[(d, "col", None)]
        return self.entries[(d, "interior", m_prime - m)]

    def sequence(self, k: int, start_col: int) -> np.ndarray:
        """Factors ``T(l, (m0+i)_N, (p+i)_N)`` for ``i = 0..N-2`` on diagonal ``k``.

        ``m0 = (p - d_k) mod N``; cached per ``(k, p)`` since they never depend on
        the channel.
        """
        key = (k, start_col)
        seq = self._sequences.get(key)
        if seq is None:
            N = self.params.N
            d = int(self.offsets[k])
            i = np.arange(N - 1)
            mp = (start_col + i) % N
            m = (start_col - d + i) % N
            seq = np.array([self.lookup(int(a), int(b)) for a, b in zip(m, mp)])
            self._sequences[key] = seq
        return seq


def build_factor_table(params: AfdmParams) -> TransformFactorTable:
    return TransformFactorTable(params)


@dataclass
class BandedChannelEstimate:
    """Per ``(r, t)`` band of ``H_{r,t}``; ``bands[r, t, m, k]`` per the module convention."""

    params: AfdmParams
    bands: np.ndarray = field(repr=False)
    zeta: float = 0.0
    pilot_amplitude: float = 1.0
    multiplications: int = 0
    block_multiplications: np.ndarray | None = field(default=None, repr=False)

    @property
    def N_r(self) -> int:
        return self.bands.shape[0]

    @property
    def N_t(self) -> int:
        return self.bands.shape[1]

    def block_dense(self, r: int, t: int) -> np.ndarray:
        return band_to_dense(self.params, self.bands[r, t])

    def dense(self) -> np.ndarray:
        """``H_MIMO`` estimate of shape ``(N N_r, N N_t)``."""
        N = self.params.N
        out = np.zeros((N * self.N_r, N * self.N_t), dtype=np.complex128)
        for r in range(self.N_r):
            for t in range(self.N_t):
                out[r * N : (r + 1) * N, t * N : (t + 1) * N] = self.block_dense(r, t)
        return out


def band_to_dense(params: AfdmParams, band: np.ndarray) -> np.ndarray:
    N = params.N
    H = np.zeros((N, N), dtype=np.complex128)
    m = np.arange(N)[:, None]
    cols = (m + params.band_offsets[None, :]) % N
    H[np.broadcast_to(m, cols.shape), cols] = band
    return H


def dense_to_band(params: AfdmParams, H: np.ndarray) -> np.ndarray:
    N = params.N
    m = np.arange(N)[:, None]
    return H[m, (m + params.band_offsets[None, :]) % N]


def threshold_detect(y_r, layout: EpaLayout, params: AfdmParams, t: int, zeta: float) -> np.ndarray:
    """Pilot column band ``Hhat[(p - d_k)_N, p]`` ordered by offset index ``k``.

    Entries whose received magnitude falls below ``zeta`` are zeroed.
    """
    if zeta < 0:
        raise ValueError("threshold must be non-negative")
    y_r = np.asarray(y_r)
    rows = pilot_rx_range(params, t, layout.N_t)
    # ascending rows m = p - d  <->  descending offsets d
    y = y_r[rows][::-1]
    band = y / layout.pilot_amplitude
    band[np.abs(y) < zeta] = 0.0
    return band


def reconstruct_diagonal(
    params: AfdmParams,
    column_band,
    pilot_index: int,
    factor_table: TransformFactorTable,
) -> tuple[np.ndarray, int]:
    """Propagate a pilot-column band along its cyclic diagonals.

    Returns the ``(N, L+1)`` band and the number of complex multiplications
    spent, which is at most ``(L+1)(N-1)``: zeroed entries are skipped.
    """
    N = params.N
    column_band = np.asarray(column_band, dtype=np.complex128)
    band = np.zeros((N, params.L + 1), dtype=np.complex128)
    live = np.flatnonzero(column_band)
    if live.size == 0:
        return band, 0
    seqs = np.stack([factor_table.sequence(int(k), pilot_index) for k in live])
    d = params.band_offsets[live]
    rows0 = (pilot_index - d) % N
    vals = column_band[live].copy()
    band[rows0, live] = vals
    mults = 0
    for i in range(N - 1):
        vals = seqs[:, i] * vals
        mults += live.size
        band[(rows0 + i + 1) % N, live] = vals
    return band, mults


def reconstruct_from_column(params: AfdmParams, column, col_index: int, delay: int) -> np.ndarray:
    """Full-matrix diagonal reconstruction of one subchannel from any single column.

    Every entry of ``column`` is propagated with the factors of ``delay``;
    direct formula evaluation, no table.
    """
    N = params.N
    column = np.asarray(column, dtype=np.complex128)
    H = np.zeros((N, N), dtype=np.complex128)
    m = np.arange(N)
    vals = column.copy()
    H[m, col_index] = vals
    for i in range(N - 1):
        rows = (m + i) % N
        col = (col_index + i) % N
        vals = transform_factor(params, delay, rows, np.full(N, col)) * vals
        H[(rows + 1) % N, (col + 1) % N] = vals
    return H


def estimate_mimo(
    params: AfdmParams,
    rx_frames,
    layout: EpaLayout,
    zeta: float,
    factor_table: TransformFactorTable,
) -> BandedChannelEstimate:
    """EPA-DR for all antenna pairs: extract, threshold, reconstruct."""
    rx_frames = np.atleast_2d(np.asarray(rx_frames, dtype=np.complex128))
    if rx_frames.shape[-1] != params.N or layout.N != params.N or layout.L != params.L:
        raise ValueError("received frames or layout inconsistent with params")
    if factor_table.params != params:
        raise ValueError("factor table built for different parameters")
    N_r = rx_frames.shape[0]
    bands = np.zeros((N_r, layout.N_t, params.N, params.L + 1), dtype=np.complex128)
    mults = np.zeros((N_r, layout.N_t), dtype=np.int64)
    for r in range(N_r):
        for t in range(1, layout.N_t + 1):
            col = threshold_detect(rx_frames[r], layout, params, t, zeta)
            bands[r, t - 1], mults[r, t - 1] = reconstruct_diagonal(params, col, layout.pilot_index(t), factor_table)
    return BandedChannelEstimate(params, bands, zeta, layout.pilot_amplitude, int(mults.sum()), mults)


def write_estimate(estimate: BandedChannelEstimate, fh) -> None:
    """Text export: ``r t row col re im`` per nonzero in-band entry, ``%.17g`` floats."""
    p = estimate.params
    fh.write(f"# banded estimate N={p.N} L={p.L} N_r={estimate.N_r} N_t={estimate.N_t}\n")
    fh.write("r t row col re im\n")
    N = p.N
    for r in range(estimate.N_r):
        for t in range(estimate.N_t):
            band = estimate.bands[r, t]
            for m, k in zip(*np.nonzero(band)):
                v = band[m, k]
                col = (m + p.band_offsets[k]) % N
                fh.write(f"{r} {t} {m} {col} {v.real:.17g} {v.imag:.17g}\n")


def read_estimate(params: AfdmParams, fh) -> BandedChannelEstimate:
    rows = []
    dims = {}
    for line in fh:
        if line.startswith("#"):
            dims = dict(kv.split("=") for kv in line[1:].split()[2:])
            continue
        if line.startswith("r "):
            continue
        rows.append(line.split())
    N_r, N_t = int(dims["N_r"]), int(dims["N_t"])
    bands = np.zeros((N_r, N_t, params.N, params.L + 1), dtype=np.complex128)
    g = params.guard
    for r, t, m, col, re, im in rows:
        m = int(m)
        k = (int(col) - m + g) % params.N
        bands[int(r), int(t), m, k] = complex(float(re), float(im))
    return BandedChannelEstimate(params, bands)
