"""Monte-Carlo BER/NMSE engine and the diversity diagnostics (slopes, Phi rank, PEP bound)."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import itertools
import logging
import time

import numpy as np

from .chanest import (
    BandedChannelEstimate,
    TransformFactorTable,
    build_factor_table,
    estimate_mimo,
    offset_delays,
)
from .channel import (
    DelayDopplerProfile,
    MimoChannelRealization,
    ProfileSpec,
    doppler_phasor,
    effective_band,
    sample_channel,
    subchannel_entries,
    subchannel_matrix,
)
from .daft import AfdmParams, daft, idaft, make_params
from .detect import (
    DetectorConfig,
    SparseSystem,
    detect_lmmse,
    detect_ml,
    detect_mp,
    make_constellation,
)
from .framing import EpaLayout, build_epa_frames, pilot_amplitude, pilot_rx_rows

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ExperimentConfig:
    """One BER/NMSE curve.

    ``N0 = 10^(-SNRd/10)`` with unit data energy; the pilot carries
    ``N0 * 10^(SNRp/10)``; the estimator threshold is ``zeta_multiplier * N0``.
    Trials run in fixed-size batches, each seeded from
    ``(seed, snr_index, batch_index)``, until ``target_errors`` bit errors and
    ``min_trials`` trials are reached or ``max_trials`` is hit.
    """

    name: str
    N: int
    l_max: int
    alpha_max: int
    profile: ProfileSpec
    snr_db: tuple[float, ...]
    k_nu: int = 0
    c2: float | None = None
    N_t: int = 1
    N_r: int = 1
    constellation: str = "BPSK"
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    snrp_db: float = 50.0
    zeta_multiplier: float = 6.0
    csi_mode: str = "perfect"
    min_trials: int = 1
    max_trials: int = 1000
    target_errors: int = 100
    batch: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.csi_mode not in ("perfect", "estimated"):
            raise ValueError(f"unknown csi_mode {self.csi_mode!r}")
        if not self.snr_db:
            raise ValueError("empty SNR grid")
        if self.batch < 1 or self.max_trials < 1 or self.min_trials < 0:
            raise ValueError("batch and trial counts must be positive")
        if self.zeta_multiplier < 0:
            raise ValueError("zeta_multiplier must be non-negative")
        make_constellation(self.constellation)

    @property
    def params(self) -> AfdmParams:
        return make_params(self.N, self.l_max, self.alpha_max, self.k_nu, self.c2)


@dataclass(frozen=True)
class BerPoint:
    snr_db: float
    errors: int
    bits: int
    trials: int
    seed: int

    @property
    def ber(self) -> float:
        return self.errors / self.bits if self.bits else float("nan")

    @property
    def ci_halfwidth(self) -> float:
        """95% normal-approximation half width."""
        p = self.ber
        return float(1.96 * np.sqrt(max(p * (1 - p), 0.0) / self.bits)) if self.bits else float("nan")


@dataclass
class BerResult:
    name: str
    points: list[BerPoint]
    runtime: float = 0.0

    @property
    def snr_db(self) -> np.ndarray:
        return np.array([p.snr_db for p in self.points])

    @property
    def ber(self) -> np.ndarray:
        return np.array([p.ber for p in self.points])

    def csv(self) -> str:
        lines = ["snr_db,ber,errors,bits,ci_halfwidth,seed"]
        for p in self.points:
            lines.append(f"{p.snr_db:.6g},{p.ber:.10g},{p.errors},{p.bits},{p.ci_halfwidth:.6g},{p.seed}")
        return "\n".join(lines) + "\n"


def noise_var(snr_db: float) -> float:
    return 0.0 if np.isinf(snr_db) and snr_db > 0 else float(10.0 ** (-snr_db / 10.0))


def batch_rng(seed: int, point: int, batch: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, point, batch]))


# --- channel sampling and transmission, vectorized over trials ---------------


@dataclass(frozen=True)
class ChannelBatch:
    """``B`` realizations sharing one delay list, stored as arrays.

    ``dopplers`` has shape ``(B, P)`` and ``gains`` ``(B, N_r, N_t, P)``.
    """

    delays: tuple[int, ...]
    dopplers: np.ndarray
    gains: np.ndarray

    @classmethod
    def from_realizations(cls, realizations) -> "ChannelBatch":
        delays = realizations[0].profile.delays
        if any(r.profile.delays != delays for r in realizations):
            raise ValueError("batched transmission needs one delay profile")
        dopplers = np.array([r.profile.dopplers for r in realizations], dtype=float)
        return cls(delays, dopplers, np.stack([r.gains for r in realizations]))

    def __len__(self) -> int:
        return self.gains.shape[0]

    def __getitem__(self, b: int) -> MimoChannelRealization:
        prof = DelayDopplerProfile(self.delays, tuple(float(nu) for nu in self.dopplers[b]))
        return MimoChannelRealization(prof, self.gains[b])


def _draw(cfg: ExperimentConfig, params: AfdmParams, rng, n: int) -> ChannelBatch:
    """``n`` independent realizations; with fixed Dopplers the gains are one array draw."""
    spec = cfg.profile
    P = spec.P
    if spec.dopplers is None:
        return ChannelBatch.from_realizations([sample_channel(spec, cfg.N_r, cfg.N_t, rng, params) for _ in range(n)])
    prof = sample_channel(spec, 1, 1, np.random.default_rng(0), params).profile
    shape = (n, cfg.N_r, cfg.N_t, P)
    if spec.gains == "unit":
        gains = np.ones(shape, dtype=np.complex128)
    else:
        gains = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * np.sqrt(0.5 / P)
    return ChannelBatch(prof.delays, np.broadcast_to(np.array(prof.dopplers, dtype=float), (n, P)), gains)


def transmit(params: AfdmParams, realizations, x: np.ndarray) -> np.ndarray:
    """Noiseless pipeline for a batch: ``x`` of shape ``(B, N_t, N)`` -> ``(B, N_r, N)``.

    ``realizations`` is a :class:`ChannelBatch` or a list of realizations.
    IDAFT, per-path cyclic delay and Doppler phasor in the time domain, DAFT.
    """
    batch = realizations if isinstance(realizations, ChannelBatch) else ChannelBatch.from_realizations(realizations)
    gains = batch.gains
    s = idaft(params, x)
    phasor = doppler_phasor(params.N, batch.dopplers)  # (B, P, N)
    d = np.zeros((x.shape[0], gains.shape[1], params.N), dtype=np.complex128)
    for p, l in enumerate(batch.delays):
        shifted = np.roll(s, l, axis=-1) * phasor[:, None, p, :]
        d += np.einsum("brt,btn->brn", gains[:, :, :, p], shifted)
    return daft(params, d)


def _awgn(rng, shape, N0: float) -> np.ndarray:
    if N0 == 0:
        return np.zeros(shape, dtype=np.complex128)
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * np.sqrt(N0 / 2)


def _dense_mimo_batch(params: AfdmParams, batch: ChannelBatch) -> np.ndarray:
    """``H_MIMO`` per trial, ``(B, N N_r, N N_t)``; small N only."""
    N = params.N
    B, N_r, N_t, P = batch.gains.shape
    out = np.empty((B, N_r * N, N_t * N), dtype=np.complex128)
    uniq, inverse = np.unique(batch.dopplers, axis=0, return_inverse=True)
    inverse = np.asarray(inverse).ravel()
    for u, dopplers in enumerate(uniq):
        idx = np.flatnonzero(inverse == u)
        mats = np.stack([subchannel_matrix(params, l, nu) for l, nu in zip(batch.delays, dopplers)]).reshape(P, -1)
        blocks = (batch.gains[idx].reshape(-1, P) @ mats).reshape(idx.size, N_r, N_t, N, N)
        out[idx] = blocks.transpose(0, 1, 3, 2, 4).reshape(idx.size, N_r * N, N_t * N)
    return out


def system_from_bands(params: AfdmParams, bands: np.ndarray, obs_rows, var_cols) -> SparseSystem:
    """Sparse graph from band storage restricted to observation rows and symbol columns.

    ``obs_rows``/``var_cols`` are per-antenna index arrays (same for every
    antenna); entries that are exactly zero are dropped.
    """
    N = params.N
    N_r, N_t = bands.shape[:2]
    obs_rows = np.asarray(obs_rows)
    var_cols = np.asarray(var_cols)
    row_pos = np.full(N, -1)
    row_pos[obs_rows] = np.arange(obs_rows.size)
    col_pos = np.full(N, -1)
    col_pos[var_cols] = np.arange(var_cols.size)
    cols = (obs_rows[:, None] + params.band_offsets[None, :]) % N
    obs_all, var_all, coef_all = [], [], []
    for r in range(N_r):
        for t in range(N_t):
            vals = bands[r, t][obs_rows]
            keep = (vals != 0) & (col_pos[cols] >= 0)
            i, k = np.nonzero(keep)
            obs_all.append(r * obs_rows.size + i)
            var_all.append(t * var_cols.size + col_pos[cols[i, k]])
            coef_all.append(vals[i, k])
    return SparseSystem(
        np.concatenate(obs_all),
        np.concatenate(var_all),
        np.concatenate(coef_all),
        N_r * obs_rows.size,
        N_t * var_cols.size,
    )


class _Trial:
    """Per-config state reused across trials (factor table, constellation)."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.params = cfg.params
        self.const = make_constellation(cfg.constellation)
        self.table: TransformFactorTable | None = None
        if cfg.csi_mode == "estimated":
            self.table = build_factor_table(self.params)

    def layout(self, N0: float) -> EpaLayout:
        ref = N0 if N0 > 0 else 1.0
        return EpaLayout.for_params(self.params, self.cfg.N_t, pilot_amplitude(self.cfg.snrp_db, ref))

    def run_batch(self, snr_db: float, rng, n: int) -> tuple[int, int]:
        cfg, params, const = self.cfg, self.params, self.const
        N0 = noise_var(snr_db)
        N = params.N
        realizations = _draw(cfg, params, rng, n)
        estimated = cfg.csi_mode == "estimated"
        if estimated:
            layout = self.layout(N0)
            n_slots = layout.n_data
        else:
            n_slots = N
        bits = rng.integers(0, 2, size=(n, cfg.N_t, n_slots, const.bits_per_symbol))
        data = const.modulate(bits).reshape(n, cfg.N_t, n_slots)
        if estimated:
            x = np.stack([build_epa_frames(params, layout, data[b]) for b in range(n)])
        else:
            x = data
        y = transmit(params, realizations, x) + _awgn(rng, (n, cfg.N_r, N), N0)

        if estimated:
            var_cols = layout.data_slots
            obs_rows = np.setdiff1d(np.arange(N), pilot_rx_rows(params, cfg.N_t))
        else:
            var_cols = np.arange(N)
            obs_rows = np.arange(N)

        kind = cfg.detector.kind
        if kind == "ML" and not estimated:
            x_hat = detect_ml(_dense_mimo_batch(params, realizations), y.reshape(n, -1), const)
        else:
            x_hat = np.empty((n, cfg.N_t * var_cols.size), dtype=np.complex128)
            for b in range(n):
                if estimated:
                    est = estimate_mimo(params, y[b], layout, cfg.zeta_multiplier * N0, self.table)
                    bands = est.bands
                else:
                    bands = effective_band(params, realizations[b])
                system = system_from_bands(params, bands, obs_rows, var_cols)
                yb = y[b][:, obs_rows].reshape(-1)
                if kind == "MP":
                    x_hat[b] = detect_mp(system, yb, const, max(N0, 1e-12), cfg.detector).symbols
                elif kind == "LMMSE":
                    x_hat[b] = detect_lmmse(system, yb, max(N0, 1e-12), const)
                else:
                    x_hat[b] = detect_ml(system.dense(), yb, const)
        bits_hat = const.bits_of(x_hat.reshape(n, cfg.N_t, var_cols.size))
        return int(np.sum(bits_hat != bits)), int(bits.size)


def run_ber(cfg: ExperimentConfig, threads: int = 1) -> BerResult:
    """BER curve over ``cfg.snr_db``; bit-identical for a given config and seed.

    Batches may be evaluated concurrently, but they are consumed in index order
    and the stopping rule is applied to that sequence, so ``threads`` never
    changes the result.
    """
    t0 = time.perf_counter()
    trial = _Trial(cfg)
    points = []
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        for i, snr in enumerate(cfg.snr_db):
            errors = bits = trials = 0
            window = 1 if pool is None else threads
            for start in itertools.count(0, window):
                if pool is None:
                    results = [trial.run_batch(snr, batch_rng(cfg.seed, i, start), cfg.batch)]
                else:
                    # speculative window; batches past the stopping point are discarded
                    futures = [
                        pool.submit(trial.run_batch, snr, batch_rng(cfg.seed, i, start + j), cfg.batch)
                        for j in range(window)
                    ]
                    results = [f.result() for f in futures]
                done = False
                for e, nb in results:
                    errors += e
                    bits += nb
                    trials += cfg.batch
                    if (errors >= cfg.target_errors and trials >= cfg.min_trials) or trials >= cfg.max_trials:
                        done = True
                        break
                if done:
                    break
            points.append(BerPoint(float(snr), errors, bits, trials, cfg.seed))
            log.info("%s snr=%.2f dB ber=%.3e (%d/%d, %d trials)", cfg.name, snr, errors / bits, errors, bits, trials)
    finally:
        if pool is not None:
            pool.shutdown()
    return BerResult(cfg.name, points, time.perf_counter() - t0)


# --- NMSE ---------------------------------------------------------------------


def nmse(estimate: BandedChannelEstimate, truth) -> tuple[np.ndarray, float]:
    """Per-block ``||Hhat - H||_F^2 / ||H||_F^2`` and the aggregate over all blocks.

    ``truth`` is a dense ``(N_r, N_t, N, N)`` array (or nested sequence).
    """
    truth = np.asarray(truth)
    if truth.shape != (estimate.N_r, estimate.N_t, estimate.params.N, estimate.params.N):
        raise ValueError(f"truth shape {truth.shape} does not match the estimate")
    per = np.empty((estimate.N_r, estimate.N_t))
    err_total = ref_total = 0.0
    for r in range(estimate.N_r):
        for t in range(estimate.N_t):
            diff = np.linalg.norm(estimate.block_dense(r, t) - truth[r, t]) ** 2
            ref = np.linalg.norm(truth[r, t]) ** 2
            per[r, t] = diff / ref
            err_total += diff
            ref_total += ref
    return per, err_total / ref_total


def true_blocks(params: AfdmParams, realization: MimoChannelRealization) -> np.ndarray:
    """Dense ``H_{r,t}`` for every antenna pair, shape ``(N_r, N_t, N, N)``."""
    prof = realization.profile
    mats = np.stack([subchannel_matrix(params, l, nu) for l, nu in zip(prof.delays, prof.dopplers)])
    return np.einsum("rtp,pij->rtij", realization.gains, mats)


@dataclass
class NmsePoint:
    snr_db: float
    nmse: float
    trials: int
    seed: int


def run_nmse(cfg: ExperimentConfig, trials: int | None = None) -> list[NmsePoint]:
    """Mean aggregate NMSE of EPA-DR per SNRd point, noisy pilot-plus-data frames."""
    tr = _Trial(cfg if cfg.csi_mode == "estimated" else _replace(cfg, csi_mode="estimated"))
    params = tr.params
    n_trials = trials or cfg.max_trials
    out = []
    for i, snr in enumerate(cfg.snr_db):
        N0 = noise_var(snr)
        layout = tr.layout(N0)
        vals = []
        for b in range(n_trials):
            rng = batch_rng(cfg.seed, i, b)
            real = sample_channel(cfg.profile, cfg.N_r, cfg.N_t, rng, params)
            bits = rng.integers(0, 2, size=(cfg.N_t, layout.n_data, tr.const.bits_per_symbol))
            data = tr.const.modulate(bits).reshape(cfg.N_t, layout.n_data)
            x = build_epa_frames(params, layout, data)
            y = transmit(params, [real], x[None])[0] + _awgn(rng, (cfg.N_r, params.N), N0)
            est = estimate_mimo(params, y, layout, cfg.zeta_multiplier * N0, tr.table)
            vals.append(nmse(est, true_blocks(params, real))[1])
        out.append(NmsePoint(float(snr), float(np.mean(vals)), n_trials, cfg.seed))
    return out


def _replace(cfg, **kw):
    from dataclasses import replace

    return replace(cfg, **kw)


def leakage_bound(
    params: AfdmParams, realization: MimoChannelRealization, layout: EpaLayout, r: int, t: int
) -> float:
    """Ground-truth NMSE bound for noiseless, pilots-only EPA-DR with zero threshold.

    Each path's entries inside its own delay block are reconstructed exactly;
    what remains is the leakage ``Lk`` (energy outside the own block) and the
    contamination ``c`` of the extracted pilot column (leakage plus the other
    pilots' out-of-band entries).  Propagating ``c`` along N-long diagonals
    with unit-modulus factors gives ``||R(c)||_F = sqrt(N) ||c||``, so
    ``NMSE <= (sqrt(N) ||c|| + ||Lk||_F)^2 / ||H||_F^2``.
    """
    N = params.N
    prof = realization.profile
    k_delay = offset_delays(params)
    m = np.arange(N)[:, None]
    band_cols = (m + params.band_offsets[None, :]) % N
    H = np.zeros((N, N), dtype=np.complex128)
    leak = np.zeros((N, N), dtype=np.complex128)
    for h, l, nu in zip(realization.gains[r, t], prof.delays, prof.dopplers):
        Hi = subchannel_matrix(params, l, nu)
        own = np.zeros_like(Hi)
        ks = np.flatnonzero(k_delay == l)
        rows = np.broadcast_to(m, (N, ks.size))
        own[rows, band_cols[:, ks]] = Hi[rows, band_cols[:, ks]]
        H += h * Hi
        leak += h * (Hi - own)
    p = layout.pilot_index(t + 1)
    rows = (p - params.band_offsets) % N
    c = leak[rows, p].copy()
    for t2 in range(realization.N_t):
        if t2 != t:
            p2 = layout.pilot_index(t2 + 1)
            for h, l, nu in zip(realization.gains[r, t2], prof.delays, prof.dopplers):
                c += h * subchannel_entries(params, l, nu, rows, p2)
    bound = (np.sqrt(N) * np.linalg.norm(c) + np.linalg.norm(leak)) ** 2
    return float(bound / np.linalg.norm(H) ** 2)


# --- diversity diagnostics -----------------------------------------------------


@dataclass(frozen=True)
class DiversityReport:
    snr_db: tuple[float, ...]
    ber: tuple[float, ...]
    slope: float
    intercept: float
    target: float | None = None

    def within(self, tol: float) -> bool:
        return self.target is not None and abs(self.slope - self.target) <= tol


def diversity_slope(points, window=(1e-5, 1e-2), target: float | None = None) -> DiversityReport:
    """Least-squares slope of ``-log10(BER)`` against ``SNR_dB / 10`` inside the BER window.

    Raises:
        ValueError: with fewer than two usable points.
    """
    pts = [(float(s), float(b)) for s, b in points if b > 0 and window[0] <= b <= window[1]]
    if len(pts) < 2:
        raise ValueError(f"need at least two BER points in {window}, got {len(pts)}")
    snr = np.array([s for s, _ in pts])
    ber = np.array([b for _, b in pts])
    slope, intercept = np.polyfit(snr / 10.0, -np.log10(ber), 1)
    return DiversityReport(tuple(snr), tuple(ber), float(slope), float(intercept), target)


def _require_integer(profile: DelayDopplerProfile) -> None:
    if not profile.is_integer:
        raise ValueError("Phi(x) analysis assumes integer Doppler shifts")


def build_phi(params: AfdmParams, profile: DelayDopplerProfile, x) -> np.ndarray:
    """``Phi(x) = [H_1 x, ..., H_P x]``, shape ``(N, P)``."""
    _require_integer(profile)
    x = np.asarray(x, dtype=np.complex128)
    return np.stack([subchannel_matrix(params, l, nu) @ x for l, nu in zip(profile.delays, profile.dopplers)], axis=1)


def pep_chernoff(params: AfdmParams, profile: DelayDopplerProfile, delta, N_r: int, N0: float) -> float:
    """Chernoff bound ``prod_l (1 + lambda_l^2 / (4 P N0))^(-N_r)`` on the pairwise error probability."""
    phi = build_phi(params, profile, delta)
    lam = np.linalg.svd(phi, compute_uv=False)
    with np.errstate(divide="ignore"):
        terms = 1.0 + lam**2 / (4 * profile.P * N0)
    return float(np.prod(terms ** (-float(N_r))))


def min_rank_exhaustive(params: AfdmParams, profile: DelayDopplerProfile, rtol: float = 1e-9) -> tuple[int, np.ndarray]:
    """Minimum rank of ``Phi(delta)`` over every nonzero BPSK difference vector.

    Enumerates all ``3^N - 1`` vectors with entries in ``{-2, 0, 2}``; returns
    the minimum rank and one minimizing ``delta``.
    """
    _require_integer(profile)
    N = params.N
    deltas = np.array(list(itertools.product((-2.0, 0.0, 2.0), repeat=N)))
    deltas = deltas[np.any(deltas != 0, axis=1)]
    mats = np.stack([subchannel_matrix(params, l, nu) for l, nu in zip(profile.delays, profile.dopplers)])
    phis = np.einsum("pij,bj->bip", mats, deltas)
    sv = np.linalg.svd(phis, compute_uv=False)
    ranks = np.sum(sv > rtol * np.maximum(sv[:, :1], 1e-300), axis=1)
    i = int(np.argmin(ranks))
    return int(ranks[i]), deltas[i]


def min_rank_pair(params: AfdmParams, profile: DelayDopplerProfile) -> np.ndarray:
    return min_rank_exhaustive(params, profile)[1]


__all__ = [
    "BerPoint",
    "BerResult",
    "ChannelBatch",
    "DiversityReport",
    "ExperimentConfig",
    "NmsePoint",
    "batch_rng",
    "build_phi",
    "diversity_slope",
    "leakage_bound",
    "min_rank_exhaustive",
    "nmse",
    "noise_var",
    "pep_chernoff",
    "run_ber",
    "run_nmse",
    "system_from_bands",
    "transmit",
    "true_blocks",
]
