"""Doubly selective channels: sampling, time-domain application, DAFT-domain matrices."""

from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np

from .daft import MAX_DENSE_N, AfdmParams, daft, idaft


def split_doppler(nu: float) -> tuple[int, float]:
    """Integer/fractional split with the fractional part in ``(-1/2, 1/2]``."""
    alpha = math.ceil(nu - 0.5)
    return alpha, nu - alpha


@dataclass(frozen=True)
class Path:
    gain: complex
    delay: int
    doppler: float

    @property
    def alpha(self) -> int:
        return split_doppler(self.doppler)[0]

    @property
    def beta(self) -> float:
        return split_doppler(self.doppler)[1]


@dataclass(frozen=True)
class DelayDopplerProfile:
    delays: tuple[int, ...]
    dopplers: tuple[float, ...]

    def __post_init__(self):
        if len(self.delays) != len(self.dopplers) or not self.delays:
            raise ValueError("profile needs matching, non-empty delay and Doppler lists")

    @property
    def P(self) -> int:
        return len(self.delays)

    @property
    def is_integer(self) -> bool:
        return all(float(nu).is_integer() for nu in self.dopplers)

    def paths_per_delay(self) -> dict[int, int]:
        counts: dict[int, int] = {}
        for l in self.delays:
            counts[l] = counts.get(l, 0) + 1
        return counts


@dataclass(frozen=True)
class ProfileSpec:
    """How to draw a profile: fixed Dopplers, or Jakes ``nu_max cos(theta)``.

    ``gains`` is ``"rayleigh"`` (CN(0, 1/P) per antenna pair) or ``"unit"``.
    ``integer_doppler`` rounds Jakes draws to the nearest integer.
    """

    delays: tuple[int, ...]
    dopplers: tuple[float, ...] | None = None
    nu_max: float = 0.0
    integer_doppler: bool = False
    gains: str = "rayleigh"

    def __post_init__(self):
        if not self.delays:
            raise ValueError("profile needs at least one path")
        if self.dopplers is not None and len(self.dopplers) != len(self.delays):
            raise ValueError("dopplers and delays differ in length")
        if self.gains not in ("rayleigh", "unit"):
            raise ValueError(f"unknown gain model {self.gains!r}")

    @property
    def P(self) -> int:
        return len(self.delays)


@dataclass(frozen=True)
class MimoChannelRealization:
    """One delay-Doppler profile shared by all antenna pairs, per-pair gains.

    ``gains[r, t, i]`` is the gain of path ``i`` from transmit antenna ``t`` to
    receive antenna ``r`` (zero-based).
    """

    profile: DelayDopplerProfile
    gains: np.ndarray = field(repr=False)

    @property
    def N_r(self) -> int:
        return self.gains.shape[0]

    @property
    def N_t(self) -> int:
        return self.gains.shape[1]

    def paths(self, r: int, t: int) -> list[Path]:
        return [
            Path(complex(g), int(l), float(nu))
            for g, l, nu in zip(self.gains[r, t], self.profile.delays, self.profile.dopplers)
        ]


def _check_profile(params: AfdmParams | None, delays, dopplers) -> None:
    if any(l < 0 for l in delays):
        raise ValueError("negative delay")
    if params is None:
        return
    if any(l > params.l_max for l in delays):
        raise ValueError(f"delay exceeds l_max={params.l_max}")
    if any(abs(nu) > params.alpha_max + 0.5 for nu in dopplers):
        raise ValueError(f"|doppler| exceeds alpha_max + 1/2 = {params.alpha_max + 0.5}")


def sample_channel(
    spec: ProfileSpec,
    N_r: int,
    N_t: int,
    rng: np.random.Generator,
    params: AfdmParams | None = None,
) -> MimoChannelRealization:
    """Draw one realization.  Passing ``params`` enables the delay/Doppler range checks."""
    P = spec.P
    if spec.dopplers is not None:
        dopplers = tuple(float(nu) for nu in spec.dopplers)
    else:
        theta = rng.uniform(-np.pi, np.pi, size=P)
        nus = spec.nu_max * np.cos(theta)
        if spec.integer_doppler:
            nus = np.array([split_doppler(nu)[0] for nu in nus], dtype=float)
        dopplers = tuple(float(nu) for nu in nus)
    delays = tuple(int(l) for l in spec.delays)
    _check_profile(params, delays, dopplers)
    if spec.gains == "unit":
        gains = np.ones((N_r, N_t, P), dtype=np.complex128)
    else:
        shape = (N_r, N_t, P)
        gains = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * np.sqrt(0.5 / P)
    return MimoChannelRealization(DelayDopplerProfile(delays, dopplers), gains)


def fixed_realization(paths: list[tuple[int, float]], gains=None, N_r: int = 1, N_t: int = 1):
    """Realization from explicit ``(delay, doppler)`` pairs; unit gains by default."""
    delays = tuple(int(l) for l, _ in paths)
    dopplers = tuple(float(nu) for _, nu in paths)
    if gains is None:
        gains = np.ones((N_r, N_t, len(paths)), dtype=np.complex128)
    gains = np.asarray(gains, dtype=np.complex128).reshape(N_r, N_t, len(paths))
    return MimoChannelRealization(DelayDopplerProfile(delays, dopplers), gains)


def doppler_phasor(N: int, nu) -> np.ndarray:
    """``exp(-j 2 pi nu n / N)``; broadcasts over a trailing axis of length N."""
    n = np.arange(N)
    nu = np.asarray(nu, dtype=np.float64)[..., None]
    return np.exp(-2j * np.pi * np.mod(nu * n / N, 1.0))


def apply_time_domain(
    params: AfdmParams, realization: MimoChannelRealization, r: int, t: int, s: np.ndarray
) -> np.ndarray:
    """Noiseless time-domain channel ``sum_i h_i exp(-j2pi nu_i n/N) s[(n - l_i) mod N]``."""
    s = np.asarray(s, dtype=np.complex128)
    if s.shape[-1] != params.N:
        raise ValueError(f"frame length {s.shape[-1]} != N={params.N}")
    out = np.zeros_like(s)
    prof = realization.profile
    for h, l, nu in zip(realization.gains[r, t], prof.delays, prof.dopplers):
        out += h * doppler_phasor(params.N, nu) * np.roll(s, l, axis=-1)
    return out


def propagate(params: AfdmParams, realization: MimoChannelRealization, x: np.ndarray) -> np.ndarray:
    """DAFT-domain frames ``x[t]`` through the full pipeline to noiseless ``y[r]``."""
    x = np.asarray(x, dtype=np.complex128)
    if x.shape != (realization.N_t, params.N):
        raise ValueError(f"expected frames of shape {(realization.N_t, params.N)}, got {x.shape}")
    s = idaft(params, x)
    d = np.zeros((realization.N_r, params.N), dtype=np.complex128)
    for r in range(realization.N_r):
        for t in range(realization.N_t):
            d[r] += apply_time_domain(params, realization, r, t, s[t])
    return daft(params, d)


def index_indicator(params: AfdmParams, l: int, alpha: int) -> int:
    """Row-0 central-point column of a path with delay ``l`` and integer Doppler ``alpha``."""
    return (alpha + params.spacing * l) % params.N


def subchannel_entries(params: AfdmParams, l: int, nu: float, m, mp) -> np.ndarray:
    """Closed-form entries ``H_i[m, m']`` of the DAFT-domain subchannel matrix.

    ``(1/N) * C(l, m, m') * F(l, nu, m, m')`` where ``C`` is the chirp phase and
    ``F = sum_n exp(-j 2pi (m - m' + nu + 2N c1 l) n / N)`` the spreading factor.
    """
    N = params.N
    m = np.asarray(m, dtype=np.int64)
    mp = np.asarray(mp, dtype=np.int64)
    alpha, beta = split_doppler(nu)
    ind = alpha + 2 * N * params.c1 * l
    if abs(ind - round(ind)) < 1e-9:
        # integer shift reduced mod N keeps exact zeros off the peak when beta == 0
        x = np.mod(m - mp + int(round(ind)), N) + beta
    else:
        x = np.mod(m - mp + ind, N) + beta
    c_phase = (N * params.c1 * l * l - mp * l) / N + params.c2 * (mp * mp - m * m)
    C = np.exp(2j * np.pi * np.mod(c_phase, 1.0))
    num = 1.0 - np.exp(-2j * np.pi * beta)
    den = 1.0 - np.exp(-2j * np.pi * x / N)
    peak = np.abs(den) < 1e-13
    with np.errstate(divide="ignore", invalid="ignore"):
        F = np.where(peak, N, num / np.where(peak, 1.0, den))
    return C * F / N


def subchannel_matrix(params: AfdmParams, l: int, nu: float) -> np.ndarray:
    """Dense DAFT-domain subchannel matrix ``A Delta_nu Pi^l A^H`` via its closed form."""
    N = params.N
    if N > MAX_DENSE_N:
        raise ValueError(f"dense matrix refused for N={N} > {MAX_DENSE_N}")
    n = np.arange(N)
    return subchannel_entries(params, l, nu, n[:, None], n[None, :])


def subchannel_band(params: AfdmParams, l: int, nu: float) -> np.ndarray:
    """Band storage of one subchannel matrix: ``band[m, k] = H[m, (m + d_k) mod N]``."""
    N = params.N
    m = np.arange(N)[:, None]
    mp = np.mod(m + params.band_offsets[None, :], N)
    return subchannel_entries(params, l, nu, m, mp)


def effective_matrix(params: AfdmParams, realization: MimoChannelRealization, r: int, t: int) -> np.ndarray:
    prof = realization.profile
    H = np.zeros((params.N, params.N), dtype=np.complex128)
    for h, l, nu in zip(realization.gains[r, t], prof.delays, prof.dopplers):
        H += h * subchannel_matrix(params, l, nu)
    return H


def effective_band(params: AfdmParams, realization: MimoChannelRealization) -> np.ndarray:
    """True channel in band storage, shape ``(N_r, N_t, N, L+1)``."""
    prof = realization.profile
    per_path = np.stack([subchannel_band(params, l, nu) for l, nu in zip(prof.delays, prof.dopplers)])
    return np.einsum("rtp,pmk->rtmk", realization.gains, per_path)


def assemble_mimo(params: AfdmParams, realization: MimoChannelRealization) -> np.ndarray:
    """Block matrix of shape ``(N N_r, N N_t)`` with block ``(r, t) = H_{r,t}``."""
    N = params.N
    if N * max(realization.N_r, realization.N_t) > MAX_DENSE_N * 2:
        raise ValueError("MIMO matrix too large for dense assembly")
    prof = realization.profile
    per_path = np.stack([subchannel_matrix(params, l, nu) for l, nu in zip(prof.delays, prof.dopplers)])
    blocks = np.einsum("rtp,pij->rtij", realization.gains, per_path)
    return blocks.transpose(0, 2, 1, 3).reshape(realization.N_r * N, realization.N_t * N)
