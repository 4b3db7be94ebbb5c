"""Discrete affine Fourier transform (DAFT) and AFDM frame parameters.

The DAFT matrix is ``A = diag(chirp(c2)) @ F @ diag(chirp(c1))`` with ``F`` the
unitary DFT.  ``idaft`` maps DAFT-domain symbols to time-domain samples
(``A^H x``) and ``daft`` is its inverse; both run in O(N log N) via numpy FFTs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MAX_DENSE_N = 4096


@dataclass(frozen=True)
class AfdmParams:
    """Frame size, chirp parameters and delay/Doppler bounds.

    ``L + 1`` is the width of the large-value band of every effective channel
    matrix, ``spacing`` is the width of one delay block (``2(alpha_max + k_nu) + 1``).
    """

    N: int
    c1: float
    c2: float
    l_max: int
    alpha_max: int
    k_nu: int = 0

    @property
    def spacing(self) -> int:
        return 2 * (self.alpha_max + self.k_nu) + 1

    @property
    def L(self) -> int:
        return (self.l_max + 1) * self.spacing - 1

    @property
    def guard(self) -> int:
        """Half-width of a delay block, ``alpha_max + k_nu``."""
        return self.alpha_max + self.k_nu

    @property
    def band_offsets(self) -> np.ndarray:
        """Column offsets ``m' - m`` covered by the band, ascending."""
        return np.arange(-self.guard, self.L - self.guard + 1)

    @property
    def underspread(self) -> bool:
        return self.L + 1 < self.N


def make_params(
    N: int,
    l_max: int,
    alpha_max: int,
    k_nu: int = 0,
    c2: float | None = None,
) -> AfdmParams:
    """Build parameters with the full-diversity chirp slope.

    ``c1 = (2(alpha_max + k_nu) + 1) / (2N)``; ``c2`` defaults to ``1/(pi N^2)``.

    Raises:
        ValueError: if N is below ``(l_max+1)(2 alpha_max+1)``, N is odd, or
            ``c2`` is outside ``(0, 1/(2N))``.
    """
    if N < 1 or l_max < 0 or alpha_max < 0 or k_nu < 0:
        raise ValueError("N must be positive and l_max, alpha_max, k_nu non-negative")
    bound = (l_max + 1) * (2 * alpha_max + 1)
    if N < bound:
        raise ValueError(f"N={N} below the subcarrier bound (l_max+1)(2*alpha_max+1)={bound}")
    # the circular channel model needs c1*N^2 to be an integer; c1*N^2 = (2a+1)N/2
    if N % 2:
        raise ValueError(f"N={N} must be even for the cyclic-prefix channel model")
    if c2 is None:
        c2 = 1.0 / (np.pi * N * N)
    if not 0.0 < c2 < 1.0 / (2 * N):
        raise ValueError(f"c2={c2} must lie in (0, 1/(2N))")
    c1 = (2 * (alpha_max + k_nu) + 1) / (2 * N)
    return AfdmParams(N=N, c1=c1, c2=float(c2), l_max=l_max, alpha_max=alpha_max, k_nu=k_nu)


def chirp_diag(c: float, N: int) -> np.ndarray:
    """Diagonal of ``Lambda_c``: ``exp(-j 2 pi c n^2)`` for ``n = 0..N-1``."""
    n = np.arange(N, dtype=np.float64)
    phase = np.mod(c * n * n, 1.0)
    return np.exp(-2j * np.pi * phase)


def _check_length(params: AfdmParams, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.complex128)
    if x.shape[-1] != params.N:
        raise ValueError(f"frame length {x.shape[-1]} != N={params.N}")
    return x


def idaft(params: AfdmParams, x: np.ndarray) -> np.ndarray:
    """DAFT domain -> time domain, ``s = A^H x``.  Works along the last axis."""
    x = _check_length(params, x)
    lam1 = chirp_diag(params.c1, params.N)
    lam2 = chirp_diag(params.c2, params.N)
    return lam1.conj() * np.fft.ifft(lam2.conj() * x, norm="ortho")


def daft(params: AfdmParams, d: np.ndarray) -> np.ndarray:
    """Time domain -> DAFT domain, ``y = A d``.  Works along the last axis."""
    d = _check_length(params, d)
    lam1 = chirp_diag(params.c1, params.N)
    lam2 = chirp_diag(params.c2, params.N)
    return lam2 * np.fft.fft(lam1 * d, norm="ortho")


def dft_matrix(N: int) -> np.ndarray:
    n = np.arange(N)
    return np.exp(-2j * np.pi * np.mod(np.outer(n, n), N) / N) / np.sqrt(N)


def daft_matrix(params: AfdmParams) -> np.ndarray:
    """Dense unitary DAFT matrix ``A``; only for N up to 4096."""
    N = params.N
    if N > MAX_DENSE_N:
        raise ValueError(f"dense DAFT matrix refused for N={N} > {MAX_DENSE_N}")
    lam1 = chirp_diag(params.c1, N)
    lam2 = chirp_diag(params.c2, N)
    return lam2[:, None] * dft_matrix(N) * lam1[None, :]
