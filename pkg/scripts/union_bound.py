"""Exact ML union bound on BPSK BER for the small-N diversity configs.

For every nonzero difference vector ``delta`` (entries in {-2, 0, 2}) the
Rayleigh-averaged pairwise error probability is evaluated in Craig form,
``(1/pi) int_0^{pi/2} prod_i (1 + lambda_i / (4 P N0 sin^2 t))^{-N_r} dt``,
where ``lambda_i`` are the eigenvalues of ``Psi^H Psi`` with
``Psi = [H_p delta_t]``.  The bit-error weight is ``2^{-s} s / K``.

Usage:
    python scripts/union_bound.py configs/fig5_diversity_n6.yaml [--snr 10 12 14]
"""

import argparse
import itertools

import numpy as np

from mimo_afdm.channel import subchannel_matrix
from mimo_afdm.config import experiments, load_config


def union_bound(params, delays, dopplers, N_t, N_r, snr_db, n_theta=200):
    N = params.N
    mats = np.stack([subchannel_matrix(params, l, nu) for l, nu in zip(delays, dopplers)])
    P, K = len(delays), N * N_t
    d = np.array(list(itertools.product((-2.0, 0.0, 2.0), repeat=K)))
    d = d[np.any(d != 0, axis=1)]
    s = np.count_nonzero(d, axis=1)
    weight = 2.0 ** (-s) * s / K
    psi = np.einsum("pij,btj->bitp", mats, d.reshape(-1, N_t, N)).reshape(len(d), N, N_t * P)
    lam = np.linalg.eigvalsh(psi.conj().transpose(0, 2, 1) @ psi) / P
    theta = (np.arange(n_theta) + 0.5) * (np.pi / 2) / n_theta
    out = []
    for snr in snr_db:
        N0 = 10 ** (-snr / 10)
        f = np.ones((len(d), n_theta))
        # one eigenvalue at a time keeps memory at (differences x angles)
        for i in range(lam.shape[1]):
            f *= (1 + lam[:, i, None] / (4 * N0 * np.sin(theta) ** 2)) ** (-N_r)
        out.append(float(weight @ (f.mean(axis=1) / 2)))
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("config")
    ap.add_argument("--snr", type=float, nargs="+", help="override the SNR grid (dB)")
    args = ap.parse_args()
    for cfg in experiments(load_config(args.config)):
        if cfg.profile.dopplers is None or cfg.N * cfg.N_t > 12:
            print(f"{cfg.name}: skipped (needs fixed Dopplers and N*N_t <= 12)")
            continue
        snr = args.snr or cfg.snr_db
        ub = union_bound(cfg.params, cfg.profile.delays, cfg.profile.dopplers, cfg.N_t, cfg.N_r, snr)
        slopes = [np.log10(ub[i] / ub[i + 1]) / ((snr[i + 1] - snr[i]) / 10) for i in range(len(ub) - 1)]
        print(cfg.name)
        print("  snr_db: " + " ".join(f"{x:g}" for x in snr))
        print("  bound:  " + " ".join(f"{x:.3g}" for x in ub))
        print("  local slopes: " + " ".join(f"{x:.2f}" for x in slopes))


if __name__ == "__main__":
    main()
