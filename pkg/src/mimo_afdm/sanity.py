"""Fast invariant suite behind ``mimo-afdm sanity``."""

from __future__ import annotations

from dataclasses import dataclass
import time

import numpy as np

from .chanest import build_factor_table, estimate_mimo, transform_factor
from .channel import apply_time_domain, fixed_realization, propagate, subchannel_matrix
from .daft import daft, daft_matrix, idaft, make_params
from .framing import EpaLayout, build_epa_frames
from .harness import nmse, true_blocks


@dataclass(frozen=True)
class Check:
    module: str
    name: str
    ok: bool
    detail: str


def _unitarity(N: int) -> Check:
    A = daft_matrix(make_params(N, 1, 1, 0) if N >= 6 else make_params(N, 0, 0, 0))
    err = np.max(np.abs(A @ A.conj().T - np.eye(N)))
    return Check("daft-core", f"unitarity N={N}", err < 1e-10, f"max |AA^H - I| = {err:.1e}")


def _fast_vs_dense(N: int, rng) -> Check:
    p = make_params(N, 1, 1, 0)
    A = daft_matrix(p)
    x = rng.standard_normal(N) + 1j * rng.standard_normal(N)
    err = max(np.max(np.abs(idaft(p, x) - A.conj().T @ x)), np.max(np.abs(daft(p, x) - A @ x)))
    return Check("daft-core", f"fast transform N={N}", err < 1e-10, f"max error {err:.1e}")


def _closed_form(N: int, rng) -> Check:
    p = make_params(N, 2, 2, 1)
    A = daft_matrix(p)
    err = 0.0
    for _ in range(4):
        l = int(rng.integers(0, p.l_max + 1))
        nu = float(rng.uniform(-p.alpha_max - 0.5, p.alpha_max + 0.5))
        real = fixed_realization([(l, nu)])
        eye = np.eye(N, dtype=np.complex128)
        td = np.stack([apply_time_domain(p, real, 0, 0, col) for col in eye.T], axis=1)
        err = max(err, np.max(np.abs(subchannel_matrix(p, l, nu) - A @ td @ A.conj().T)))
    return Check("channel-sim", f"closed form N={N}", err < 1e-10, f"max entry error {err:.1e}")


def _factor_oracle(params, table, corrupt: bool) -> Check:
    """Every table entry against the direct ratio of subchannel entries."""
    from .channel import subchannel_entries

    N = params.N
    err = 0.0
    entries = dict(table.entries)
    if corrupt:
        key = next(iter(entries))
        entries[key] = entries[key] * np.exp(0.1j)
    for (d, case, raw), v in entries.items():
        l = int(table.delays[list(table.offsets).index(d)])
        if case == "row":
            m, mp = N - 1, (N - 1 + d) % N
        elif case == "col":
            m, mp = (N - 1 - d) % N, N - 1
        else:
            m, mp = (0, raw) if raw >= 0 else (-raw, 0)
            if max(m, mp) >= N - 1:
                continue  # wrapped entry of d = +-1: no interior coordinate exists
        nu = 0.3
        ratio = subchannel_entries(params, l, nu, (m + 1) % N, (mp + 1) % N) / subchannel_entries(
            params, l, nu, m, mp
        )
        err = max(err, abs(ratio - v))
    ok = err < 1e-9 and len(entries) == 4 * params.L + 1
    return Check("chanest", f"factor table oracle N={N}", ok, f"{len(entries)} entries, max error {err:.1e}")


def _reconstruction(N: int, rng) -> Check:
    p = make_params(N, 2, 2, 1)
    err = 0.0
    for l in range(p.l_max + 1):
        nu = float(rng.uniform(-2.4, 2.4))
        H = subchannel_matrix(p, l, nu)
        col = int(rng.integers(0, N))
        vals = H[:, col]
        rec = np.zeros_like(H)
        rec[:, col] = vals
        for i in range(N - 1):
            rows = (np.arange(N) + i) % N
            c = (col + i) % N
            vals = transform_factor(p, l, rows, np.full(N, c)) * vals
            rec[(rows + 1) % N, (c + 1) % N] = vals
        err = max(err, np.max(np.abs(rec - H)))
    return Check("chanest", f"diagonal reconstruction N={N}", err < 1e-9, f"max entry error {err:.1e}")


def _epa_exact(N: int, rng) -> Check:
    p = make_params(N, 2, 2, 1)
    real = fixed_realization(
        [(0, 0.0), (0, 2.0), (1, -1.0), (2, 1.0)],
        gains=(rng.standard_normal(16) + 1j * rng.standard_normal(16)) / 2,
        N_r=2,
        N_t=2,
    )
    layout = EpaLayout.for_params(p, 2, 10.0)
    x = np.zeros((2, N), dtype=np.complex128)
    x[0, layout.pilot_index(1)] = x[1, layout.pilot_index(2)] = layout.pilot_amplitude
    est = estimate_mimo(p, propagate(p, real, x), layout, 0.0, build_factor_table(p))
    per, _ = nmse(est, true_blocks(p, real))
    worst = float(per.max())
    cap = (p.L + 1) * (N - 1) * 4
    ok = worst < 1e-18 and est.multiplications <= cap
    return Check("chanest", f"EPA-DR exactness 2x2 N={N}", ok, f"worst block NMSE {worst:.1e}, {est.multiplications} mults")


def _duality(N: int, rng) -> Check:
    """Time-domain pipeline equals the DAFT-domain matrix model."""
    p = make_params(N, 2, 2, 1)
    real = fixed_realization([(0, 0.4), (1, -1.2), (2, 2.0)], gains=[0.8, 0.5j, -0.3])
    x = rng.standard_normal((1, N)) + 1j * rng.standard_normal((1, N))
    y = propagate(p, real, x)
    H = sum(g * subchannel_matrix(p, l, nu) for g, l, nu in zip(real.gains[0, 0], real.profile.delays, real.profile.dopplers))
    err = np.max(np.abs(y[0] - H @ x[0]))
    return Check("channel-sim", f"pipeline duality N={N}", err < 1e-10, f"max error {err:.1e}")


def _pilot_frames_layout(N: int) -> Check:
    p = make_params(N, 2, 2, 1)
    lay = EpaLayout.for_params(p, 2, 1.0)
    x = build_epa_frames(p, lay, np.ones((2, lay.n_data)))
    ok = x[0, lay.pilot_index(1)] == 1.0 and np.all(x[:, lay.pilot_index(2) + 1 : lay.data_start] == 0)
    return Check("framing", f"EPA layout N={N}", bool(ok), f"data starts at {lay.data_start}")


def run_sanity(corrupt_factor: bool = False, quick: bool = False, seed: int = 2024) -> list[Check]:
    rng = np.random.default_rng(seed)
    sizes = (64,) if quick else (64, 1024)
    out = [_unitarity(8), _unitarity(64)]
    out += [_fast_vs_dense(N, rng) for N in (8, 64)]
    out.append(_closed_form(64, rng))
    out.append(_duality(64, rng))
    out.append(_pilot_frames_layout(1024))
    for N in sizes:
        p = make_params(N, 2, 2, 1)
        out.append(_factor_oracle(p, build_factor_table(p), corrupt_factor))
        out.append(_reconstruction(N, rng))
    out.append(_epa_exact(256 if quick else 1024, rng))
    return out


if __name__ == "__main__":
    t0 = time.perf_counter()
    for c in run_sanity():
        print(c)
    print(f"{time.perf_counter() - t0:.1f} s")
