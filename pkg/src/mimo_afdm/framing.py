"""Pilot/guard/data arrangement, pilot receive windows, overheads and AFDMA plans."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .daft import AfdmParams


@dataclass(frozen=True)
class EpaLayout:
    """Embedded-pilot layout: one pilot per transmit antenna, zero guards, then data.

    Pilot of antenna ``t`` (1-based) sits at ``(L+1) t - 1``; data fills
    ``[(L+1) N_t + L, N-1]``.
    """

    N: int
    L: int
    N_t: int
    pilot_amplitude: float

    def __post_init__(self):
        if self.N_t < 1:
            raise ValueError("need at least one transmit antenna")
        if self.pilot_amplitude <= 0:
            raise ValueError("pilot amplitude must be positive")
        if self.data_start >= self.N:
            raise ValueError(
                f"pilots and guards need {self.data_start} slots, frame has only N={self.N}"
            )

    @classmethod
    def for_params(cls, params: AfdmParams, N_t: int, pilot_amplitude: float) -> "EpaLayout":
        return cls(params.N, params.L, N_t, pilot_amplitude)

    def pilot_index(self, t: int) -> int:
        if not 1 <= t <= self.N_t:
            raise ValueError(f"transmit antenna {t} outside 1..{self.N_t}")
        return (self.L + 1) * t - 1

    @property
    def pilot_indices(self) -> list[int]:
        return [self.pilot_index(t) for t in range(1, self.N_t + 1)]

    @property
    def data_start(self) -> int:
        return (self.L + 1) * self.N_t + self.L

    @property
    def n_data(self) -> int:
        return self.N - self.data_start

    @property
    def data_slots(self) -> np.ndarray:
        return np.arange(self.data_start, self.N)


def pilot_amplitude(snrp_db: float, N0: float) -> float:
    """Real pilot with energy ``N0 * 10^(SNRp/10)``."""
    return float(np.sqrt(N0 * 10.0 ** (snrp_db / 10.0)))


def build_epa_frames(params: AfdmParams, layout: EpaLayout, data) -> np.ndarray:
    """Per-antenna DAFT-domain frames, shape ``(N_t, N)``."""
    if layout.N != params.N or layout.L != params.L:
        raise ValueError("layout does not match params")
    data = np.asarray(data, dtype=np.complex128)
    if data.shape != (layout.N_t, layout.n_data):
        raise ValueError(f"data must have shape {(layout.N_t, layout.n_data)}, got {data.shape}")
    x = np.zeros((layout.N_t, params.N), dtype=np.complex128)
    for t in range(1, layout.N_t + 1):
        x[t - 1, layout.pilot_index(t)] = layout.pilot_amplitude
    x[:, layout.data_start :] = data
    return x


def pilot_rx_range(params: AfdmParams, t: int, N_t: int | None = None) -> np.ndarray:
    """Received rows carrying the band of pilot ``t`` (1-based), ascending, mod N."""
    if t < 1 or (N_t is not None and t > N_t):
        raise ValueError(f"transmit antenna {t} out of range")
    start = params.guard + (params.L + 1) * (t - 1)
    return np.arange(start, start + params.L + 1) % params.N


def pilot_rx_rows(params: AfdmParams, N_t: int) -> np.ndarray:
    """All rows reserved for channel estimation, ``[g, g + (L+1) N_t - 1]`` mod N."""
    return np.concatenate([pilot_rx_range(params, t) for t in range(1, N_t + 1)])


def overhead_mimo_afdm(params: AfdmParams, N_t: int) -> int:
    return (N_t + 1) * (params.l_max + 1) * params.spacing - 1


def overhead_mimo_otfs(l_max: int, alpha_max: int, k_nu: int, N_t: int) -> int:
    return ((N_t + 1) * l_max + N_t) * (4 * (alpha_max + k_nu) + 1)


# --- AFDMA ------------------------------------------------------------------

PILOT = "pilot"
GUARD = "guard"
DATA = "data"


@dataclass(frozen=True)
class AfdmaPlan:
    """Slot assignment for one AFDMA frame.

    ``data_blocks[u]`` lists the data slots ``D_u`` of user ``u`` (0-based);
    ``pilots`` maps a pilot slot to its owner (BS antenna index for downlink,
    user index for uplink).  Every other slot is a guard.  ``blocks`` holds the
    uplink resource blocks ``B_u`` as ``(start, size)``.
    """

    direction: str
    N: int
    L_users: tuple[int, ...]
    L_max: int
    N_BS: int
    data_blocks: tuple[tuple[int, ...], ...]
    pilots: dict[int, int] = field(default_factory=dict)
    blocks: tuple[tuple[int, int], ...] = ()

    @property
    def overhead(self) -> int:
        """Non-data slots for downlink; guard slots per user summed for uplink."""
        if self.direction == "downlink":
            return self.N - sum(len(d) for d in self.data_blocks)
        return sum(2 * L for L in self.L_users)

    def roles(self) -> list[tuple[str, int]]:
        """``(role, owner)`` per slot; owner is -1 for guards."""
        out = [(GUARD, -1)] * self.N
        for slot, owner in self.pilots.items():
            out[slot] = (PILOT, owner)
        for u, slots in enumerate(self.data_blocks):
            for s in slots:
                out[s] = (DATA, u)
        return out


def overhead_downlink(L_users, L_max: int, N_BS: int) -> int:
    return (N_BS + 1) * L_max + N_BS + sum(L_users[1:])


def plan_afdma_downlink(N: int, users, L_max: int, N_BS: int) -> AfdmaPlan:
    """Downlink plan: EPA pilot region for ``N_BS`` antennas, then ``D_1, G, D_2, ...``.

    ``users`` is a list of ``(L_u, demand)`` sorted by ``L_u``.  Guards between
    consecutive data blocks are ``L_u`` wide (the larger neighbour); capacity
    left over by the demands is appended as trailing guard.
    """
    L_users = tuple(int(L) for L, _ in users)
    demands = [int(d) for _, d in users]
    if not users:
        raise ValueError("no users")
    if list(L_users) != sorted(L_users):
        raise ValueError("users must be sorted by L_u")
    if L_users[-1] > L_max:
        raise ValueError("L_max smaller than the largest user band")
    if any(d < 1 for d in demands):
        raise ValueError("every user needs a positive demand")
    O = overhead_downlink(L_users, L_max, N_BS)
    if sum(demands) > N - O:
        raise ValueError(f"demands {sum(demands)} exceed capacity N - O = {N - O}")
    pilots = {(L_max + 1) * b - 1: b - 1 for b in range(1, N_BS + 1)}
    pos = (L_max + 1) * N_BS + L_max
    blocks = []
    for u, demand in enumerate(demands):
        if u > 0:
            pos += L_users[u]
        blocks.append(tuple(range(pos, pos + demand)))
        pos += demand
    return AfdmaPlan("downlink", N, L_users, L_max, N_BS, tuple(blocks), pilots)


def plan_afdma_uplink(N: int, users, N_BS: int = 1) -> AfdmaPlan:
    """Uplink plan: ``B_u`` of size ``demand`` laid out as ``[L_u guard][pilot][L_u guard][D_u]``.

    Block sizes must sum to N and each block needs room for ``2 L_u + 1`` slots
    plus at least one data slot.
    """
    L_users = tuple(int(L) for L, _ in users)
    sizes = [int(d) for _, d in users]
    if not users:
        raise ValueError("no users")
    if sum(sizes) != N:
        raise ValueError(f"resource blocks cover {sum(sizes)} slots, frame has {N}")
    pilots: dict[int, int] = {}
    data_blocks = []
    blocks = []
    start = 0
    for u, (L, size) in enumerate(zip(L_users, sizes)):
        if size < 2 * L + 2:
            raise ValueError(f"block of user {u} ({size} slots) too small for L_u={L}")
        pilots[start + L] = u
        data_blocks.append(tuple(range(start + 2 * L + 1, start + size)))
        blocks.append((start, size))
        start += size
    return AfdmaPlan("uplink", N, L_users, max(L_users), N_BS, tuple(data_blocks), pilots, tuple(blocks))


def validate_plan(plan: AfdmaPlan, guard: int | None = None) -> list[str]:
    """Independent occupancy scan; returns a list of violations (empty when valid).

    Re-derives slot occupancy from the raw index lists (collisions), checks the
    guard minima around pilots and data blocks cyclically, and, when the common
    half block width ``guard`` is known, checks that each user's received
    footprint ``[first - L_u + guard, last + guard]`` is free of foreign symbols.
    """
    N = plan.N
    problems = []
    owners: list[list[str]] = [[] for _ in range(N)]
    for slot, b in plan.pilots.items():
        if not 0 <= slot < N:
            problems.append(f"pilot slot {slot} outside frame")
            continue
        owners[slot].append(f"pilot{b}")
    for u, slots in enumerate(plan.data_blocks):
        for s in slots:
            if not 0 <= s < N:
                problems.append(f"data slot {s} of user {u} outside frame")
                continue
            owners[s].append(f"data{u}")
    for s, who in enumerate(owners):
        if len(who) > 1:
            problems.append(f"slot {s} collision: {who}")
    occupied = np.array([bool(w) for w in owners])

    def free(lo: int, hi: int) -> bool:
        return not any(occupied[i % N] for i in range(lo, hi + 1))

    L_users = plan.L_users
    if plan.direction == "downlink":
        pilot_guard = max(L_users)
        for p in plan.pilots:
            if not (free(p - pilot_guard, p - 1) and free(p + 1, p + pilot_guard)):
                problems.append(f"pilot {p} lacks {pilot_guard}-slot guards")
        if sorted(L_users) != list(L_users):
            problems.append("downlink users not sorted by L_u")
        if sum(len(d) for d in plan.data_blocks) + overhead_downlink(L_users, plan.L_max, plan.N_BS) > N:
            problems.append("data blocks exceed N - O_downlink")
    else:
        for u, (start, size) in enumerate(plan.blocks):
            for other, (s2, z2) in enumerate(plan.blocks):
                if other != u and max(start, s2) < min(start + size, s2 + z2):
                    problems.append(f"blocks {u} and {other} overlap")
            mine = [s for s, who in enumerate(owners) if f"data{u}" in who or f"pilot{u}" in who]
            if any(not start <= s < start + size for s in mine):
                problems.append(f"user {u} has symbols outside its block")
        if sum(size for _, size in plan.blocks) != N:
            problems.append("uplink blocks do not partition the frame")
        for p, u in plan.pilots.items():
            L = L_users[u]
            if not (free(p - L, p - 1) and free(p + 1, p + L)):
                problems.append(f"pilot of user {u} lacks {L}-slot guards")
    for u, slots in enumerate(plan.data_blocks):
        if not slots:
            problems.append(f"user {u} has an empty data block")
            continue
        if list(slots) != list(range(slots[0], slots[0] + len(slots))):
            problems.append(f"data block of user {u} not contiguous")
        L = L_users[u]
        first, last = slots[0], slots[-1]
        if plan.direction == "downlink" and not (free(first - L, first - 1) and free(last + 1, last + L)):
            problems.append(f"data block of user {u} lacks {L}-slot guards")
    if guard is not None:
        problems += _footprint_conflicts(plan, owners, guard)
    return problems


def _footprint_conflicts(plan: AfdmaPlan, owners, guard: int) -> list[str]:
    """Received-row footprints: column ``c`` reaches rows ``[c - L + guard, c + guard]``."""
    N = plan.N
    problems = []

    def rows(cols, L):
        out = set()
        for c in cols:
            out.update((c + d) % N for d in range(guard - L, guard + 1))
        return out

    pilot_cols = list(plan.pilots)
    for u, slots in enumerate(plan.data_blocks):
        L = plan.L_users[u]
        if plan.direction == "downlink":
            # user u sees every transmitted symbol through its own channel
            foreign = [c for c, who in enumerate(owners) if who and f"data{u}" not in who]
            all_data = [c for c, who in enumerate(owners) if any(w.startswith("data") for w in who)]
            if rows(slots, L) & rows(foreign, L):
                problems.append(f"user {u} data footprint hit by foreign symbols")
            if rows(pilot_cols, L) & rows(all_data, L):
                problems.append(f"pilot rows of user {u} contaminated by data")
        else:
            own_cols = list(slots) + [p for p, o in plan.pilots.items() if o == u]
            others = set()
            for v, vslots in enumerate(plan.data_blocks):
                if v != u:
                    vcols = list(vslots) + [p for p, o in plan.pilots.items() if o == v]
                    others |= rows(vcols, plan.L_users[v])
            if rows(own_cols, L) & others:
                problems.append(f"user {u} footprint overlaps another user at the BS")
    return problems


def plan_to_table(plan: AfdmaPlan) -> str:
    """Plain-text slot table: header line, then ``slot<TAB>role<TAB>owner`` per slot."""
    lines = [f"# afdma {plan.direction} N={plan.N} L_max={plan.L_max} N_BS={plan.N_BS} "
             f"L_users={','.join(map(str, plan.L_users))} overhead={plan.overhead}",
             "slot\trole\towner"]
    for s, (role, owner) in enumerate(plan.roles()):
        lines.append(f"{s}\t{role}\t{owner if owner >= 0 else '-'}")
    return "\n".join(lines) + "\n"


def table_roles(text: str) -> list[tuple[str, int]]:
    """Parse :func:`plan_to_table` output back into ``(role, owner)`` pairs."""
    out = []
    for line in text.splitlines():
        if not line or line.startswith("#") or line.startswith("slot"):
            continue
        _, role, owner = line.split("\t")
        out.append((role, -1 if owner == "-" else int(owner)))
    return out
