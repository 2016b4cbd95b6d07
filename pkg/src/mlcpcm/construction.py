"""Information-set construction for multilevel polar-coded modulation.

Two offline constructions share the same progressive rate-filling core:

* capacity rate-filling: find the SNR where the coded-modulation capacity
  equals the target sum-rate R_T = K/N, then fill per-level information-bit
  counts proportionally to the per-level capacities at that SNR;
* finite-blocklength rate-filling: find the SNR where the clamped sum of
  per-level normal-approximation rates M_k = I_k - sqrt(V_k/N) Qinv(eps)
  equals R_T, then fill proportionally to max(0, M_k). The penalty uses the
  frame error target at every level, which makes eps = 0.5 degenerate to the
  capacity construction exactly (Qinv(0.5) = 0, so M_k = I_k bitwise and both
  solvers root the same function); ``per_level_error_prob`` remains available
  for budgeting a frame target across levels.

Both depend only on (m, K, N, eps) and a channel-independent rank sequence,
never on a channel realization. Within each level the information set is the
top-K_k slice of the rank sequence, so constructions nest as rates shrink and
the only ordering operation over reliabilities is one sort of m level values
(recorded in ``sort_audit`` so tests can assert the O(m) claim structurally).

The online baseline is a Gaussian-approximation construction: each bit level
is replaced by a binary-input AWGN surrogate of equal capacity, mean LLRs are
propagated through the polar transform with the standard two-segment phi
approximation, and the K globally most reliable of the m*N polarized indices
become information positions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources

import numpy as np
from scipy.optimize import brentq

from .constellation import Constellation, build_constellation
from .mp_analysis import biawgn_sigma_for_capacity, level_stats, q_inverse
from .polar_codec import crc_len_for_k

SNR_BRACKET_DB = (-40.0, 50.0)
RATE_MARGIN = 1e-6
DEFAULT_EPS = 0.1

GA_PHI_A = -0.4527
GA_PHI_B = 0.86
GA_PHI_C = 0.0218
GA_PHI_SPLIT = 10.0


@dataclass
class SortAudit:
    """Counts reliability-ordering operations done by the RF constructions."""

    calls: int = 0
    sizes: list[int] = field(default_factory=list)

    def reset(self) -> None:
        self.calls = 0
        self.sizes.clear()


sort_audit = SortAudit()


@dataclass(frozen=True, eq=False)
class RankSequence:
    """Channel-independent reliability order, ascending (worst index first)."""

    name: str  # "FiveG_Polar" or "PW"
    order: np.ndarray
    max_len: int

    def __post_init__(self):
        order = np.asarray(self.order, dtype=np.int64)
        if (order.size != self.max_len
                or not np.array_equal(np.sort(order), np.arange(self.max_len))):
            raise ValueError(f"rank sequence is not a permutation of [0, {self.max_len})")
        object.__setattr__(self, "order", order)

    def restrict(self, n: int) -> np.ndarray:
        """Nested extraction: entries < n in original order."""
        if n > self.max_len:
            raise ValueError(f"N={n} exceeds sequence coverage {self.max_len}")
        return self.order[self.order < n]

    def top_k(self, n: int, k: int) -> np.ndarray:
        """The k most reliable indices among [0, n), sorted ascending."""
        if k == 0:
            return np.empty(0, dtype=np.int64)
        return np.sort(self.restrict(n)[-k:])


def load_rank_sequence(path, n: int | None = None) -> RankSequence:
    """Load a whitespace-separated reliability order and validate it."""
    order = np.loadtxt(path, dtype=np.int64).ravel()
    seq = RankSequence("FiveG_Polar", order, order.size)
    if n is not None:
        if n & (n - 1):
            raise ValueError(f"N={n} is not a power of two")
        return RankSequence(seq.name, seq.restrict(n), n)
    return seq


@lru_cache(maxsize=1)
def five_g_sequence() -> RankSequence:
    """The packaged 1024-entry 5G polar reliability sequence."""
    ref = resources.files("mlcpcm").joinpath("data/polar_sequence_5g.txt")
    with resources.as_file(ref) as path:
        return load_rank_sequence(path)


def pw_sequence(n: int) -> RankSequence:
    """Polarization-weight (beta-expansion) order: w(i) = sum_j b_j 2^{j/4}."""
    if n < 1 or n & (n - 1):
        raise ValueError(f"N={n} is not a power of two")
    bits = (np.arange(n)[:, None] >> np.arange(max(n.bit_length() - 1, 1))) & 1
    w = bits @ (2.0 ** (np.arange(bits.shape[1]) / 4.0))
    order = np.argsort(w, kind="stable")  # ties resolved to smaller index
    return RankSequence("PW", order, n)


def default_sequence(n: int) -> RankSequence:
    """FiveG_Polar for N <= 1024, PW beyond its coverage."""
    return five_g_sequence() if n <= 1024 else pw_sequence(n)


@dataclass(frozen=True, eq=False)
class RateAllocation:
    """Per-level information-bit counts with the processing order used."""

    counts: np.ndarray
    total: int
    level_order: np.ndarray

    def __post_init__(self):
        if int(np.sum(self.counts)) != self.total:
            raise ValueError("allocation does not sum to the total")


@dataclass(frozen=True, eq=False)
class CodeConstruction:
    """Per-level information sets plus the metadata that produced them."""

    m: int
    n: int
    k_total: int
    method: str  # "rf1" | "rf2" | "ga"
    info_sets: tuple[np.ndarray, ...]  # sorted ascending, 0-based
    crc_lens: tuple[int, ...]
    allocation: RateAllocation
    design_snr_db: float | None
    eps: float | None = None

    def __post_init__(self):
        if sum(a.size for a in self.info_sets) != self.k_total:
            raise ValueError("info sets do not sum to k_total")


def _order_levels(values: np.ndarray) -> list[int]:
    """Descending-value level order, ties to the smaller level index."""
    sort_audit.calls += 1
    sort_audit.sizes.append(len(values))
    return sorted(range(len(values)), key=lambda k: (-values[k], k))


def rate_fill(values: np.ndarray, k_total: int, n: int) -> RateAllocation:
    """Progressive proportional fill of K over m levels, ceil per step.

    Levels are processed in descending value order; level k_t receives
    ceil(remaining * v_{k_t} / sum of values from t on), capped at N. The cap
    (and any zero-value tail) spills the leftover to later levels in
    processing order, keeping the sum exactly K.
    """
    v = np.asarray(values, dtype=np.float64)
    m = v.size
    if np.any(v < 0) or not np.any(v > 0):
        raise ValueError("values must be nonnegative with at least one positive")
    if not 0 <= k_total <= m * n:
        raise ValueError(f"K={k_total} outside [0, {m * n}]")
    order = _order_levels(v)
    suffix = np.cumsum(v[order][::-1])[::-1]  # suffix[t] = sum of v from step t
    counts = np.zeros(m, dtype=np.int64)
    remaining = int(k_total)
    for t, k in enumerate(order):
        if suffix[t] > 0.0:
            share = int(np.ceil(remaining * v[k] / suffix[t]))
        else:
            share = 0
        share = min(share, n, remaining)
        counts[k] = share
        remaining -= share
    if remaining:  # cap overflow or an all-zero tail: spill in order
        for k in order:
            add = min(n - counts[k], remaining)
            counts[k] += add
            remaining -= add
            if not remaining:
                break
    return RateAllocation(counts=counts, total=int(k_total),
                          level_order=np.asarray(order, dtype=np.int64))


def _check_sum_rate(m: int, target_sum_rate: float) -> None:
    if not RATE_MARGIN <= target_sum_rate <= m - RATE_MARGIN:
        raise ValueError(
            f"target sum-rate {target_sum_rate} outside ({RATE_MARGIN}, {m - RATE_MARGIN})")


def solve_snr_capacity(c: Constellation, target_sum_rate: float) -> float:
    """SNR (dB) where the coded-modulation capacity equals the target.

    The root function is the chain-rule sum of per-level capacities, which the
    finite-blocklength solver degenerates to at eps = 0.5, making the two
    solvers agree bitwise there.
    """
    _check_sum_rate(c.m, target_sum_rate)

    def f(snr_db: float) -> float:
        return float(np.sum(level_stats(c, snr_db)[0])) - target_sum_rate

    lo, hi = SNR_BRACKET_DB
    if f(lo) > 0.0 or f(hi) < 0.0:
        raise ValueError(f"target sum-rate {target_sum_rate} not bracketed on "
                         f"[{lo}, {hi}] dB")
    return float(brentq(f, lo, hi, xtol=1e-12, rtol=8.9e-16))


def solve_snr_finite(c: Constellation, target_sum_rate: float, n: int,
                     eps: float) -> float:
    """SNR (dB) where the clamped finite-blocklength sum-rate equals the target."""
    _check_sum_rate(c.m, target_sum_rate)
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    qv = q_inverse(eps)

    def f(snr_db: float) -> float:
        cap, disp, _ = level_stats(c, snr_db)
        mvals = cap - np.sqrt(disp / n) * qv
        return float(np.sum(np.maximum(mvals, 0.0))) - target_sum_rate

    lo, hi = SNR_BRACKET_DB
    if f(lo) > 0.0 or f(hi) < 0.0:
        raise ValueError(f"target sum-rate {target_sum_rate} not bracketed on "
                         f"[{lo}, {hi}] dB")
    return float(brentq(f, lo, hi, xtol=1e-12, rtol=8.9e-16))


def finite_bl_values(c: Constellation, snr_db: float, n: int,
                     eps: float) -> np.ndarray:
    """Per-level max(0, I_k - sqrt(V_k/n) Qinv(eps)) at the given SNR."""
    qv = q_inverse(eps)
    cap, disp, _ = level_stats(c, snr_db)
    return np.maximum(cap - np.sqrt(disp / n) * qv, 0.0)


def _assemble(m: int, n: int, k_total: int, method: str, alloc: RateAllocation,
              info_sets: list[np.ndarray], snr_db: float | None,
              eps: float | None = None) -> CodeConstruction:
    crc_lens = tuple(crc_len_for_k(int(k)) for k in alloc.counts)
    return CodeConstruction(m=m, n=n, k_total=k_total, method=method,
                            info_sets=tuple(info_sets), crc_lens=crc_lens,
                            allocation=alloc, design_snr_db=snr_db, eps=eps)


def _saturated(m: int, n: int, method: str, eps: float | None) -> CodeConstruction:
    # K = mN leaves nothing to allocate: every level is full rate
    alloc = RateAllocation(counts=np.full(m, n, dtype=np.int64), total=m * n,
                           level_order=np.arange(m, dtype=np.int64))
    sets = [np.arange(n, dtype=np.int64) for _ in range(m)]
    return _assemble(m, n, m * n, method, alloc, sets, None, eps)


def construct_rf1(m: int, k_total: int, n: int,
                  seq: RankSequence | None = None) -> CodeConstruction:
    """Capacity-proportional rate-filling construction."""
    seq = default_sequence(n) if seq is None else seq
    if k_total == m * n:
        return _saturated(m, n, "rf1", None)
    c = build_constellation(m)
    snr = solve_snr_capacity(c, k_total / n)
    v = level_stats(c, snr)[0]
    alloc = rate_fill(v, k_total, n)
    sets = [seq.top_k(n, int(k)) for k in alloc.counts]
    return _assemble(m, n, k_total, "rf1", alloc, sets, snr)


def construct_rf2(m: int, k_total: int, n: int, eps: float = DEFAULT_EPS,
                  seq: RankSequence | None = None) -> CodeConstruction:
    """Finite-blocklength rate-filling construction."""
    seq = default_sequence(n) if seq is None else seq
    if k_total == m * n:
        return _saturated(m, n, "rf2", eps)
    c = build_constellation(m)
    snr = solve_snr_finite(c, k_total / n, n, eps)
    v = finite_bl_values(c, snr, n, eps)
    alloc = rate_fill(v, k_total, n)
    sets = [seq.top_k(n, int(k)) for k in alloc.counts]
    return _assemble(m, n, k_total, "rf2", alloc, sets, snr, eps)


def ln_phi(x: np.ndarray) -> np.ndarray:
    """ln of the GA phi function, two-segment form, elementwise."""
    x = np.asarray(x, dtype=np.float64)
    small = x < GA_PHI_SPLIT
    out = np.empty_like(x)
    xs = np.where(small, x, 1.0)
    out[small] = (GA_PHI_A * xs**GA_PHI_B + GA_PHI_C)[small]
    xl = np.where(small, GA_PHI_SPLIT, x)
    out[~small] = (-xl / 4.0 + 0.5 * (np.log(np.pi) - np.log(xl))
                   + np.log1p(-10.0 / (7.0 * xl)))[~small]
    return out


def _phi_inv_ln(target: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Solve ln_phi(x) = target for x in [0, hi], elementwise bisection."""
    lo = np.zeros_like(hi)
    hi = hi.copy()
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        too_small = ln_phi(mid) > target  # phi decreasing: mid below the root
        lo = np.where(too_small, mid, lo)
        hi = np.where(too_small, hi, mid)
    return 0.5 * (lo + hi)


def ga_check_update(z: np.ndarray) -> np.ndarray:
    """Check-branch GA mean: phi_inv(1 - (1 - phi(z))^2), log-domain inside."""
    z = np.asarray(z, dtype=np.float64)
    lp = ln_phi(z)
    # 1-(1-p)^2 = 2p(1 - p/2); the fitted phi can slightly exceed 1 near 0,
    # the product form keeps the update finite there
    lt = np.log(2.0) + lp + np.log1p(-0.5 * np.exp(lp))
    return _phi_inv_ln(lt, z.copy())


def ga_evolve(design_llr_mean: float, n: int) -> np.ndarray:
    """Mean LLR of each polarized index under the Gaussian approximation."""
    if design_llr_mean <= 0:
        raise ValueError("design LLR mean must be positive")
    if n < 1 or n & (n - 1):
        raise ValueError(f"N={n} is not a power of two")
    z = np.array([design_llr_mean], dtype=np.float64)
    while z.size < n:
        new = np.empty(2 * z.size)
        new[0::2] = ga_check_update(z)
        new[1::2] = 2.0 * z
        z = new
    return z


def construct_ga(c: Constellation, k_total: int, n: int,
                 actual_snr_db: float) -> CodeConstruction:
    """Gaussian-approximation construction on per-level BI-AWGN surrogates."""
    if not 0 <= k_total <= c.m * n:
        raise ValueError(f"K={k_total} outside [0, {c.m * n}]")
    cap = np.clip(level_stats(c, actual_snr_db)[0], 1e-12, 1.0 - 1e-12)
    rel = np.empty((c.m, n))
    for k in range(c.m):
        sigma = biawgn_sigma_for_capacity(float(cap[k]))
        rel[k] = ga_evolve(2.0 / sigma**2, n)
    lvl, idx = np.divmod(np.arange(c.m * n), n)
    # global top-K by mean LLR, ties to smaller level then smaller index
    ranked = np.lexsort((idx, lvl, -rel.ravel()))[:k_total]
    counts = np.bincount(lvl[ranked], minlength=c.m).astype(np.int64)
    sets = [np.sort(idx[ranked[lvl[ranked] == k]]) for k in range(c.m)]
    alloc = RateAllocation(counts=counts, total=int(k_total),
                           level_order=np.arange(c.m, dtype=np.int64))
    return _assemble(c.m, n, int(k_total), "ga", alloc, sets, float(actual_snr_db))
