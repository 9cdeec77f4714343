"""The two-stage tournament procedure.

Stage structure (all on evaluation tables):

* distance estimation on a covariate-only segment: for each pair the
  ell-th largest absolute difference of evaluations (default), or the
  empirical L2 distance for the bounded variant;
* home-and-away matches on a labeled segment: for each ordered pair the
  per-block mean difference of squared residuals, compared block-wise
  against a threshold that depends on the estimated distance;
* winners = members that won every home match; a second round runs on
  the midpoint closure of the first round's winners, and the final
  selection is the smallest-id member of the second winners set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .core import (
    FunctionClass,
    Hypothesis,
    LabeledSample,
    closure_pairs,
    id_sort_key,
    midpoint,
)


@dataclass(frozen=True)
class TournamentParams:
    """Tuning constants of the procedure and their provenance knobs.

    n_blocks ~ theta1 * ln(64/delta); block size m = N / n_blocks;
    ell ~ N / (ell_divisor * kappa1^2); r^2 = c0 * epsilon;
    theta2 ~ kappa1^2, theta3 ~ 1/kappa1^2, theta4 ~ kappa1.  The
    proportionality constants are configuration; `derive` applies the
    defaults and accepts overrides for every one of them.
    """

    epsilon: float
    delta: float
    r2: float
    ell: int
    n_blocks: int
    theta1: float
    theta2: float
    theta3: float
    theta4: float
    kappa1: float
    kappa2: float = float("nan")
    p1_variant: str = "order"  # "order" | "l2"

    def __post_init__(self):
        if not (0 < self.epsilon):
            raise ValueError("epsilon must be positive")
        if not (0 < self.delta < 1):
            raise ValueError("delta must be in (0, 1)")
        if self.n_blocks < 1 or self.ell < 1:
            raise ValueError("n_blocks and ell must be >= 1")
        if min(self.theta2, self.theta3, self.theta4) <= 0 or self.r2 <= 0:
            raise ValueError("thresholds and r^2 must be positive")
        if self.p1_variant not in ("order", "l2"):
            raise ValueError("p1_variant must be 'order' or 'l2'")

    @property
    def r(self) -> float:
        return math.sqrt(self.r2)

    @classmethod
    def derive(
        cls,
        epsilon: float,
        delta: float,
        n_p1_samples: int,
        kappa1: float,
        kappa2: float = float("nan"),
        *,
        c0: float = 2.0 / 3.0,
        theta1: float = 1.0,
        ell_divisor: float = 5.0,
        theta2: float | None = None,
        theta3: float | None = None,
        theta4: float | None = None,
        n_blocks: int | None = None,
        ell: int | None = None,
        p1_variant: str = "order",
    ) -> "TournamentParams":
        kappa1 = max(float(kappa1), 1.0)
        if n_blocks is None:
            n_blocks = max(1, math.ceil(theta1 * math.log(64.0 / delta)))
        if ell is None:
            ell = max(1, math.floor(n_p1_samples / (ell_divisor * kappa1**2)))
        ell = min(ell, n_p1_samples)
        return cls(
            epsilon=epsilon,
            delta=delta,
            r2=c0 * epsilon,
            ell=ell,
            n_blocks=n_blocks,
            theta1=theta1,
            theta2=kappa1**2 if theta2 is None else theta2,
            theta3=1.0 / kappa1**2 if theta3 is None else theta3,
            theta4=kappa1 if theta4 is None else theta4,
            kappa1=kappa1,
            kappa2=kappa2,
            p1_variant=p1_variant,
        )


def block_bounds(n_samples: int, n_blocks: int) -> np.ndarray:
    """Start offsets of contiguous blocks; the first N mod n blocks get one extra point."""
    if n_blocks < 1 or n_blocks > n_samples:
        raise ValueError("need 1 <= n_blocks <= n_samples")
    base = n_samples // n_blocks
    extra = n_samples % n_blocks
    sizes = np.full(n_blocks, base, dtype=int)
    sizes[:extra] += 1
    starts = np.concatenate(([0], np.cumsum(sizes)[:-1]))
    return starts


def block_sizes(n_samples: int, n_blocks: int) -> np.ndarray:
    starts = block_bounds(n_samples, n_blocks)
    return np.diff(np.concatenate((starts, [n_samples])))


def p1_distance(values_h: np.ndarray, values_f: np.ndarray, ell: int) -> float:
    """ell-th largest of |values_f - values_h| (the order-statistic distance)."""
    v = np.abs(np.asarray(values_f, dtype=float) - np.asarray(values_h, dtype=float))
    n = v.shape[0]
    if not 1 <= ell <= n:
        raise ValueError(f"ell must be in 1..{n}, got {ell}")
    return float(np.partition(v, n - ell)[n - ell])


def bounded_p1_distance(values_h: np.ndarray, values_f: np.ndarray) -> float:
    """Empirical L2 distance sqrt(mean (values_h - values_f)^2)."""
    d = np.asarray(values_h, dtype=float) - np.asarray(values_f, dtype=float)
    return float(np.sqrt(np.mean(d * d)))


def p1_matrix(table: np.ndarray, params: TournamentParams) -> np.ndarray:
    """Symmetric matrix of pairwise distance estimates from an evaluation table."""
    H, n = table.shape
    if params.p1_variant == "l2":
        gram = table @ table.T / n
        sq = np.maximum(np.diag(gram)[:, None] + np.diag(gram)[None, :] - 2 * gram, 0.0)
        return np.sqrt(sq)
    ell = params.ell
    if not 1 <= ell <= n:
        raise ValueError(f"ell must be in 1..{n}, got {ell}")
    out = np.zeros((H, H), dtype=float)
    for i in range(H):
        diffs = np.abs(table[i + 1 :] - table[i][None, :])
        if diffs.shape[0]:
            vals = np.partition(diffs, n - ell, axis=1)[:, n - ell]
            out[i, i + 1 :] = vals
            out[i + 1 :, i] = vals
    return out


def block_stats(
    values_h: np.ndarray,
    values_f: np.ndarray,
    responses: np.ndarray,
    starts: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-block (B, Q, M) for one ordered pair (h, f).

    B_j = mean over the block of (h-Y)^2 - (f-Y)^2, Q_j = mean of (h-f)^2,
    M_j = (2/m) sum (h-f)(f-Y); B_j = Q_j + M_j identically.
    """
    vh = np.asarray(values_h, dtype=float)
    vf = np.asarray(values_f, dtype=float)
    y = np.asarray(responses, dtype=float)
    n = vh.shape[0]
    sizes = np.diff(np.concatenate((starts, [n])))
    if np.any(sizes <= 0):
        raise ValueError("empty block")
    rh = vh - y
    rf = vf - y
    d = vh - vf
    b = np.add.reduceat(rh * rh - rf * rf, starts) / sizes
    q = np.add.reduceat(d * d, starts) / sizes
    m = 2.0 * np.add.reduceat(d * rf, starts) / sizes
    return b, q, m


@dataclass(frozen=True)
class MatchLedger:
    """Per-pair distance estimates and per-pair, per-block match statistics.

    b[h, f, j] is the block-j mean of (h-Y)^2 - (f-Y)^2; q and m are its
    quadratic/multiplier parts.  wins[f, h] records f winning its home
    match against h.
    """

    p1: np.ndarray  # (H, H)
    b: np.ndarray  # (H, H, n_blocks)
    q: np.ndarray
    m: np.ndarray
    wins: np.ndarray  # (H, H) bool

    @property
    def size(self) -> int:
        return self.p1.shape[0]


def _win_matrix(b: np.ndarray, p1: np.ndarray, params: TournamentParams) -> np.ndarray:
    n_blocks = b.shape[2]
    thr = np.where(
        p1 <= params.theta4 * params.r,
        params.theta2 * params.r2,
        params.theta3 * p1 * p1,
    )
    counts = (b >= -thr[:, :, None]).sum(axis=2)
    majority = counts > n_blocks / 2.0
    return majority.T.copy()  # wins[f, h] from counts over b[h, f, :]


def build_ledger(
    p1_table: np.ndarray,
    match_table: np.ndarray,
    responses: np.ndarray,
    params: TournamentParams,
) -> MatchLedger:
    """Distance estimates on one segment, block statistics on another."""
    H, n = match_table.shape
    starts = block_bounds(n, params.n_blocks)
    sizes = np.diff(np.concatenate((starts, [n])))
    p1 = p1_matrix(p1_table, params)

    resid = match_table - responses[None, :]
    ss = np.add.reduceat(resid * resid, starts, axis=1) / sizes[None, :]
    b = ss[:, None, :] - ss[None, :, :]

    nb = params.n_blocks
    q = np.empty((H, H, nb), dtype=float)
    m = np.empty((H, H, nb), dtype=float)
    for h in range(H):
        d = match_table[h][None, :] - match_table
        q[h] = np.add.reduceat(d * d, starts, axis=1) / sizes[None, :]
        m[h] = 2.0 * np.add.reduceat(d * resid, starts, axis=1) / sizes[None, :]
    wins = _win_matrix(b, p1, params)
    return MatchLedger(p1=p1, b=b, q=q, m=m, wins=wins)


def beats(f: int, h: int, ledger: MatchLedger, params: TournamentParams) -> bool:
    """True iff strictly more than n/2 blocks pass the threshold for f's home match with h."""
    p1 = ledger.p1[h, f]
    if p1 <= params.theta4 * params.r:
        thr = params.theta2 * params.r2
    else:
        thr = params.theta3 * p1 * p1
    count = int(np.sum(ledger.b[h, f, :] >= -thr))
    return count > params.n_blocks / 2.0


def winners(ledger: MatchLedger, params: TournamentParams) -> np.ndarray:
    """Indices of members that won all their home matches (may be empty)."""
    return np.flatnonzero(ledger.wins.all(axis=1))


def max_win_fallback(ledger: MatchLedger) -> np.ndarray:
    """Members with the maximal number of opponents beaten (smallest index first)."""
    counts = ledger.wins.sum(axis=1)
    return np.flatnonzero(counts == counts.max())


@dataclass(frozen=True)
class StageTrace:
    winner_indices: np.ndarray
    fallback: bool
    ledger: MatchLedger


@dataclass(frozen=True)
class TournamentTrace:
    f1_ids: list
    closure_ids: list
    f2_ids: list
    stage1: StageTrace
    stage2: StageTrace
    selected_id: object


def _run_stage(
    p1_table: np.ndarray,
    match_table: np.ndarray,
    responses: np.ndarray,
    params: TournamentParams,
) -> StageTrace:
    ledger = build_ledger(p1_table, match_table, responses, params)
    w = winners(ledger, params)
    fallback = w.size == 0
    if fallback:
        w = max_win_fallback(ledger)
    return StageTrace(winner_indices=w, fallback=fallback, ledger=ledger)


def run_two_stage(
    fclass: FunctionClass,
    sample: LabeledSample,
    params: TournamentParams,
    *,
    clip: float | None = None,
) -> tuple[Hypothesis, TournamentTrace]:
    """Full pipeline: stage one on segments 0/1, midpoint closure, stage two on 2/3.

    Returns the smallest-id member of the second winners set, with a trace
    carrying both rounds' winner sets and ledgers.  With ``clip`` set,
    hypothesis evaluations and responses are truncated to [-clip, clip]
    before use (the bounded framework), which pairs with the "l2"
    distance variant.
    """
    tables = []
    ys = []
    for k in range(4):
        X, y = sample.segment(k)
        t = fclass.evaluation_table(X)
        if clip is not None:
            t = np.clip(t, -clip, clip)
            y = np.clip(y, -clip, clip)
        tables.append(t)
        ys.append(y)

    stage1 = _run_stage(tables[0], tables[1], ys[1], params)
    f1_idx = stage1.winner_indices
    f1_ids = [fclass.members[i].hid for i in f1_idx]

    pairs = closure_pairs(len(f1_idx))
    closure_ids = [
        tuple(sorted((f1_ids[a], f1_ids[b]), key=id_sort_key)) for a, b in pairs
    ]
    t3 = np.stack([0.5 * (tables[2][f1_idx[a]] + tables[2][f1_idx[b]]) for a, b in pairs])
    t4 = np.stack([0.5 * (tables[3][f1_idx[a]] + tables[3][f1_idx[b]]) for a, b in pairs])

    stage2 = _run_stage(t3, t4, ys[3], params)
    f2_rows = stage2.winner_indices
    f2_ids = [closure_ids[i] for i in f2_rows]

    sel_row = min(f2_rows, key=lambda i: id_sort_key(closure_ids[i]))
    a, b = pairs[sel_row]
    selected = midpoint(fclass.members[f1_idx[a]], fclass.members[f1_idx[b]])

    trace = TournamentTrace(
        f1_ids=f1_ids,
        closure_ids=closure_ids,
        f2_ids=f2_ids,
        stage1=stage1,
        stage2=stage2,
        selected_id=selected.hid,
    )
    return selected, trace
