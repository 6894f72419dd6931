"""Equilibrium-uniqueness certificates for the power game.

The certificates are spectral or row/column-sum bounds on per-bin coupling
matrices whose (q, r) entry measures how strongly interferer r impinges on
link q relative to q's own gain.  Bins a user would never populate under
any opponent behavior can be pruned before the matrices are built, which
is what makes the spectral condition robust to deep fades: a bin where a
user's direct gain vanishes also drops out of that user's matrix rows.

Seven conditions are evaluated, from the sharp per-bin spectral-radius
test (C1) through its max-aggregated (C2), weighted row/column-sum
(C3/C4), pairwise-coupling (C5/C6) and positive-definiteness (C7)
relaxations.  Verdicts come with the margin that produced them; margins
within 1e-9 of the threshold are reported as boundary cases.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy.linalg import matrix_balance

from .channel import NormalizedGame
from .errors import InvalidInputError, NumericFailureError
from .waterfilling import _solve_arrays

_BOUNDARY = 1e-9

CONDITION_NAMES = ("C1", "C2", "C3", "C4", "C5", "C6", "C7")


@dataclass(frozen=True)
class ConditionVerdict:
    """One uniqueness condition: margin against its threshold.

    ``satisfied`` is None when the margin sits within 1e-9 of the
    threshold (boundary case) or when a numeric failure left the margin
    unknown (then ``error`` is set).  For C1-C6 the condition holds when
    margin < 1; for C7 (positive definiteness) when margin > 0.
    """

    name: str
    satisfied: bool | None
    margin: float
    threshold: float
    detail: dict
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "satisfied": self.satisfied,
            "margin": self.margin,
            "threshold": self.threshold,
            "error": self.error,
            "detail": {k: _jsonable(v) for k, v in self.detail.items()},
        }


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return v


@dataclass(frozen=True)
class UniquenessReport:
    """Per-condition verdicts plus the bin sets used to build them."""

    conditions: dict
    Dq_mode: str
    usable: np.ndarray

    def __getitem__(self, name: str) -> ConditionVerdict:
        return self.conditions[name]

    def satisfied(self, name: str) -> bool:
        v = self.conditions[name].satisfied
        return bool(v) if v is not None else False

    def to_dict(self) -> dict:
        return {
            "Dq_mode": self.Dq_mode,
            "usable": self.usable.tolist(),
            "conditions": {k: v.to_dict() for k, v in self.conditions.items()},
        }


def usable_carriers(game: NormalizedGame, q: int, mode: str = "virtual_interferer") -> np.ndarray:
    """Boolean mask of bins user q could populate under some opponent play.

    mode="all" keeps every bin.  mode="virtual_interferer" replaces all
    opponents by a single adversary holding their pooled budget and, per
    bin, the strongest cross gain; a bin is dropped only if user q still
    leaves it empty when the adversary spends everything on the *other*
    bins (uniformly) and nothing on the bin under test.  The returned set
    therefore contains every bin the true best responses can touch.
    """
    Q, N = game.Q, game.N
    if mode == "all":
        return np.ones(N, dtype=bool)
    if mode != "virtual_interferer":
        raise InvalidInputError(f"unknown Dq mode {mode!r}")
    direct = game.gain2[q, q, :]
    alive = direct > 0
    if Q == 1 or N == 1 or not alive.any():
        return alive
    cross = np.delete(game.gain2[:, q, :], q, axis=0)
    virtual_gain = cross.max(axis=0)
    pooled_budget = float(Q - 1)
    i_spread = 1.0 + virtual_gain * (pooled_budget * N / (N - 1))
    gamma_q = float(game.Gamma[q])
    pmax_q = game.pmax[q]
    kept = np.zeros(N, dtype=bool)
    for k in np.nonzero(alive)[0]:
        i = i_spread.copy()
        i[k] = 1.0
        p, _ = _solve_arrays(direct, i, gamma_q, pmax_q, 1.0, "sort")
        kept[k] = p[k] > 1e-12
    return kept


def usable_sets(game: NormalizedGame, mode: str = "virtual_interferer") -> np.ndarray:
    """Stacked per-user bin masks, shape (Q, N)."""
    return np.stack([usable_carriers(game, q, mode) for q in range(game.Q)])


def coupling_stack(game: NormalizedGame, kept: np.ndarray) -> np.ndarray:
    """All per-bin coupling matrices at once, shape (N, Q, Q).

    Entry (q, r) of bin k's matrix is Gamma_q * gain2[r, q, k] /
    gain2[q, q, k] when both users keep bin k, else 0; diagonals are 0.
    """
    Q, N = game.Q, game.N
    kept = np.asarray(kept, dtype=bool)
    if kept.shape != (Q, N):
        raise InvalidInputError("kept mask must be (Q, N)")
    direct = game.direct_gain2()
    if (kept & (direct <= 0)).any():
        raise NumericFailureError("zero direct gain inside a kept bin set (internal invariant)")
    safe = np.where(kept, direct, 1.0)
    # ratio[q, r, k] = gain2[r, q, k] / direct[q, k]
    ratio = game.gain2.transpose(1, 0, 2) / safe[:, None, :]
    both = kept[:, None, :] & kept[None, :, :]
    H = game.Gamma[:, None, None] * ratio * both
    H[np.arange(Q), np.arange(Q), :] = 0.0
    return H.transpose(2, 0, 1)


def coupling_matrix(game: NormalizedGame, kept: np.ndarray, k: int) -> np.ndarray:
    """Coupling matrix of one bin, shape (Q, Q)."""
    return coupling_stack(game, kept)[k]


def coupling_matrix_max(game: NormalizedGame, kept: np.ndarray) -> np.ndarray:
    """Entrywise max of the per-bin coupling matrices (zero where empty)."""
    return coupling_stack(game, kept).max(axis=0)


def _collatz_iteration(A: np.ndarray, tol: float, max_iter: int):
    """Power iteration with Collatz-Wielandt brackets on a nonnegative A.

    Requires A to have a positive diagonal (callers shift by I); for an
    irreducible block the bracket closes geometrically.  Returns the root
    estimate, the final positive vector, and whether the bracket met tol.
    """
    n = A.shape[0]
    x = np.full(n, 1.0 / n)
    lo, hi = 0.0, np.inf
    for _ in range(max_iter):
        y = A @ x
        support = x > 0.0
        ratios = y[support] / x[support]
        lo, hi = float(ratios.min()), float(ratios.max())
        total = y.sum()
        if total <= 0.0:
            break
        closed = hi - lo <= tol * max(1.0, hi) and not (y[~support] > 0.0).any()
        if closed:
            return 0.5 * (lo + hi), y / total, True
        x = y / total
    return 0.5 * (lo + hi), x, False


def _mutual_reachability(M: np.ndarray) -> np.ndarray:
    """Boolean matrix of pairs lying on a common directed cycle."""
    n = M.shape[0]
    reach = (M > 0) | np.eye(n, dtype=bool)
    reach = reach.astype(np.uint8)
    steps = 1
    while steps < n:
        reach = (reach @ reach > 0).astype(np.uint8)
        steps *= 2
    reach = reach.astype(bool)
    return reach & reach.T


def spectral_radius(M: np.ndarray, tol: float = 1e-12, max_iter: int = 20000) -> float:
    """Perron root of a nonnegative matrix via power iteration.

    The matrix is split into strongly connected components first, so the
    iteration always runs on an irreducible block (shifted by I to make it
    primitive); reducible and nilpotent inputs are handled exactly.
    """
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise InvalidInputError("matrix must be square")
    if (M < 0).any() or not np.isfinite(M).all():
        raise InvalidInputError("matrix must be nonnegative and finite")
    n = M.shape[0]
    if n == 1:
        return float(M[0, 0])
    if not M.any():
        return 0.0
    mutual = _mutual_reachability(M)
    if mutual.all():
        blocks = [np.arange(n)]
    else:
        _, labels = np.unique(mutual, axis=0, return_inverse=True)
        blocks = [np.nonzero(labels == c)[0] for c in range(labels.max() + 1)]
    rho = 0.0
    for idx in blocks:
        if idx.size == 1:
            rho = max(rho, float(M[idx[0], idx[0]]))
            continue
        B = M[np.ix_(idx, idx)]
        # Diagonal balancing is a similarity transform: same spectrum, far
        # better conditioning when the entries span many decades.
        balanced, _ = matrix_balance(B + np.eye(idx.size), permute=False)
        rho = max(rho, _perron_root(balanced, tol, max_iter) - 1.0)
    return rho


def _perron_root(A: np.ndarray, tol: float, max_iter: int) -> float:
    """Perron root of a primitive nonnegative matrix.

    Repeated squaring doubles every eigenvalue's log, so the spectral gap
    seen by the power iteration grows doubly exponentially while the root
    can be unwound from the accumulated normalizations; after a few warm
    squarings the Collatz-Wielandt bracket closes in a handful of matvecs
    even for nearly degenerate spectra.  The widened bracket tolerance at
    stage j still yields a final relative error below ``tol`` because the
    unwinding divides the log-error by 2**j.
    """
    log_scale = 0.0
    weight = 1.0
    B = A
    for stage in range(60):
        s = float(B.max())
        if not np.isfinite(s) or s <= 0.0:
            break
        log_scale += weight * np.log(s)
        B = B / s
        B = B @ B
        weight *= 0.5
        if stage >= 2:
            est, _, ok = _collatz_iteration(B, min(1e-6, tol / weight), min(max_iter, 300))
            if ok and est > 0.0:
                return float(np.exp(weight * np.log(est) + log_scale))
    raise NumericFailureError("power iteration did not converge; margin unknown")


def perron_weights(M: np.ndarray, max_iter: int = 2000) -> np.ndarray:
    """Positive weight vector aligned with M's dominant direction.

    Any positive vector is admissible for the weighted-sum conditions;
    this one approximates the Perron vector of M (floored away from zero
    so reducible matrices still yield strictly positive weights).
    """
    M = np.asarray(M, dtype=np.float64)
    n = M.shape[0]
    if not M.any():
        return np.ones(n)
    _, x, _ = _collatz_iteration(M + np.eye(n), 1e-12, max_iter)
    x = np.maximum(x, 1e-9 * x.max())
    return x / x.max()


def is_Z(M: np.ndarray) -> bool:
    """Off-diagonal entries all nonpositive."""
    M = np.asarray(M, dtype=np.float64)
    off = M.copy()
    np.fill_diagonal(off, 0.0)
    return bool((off <= 0).all())


def is_P(M: np.ndarray) -> bool:
    """All principal minors positive (exhaustive; dim <= 12)."""
    M = np.asarray(M, dtype=np.float64)
    n = M.shape[0]
    if n > 12:
        raise InvalidInputError("principal-minor enumeration is limited to dim <= 12")
    for size in range(1, n + 1):
        for subset in combinations(range(n), size):
            sub = M[np.ix_(subset, subset)]
            if np.linalg.det(sub) <= 0:
                return False
    return True


def is_K(M: np.ndarray) -> bool:
    """Z-matrix with all principal minors positive."""
    return is_Z(M) and is_P(M)


def _verdict_less_than_one(name: str, margin: float, detail: dict) -> ConditionVerdict:
    if abs(margin - 1.0) <= _BOUNDARY:
        sat = None
    else:
        sat = bool(margin < 1.0)
    return ConditionVerdict(name=name, satisfied=sat, margin=margin, threshold=1.0, detail=detail)


def check_conditions(
    game: NormalizedGame, Dq_mode: str = "virtual_interferer"
) -> UniquenessReport:
    """Evaluate all seven uniqueness conditions with margins.

    C1: per-bin spectral radii below 1 (the sharp test).
    C2: spectral radius of the entrywise-max matrix below 1.
    C3/C4: weighted row/column sums below 1; unit weights and a
        Perron-vector weighting are both tried, the better margin wins.
    C5/C6: strongest pairwise coupling over all bins below 1/(Q-1),
        resp. 1/(2Q-3) (no bin pruning, per their original statements).
    C7: I + H(k) positive definite for every bin, tested through the
        symmetric part, with no bin pruning.
    """
    Q, N = game.Q, game.N
    kept = usable_sets(game, Dq_mode)
    Hk = coupling_stack(game, kept)
    try:
        rho_k = np.array([spectral_radius(Hk[k]) for k in range(N)])
        c1 = _verdict_less_than_one(
            "C1", float(rho_k.max()), {"rho_per_bin": rho_k, "argmax_bin": int(rho_k.argmax())}
        )
    except NumericFailureError as err:
        c1 = ConditionVerdict("C1", None, np.nan, 1.0, {}, error=str(err))

    Hmax = Hk.max(axis=0)
    try:
        c2 = _verdict_less_than_one("C2", spectral_radius(Hmax), {})
    except NumericFailureError as err:
        c2 = ConditionVerdict("C2", None, np.nan, 1.0, {}, error=str(err))

    w_unit = np.ones(Q)
    w_perron = perron_weights(Hmax)
    row_margins = {}
    col_margins = {}
    for label, w in (("unit", w_unit), ("perron", w_perron)):
        rows = np.einsum("kqr,r->kq", Hk, w) / w
        cols = np.einsum("kqr,q->kr", Hk, w) / w
        row_margins[label] = float(rows.max()) if rows.size else 0.0
        col_margins[label] = float(cols.max()) if cols.size else 0.0
    best_row = min(row_margins, key=row_margins.get)
    best_col = min(col_margins, key=col_margins.get)
    c3 = _verdict_less_than_one(
        "C3",
        row_margins[best_row],
        {"weights": w_perron if best_row == "perron" else w_unit, "weighting": best_row,
         "unit_margin": row_margins["unit"]},
    )
    c4 = _verdict_less_than_one(
        "C4",
        col_margins[best_col],
        {"weights": w_perron if best_col == "perron" else w_unit, "weighting": best_col,
         "unit_margin": col_margins["unit"]},
    )

    # Pairwise conditions ignore bin pruning; guard exact zero direct gains.
    direct = game.direct_gain2()
    alive = direct > 0
    pair_max = np.zeros((Q, Q))
    for q in range(Q):
        for r in range(Q):
            if r == q or not alive[q].any():
                continue
            ratios = game.gain2[r, q, alive[q]] / direct[q, alive[q]]
            pair_max[q, r] = game.Gamma[q] * float(ratios.max())
    strongest = float(pair_max.max())
    c5 = _verdict_less_than_one(
        "C5", strongest * (Q - 1), {"strongest_pair": strongest, "threshold_raw": 1.0 / max(Q - 1, 1)}
    )
    c6 = _verdict_less_than_one(
        "C6",
        strongest * (2 * Q - 3) if Q >= 2 else 0.0,
        {"strongest_pair": strongest, "threshold_raw": 1.0 / max(2 * Q - 3, 1)},
    )

    kept_all = np.ones((Q, N), dtype=bool) & alive
    H7 = coupling_stack(game, kept_all)
    eigmins = np.empty(N)
    for k in range(N):
        sym = np.eye(Q) + 0.5 * (H7[k] + H7[k].T)
        eigmins[k] = float(np.linalg.eigvalsh(sym)[0])
    m7 = float(eigmins.min())
    sat7 = None if abs(m7) <= _BOUNDARY else bool(m7 > 0)
    c7 = ConditionVerdict(
        name="C7", satisfied=sat7, margin=m7, threshold=0.0, detail={"argmin_bin": int(eigmins.argmin())}
    )

    conditions = {v.name: v for v in (c1, c2, c3, c4, c5, c6, c7)}
    return UniquenessReport(conditions=conditions, Dq_mode=Dq_mode, usable=kept)
