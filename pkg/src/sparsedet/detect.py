"""Detection theory for LASSO and matched-filter detectors.

Index sets in this module are 1-based (grid cell numbers).  The dictionary
helpers take 0-based column indices; conversion happens here.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg, stats

from .dictionary import as_matrix

__all__ = [
    "GammaTooLargeError",
    "IllConditionedSupportError",
    "Thm1Inputs",
    "DetectionReport",
    "incoherence_gamma",
    "incoherence_matrix",
    "min_h",
    "min_h_for",
    "traditional_threshold",
    "exact_gaussian_threshold",
    "threshold_detect",
    "count_false_alarms",
    "make_report",
    "rip_delta_bruteforce",
    "gamma_rip_bound",
    "max_offsupport_norm",
    "binomial_gof",
]

GAMMA_NORMS = ("rowsum", "max_entry")


class GammaTooLargeError(ValueError):
    """The incoherence is at least 1, so no finite h carries the guarantee."""


class IllConditionedSupportError(np.linalg.LinAlgError):
    pass


def _zero_based(S: Iterable[int], N: int) -> np.ndarray:
    cells = [int(i) for i in S]
    if len(set(cells)) != len(cells):
        raise ValueError("support indices must be distinct")
    idx = np.asarray(cells, dtype=int)
    if idx.size and (idx.min() < 1 or idx.max() > N):
        raise IndexError(f"support index outside [1, {N}]")
    return idx - 1


def incoherence_matrix(A, S: Sequence[int], cond_limit: float = 1e12) -> np.ndarray:
    """``A_Sc^H A_S (A_S^H A_S)^{-1}`` as an (N-K) x K array.

    Computed with a Cholesky solve, never an explicit inverse.  Rows follow
    the increasing order of the off-support cells.
    """
    a = as_matrix(A)
    N = a.shape[1]
    S = list(S)
    s0 = _zero_based(S, N)
    if s0.size == 0:
        raise ValueError("support must be nonempty")
    mask = np.ones(N, dtype=bool)
    mask[s0] = False
    AS, ASc = a[:, s0], a[:, mask]
    G = AS.conj().T @ AS
    cond = np.linalg.cond(G)
    if not np.isfinite(cond) or cond > cond_limit:
        raise IllConditionedSupportError(f"A_S^H A_S is singular or ill-conditioned (cond={cond:.3g})")
    C = AS.conj().T @ ASc
    X = linalg.cho_solve(linalg.cho_factor(G), C)  # K x (N-K), equals Z^H
    return X.conj().T


def incoherence_gamma(A, S: Sequence[int], norm: str = "rowsum") -> float:
    """Incoherence of the off-support columns with the support ``S`` (1-based).

    ``norm="rowsum"`` is the l-infinity operator norm (max absolute row sum)
    of ``A_Sc^H A_S (A_S^H A_S)^{-1}``, the quantity the false-alarm bound is
    stated in.  ``norm="max_entry"`` returns the largest entry modulus
    instead; the two coincide for a single target.
    """
    if norm not in GAMMA_NORMS:
        raise ValueError(f"norm must be one of {GAMMA_NORMS}")
    Z = incoherence_matrix(A, S)
    if Z.size == 0:
        return 0.0
    absZ = np.abs(Z)
    if norm == "rowsum":
        return float(absZ.sum(axis=1).max())
    return float(absZ.max())


@dataclass(frozen=True)
class Thm1Inputs:
    sigma: float
    gamma: float
    N: int
    K: int
    max_offsupport_norm: float = 1.0
    failure_p: float = 0.1

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ValueError("sigma must be nonnegative")
        if not 0 < self.failure_p < 1:
            raise ValueError("failure probability must lie in (0, 1)")
        if not 0 <= self.K < self.N:
            raise ValueError("need 0 <= K < N")
        if not self.max_offsupport_norm >= 0:
            raise ValueError("column norm must be nonnegative")
        if not self.gamma >= 0:
            raise ValueError("gamma must be nonnegative")
        if self.gamma >= 1:
            raise GammaTooLargeError("gamma >= 1 gives unbounded h")


def min_h(inputs: Thm1Inputs) -> float:
    """Smallest LASSO weight with P(any false alarm) <= failure_p.

    sqrt(2)*sigma*max_norm/(1-gamma) * sqrt(ln(2(N-K)/p)).
    """
    i = inputs
    log_term = math.log(2.0 * (i.N - i.K) / i.failure_p)
    if log_term < 0:
        raise ValueError("failure probability too large for this N-K (negative log term)")
    return math.sqrt(2.0) * i.sigma * i.max_offsupport_norm / (1.0 - i.gamma) * math.sqrt(log_term)


def min_h_for(sigma, gamma, N, K, failure_p=0.1, max_offsupport_norm=1.0) -> float:
    return min_h(Thm1Inputs(sigma, gamma, N, K, max_offsupport_norm, failure_p))


def max_offsupport_norm(A, S: Sequence[int]) -> float:
    a = as_matrix(A)
    s0 = _zero_based(list(S), a.shape[1])
    mask = np.ones(a.shape[1], dtype=bool)
    mask[s0] = False
    if not mask.any():
        return 0.0
    return float(np.linalg.norm(a[:, mask], axis=0).max())


def traditional_threshold(sigma: float, column_norm: float, pfa: float) -> float:
    """Subgaussian tail-bound threshold ``||a_i|| * sigma * sqrt(ln(1/pfa))``."""
    if not 0 < pfa <= 1:
        raise ValueError("pfa must lie in (0, 1]")
    if sigma < 0 or column_norm < 0:
        raise ValueError("sigma and column_norm must be nonnegative")
    return column_norm * sigma * math.sqrt(math.log(1.0 / pfa))


def exact_gaussian_threshold(sigma: float, column_norm: float, pfa: float, complex_valued: bool = False) -> float:
    """Threshold giving per-cell false-alarm rate exactly ``pfa``.

    Real Gaussian noise: ``a^T e ~ N(0, sigma^2 ||a||^2)`` so the two-sided
    quantile is used.  Circular complex noise with total variance sigma^2:
    ``|a^H e|^2`` is exponential, which gives ``sigma*||a||*sqrt(ln(1/pfa))``.
    """
    if not 0 < pfa <= 1:
        raise ValueError("pfa must lie in (0, 1]")
    scale = sigma * column_norm
    if complex_valued:
        return scale * math.sqrt(math.log(1.0 / pfa))
    return scale * float(stats.norm.isf(pfa / 2.0))


def threshold_detect(b, eta: float) -> Tuple[int, ...]:
    """1-based cells with ``|b(i)| > eta`` (strict)."""
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    return tuple(int(i) + 1 for i in np.flatnonzero(np.abs(np.asarray(b)) > eta))


def count_false_alarms(recovered: Iterable[int], S: Iterable[int]) -> int:
    return len(set(recovered) - set(S))


@dataclass(frozen=True)
class DetectionReport:
    recovered_support: Tuple[int, ...]
    true_support: Tuple[int, ...]
    L_fa: int
    hits: Tuple[bool, ...]
    method: str
    parameter: float
    alpha_pfa: Optional[float] = None
    L_fa_pre_truncation: Optional[int] = None
    hits_pre_truncation: Optional[Tuple[bool, ...]] = None
    diagnostics: dict = field(default_factory=dict, compare=False)

    @property
    def any_false_alarm(self) -> bool:
        return self.L_fa > 0


def make_report(recovered, S, method: str, parameter: float, alpha_pfa=None, **extra) -> DetectionReport:
    if method not in ("lasso", "matched_filter"):
        raise ValueError(f"unknown method {method!r}")
    rec = tuple(sorted(int(i) for i in recovered))
    S = tuple(int(i) for i in S)
    rec_set = set(rec)
    hits = tuple(i in rec_set for i in S)
    return DetectionReport(rec, S, count_false_alarms(rec, S), hits, method, float(parameter), alpha_pfa, **extra)


def rip_delta_bruteforce(A, K: int, budget: int = 10**6, batch: int = 4096) -> float:
    """Restricted isometry constant of order K by exhaustive enumeration.

    ``max_T max(lambda_max(A_T^H A_T) - 1, 1 - lambda_min(A_T^H A_T))`` over
    every size-K column subset T.
    """
    a = as_matrix(A)
    N = a.shape[1]
    if not 1 <= K <= N:
        raise ValueError("need 1 <= K <= N")
    if math.comb(N, K) > budget:
        raise ValueError(f"C({N},{K}) = {math.comb(N, K)} exceeds the enumeration budget {budget}")
    G = a.conj().T @ a
    delta = 0.0
    combos = itertools.combinations(range(N), K)
    while True:
        chunk = list(itertools.islice(combos, batch))
        if not chunk:
            break
        idx = np.asarray(chunk)
        sub = G[idx[:, :, None], idx[:, None, :]]
        ev = np.linalg.eigvalsh(sub)
        delta = max(delta, float(np.max(ev[:, -1] - 1.0)), float(np.max(1.0 - ev[:, 0])))
    return delta


def gamma_rip_bound(delta: float, K: int) -> float:
    """Upper bound sqrt(K)*delta/(1-delta) on the incoherence under K-RIP."""
    if not 0 <= delta < 1:
        raise ValueError("delta must lie in [0, 1)")
    return math.sqrt(K) * delta / (1.0 - delta)


def binomial_gof(counts: Sequence[int], n: int, p: float, min_expected: float = 5.0):
    """Chi-square goodness of fit of integer samples to Binomial(n, p).

    Adjacent outcomes are pooled from both tails until every bin expects at
    least ``min_expected`` observations.  Returns ``(statistic, dof, pvalue)``.
    """
    counts = np.asarray(counts, dtype=int)
    T = counts.size
    observed = np.bincount(counts, minlength=n + 1)[: n + 1].astype(float)
    expected = T * stats.binom.pmf(np.arange(n + 1), n, p)
    bins_o, bins_e = [], []
    acc_o = acc_e = 0.0
    for o, e in zip(observed, expected):
        acc_o += o
        acc_e += e
        if acc_e >= min_expected:
            bins_o.append(acc_o)
            bins_e.append(acc_e)
            acc_o = acc_e = 0.0
    if bins_e:
        bins_o[-1] += acc_o
        bins_e[-1] += acc_e
    if len(bins_e) < 2:
        raise ValueError("too few samples for a chi-square test")
    bins_o, bins_e = np.array(bins_o), np.array(bins_e)
    stat = float(((bins_o - bins_e) ** 2 / bins_e).sum())
    dof = len(bins_e) - 1
    return stat, dof, float(stats.chi2.sf(stat, dof))
