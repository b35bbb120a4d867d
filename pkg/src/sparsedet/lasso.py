"""LASSO solver with optimality certificates.

Minimises ``0.5*||y - A x||_2^2 + h*||x||_1`` over real or complex ``x``.
The solver is a monotone accelerated proximal-gradient method (MFISTA) with
function-value restarts.  Whenever the iterate's support is stable a
support-restricted Newton "polish" is attempted; it is accepted only if it
does not increase the objective, so the reported objective sequence stays
non-increasing.  Termination requires both a small duality gap and a small
KKT residual.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .dictionary import as_matrix

__all__ = [
    "SolverConfig",
    "LassoSolution",
    "LassoConvergenceError",
    "lasso_solve",
    "lasso_objective",
    "soft_threshold",
    "duality_gap",
    "kkt_residual",
    "oracle_solve",
    "truncate_small",
    "lipschitz_constant",
]


class LassoConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    max_iterations: int = 200_000
    duality_gap_tol: float = 1e-9
    kkt_tol: float = 1e-7
    truncation_ratio: float = 0.1
    check_every: int = 10
    polish: bool = True

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")
        if not (self.duality_gap_tol > 0 and self.kkt_tol > 0):
            raise ValueError("tolerances must be positive")
        if not 0 <= self.truncation_ratio < 1:
            raise ValueError("truncation_ratio must lie in [0, 1)")
        if self.check_every < 1:
            raise ValueError("check_every must be positive")


@dataclass
class LassoSolution:
    x: np.ndarray
    h: float
    objective: float
    iterations: int
    duality_gap: float
    kkt_residual: float
    converged: bool
    objective_trace: Optional[List[float]] = None

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.x)


def soft_threshold(z, t):
    """Modulus soft-thresholding, the proximal map of ``t*||.||_1``.

    Works for real and complex input: each entry is shrunk towards zero by
    ``t`` in modulus, keeping its sign (phase).
    """
    z = np.asarray(z)
    mag = np.abs(z)
    scale = np.maximum(1.0 - t / np.where(mag > 0, mag, 1.0), 0.0)
    return np.where(mag > t, z * scale, 0.0 * z)


def lasso_objective(A, y, x, h) -> float:
    r = np.asarray(y) - as_matrix(A) @ x
    return 0.5 * float(np.vdot(r, r).real) + h * float(np.abs(x).sum())


def duality_gap(A, y, x, h) -> float:
    """Primal objective minus the dual value at the rescaled residual.

    The residual ``r = y - Ax`` is shrunk by ``min(1, h/||A^H r||_inf)`` so
    that it satisfies the dual constraint ``||A^H theta||_inf <= h``.
    """
    a = as_matrix(A)
    y = np.asarray(y)
    r = y - a @ x
    corr = float(np.abs(a.conj().T @ r).max()) if a.shape[1] else 0.0
    if h == 0:
        s = 1.0
    else:
        s = 1.0 if corr <= h else h / corr
    rr = float(np.vdot(r, r).real)
    primal = 0.5 * rr + h * float(np.abs(x).sum())
    dual = s * float(np.vdot(r, y).real) - 0.5 * s * s * rr
    return max(primal - dual, 0.0)


def kkt_residual(A, y, h, x) -> float:
    """Worst violation of the LASSO first-order optimality conditions.

    With ``r = A^H (y - A x)``: zero entries need ``|r_i| <= h`` and nonzero
    entries need ``r_i = h * x_i/|x_i|``.
    """
    a = as_matrix(A)
    x = np.asarray(x)
    r = a.conj().T @ (np.asarray(y) - a @ x)
    mag = np.abs(x)
    nz = mag > 0
    viol = np.where(nz, 0.0, np.maximum(np.abs(r) - h, 0.0))
    if nz.any():
        phase = x[nz] / mag[nz]
        viol[nz] = np.abs(r[nz] - h * phase)
    return float(viol.max()) if viol.size else 0.0


def lipschitz_constant(G: np.ndarray, iters: int = 500, rtol: float = 1e-7) -> float:
    """Largest eigenvalue of the PSD Gram matrix ``G`` by power iteration.

    The estimate approaches the true value from below; callers add a margin
    and the solver backtracks if the local quadratic bound is ever violated.
    """
    n = G.shape[0]
    if n == 0:
        return 0.0
    v = np.random.default_rng(0x5EED).standard_normal(n).astype(G.dtype)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        w = G @ v
        nw = np.linalg.norm(w)
        if nw == 0:
            return 0.0
        new = float(np.vdot(v, w).real)
        v = w / nw
        if abs(new - lam) <= rtol * abs(new):
            lam = new
            break
        lam = new
    return float(np.linalg.norm(G @ v))


def _polish(G, AHy, x, h, is_complex):
    """Solve the stationarity conditions on the current support.

    Real case: one linear solve with the signs held fixed, rejected if any
    sign flips.  Complex case: damped Newton iterations on the (smooth on
    the support) restricted objective in real coordinates.
    """
    T = np.flatnonzero(x)
    if T.size == 0:
        return None
    GT = G[np.ix_(T, T)]
    bT = AHy[T]
    if not is_complex:
        s = np.sign(x[T])
        try:
            u = np.linalg.solve(GT, bT - h * s)
        except np.linalg.LinAlgError:
            return None
        if not np.all(np.sign(u) == s):
            return None
        out = np.zeros_like(x)
        out[T] = u
        return out

    k = T.size
    GR = np.block([[GT.real, -GT.imag], [GT.imag, GT.real]])

    def phi(u):
        return 0.5 * float(np.vdot(u, GT @ u).real) - float(np.vdot(bT, u).real) + h * float(np.abs(u).sum())

    u = x[T].astype(complex)
    f = phi(u)
    for _ in range(50):
        mag = np.abs(u)
        if np.any(mag == 0):
            return None
        w = GT @ u - bT + h * u / mag
        g = np.concatenate([w.real, w.imag])
        if np.linalg.norm(g, np.inf) < 1e-15 * max(1.0, h):
            break
        H = GR.copy()
        for i in range(k):
            v = np.array([u[i].real, u[i].imag])
            blk = (h / mag[i]) * (np.eye(2) - np.outer(v, v) / mag[i] ** 2)
            idx = [i, i + k]
            H[np.ix_(idx, idx)] += blk
        try:
            d = np.linalg.solve(H, -g)
        except np.linalg.LinAlgError:
            return None
        step = d[:k] + 1j * d[k:]
        alpha = 1.0
        while alpha > 1e-12:
            cand = u + alpha * step
            fc = phi(cand)
            if fc <= f:
                break
            alpha *= 0.5
        else:
            break
        if np.all(cand == u):
            break
        u, f = cand, fc
    out = np.zeros_like(x, dtype=complex)
    out[T] = u
    return out


def lasso_solve(
    A,
    y,
    h: float,
    cfg: Optional[SolverConfig] = None,
    record_trace: bool = False,
    lipschitz: Optional[float] = None,
) -> LassoSolution:
    """Solve the LASSO program to a certified duality gap.

    Parameters
    ----------
    A : array_like or Dictionary
        M x N matrix, real or complex.
    y : array_like
        Length-M observation.
    h : float
        Regularization weight, ``h >= 0``.  ``h == 0`` requires ``M >= N``.
    cfg : SolverConfig, optional
    record_trace : bool
        Keep the objective value of every accepted iterate.
    lipschitz : float, optional
        Precomputed largest eigenvalue of ``A^H A`` (saves a power iteration
        when many right-hand sides share one matrix).

    Returns
    -------
    LassoSolution
        ``converged`` is False if ``cfg.max_iterations`` ran out; the
        diagnostics then describe the last iterate.
    """
    cfg = cfg or SolverConfig()
    a = as_matrix(A)
    y = np.asarray(y)
    M, N = a.shape
    if y.shape != (M,):
        raise ValueError(f"y has shape {y.shape}, expected ({M},)")
    if not h >= 0:
        raise ValueError(f"h must be nonnegative, got {h}")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(y))):
        raise ValueError("A and y must be finite")
    if h == 0 and M < N:
        raise ValueError("h = 0 with M < N has no unique least-squares solution")

    is_complex = np.iscomplexobj(a) or np.iscomplexobj(y)
    dtype = complex if is_complex else float
    a = a.astype(dtype, copy=False)
    y = y.astype(dtype, copy=False)

    def finish(x, it, trace):
        obj = lasso_objective(a, y, x, h)
        gap = duality_gap(a, y, x, h)
        kkt = kkt_residual(a, y, h, x)
        ok = gap <= cfg.duality_gap_tol * max(1.0, obj) and kkt <= cfg.kkt_tol
        return LassoSolution(x, h, obj, it, gap, kkt, ok, trace)

    AHy = a.conj().T @ y
    if N == 0 or h >= float(np.abs(AHy).max(initial=0.0)):
        x0 = np.zeros(N, dtype=dtype)
        return finish(x0, 0, [lasso_objective(a, y, x0, h)] if record_trace else None)

    if h == 0:
        x_ls = np.linalg.lstsq(a, y, rcond=None)[0]
        return finish(x_ls, 1, [lasso_objective(a, y, x_ls, h)] if record_trace else None)

    G = a.conj().T @ a
    Lip = (lipschitz if lipschitz is not None else lipschitz_constant(G)) * 1.01
    ynorm2 = float(np.vdot(y, y).real)

    def smooth(v):
        return 0.5 * ynorm2 - float(np.vdot(v, AHy).real) + 0.5 * float(np.vdot(v, G @ v).real)

    def F(v):
        # Residual form: no cancellation against ||y||^2 near the optimum.
        r = y - a @ v
        return 0.5 * float(np.vdot(r, r).real) + h * float(np.abs(v).sum())

    def prox_step(v):
        # Backtrack until the quadratic upper bound at v holds.
        nonlocal Lip
        grad = G @ v - AHy
        fv = smooth(v)
        while True:
            cand = soft_threshold(v - grad / Lip, h / Lip)
            d = cand - v
            bound = fv + float(np.vdot(grad, d).real) + 0.5 * Lip * float(np.vdot(d, d).real)
            if smooth(cand) <= bound + 1e-14 * max(1.0, abs(fv)):
                return cand
            Lip *= 2.0

    x = np.zeros(N, dtype=dtype)
    fx = F(x)
    z = x.copy()
    t = 1.0
    trace = [fx] if record_trace else None
    last_support = None
    it = 0
    while it < cfg.max_iterations:
        it += 1
        cand = prox_step(z)
        fc = F(cand)
        if fc <= fx:
            t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
            z = cand + ((t - 1.0) / t_new) * (cand - x)
            x, fx, t = cand, fc, t_new
        elif np.array_equal(z, x):
            # A plain proximal step cannot ascend except by round-off.
            if fc - fx > 8 * np.finfo(float).eps * max(1.0, abs(fx)) or np.array_equal(cand, x):
                if record_trace:
                    trace.append(fx)
                break
            z, x, fx, t = cand.copy(), cand, fc, 1.0
        else:
            z, t = x.copy(), 1.0
        if record_trace:
            trace.append(fx)

        if it % cfg.check_every:
            continue
        sol = finish(x, it, trace)
        if sol.converged:
            return sol
        support = tuple(np.flatnonzero(x))
        if cfg.polish and support and support == last_support:
            xp = _polish(G, AHy, x, h, is_complex)
            if xp is not None:
                fp = F(xp)
                if fp <= fx:
                    x, fx = xp, fp
                    z, t = x.copy(), 1.0
                    if record_trace:
                        trace[-1] = fx
                    sol = finish(x, it, trace)
                    if sol.converged:
                        return sol
        last_support = support

    return finish(x, it, trace)


def oracle_solve(A, y, h: float, max_N: int = 12, tol: float = 1e-9) -> np.ndarray:
    """Exact LASSO minimiser by enumerating supports and sign patterns.

    For each support ``T`` and sign vector ``s`` the candidate solves
    ``A_T^T A_T u = A_T^T y - h s``; it is kept if ``sign(u) == s`` and every
    off-support correlation satisfies ``|a_j^T r| <= h``.  Among feasible
    candidates the smallest objective wins.  Exponential in N; real only.
    """
    a = np.asarray(as_matrix(A))
    y = np.asarray(y)
    if np.iscomplexobj(a) or np.iscomplexobj(y):
        raise ValueError("oracle_solve supports real data only")
    M, N = a.shape
    if N > max_N:
        raise ValueError(f"N={N} too large for exhaustive enumeration (max {max_N})")
    G = a.T @ a
    b = a.T @ y
    best_x = np.zeros(N)
    best_f = lasso_objective(a, y, best_x, h) if np.abs(b).max(initial=0) <= h + tol else math.inf
    for k in range(1, N + 1):
        signs = np.array(list(itertools.product((-1.0, 1.0), repeat=k))).T  # k x 2^k
        for T in itertools.combinations(range(N), k):
            T = list(T)
            GT = G[np.ix_(T, T)]
            try:
                U = np.linalg.solve(GT, b[T][:, None] - h * signs)
            except np.linalg.LinAlgError:
                continue
            if np.linalg.cond(GT) > 1e12:
                continue
            ok = np.all(np.sign(U) == signs, axis=0)
            for col in np.flatnonzero(ok):
                x = np.zeros(N)
                x[T] = U[:, col]
                r = y - a @ x
                if np.abs(a.T @ r).max() > h + tol:
                    continue
                f = lasso_objective(a, y, x, h)
                if f < best_f:
                    best_f, best_x = f, x
    if not math.isfinite(best_f):
        raise LassoConvergenceError("no KKT-feasible candidate found")
    return best_x


def truncate_small(x, h: float, ratio: float):
    """Zero entries with ``|x_i| < ratio*h``; the boundary value is kept."""
    if not 0 <= ratio < 1:
        raise ValueError("ratio must lie in [0, 1)")
    x = np.asarray(x)
    return np.where(np.abs(x) < ratio * h, 0.0 * x, x)
