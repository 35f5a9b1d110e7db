"""Recycled MM-GKS inner solver and the cumulative reweighting outer driver.

The inner solver minimizes ``||Ax - b||^2 + lam * ||Lx||_q^q`` by
majorization-minimization: each step solves a weighted Tikhonov problem
projected onto a generalized Krylov subspace that is enlarged from ``k_min``
to ``k_max`` columns, compressed back to ``k_min``, and then reused.

The outer driver multiplies ``L`` row-wise by cumulative weights ``d`` that
shrink wherever edges are detected and never grow back.
"""
from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .operators import LinearOperator

__all__ = [
    "SolverWarning",
    "SolverConfig",
    "SubspaceState",
    "ConvergenceLog",
    "LogRecord",
    "InnerResult",
    "CRResult",
    "mm_weights",
    "cumulative_update",
    "residual_gradient",
    "expand_subspace",
    "solve_projected",
    "select_lambda_discrepancy",
    "select_lambda_lcurve",
    "lcurve_corner",
    "compress_subspace",
    "append_solution_direction",
    "golub_kahan_basis",
    "rmm_gks",
    "cr_lq_rmm_gks",
    "objective",
]

LAMBDA_LOG_RANGE = (-12.0, 12.0)
LCURVE_LOG_RANGE = (-10.0, 4.0)
DISCREPANCY_RTOL = 1e-3
ORTH_DROP_TOL = 1e-12
COMPRESSION_RULES = ("data", "solution", "sigma")


class SolverWarning(UserWarning):
    """Non-fatal solver conditions: degenerate updates, parameter fallbacks."""


@dataclass(frozen=True)
class SolverConfig:
    """Parameters shared by the inner and outer solvers.

    ``max_cycles`` caps the number of enlarge-compress cycles in one inner
    call; ``None`` means run until the relative-change test or the budget
    stops it.  ``compression`` picks which right singular directions of the
    stacked projected matrix survive compression (see
    :func:`compress_subspace`).  ``warm_start`` starts each outer iteration
    from the previous iterate and parameter instead of from zero.
    """

    q: float = 1.0
    k_min: int = 5
    k_max: int = 25
    epsilon: float = 1e-2
    s: float = 1.0
    n_outer: int = 30
    inner_tol: float = 1e-5
    total_budget: int = 600
    tau: float = 1.01
    param_rule: str = "discrepancy"
    max_cycles: int | None = None
    lcurve_grid: int = 100
    compression: str = "data"
    warm_start: bool = True

    def __post_init__(self):
        if not 0.0 < self.q <= 2.0:
            raise ValueError(f"q must lie in (0, 2], got {self.q}")
        if not 1 <= self.k_min < self.k_max:
            raise ValueError(f"need 1 <= k_min < k_max, got {self.k_min}, {self.k_max}")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.s <= 0:
            raise ValueError("s must be positive")
        if self.tau < 1:
            raise ValueError("tau must be at least 1")
        if self.n_outer < 1:
            raise ValueError("n_outer must be at least 1")
        if self.total_budget < 1:
            raise ValueError("total_budget must be at least 1")
        if self.param_rule not in ("discrepancy", "lcurve"):
            raise ValueError(f"unknown parameter rule {self.param_rule!r}")
        if self.max_cycles is not None and self.max_cycles < 1:
            raise ValueError("max_cycles must be positive or None")
        if self.compression not in COMPRESSION_RULES:
            raise ValueError(f"unknown compression rule {self.compression!r}")
        if self.lcurve_grid < 10:
            raise ValueError("lcurve_grid must be at least 10")


@dataclass
class SubspaceState:
    basis: np.ndarray
    solution: np.ndarray
    lam: float = 0.0
    mm_weights: np.ndarray | None = None
    inner_iter: int = 0

    @property
    def dim(self) -> int:
        return self.basis.shape[1]


@dataclass(frozen=True)
class LogRecord:
    global_iter: int
    outer_iter: int
    rre: float | None
    residual_norm: float
    lam: float
    subspace_dim: int


@dataclass
class ConvergenceLog:
    records: list[LogRecord] = field(default_factory=list)

    HEADER = ("iter", "outer", "rre", "resnorm", "lambda", "subdim")

    @property
    def n_iter(self) -> int:
        return len(self.records)

    def record(self, outer_iter, rre, residual_norm, lam, subspace_dim) -> LogRecord:
        rec = LogRecord(
            global_iter=self.n_iter + 1,
            outer_iter=int(outer_iter),
            rre=None if rre is None else float(rre),
            residual_norm=float(residual_norm),
            lam=float(lam),
            subspace_dim=int(subspace_dim),
        )
        self.records.append(rec)
        return rec

    def rre(self) -> np.ndarray:
        return np.array([np.nan if r.rre is None else r.rre for r in self.records])

    def outer(self) -> np.ndarray:
        return np.array([r.outer_iter for r in self.records], dtype=int)

    def to_csv(self, path: str | Path | None = None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.HEADER)
        for r in self.records:
            writer.writerow(
                [
                    r.global_iter,
                    r.outer_iter,
                    "" if r.rre is None else repr(r.rre),
                    repr(r.residual_norm),
                    repr(r.lam),
                    r.subspace_dim,
                ]
            )
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, path: str | Path) -> "ConvergenceLog":
        log = cls()
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                log.records.append(
                    LogRecord(
                        global_iter=int(row["iter"]),
                        outer_iter=int(row["outer"]),
                        rre=float(row["rre"]) if row["rre"] else None,
                        residual_norm=float(row["resnorm"]),
                        lam=float(row["lambda"]),
                        subspace_dim=int(row["subdim"]),
                    )
                )
        return log


@dataclass
class InnerResult:
    x: np.ndarray
    lam: float
    basis: np.ndarray
    mm_weights: np.ndarray
    status: str
    n_iter: int
    n_cycles: int


@dataclass
class CRResult:
    x: np.ndarray
    log: ConvergenceLog
    weights: list[np.ndarray]
    lambdas: list[float]
    status: str

    @property
    def final_weights(self) -> np.ndarray:
        return self.weights[-1]


# ---------------------------------------------------------------------------
# weights


def mm_weights(Lx: np.ndarray, q: float, epsilon: float) -> np.ndarray:
    """Majorization weights ``(|Lx|^2 + epsilon^2)^((q-2)/2)``.

    ``sum(w * (Lx)**2)`` is the quadratic surrogate of the smoothed
    ``||Lx||_q^q`` at the current iterate, so the diagonal applied inside a
    weighted two-norm is ``sqrt(w)``.
    """
    Lx = np.asarray(Lx, dtype=float)
    if q == 2:
        return np.ones_like(Lx)
    return (Lx * Lx + epsilon * epsilon) ** ((q - 2.0) / 2.0)


def cumulative_update(d: np.ndarray, DLx: np.ndarray, s: float) -> np.ndarray:
    """Shrink ``d`` by ``(1 - g)^s`` where ``g = |DLx| / max|DLx|``.

    A flat iterate (``DLx == 0``) carries no edge information: ``d`` is
    returned unchanged and a :class:`SolverWarning` is emitted.
    """
    d = np.asarray(d, dtype=float)
    mag = np.abs(np.asarray(DLx, dtype=float))
    peak = mag.max() if mag.size else 0.0
    if not peak > 0.0:
        warnings.warn("degenerate cumulative update: D L x is zero", SolverWarning, stacklevel=2)
        return d.copy()
    g = mag / peak
    return d * (1.0 - g) ** s


# ---------------------------------------------------------------------------
# projected least squares


def residual_gradient(A, L, b, x, lam, w) -> np.ndarray:
    """``A^T (Ax - b) + lam * L^T W^2 L x``, half the gradient of the weighted objective."""
    r = A.apply_transpose(A.apply(x) - b)
    if lam != 0.0:
        r = r + lam * L.apply_transpose(w**2 * L.apply(x))
    return r


def objective(A, L, b, x, lam, w) -> float:
    """Weighted Tikhonov objective ``||Ax - b||^2 + lam * ||W L x||^2``."""
    return float(np.sum((A.apply(x) - b) ** 2) + lam * np.sum((w * L.apply(x)) ** 2))


class _Projection:
    """Small stacked problem ``min ||AV z - b||^2 + lam ||WLV z||^2`` in QR form."""

    def __init__(self, AV: np.ndarray, WLV: np.ndarray, b: np.ndarray):
        Q, self.RA = np.linalg.qr(AV)
        self.c = Q.T @ b
        self.b_perp2 = float(np.sum((b - Q @ self.c) ** 2))
        self.RL = np.linalg.qr(WLV, mode="r")
        self.k = AV.shape[1]
        self._zeros = np.zeros(self.RL.shape[0])
        self._rhs = np.concatenate([self.c, self._zeros])

    def solve(self, lam: float) -> np.ndarray:
        M = np.vstack([self.RA, math.sqrt(lam) * self.RL])
        z, *_ = np.linalg.lstsq(M, self._rhs, rcond=None)
        return z

    def residual_norm(self, z: np.ndarray) -> float:
        return math.sqrt(float(np.sum((self.RA @ z - self.c) ** 2)) + self.b_perp2)

    def seminorm(self, z: np.ndarray) -> float:
        return float(np.linalg.norm(self.RL @ z))

    def phi(self, lam: float) -> float:
        return self.residual_norm(self.solve(lam))

    def stacked(self, lam: float) -> np.ndarray:
        return np.vstack([self.RA, math.sqrt(lam) * self.RL])


def _projection(A, L, b, V, w) -> _Projection:
    V = np.asarray(V, dtype=float)
    return _Projection(A.apply(V), np.asarray(w)[:, None] * L.apply(V), b)


def solve_projected(A, L, b, V, w, lam) -> tuple[np.ndarray, float]:
    """Solve the projected weighted Tikhonov problem; return ``(z, ||AVz - b||)``.

    With ``lam == 0`` and a rank-deficient ``AV`` the minimum-norm ``z`` is
    returned.
    """
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    proj = _projection(A, L, b, V, w)
    z = proj.solve(lam)
    return z, proj.residual_norm(z)


def _discrepancy(proj: _Projection, delta: float, tau: float, lam0: float | None = None) -> float:
    target = tau * delta
    if proj.phi(0.0) >= target:
        return 0.0
    lo_lim, hi_lim = LAMBDA_LOG_RANGE
    if proj.phi(10.0**hi_lim) < target:
        warnings.warn(
            "discrepancy not attainable: returning the largest lambda (over-regularized)",
            SolverWarning,
            stacklevel=3,
        )
        return 10.0**hi_lim

    # bracket around the warm start, widening until the target is enclosed
    if lam0 is not None and lam0 > 0:
        c = min(max(math.log10(lam0), lo_lim), hi_lim)
        lo, hi = max(c - 1.0, lo_lim), min(c + 1.0, hi_lim)
        while lo > lo_lim and proj.phi(10.0**lo) > target:
            lo = max(lo - 2.0, lo_lim)
        while hi < hi_lim and proj.phi(10.0**hi) < target:
            hi = min(hi + 2.0, hi_lim)
    else:
        lo, hi = lo_lim, hi_lim

    tol = DISCREPANCY_RTOL * target
    mid = 0.5 * (lo + hi)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        f = proj.phi(10.0**mid) - target
        if abs(f) <= tol or hi - lo < 1e-13:
            break
        if f > 0:
            hi = mid
        else:
            lo = mid
    return 10.0**mid


def select_lambda_discrepancy(A, L, b, V, w, delta, tau=1.01, lam0=None) -> float:
    """Pick ``lam`` so the projected residual equals ``tau * delta``.

    Bisection on ``log10(lam)`` over ``[1e-12, 1e12]`` using monotonicity of
    the residual.  Returns ``0`` if even the unregularized projected residual
    exceeds the target.
    """
    if delta <= 0:
        raise ValueError("noise norm delta must be positive")
    if tau < 1:
        raise ValueError("tau must be at least 1")
    return _discrepancy(_projection(A, L, b, V, w), delta, tau, lam0)


def lcurve_corner(residuals, seminorms) -> int | None:
    """Index of maximum curvature of the log-log L-curve, or ``None`` if flat.

    Points must be ordered by increasing regularization.
    """
    rho = np.log(np.maximum(np.asarray(residuals, dtype=float), 1e-300))
    eta = np.log(np.maximum(np.asarray(seminorms, dtype=float), 1e-300))
    if rho.size < 3:
        return None
    d_rho, d_eta = np.gradient(rho), np.gradient(eta)
    dd_rho, dd_eta = np.gradient(d_rho), np.gradient(d_eta)
    speed = (d_rho**2 + d_eta**2) ** 1.5
    with np.errstate(divide="ignore", invalid="ignore"):
        kappa = np.where(speed > 0, (d_rho * dd_eta - dd_rho * d_eta) / speed, 0.0)
    kappa = np.nan_to_num(kappa, nan=0.0, posinf=0.0, neginf=0.0)
    scale = max(np.ptp(rho), np.ptp(eta))
    if scale <= 1e-12 or kappa.max() <= 1e-8:
        return None
    return int(np.argmax(kappa))


def _lcurve(proj: _Projection, grid_size: int) -> float:
    lams = np.logspace(*LCURVE_LOG_RANGE, grid_size)
    res, sem = [], []
    for lam in lams:
        z = proj.solve(lam)
        res.append(proj.residual_norm(z))
        sem.append(proj.seminorm(z))
    idx = lcurve_corner(res, sem)
    if idx is None:
        warnings.warn("flat L-curve: falling back to the median grid lambda", SolverWarning, stacklevel=3)
        return float(np.median(lams))
    return float(lams[idx])


def select_lambda_lcurve(A, L, b, V, w, grid_size: int = 100) -> float:
    """Pick ``lam`` at the corner of the projected L-curve on a log grid in ``[1e-10, 1e4]``."""
    if grid_size < 10:
        raise ValueError("grid_size must be at least 10")
    return _lcurve(_projection(A, L, b, V, w), grid_size)


# ---------------------------------------------------------------------------
# subspace maintenance


def _orthogonal_direction(V: np.ndarray, r: np.ndarray) -> np.ndarray | None:
    """Unit vector of ``r`` orthogonalized against ``V``; ``None`` if ``r`` is already in the span.

    Two passes of classical Gram-Schmidt against the block ``V``.
    """
    norm_r = float(np.linalg.norm(r))
    if norm_r == 0.0:
        return None
    v = np.array(r, dtype=float)
    if V.shape[1]:
        for _ in range(2):
            v -= V @ (V.T @ v)
    norm_v = float(np.linalg.norm(v))
    if norm_v <= ORTH_DROP_TOL * norm_r:
        return None
    return v / norm_v


def expand_subspace(state: SubspaceState, r: np.ndarray) -> tuple[SubspaceState, bool]:
    """Append the orthonormalized ``r`` to the basis.

    Returns the new state and whether a column was added.
    """
    if not np.linalg.norm(r) > 0:
        raise ValueError("cannot expand with a zero vector")
    v = _orthogonal_direction(state.basis, r)
    if v is None:
        return state, False
    return replace(state, basis=np.column_stack([state.basis, v])), True


def _compression_matrix(stacked, k_min, rule="sigma", rhs=None):
    U, sig, Vt = np.linalg.svd(stacked, full_matrices=False)
    if rule == "sigma":
        return Vt[:k_min].T
    score = np.abs(U.T @ rhs)
    if rule == "solution":
        # size of each singular component of the projected solution
        score = score / np.maximum(sig, np.finfo(float).tiny)
    keep = np.sort(np.argsort(-score, kind="stable")[:k_min])
    return Vt[keep].T


def _orthonormalize(V: np.ndarray) -> np.ndarray:
    Q, R = np.linalg.qr(V)
    # keep column signs so that Q is close to V
    return Q * np.where(np.diag(R) < 0, -1.0, 1.0)


def compress_subspace(
    state: SubspaceState, A, L, w, lam, k_min: int, rule: str = "sigma", b=None
) -> SubspaceState:
    """Shrink the basis to ``k_min`` right singular directions of ``[AV; sqrt(lam) W L V]``.

    With ``M = U S Q^T`` the SVD of the stacked matrix and ``c = U^T [b; 0]``:

    * ``rule="data"`` keeps the directions with the largest ``|c_i|``, the
      ones whose removal would raise the projected objective the most;
    * ``rule="solution"`` keeps the largest ``|c_i| / s_i``, the biggest
      components of the projected solution;
    * ``rule="sigma"`` keeps the largest singular values and ignores ``b``.
    """
    if state.dim <= k_min:
        return state
    if rule not in COMPRESSION_RULES:
        raise ValueError(f"unknown compression rule {rule!r}")
    V = state.basis
    LV = np.asarray(w)[:, None] * L.apply(V)
    stacked = np.vstack([A.apply(V), math.sqrt(lam) * LV])
    rhs = None
    if rule != "sigma":
        if b is None:
            raise ValueError(f"compression rule {rule!r} needs the data vector")
        rhs = np.concatenate([np.asarray(b, dtype=float), np.zeros(LV.shape[0])])
    M = _compression_matrix(stacked, k_min, rule, rhs)
    return replace(state, basis=_orthonormalize(V @ M))


def append_solution_direction(state: SubspaceState) -> SubspaceState:
    """Append the component of the current solution orthogonal to the basis."""
    x = state.solution
    if not np.any(x):
        warnings.warn("zero solution: nothing to append", SolverWarning, stacklevel=2)
        return state
    v = _orthogonal_direction(state.basis, x)
    if v is None:
        return state
    return replace(state, basis=np.column_stack([state.basis, v]))


def golub_kahan_basis(A, b, k: int) -> np.ndarray:
    """Orthonormal basis of ``span{A^T b, (A^T A) A^T b, ...}`` from ``k`` bidiagonalization steps.

    Full reorthogonalization; stops early on breakdown.
    """
    n = A.cols
    k = min(k, n)
    V = np.zeros((n, 0))
    U = np.zeros((A.rows, 0))
    u = np.asarray(b, dtype=float) / np.linalg.norm(b)
    U = u[:, None]
    for _ in range(k):
        v = A.apply_transpose(U[:, -1])
        v = _orthogonal_direction(V, v)
        if v is None:
            break
        V = np.column_stack([V, v])
        u = _orthogonal_direction(U, A.apply(v))
        if u is None:
            break
        U = np.column_stack([U, u])
    return V


# ---------------------------------------------------------------------------
# solvers


def _norm_weights(Lx, q, eps):
    return np.sqrt(mm_weights(Lx, q, eps))


def _select_lambda(proj: _Projection, config: SolverConfig, delta: float, lam0: float) -> float:
    if config.param_rule == "lcurve":
        return _lcurve(proj, config.lcurve_grid)
    return _discrepancy(proj, delta, config.tau, lam0)


def _rre(x, x_true, x_true_norm):
    if x_true is None:
        return None
    return float(np.linalg.norm(x - x_true) / x_true_norm)


def rmm_gks(
    A: LinearOperator,
    L: LinearOperator,
    b: np.ndarray,
    config: SolverConfig,
    V_init: np.ndarray,
    delta: float,
    log: ConvergenceLog | None = None,
    *,
    x_true: np.ndarray | None = None,
    outer_iter: int = 1,
    x0: np.ndarray | None = None,
    lam0: float = 0.0,
) -> InnerResult:
    """Recycled MM-GKS for ``min ||Ax - b||^2 + lam ||Lx||_q^q``.

    Each cycle takes ``k_max - k_min`` inner steps (residual gradient, expand,
    select ``lam``, projected solve, reweight), then compresses the basis to
    ``k_min`` columns and appends the current solution.  Cycles repeat until
    the relative change between cycle ends drops below ``inner_tol``, the
    cycle cap is hit, or the global iteration budget in ``log`` runs out.
    """
    if log is None:
        log = ConvergenceLog()
    b = np.asarray(b, dtype=float)
    V = np.array(V_init, dtype=float)
    if V.shape[1] < 1:
        raise ValueError("initial subspace is empty")
    x_true_norm = None if x_true is None else float(np.linalg.norm(x_true))

    q, eps = config.q, config.epsilon
    AV = A.apply(V)
    LV = L.apply(V)
    if x0 is None:
        x = np.zeros(A.cols)
        Ax = np.zeros(A.rows)
        Lx = np.zeros(L.rows)
    else:
        x = np.array(x0, dtype=float)
        Ax = A.apply(x)
        Lx = L.apply(x)
    lam = float(lam0)
    w = _norm_weights(Lx, q, eps)
    x_prev = None
    status = "max_cycles"
    n_steps = config.k_max - config.k_min
    start_iter = log.n_iter
    cycle = 0

    while True:
        cycle += 1
        exhausted = False
        for _ in range(n_steps):
            if log.n_iter >= config.total_budget:
                exhausted = True
                break
            r = A.apply_transpose(Ax - b)
            if lam != 0.0:
                r += lam * L.apply_transpose(w * w * Lx)
            v = _orthogonal_direction(V, r)
            if v is not None:
                V = np.column_stack([V, v])
                AV = np.column_stack([AV, A.apply(v)])
                LV = np.column_stack([LV, L.apply(v)])
            proj = _Projection(AV, w[:, None] * LV, b)
            lam = _select_lambda(proj, config, delta, lam)
            z = proj.solve(lam)
            x = V @ z
            Ax = AV @ z
            Lx = LV @ z
            w = _norm_weights(Lx, q, eps)
            log.record(outer_iter, _rre(x, x_true, x_true_norm), proj.residual_norm(z), lam, V.shape[1])

        if exhausted:
            status = "budget_exhausted"
            break

        if V.shape[1] > config.k_min:
            stacked = np.vstack([AV, math.sqrt(lam) * (w[:, None] * LV)])
            rhs = np.concatenate([b, np.zeros(LV.shape[0])])
            V = _orthonormalize(V @ _compression_matrix(stacked, config.k_min, config.compression, rhs))
        v = _orthogonal_direction(V, x)
        if v is not None:
            V = np.column_stack([V, v])
        AV = A.apply(V)
        LV = L.apply(V)

        if x_prev is not None:
            prev_norm = float(np.linalg.norm(x_prev))
            if prev_norm > 0 and np.linalg.norm(x - x_prev) / prev_norm < config.inner_tol:
                status = "converged"
                break
        x_prev = x
        if log.n_iter >= config.total_budget:
            status = "budget_exhausted"
            break
        if config.max_cycles is not None and cycle >= config.max_cycles:
            break

    return InnerResult(
        x=x,
        lam=lam,
        basis=V,
        mm_weights=w * w,
        status=status,
        n_iter=log.n_iter - start_iter,
        n_cycles=cycle,
    )


def cr_lq_rmm_gks(
    A: LinearOperator,
    L: LinearOperator,
    b: np.ndarray,
    config: SolverConfig,
    delta: float,
    log: ConvergenceLog | None = None,
    *,
    x_true: np.ndarray | None = None,
    V_init: np.ndarray | None = None,
) -> CRResult:
    """Cumulative reweighted lq regularization with recycled subspaces.

    Outer iteration ``l`` solves the lq problem with operator ``diag(d) L``
    by :func:`rmm_gks`, warm-started from the previous basis, then shrinks
    ``d`` with :func:`cumulative_update`.  The initial basis defaults to
    ``k_min`` Golub-Kahan steps on ``(A, b)``.
    """
    if log is None:
        log = ConvergenceLog()
    if V_init is None:
        V_init = golub_kahan_basis(A, b, config.k_min)
    d = np.ones(L.rows)
    weights = [d]
    lambdas: list[float] = []
    V = V_init
    x = np.zeros(A.cols)
    status = "completed"
    for ell in range(1, config.n_outer + 1):
        if log.n_iter >= config.total_budget:
            status = "budget_exhausted"
            break
        L_eff = L.row_scaled(d)
        if config.warm_start and ell > 1:
            inner = rmm_gks(A, L_eff, b, config, V, delta, log, x_true=x_true, outer_iter=ell, x0=x, lam0=lambdas[-1])
        else:
            inner = rmm_gks(A, L_eff, b, config, V, delta, log, x_true=x_true, outer_iter=ell)
        x, V = inner.x, inner.basis
        lambdas.append(inner.lam)
        d = cumulative_update(d, L_eff.apply(x), config.s)
        weights.append(d)
        if inner.status == "budget_exhausted":
            status = "budget_exhausted"
            break
    return CRResult(x=x, log=log, weights=weights, lambdas=lambdas, status=status)
