"""MAP solvers for the inverse Radon problem ``Y = C X + N``.

``C`` is filtered back-projection and the solvers use the Radon transform in
the role of ``C^T``.  The pair is not an exact transpose pair, so both solvers
carry a divergence guard.

With that pairing ``R C`` is close to the orthogonal projector onto the range
of the Radon transform, so the iterations descend the MAP cost with the
residual measured in the Radon domain,
``0.5 * ||R (Y - C X)||^2 + lam * psi(X)``.  That is the cost traced and used
by the monotone safeguard; :func:`gmc_cost` keeps the image-domain saddle
objective.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .io import atomic_write
from .prox import PriorKind, PriorSpec, penalty, soft_threshold, twist_gamma
from .transform import RadonOperator

__all__ = [
    "SolverConfig",
    "SolverResult",
    "SolverDivergence",
    "relative_change",
    "gmc_cost",
    "map_cost",
    "standardize",
    "solve_fb_gmc",
    "solve_twist",
    "solve",
    "write_trace_csv",
]

log = logging.getLogger(__name__)

DIVERGENCE_FACTOR = 10.0
DIVERGENCE_PATIENCE = 20
BACKTRACK_STEPS = 8


class SolverDivergence(RuntimeError):
    """The iteration blew up, usually because the step is too large."""


@dataclass(frozen=True)
class SolverConfig:
    prior: PriorSpec
    mu: float = 0.5
    alpha: float = 1.96
    tol: float = 1e-3
    max_iter: int = 1000

    def __post_init__(self):
        if not 0 < self.mu < 1.9:
            raise ValueError(f"step mu must lie in (0, 1.9), got {self.mu}")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be positive")


@dataclass(frozen=True)
class SolverResult:
    estimate: np.ndarray
    iterations: int
    final_rel_change: float
    cost_trace: list = field(default_factory=list)
    rel_trace: list = field(default_factory=list)
    converged: bool = False


def relative_change(current, previous) -> float:
    """``||current - previous|| / ||previous||``; ``inf`` when ``previous`` is zero."""
    current = np.asarray(current, dtype=float)
    previous = np.asarray(previous, dtype=float)
    if current.shape != previous.shape:
        raise ValueError(f"shape mismatch {current.shape} vs {previous.shape}")
    den = np.linalg.norm(previous)
    if den == 0:
        return math.inf
    return float(np.linalg.norm(current - previous) / den)


def gmc_cost(X, v, Y, lam: float, gamma: float, op: RadonOperator) -> float:
    """Saddle objective ``||Y - CX||^2 + lam ||X||_1 - lam ||v||_1 - gamma ||C(X - v)||^2``."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    if not 0 <= gamma <= 1:
        raise ValueError("gamma must lie in [0, 1]")
    X = np.asarray(X, dtype=float)
    v = np.asarray(v, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.shape != op.shape or v.shape != op.shape:
        raise ValueError("X and v must be sinogram shaped")
    if Y.shape != (op.size, op.size):
        raise ValueError("Y does not match the operator image size")
    r = Y - op.inverse_radon(X)
    d = op.inverse_radon(X - v)
    return float(
        np.vdot(r, r) + lam * np.abs(X).sum() - lam * np.abs(v).sum() - gamma * np.vdot(d, d)
    )


def map_cost(X, Y, spec: PriorSpec, op: RadonOperator, CX=None) -> float:
    """``0.5 * ||R (Y - C X)||^2 + lam * psi(X)``; GMC is scored with its L1 part."""
    if CX is None:
        CX = op.inverse_radon(X)
    r = op.radon(np.asarray(Y) - CX)
    if spec.kind is PriorKind.GMC:
        psi = float(np.abs(X).sum())
    else:
        psi = penalty(X, spec)
    return float(0.5 * np.vdot(r, r) + spec.lam * psi)


def standardize(Y, mask=None) -> np.ndarray:
    """Zero mean, unit variance over unmasked pixels; masked pixels set to zero."""
    Y = np.asarray(Y, dtype=float)
    sel = np.ones(Y.shape, bool) if mask is None else np.asarray(mask, bool)
    vals = Y[sel]
    sd = vals.std()
    out = (Y - vals.mean()) / (sd if sd > 0 else 1.0)
    out[~sel] = 0.0
    return out


class _Guard:
    def __init__(self, initial: float):
        self.limit = DIVERGENCE_FACTOR * max(initial, 1e-300)
        self.run = 0

    def check(self, cost: float, it: int):
        if not math.isfinite(cost):
            raise SolverDivergence(f"non-finite cost at iteration {it}")
        self.run = self.run + 1 if cost > self.limit else 0
        if self.run >= DIVERGENCE_PATIENCE:
            raise SolverDivergence(
                f"cost above {DIVERGENCE_FACTOR:g}x its initial value for "
                f"{DIVERGENCE_PATIENCE} iterations (iteration {it}); reduce mu"
            )


def solve_fb_gmc(Y, config: SolverConfig, op: RadonOperator) -> SolverResult:
    """Forward-backward iteration on the GMC saddle problem."""
    spec = config.prior
    if spec.kind is not PriorKind.GMC:
        raise ValueError("solve_fb_gmc needs a GMC prior")
    Y = np.asarray(Y, dtype=float)
    if not np.all(np.isfinite(Y)):
        raise ValueError("Y contains non-finite values")
    mu, lam, gamma = config.mu, spec.lam, spec.gamma
    thr = mu * lam

    X = np.zeros(op.shape)
    v = np.zeros(op.shape)
    RY = op.radon(Y)
    RCX = np.zeros(op.shape)
    RCv = np.zeros(op.shape)
    guard = _Guard(0.5 * float(np.vdot(RY, RY)))
    costs, rels = [], []
    rel = math.inf
    it = 0
    while it < config.max_iter:
        rd = RCv - RCX
        res = RY - RCX
        costs.append(
            float(0.5 * np.vdot(res, res) + lam * np.abs(X).sum() - lam * np.abs(v).sum()
                  - 0.5 * gamma * np.vdot(rd, rd))
        )
        guard.check(costs[-1], it)
        w = X - mu * (RCX + gamma * rd - RY)
        u = v - mu * gamma * rd
        X_new = soft_threshold(w, thr)
        v = soft_threshold(u, thr)
        rel = relative_change(X_new, X)
        if not np.any(X_new) and not np.any(X):
            rel = 0.0
        X = X_new
        RCX, RCv = op.radon_of_inverse(np.stack([X, v]))
        it += 1
        rels.append(rel)
        if rel <= config.tol:
            break
    return SolverResult(X, it, rel, costs, rels, rel <= config.tol)


def solve_twist(Y, config: SolverConfig, op: RadonOperator) -> SolverResult:
    """Two-step iterative shrinkage/thresholding for the L1, Lp, TV and nuclear priors.

    A candidate two-step update that raises the cost is replaced by a
    one-step shrinkage update, with step halving if that also fails (the
    monotone variant of TwIST).
    """
    spec = config.prior
    if spec.kind is PriorKind.GMC:
        raise ValueError("GMC is solved by solve_fb_gmc")
    Y = np.asarray(Y, dtype=float)
    if not np.all(np.isfinite(Y)):
        raise ValueError("Y contains non-finite values")
    alpha = config.alpha

    RY = op.radon(Y)

    fwd = op.radon_of_inverse

    def cost(X, RCX):
        r = RY - RCX
        return float(0.5 * np.vdot(r, r) + spec.lam * penalty(X, spec))

    X_prev = np.zeros(op.shape)
    guard = _Guard(0.5 * float(np.vdot(RY, RY)))
    # first iterate is one plain shrinkage step from zero
    X = twist_gamma(RY, spec)
    RCX = fwd(X)
    c = cost(X, RCX)
    costs = [cost(X_prev, np.zeros(op.shape)), c]
    rel = relative_change(X, X_prev)
    if not np.any(X):
        rel = 0.0
    rels = [rel]
    it = 1
    while rel > config.tol and it < config.max_iter:
        grad = RY - RCX
        G = twist_gamma(X + grad, spec)
        X_new = (1 - alpha) * X_prev - alpha * X + 2 * alpha * G
        RCX_new = fwd(X_new)
        c_new = cost(X_new, RCX_new)
        if c_new > c:
            X_new = G
            RCX_new = fwd(G)
            c_new = cost(X_new, RCX_new)
            step = 1.0
            for _ in range(BACKTRACK_STEPS):
                if c_new <= c:
                    break
                step *= 0.5
                X_new = twist_gamma(X + step * grad, spec, lam=step * spec.lam)
                RCX_new = fwd(X_new)
                c_new = cost(X_new, RCX_new)
            else:
                if c_new > c:
                    X_new, RCX_new, c_new = X, RCX, c
        rel = relative_change(X_new, X)
        if not np.any(X_new) and not np.any(X):
            rel = 0.0
        X_prev, X, RCX, c = X, X_new, RCX_new, c_new
        it += 1
        costs.append(c)
        rels.append(rel)
        guard.check(c, it)
    return SolverResult(X, it, rel, costs, rels, rel <= config.tol)


def solve(image, config: SolverConfig, mask=None, n_angles: int = 180, op: RadonOperator | None = None) -> SolverResult:
    """Standardize the image and dispatch to the solver matching the prior."""
    img = np.asarray(image, dtype=float)
    if op is None:
        op = RadonOperator(img.shape[0], n_angles, mask)
    Y = standardize(img, mask)
    if config.prior.kind is PriorKind.GMC:
        return solve_fb_gmc(Y, config, op)
    return solve_twist(Y, config, op)


def write_trace_csv(result: SolverResult, path) -> None:
    with atomic_write(path, "w") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "rel_change", "cost"])
        for i, c in enumerate(result.cost_trace):
            rel = result.rel_trace[i - 1] if 0 < i <= len(result.rel_trace) else ""
            w.writerow([i, "" if rel == "" else repr(float(rel)), repr(float(c))])
