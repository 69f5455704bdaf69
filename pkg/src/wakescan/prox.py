"""Penalties and proximal operators.

Elementwise operators accept scalars or arrays.  Sinogram-shaped grids are
treated as flat vectors by the elementwise operators, as an ``R x T`` matrix
by :func:`nuclear_prox` and as a 2-D image by :func:`tv_prox`.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "PriorKind",
    "PriorSpec",
    "ScalingMatrixSpec",
    "HuberResult",
    "soft_threshold",
    "mc_penalty",
    "huber",
    "generalized_huber",
    "gst_threshold",
    "gst_prox_lp",
    "tv_norm",
    "tv_prox",
    "nuclear_norm",
    "nuclear_prox",
    "twist_gamma",
    "penalty",
]


class PriorKind(str, enum.Enum):
    GMC = "gmc"
    L1 = "l1"
    LP = "lp"
    TV = "tv"
    NUCLEAR = "nuclear"


@dataclass(frozen=True)
class PriorSpec:
    """Regularizer choice with its scale and prior-specific parameters."""

    kind: PriorKind
    lam: float
    p: float | None = None
    gamma: float | None = None
    inner_iters: int = 40

    def __post_init__(self):
        object.__setattr__(self, "kind", PriorKind(self.kind))
        if not self.lam > 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")
        if self.kind is PriorKind.LP:
            if self.p is None or not 0 < self.p < 1:
                raise ValueError(f"Lp prior needs 0 < p < 1, got {self.p}")
        elif self.p is not None:
            raise ValueError("p is only meaningful for the Lp prior")
        if self.kind is PriorKind.GMC:
            if self.gamma is None:
                object.__setattr__(self, "gamma", 0.6)
            elif not 0 <= self.gamma <= 1:
                raise ValueError(f"GMC gamma must lie in [0, 1], got {self.gamma}")
        elif self.gamma is not None:
            raise ValueError("gamma is only meaningful for the GMC prior")
        if self.inner_iters < 1:
            raise ValueError("inner_iters must be positive")

    @property
    def label(self) -> str:
        if self.kind is PriorKind.LP:
            return f"lp{self.p:g}"
        return self.kind.value


@dataclass(frozen=True)
class ScalingMatrixSpec:
    """Implicit scaling matrix ``B = sqrt(gamma / lam1) * C``."""

    gamma: float
    lam1: float

    def __post_init__(self):
        if not self.lam1 > 0:
            raise ValueError("lam1 must be positive")
        if self.gamma < 0:
            raise ValueError("gamma must be non-negative")

    @property
    def factor(self) -> float:
        return math.sqrt(self.gamma / self.lam1)

    @property
    def convex(self) -> bool:
        return 0 <= self.gamma <= 1


def soft_threshold(u, t):
    """``sign(u) * max(|u| - t, 0)``."""
    if np.any(np.asarray(t) < 0):
        raise ValueError("threshold must be non-negative")
    u = np.asarray(u, dtype=float)
    out = np.sign(u) * np.maximum(np.abs(u) - t, 0.0)
    return out if out.ndim else float(out)


def huber(t):
    """Huber function: ``t**2 / 2`` for ``|t| <= 1``, else ``|t| - 1/2``."""
    a = np.abs(np.asarray(t, dtype=float))
    out = np.where(a <= 1, 0.5 * a * a, a - 0.5)
    return out if out.ndim else float(out)


def mc_penalty(t):
    """Univariate minimax concave penalty."""
    a = np.abs(np.asarray(t, dtype=float))
    out = np.where(a <= 1, a - 0.5 * a * a, 0.5)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class HuberResult:
    value: float
    minimizer: np.ndarray
    iterations: int
    converged: bool


def generalized_huber(
    t,
    forward: Callable[[np.ndarray], np.ndarray],
    adjoint: Callable[[np.ndarray], np.ndarray],
    scale: ScalingMatrixSpec,
    inner_iters: int = 500,
    tol: float = 1e-6,
    lipschitz: float | None = None,
) -> HuberResult:
    """Evaluate ``inf_v ||v||_1 + 0.5 * ||B (t - v)||^2`` with ``B = factor * forward``.

    The infimum is computed with accelerated proximal gradient on ``v``,
    stopping when the relative change of the cost falls below ``tol``.
    ``adjoint`` must be the exact transpose of ``forward``.  The operator norm
    is estimated by power iteration unless ``lipschitz`` (the squared norm of
    ``forward``) is given.
    """
    t = np.asarray(t, dtype=float)
    b2 = scale.factor ** 2
    l1 = float(np.abs(t).sum())
    if b2 == 0 or l1 == 0:
        return HuberResult(0.0, t.copy(), 0, True)

    if lipschitz is None:
        lipschitz = _power_norm(forward, adjoint, t.shape)
    step = 1.0 / (b2 * lipschitz)

    def cost(v):
        d = forward(t - v)
        return float(np.abs(v).sum() + 0.5 * b2 * np.vdot(d, d))

    v = t.copy()
    z = v.copy()
    k = 1.0
    best_v, best = v.copy(), cost(v)
    prev = best
    converged = False
    it = 0
    for it in range(1, inner_iters + 1):
        grad = -b2 * adjoint(forward(t - z))
        v_new = soft_threshold(z - step * grad, step)
        k_new = 0.5 * (1 + math.sqrt(1 + 4 * k * k))
        c = cost(v_new)
        if c > prev:
            # restart momentum on increase
            z = v.copy()
            k = 1.0
            continue
        z = v_new + ((k - 1) / k_new) * (v_new - v)
        v, k = v_new, k_new
        if c < best:
            best, best_v = c, v.copy()
        if abs(prev - c) <= tol * max(abs(c), 1e-300):
            converged = True
            prev = c
            break
        prev = c
    return HuberResult(min(best, l1), best_v, it, converged)


def _power_norm(forward, adjoint, shape, iters: int = 100) -> float:
    rng = np.random.default_rng(0)
    x = rng.standard_normal(shape)
    x /= np.linalg.norm(x)
    val = 0.0
    for _ in range(iters):
        y = adjoint(forward(x))
        val = float(np.linalg.norm(y))
        if val == 0:
            return 1.0
        x = y / val
    return val * 1.01


def gst_threshold(lam: float, p: float) -> float:
    """Generalized soft-thresholding threshold for ``lam * |x|**p``."""
    base = 2 * lam * (1 - p)
    return base ** (1 / (2 - p)) + lam * p * base ** ((p - 1) / (2 - p))


def gst_prox_lp(u, lam: float, p: float, max_iter: int = 50, tol: float = 1e-8):
    """Generalized soft thresholding, the prox of ``lam * |x|**p`` for ``0 < p < 1``."""
    if not 0 < p < 1:
        raise ValueError(f"p must lie in (0, 1), got {p}")
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    u = np.asarray(u, dtype=float)
    a = np.abs(u)
    live = a > gst_threshold(lam, p)
    x = np.where(live, a, 0.0)
    au = a[live]
    xl = au.copy()
    for _ in range(max_iter):
        nxt = au - lam * p * xl ** (p - 1)
        done = np.max(np.abs(nxt - xl), initial=0.0) < tol
        xl = nxt
        if done:
            break
    x[live] = xl
    out = np.sign(u) * x
    return out if out.ndim else float(out)


def _grad(z):
    gx = np.zeros_like(z)
    gy = np.zeros_like(z)
    gx[:, :-1] = z[:, 1:] - z[:, :-1]
    gy[:-1, :] = z[1:, :] - z[:-1, :]
    return gx, gy


def _div(px, py):
    # negative transpose of _grad
    d = np.zeros_like(px)
    d[:, :-1] += px[:, :-1]
    d[:, 1:] -= px[:, :-1]
    d[:-1, :] += py[:-1, :]
    d[1:, :] -= py[:-1, :]
    return d


def tv_norm(z) -> float:
    """Anisotropic total variation ``||grad z||_1`` with forward differences."""
    gx, gy = _grad(np.asarray(z, dtype=float))
    return float(np.abs(gx).sum() + np.abs(gy).sum())


def tv_prox(image, lam: float, inner_iters: int = 40, tol: float = 1e-5):
    """Solve ``min_z 0.5 * ||z - image||^2 + lam * TV(z)`` by dual projection.

    Projected gradient on the dual field with step 1/8 and Nesterov
    extrapolation (the fast gradient projection variant of the classical dual
    scheme); the box projection realizes the anisotropic TV. Momentum is
    reset whenever the extrapolated step points against the last update,
    which removes most of the oscillation on piecewise-constant inputs.
    """
    f = np.asarray(image, dtype=float)
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    if lam == 0:
        return f.copy()
    px = np.zeros_like(f)
    py = np.zeros_like(f)
    qx, qy = px, py
    k = 1.0
    tau = 1.0 / 8.0
    for _ in range(inner_iters):
        gx, gy = _grad(_div(qx, qy) - f / lam)
        nx = np.clip(qx + tau * gx, -1.0, 1.0)
        ny = np.clip(qy + tau * gy, -1.0, 1.0)
        change = max(np.max(np.abs(nx - px)), np.max(np.abs(ny - py)))
        if np.vdot(qx - nx, nx - px) + np.vdot(qy - ny, ny - py) > 0:
            k = 1.0
        k_new = 0.5 * (1 + math.sqrt(1 + 4 * k * k))
        mom = (k - 1) / k_new
        qx = nx + mom * (nx - px)
        qy = ny + mom * (ny - py)
        px, py, k = nx, ny, k_new
        if change < tol:
            break
    return f - lam * _div(px, py)


def nuclear_norm(z) -> float:
    return float(np.linalg.svd(np.asarray(z, dtype=float), compute_uv=False).sum())


def nuclear_prox(matrix, lam: float):
    """Singular value soft thresholding."""
    z = np.asarray(matrix, dtype=float)
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    if lam == 0:
        return z.copy()
    try:
        u, s, vt = np.linalg.svd(z, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise FloatingPointError("SVD failed on numerically degenerate input") from exc
    s = np.maximum(s - lam, 0.0)
    keep = s > 0
    return (u[:, keep] * s[keep]) @ vt[keep]


def twist_gamma(u, spec: PriorSpec, lam: float | None = None):
    """Shrinkage/denoising step used by TwIST.

    For L1 and Lp the prox output rescales the input,
    ``|prox(u)| / (|prox(u)| + lam) * u``; TV and nuclear return the prox.
    """
    lam = spec.lam if lam is None else lam
    u = np.asarray(u, dtype=float)
    if spec.kind is PriorKind.GMC:
        raise ValueError("GMC is solved by forward-backward iteration, not TwIST")
    if spec.kind in (PriorKind.L1, PriorKind.LP):
        if spec.kind is PriorKind.L1:
            px = np.abs(soft_threshold(u, lam))
        else:
            px = np.abs(gst_prox_lp(u, lam, spec.p))
        out = px / (px + lam) * u
        return out if out.ndim else float(out)
    if spec.kind is PriorKind.TV:
        return tv_prox(u, lam, spec.inner_iters)
    return nuclear_prox(u, lam)


def penalty(x, spec: PriorSpec) -> float:
    """Value of ``psi(x)`` for the non-GMC priors (unscaled by lambda)."""
    x = np.asarray(x, dtype=float)
    if spec.kind is PriorKind.L1:
        return float(np.abs(x).sum())
    if spec.kind is PriorKind.LP:
        return float((np.abs(x) ** spec.p).sum())
    if spec.kind is PriorKind.TV:
        return tv_norm(x)
    if spec.kind is PriorKind.NUCLEAR:
        return nuclear_norm(x)
    raise ValueError("GMC penalty needs the forward operator; use generalized_huber")
