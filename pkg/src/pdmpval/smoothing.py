"""C2 smoothing primitives: quintic Heaviside, smooth joins of piecewise
functions, the smoothed loan-model drift/reward, and mollified mixture jump
kernels.

Everything here is pure and vectorised over numpy arrays; closures returned
by :func:`smooth_join` capture immutable data only.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable, Union

import numpy as np
from scipy.integrate import quad

from .errors import InputError, ModelError

__all__ = [
    "heaviside",
    "SmoothJoinSide",
    "smooth_join",
    "unsmoothed_drift_loan",
    "smoothed_drift_loan",
    "smoothed_reward_loan",
    "KernelBranch",
    "JumpKernelSpec",
    "smoothed_branch_weight",
    "smoothed_kernel_integrate",
]


def heaviside(y):
    """Quintic C2 step: 0 below -1, 1 above 1, odd quintic ramp in between.

    All polynomial coefficients are dyadic, so h(-1) = 0, h(0) = 0.5 and
    h(1) = 1 hold exactly in floating point, and h(y) + h(-y) = 1 up to one
    ulp.  Nondecreasing everywhere.
    """
    t = np.clip(np.asarray(y, dtype=float), -1.0, 1.0)
    out = 0.5 + t * (15.0 / 16.0 + t * t * (-5.0 / 8.0 + t * t * (3.0 / 16.0)))
    return out if out.ndim else float(out)


class SmoothJoinSide(Enum):
    """Where the 2*eps blend window sits relative to the junction point."""

    LEFT = "left"      # window (xi - 2 eps, xi)
    CENTER = "center"  # window (xi - eps, xi + eps)
    RIGHT = "right"    # window (xi, xi + 2 eps)


_JOIN_SHIFT = {SmoothJoinSide.LEFT: 1.0, SmoothJoinSide.CENTER: 0.0, SmoothJoinSide.RIGHT: -1.0}


def smooth_join(f1, f2, xi, eps, side=SmoothJoinSide.CENTER):
    """Blend two C2 branches of a piecewise function across the junction xi.

    ``f1`` is the branch active above xi, ``f2`` the branch active below.
    Outside the blend window the result equals the original branch exactly
    (the step factors are exactly 0/1 there).  The result is C2 whenever
    both branches are.
    """
    if eps <= 0.0:
        raise InputError(f"blend width must be positive, got eps={eps}")
    side = SmoothJoinSide(side)
    shift = _JOIN_SHIFT[side]

    def joined(y):
        y = np.asarray(y, dtype=float)
        w = (y - xi) / eps + shift
        return f1(y) * heaviside(w) + f2(y) * heaviside(-w)

    return joined


def unsmoothed_drift_loan(y, c, rho, b):
    """Piecewise drift of the loan model with a hard barrier at b.

    c above 0, c + rho*y on the loan band (-c/rho, 0], zero at and below the
    ruin level -c/rho and at and above the barrier.
    """
    y = np.asarray(y, dtype=float)
    out = np.select(
        [y <= -c / rho, y <= 0.0, y < b],
        [0.0, c + rho * y, c],
        default=0.0,
    )
    return out if out.ndim else float(out)


def smoothed_drift_loan(y, c, rho, b, eps):
    """C2 drift of the smoothed loan model (five-piece closed form).

    Equals the unsmoothed drift outside the two width-eps bands around 0 and
    b; blends with a quartic around 0 and tapers to zero with a quintic just
    below the barrier.  Nonnegative everywhere, zero at and above b.
    """
    _check_loan_eps(c, rho, b, eps)
    y = np.asarray(y, dtype=float)
    w = b - y
    taper = c * w ** 3 * (15.0 * eps * (y - b) + 6.0 * w * w + 10.0 * eps * eps) / eps ** 5
    blend = c + rho * (y + 3.0 * eps) * (y - eps) ** 3 / (16.0 * eps ** 3)
    out = np.select(
        [y <= -c / rho, y < -eps, y <= eps, y <= b - eps, y < b],
        [0.0, c + rho * y, blend, c, taper],
        default=0.0,
    )
    return out if out.ndim else float(out)


def smoothed_reward_loan(y, c, b, eps):
    """Dividend rate ramp: 0 below b - 2 eps, c at and above b, C2 monotone."""
    if eps <= 0.0:
        raise InputError(f"smoothing width must be positive, got eps={eps}")
    y = np.asarray(y, dtype=float)
    out = c * heaviside((y - b + eps) / eps)
    return out if np.ndim(out) else float(out)


def _check_loan_eps(c, rho, b, eps):
    # eps < b/4 keeps the two bands disjoint, eps < c/(2 rho) keeps the
    # blended drift positive on the band around 0.
    limit = min(b / 4.0, c / (2.0 * rho))
    if not 0.0 < eps < limit:
        raise InputError(
            f"smoothing width eps={eps} outside (0, {limit}) for c={c}, rho={rho}, b={b}"
        )


# --- mixture jump kernels -------------------------------------------------

ProbLike = Union[float, Callable[[float], float]]


@dataclass(frozen=True)
class KernelBranch:
    """One branch of a mixture jump kernel.

    ``prob`` is the branch mass p_j(x) (constant or a function of the source
    position); ``transform`` maps (u, x) with u in [0,1]^dim to the landing
    position via inverse-transform sampling; ``target`` is the component the
    branch lands in.
    """

    prob: ProbLike
    transform: Callable
    dim: int = 1
    target: int = 1

    def prob_at(self, y: float) -> float:
        p = self.prob(y) if callable(self.prob) else float(self.prob)
        if p < -1e-12 or p > 1.0 + 1e-12:
            raise ModelError(f"branch probability {p} outside [0, 1] at y={y}")
        return min(max(p, 0.0), 1.0)


@dataclass(frozen=True)
class JumpKernelSpec:
    """Mixture kernel with inverse-transform branch maps and a smoothing width.

    Branch masses may sum to less than 1; the deficit is the mass of jumps
    straight to the cemetery (which contribute zero reward and need no map).
    """

    branches: tuple
    eps: float = 0.0

    def __post_init__(self):
        if self.eps < 0.0:
            raise InputError(f"smoothing width must be >= 0, got {self.eps}")
        object.__setattr__(self, "branches", tuple(self.branches))

    def cumulative(self, y: float) -> np.ndarray:
        """Cut points (0, q_1, ..., q_n) of the branch masses at source y."""
        probs = [br.prob_at(y) for br in self.branches]
        q = np.concatenate([[0.0], np.cumsum(probs)])
        if q[-1] > 1.0 + 1e-9:
            raise ModelError(f"branch masses sum to {q[-1]} > 1 at y={y}")
        return np.minimum(q, 1.0)


def smoothed_branch_weight(u0, j, q, eps):
    """C2 mollification of the indicator 1_[q_{j-1}, q_j)(u0).

    The product of the two ramps is 1 deep inside the branch, 1/2 exactly at
    an interior cut point, and the weights over all branches sum to 1 as long
    as every branch is wider than 2*eps.
    """
    if eps <= 0.0:
        raise InputError(f"smoothing width must be positive, got eps={eps}")
    q = np.asarray(q, dtype=float)
    if np.any(np.diff(q) < 0.0):
        raise InputError("cumulative branch masses must be nondecreasing")
    if not 1 <= j <= len(q) - 1:
        raise InputError(f"branch index {j} outside 1..{len(q) - 1}")
    return heaviside((u0 - q[j - 1]) / eps) * heaviside((q[j] - u0) / eps)


def _weight_mass(a: float, b: float, eps: float) -> float:
    """Integral over [0,1] of the mollified indicator of [a, b)."""
    if eps == 0.0:
        return b - a
    pts = sorted({min(max(p, 0.0), 1.0) for p in (a - eps, a + eps, b - eps, b + eps)})
    val, _ = quad(
        lambda u: heaviside((u - a) / eps) * heaviside((b - u) / eps),
        0.0,
        1.0,
        points=pts,
        limit=200,
        epsabs=1e-13,
        epsrel=1e-12,
    )
    return val


def smoothed_kernel_integrate(f, y, spec: JumpKernelSpec, inner=None):
    """Integrate f against the mollified kernel from source position y.

    The mollified weight does not depend on the inner coordinate and the
    branch integrand does not depend on u0, so the double integral factors
    into (weight mass) x (branch integral).  The weight masses are computed
    by adaptive quadrature with the ramp breakpoints supplied; the branch
    integrals use ``inner`` -- a (nodes, weights) rule on [0,1] applied per
    axis -- or adaptive quadrature when ``inner`` is None (dim 1 only).

    As eps -> 0 the result converges to the unsmoothed integral with error
    at most (5/8) * eps * n * sup|f| for n branches.
    """
    q = spec.cumulative(y)
    total = 0.0
    for j, br in enumerate(spec.branches, start=1):
        mass = _weight_mass(q[j - 1], q[j], spec.eps)
        if mass == 0.0:
            continue
        total += mass * _branch_integral(f, y, br, inner)
    return total


def _branch_integral(f, y, br: KernelBranch, inner):
    if inner is None:
        if br.dim != 1:
            raise InputError("adaptive inner quadrature supports dim 1 branches only")
        val, _ = quad(lambda u: f(br.transform(u, y)), 0.0, 1.0, limit=200, epsrel=1e-11)
        return val
    nodes, weights = inner
    nodes = np.asarray(nodes, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if br.dim == 1:
        vals = np.array([f(br.transform(u, y)) for u in nodes])
        return float(np.dot(weights, vals))
    # tensor rule over dim axes
    grids = np.meshgrid(*([nodes] * br.dim), indexing="ij")
    wgrids = np.meshgrid(*([weights] * br.dim), indexing="ij")
    wprod = np.ones_like(wgrids[0])
    for wg in wgrids:
        wprod = wprod * wg
    flat = np.stack([g.ravel() for g in grids], axis=-1)
    vals = np.array([f(br.transform(u, y)) for u in flat])
    return float(np.dot(wprod.ravel(), vals))
