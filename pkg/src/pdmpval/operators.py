"""Fixed-point valuation core for the smoothed loan model.

The expected discounted dividend value truncated at n jumps is the integral
over [0,1]^(2n) of a single integrand that accumulates all n terms of the
iterated-integral sum in one forward pass.  Coordinates are laid out
(v_1, z_1, ..., v_n, z_n): v_j = exp(-t_j) carries inter-jump time j (and the
final reward horizon of term j), z_j the relative jump size; z_n is never
read.  At stage j the pass

    adds   W * lam * v_j^(lam-1) * L(-ln v_j, chi_{j-1}),
    moves  chi_j- = flow(chi_{j-1}, -ln v_j),
    draws  y_j = z_j * (chi_j- + c/rho),
    scales W *= lam * v_j^(lam+delta-1) * f_Y(y_j) * (chi_j- + c/rho),
    jumps  chi_j = chi_j- - y_j.

W is kept in log space: it underflows harmlessly for deep stages and any
overflow (possible only on an astronomically unlikely corner of the cube)
is detected rather than silently wrapped.  Jumps below the ruin level carry
zero mass by construction (the substitution samples sizes on
(0, chi + c/rho)), so the integrand never leaves the live component.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .cubature import (
    MC_CHUNK_NODES,
    CubatureSpec,
    RuleKind,
    cp_shift_vector,
    gauss_legendre,
    halton_column,
    halton_permutations,
    mc_chunk,
    sobol_column,
)
from .errors import InputError, ModelError
from .loan import SmoothedLoanModel
from .model import bias_bound

__all__ = ["Estimate", "IteratedPoint", "h_inner", "iterated_integrand",
           "estimate_value", "gauss_validate", "valuation"]

_CHUNK = MC_CHUNK_NODES  # nodes per accumulation chunk (fixed: determinism contract)
_LOG_TINY = 1e-300


@dataclass(frozen=True)
class Estimate:
    """A valuation with its randomized error bar and analytic truncation bias."""

    value: float
    std_error: Optional[float]
    bias_bound: float
    M: int
    d: int
    replicates: int
    wall_ms: float


@dataclass(frozen=True)
class IteratedPoint:
    """One point of the 2n-dimensional substituted integration domain."""

    coords: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coords, dtype=float)
        if c.ndim != 1 or c.size == 0 or c.size % 2:
            raise InputError("coordinates must form a nonempty even-length vector")
        if np.any((c < 0.0) | (c > 1.0)):
            raise InputError("coordinates must lie in [0, 1]")
        object.__setattr__(self, "coords", c)

    @property
    def n(self) -> int:
        return self.coords.size // 2


def h_inner(y: float, v: float, model: SmoothedLoanModel) -> float:
    """Integrand of the pre-first-jump reward in the v = exp(-t) variable.

    Returns L(-ln v, y); v = 0 maps to the infinite-horizon tail.  The
    expected pre-jump reward is the integral of lam * v^(lam-1) * h_inner
    over v in [0, 1].
    """
    if not 0.0 <= v <= 1.0:
        raise InputError(f"v must lie in [0, 1], got {v}")
    t = math.inf if v == 0.0 else -math.log(v)
    return float(model.reward_integral(y, t))


def _check_x0(model: SmoothedLoanModel, x0: float) -> None:
    p = model.params
    if not p.ruin_level < x0 <= p.b:
        raise InputError(
            f"start value {x0} outside ({p.ruin_level}, {p.b}]; "
            "use valuation() for the lump-sum convention above the barrier"
        )


def _integrand_batch(model: SmoothedLoanModel, x0: float, n: int, cols: Callable) -> np.ndarray:
    """Evaluate the n-term accumulated integrand at a batch of points.

    ``cols(dim)`` returns the batch's coordinate array for dimension ``dim``
    in the (v_1, z_1, ...) layout; dimension 2n-1 (z_n) is never requested.
    """
    p = model.params
    table = model.table
    lam, delta, alpha, ruin = p.lam, p.delta, p.alpha, p.ruin_level
    log_lam = math.log(lam)
    log_alpha = math.log(alpha)

    v = np.clip(cols(0), _LOG_TINY, 1.0)
    m = v.shape[0]
    chi = np.full(m, float(x0))
    logw = np.zeros(m)
    total = np.zeros(m)
    for j in range(n):
        if j:
            v = np.clip(cols(2 * j), _LOG_TINY, 1.0)
        logv = np.log(v)
        t = -logv
        t0 = table.time_of(chi)
        reward = table.reward_from_master(t0, t)
        total += np.exp(logw + log_lam + (lam - 1.0) * logv) * reward
        if j < n - 1:
            chi_pre = table.pos_at(t0 + t)
            span = chi_pre - ruin
            z = cols(2 * j + 1)
            jump = z * span
            logw += (log_lam + (lam + delta - 1.0) * logv
                     + log_alpha - alpha * jump + np.log(span))
            chi = chi_pre - jump
    if not np.all(np.isfinite(total)):
        raise ModelError("iterated integrand overflowed at a corner node")
    return total


def iterated_integrand(point: IteratedPoint, x0: float, model: SmoothedLoanModel) -> float:
    """The accumulated integrand at a single point (sum of all n term integrands)."""
    _check_x0(model, x0)
    coords = point.coords

    def cols(dim: int) -> np.ndarray:
        return coords[dim: dim + 1]

    return float(_integrand_batch(model, x0, point.n, cols)[0])


# --- node streams -----------------------------------------------------------


def _replicate_mean(model: SmoothedLoanModel, x0: float, n: int, rule: CubatureSpec,
                    rep: int, workers: int) -> float:
    """Mean of the integrand over one replicate's node set.

    Nodes are processed in fixed-size chunks; each chunk accumulates in index
    order and chunk sums combine in index order, so the result is bit
    identical for any worker count.
    """
    d = rule.d
    if rule.kind is RuleKind.MC:
        shift = None
        perms = None
    else:
        shift = cp_shift_vector(d, rule.seed, rep)
        perms = halton_permutations(d, rule.seed) if rule.kind is RuleKind.SCRAMBLED_HALTON else None

    def chunk_sum(ci: int) -> float:
        i0 = ci * _CHUNK
        i1 = min(i0 + _CHUNK, rule.M)
        if rule.kind is RuleKind.MC:
            block = mc_chunk(ci, i1 - i0, d, rule.seed, rep)
            cols = lambda dim: block[:, dim]
        elif rule.kind is RuleKind.SOBOL:
            cols = lambda dim: np.mod(sobol_column(dim + 1, i0 + 1, i1 + 1) + shift[dim], 1.0)
        else:
            cols = lambda dim: np.mod(halton_column(dim + 1, i0 + 1, i1 + 1, perms) + shift[dim], 1.0)
        vals = _integrand_batch(model, x0, n, cols)
        return float(np.add.reduce(vals))

    n_chunks = (rule.M + _CHUNK - 1) // _CHUNK
    if workers > 1 and n_chunks > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            sums = list(pool.map(chunk_sum, range(n_chunks)))
    else:
        sums = [chunk_sum(ci) for ci in range(n_chunks)]
    total = 0.0
    for s in sums:  # ordered combine
        total += s
    return total / rule.M


def tensor_gauss_apply(fn: Callable, dims: int, mtilde: int) -> float:
    """Apply the mtilde-point Gauss-Legendre product rule over [0,1]^dims.

    ``fn(cols)`` evaluates the integrand on a batch, pulling coordinate
    arrays through ``cols(dim)``; exact for integrands polynomial of degree
    <= 2*mtilde - 1 in each coordinate.
    """
    nodes, wts = gauss_legendre(mtilde)
    total_pts = mtilde ** dims
    acc = 0.0
    for i0 in range(0, total_pts, _CHUNK):
        idx = np.arange(i0, min(i0 + _CHUNK, total_pts), dtype=np.int64)

        def cols(dim: int, _idx=idx) -> np.ndarray:
            return nodes[(_idx // mtilde ** dim) % mtilde]

        w = np.ones(idx.shape, dtype=float)
        for dim in range(dims):
            w *= wts[(idx // mtilde ** dim) % mtilde]
        acc += float(np.add.reduce(w * fn(cols)))
    return acc


def _gauss_tensor_value(model: SmoothedLoanModel, x0: float, n: int, mtilde: int) -> float:
    """Full tensor Gauss-Legendre evaluation over the 2n-1 live dimensions
    (the final jump coordinate z_n is never read by the integrand)."""
    return tensor_gauss_apply(
        lambda cols: _integrand_batch(model, x0, n, cols), 2 * n - 1, mtilde)


# --- public estimators --------------------------------------------------------


def estimate_value(x0: float, n: int, rule: CubatureSpec, model: SmoothedLoanModel,
                   workers: int = 1) -> Estimate:
    """Average the n-jump truncated-sum integrand over the rule's node set.

    Randomized rules run ``rule.replicates`` repetitions (pseudorandom rules
    reseed, low-discrepancy rules are Cranley-Patterson shifted); the value
    is the mean of replicate means and the error bar the standard deviation
    of replicate means over sqrt(R).  The Gauss product rule is deterministic
    and carries no error bar.
    """
    if n < 1:
        raise InputError(f"jump count must be >= 1, got {n}")
    if rule.d != 2 * n:
        raise InputError(f"rule dimension {rule.d} does not match 2n = {2 * n}")
    _check_x0(model, x0)
    start = time.perf_counter()
    if rule.kind is RuleKind.GAUSS_PRODUCT:
        if rule.M ** (2 * n) > 10 ** 7:
            raise InputError(
                f"Gauss product budget exceeded: {rule.M}^{2 * n} > 1e7 nodes")
        value = _gauss_tensor_value(model, x0, n, rule.M)
        std_error = None
        reps = 1
    else:
        means = [_replicate_mean(model, x0, n, rule, r, workers)
                 for r in range(rule.replicates)]
        value = float(np.mean(means))
        reps = rule.replicates
        std_error = (float(np.std(means, ddof=1) / math.sqrt(reps))
                     if reps >= 2 else None)
    wall_ms = (time.perf_counter() - start) * 1e3
    bias = bias_bound(n, model.lam, model.delta, model.value_bound)
    return Estimate(value=value, std_error=std_error, bias_bound=bias,
                    M=rule.M, d=rule.d, replicates=reps, wall_ms=wall_ms)


def gauss_validate(x0: float, n: int, mtilde: int, model: SmoothedLoanModel) -> float:
    """Deterministic tensor Gauss-Legendre value of the n-jump truncated sum.

    Exact for integrands polynomial of degree <= 2*mtilde - 1 per coordinate;
    usable only at small n (the point budget mtilde^(2n) must stay below 1e7).
    """
    if not 1 <= n <= 3:
        raise InputError(f"tensor Gauss oracle supports n <= 3, got {n}")
    if mtilde ** (2 * n) > 10 ** 7:
        raise InputError(f"Gauss product budget exceeded: {mtilde}^{2 * n} > 1e7 nodes")
    _check_x0(model, x0)
    return _gauss_tensor_value(model, x0, n, mtilde)


def valuation(x0: float, n: int, rule: CubatureSpec, model: SmoothedLoanModel,
              workers: int = 1) -> Estimate:
    """Valuation with the lump-sum convention: above the barrier the excess is
    paid out immediately and the remainder is the value at the barrier."""
    if x0 > model.params.b:
        base = estimate_value(model.params.b, n, rule, model, workers=workers)
        return replace(base, value=base.value + (x0 - model.params.b))
    return estimate_value(x0, n, rule, model, workers=workers)
