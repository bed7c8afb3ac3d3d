"""The smoothed Cramer-Lundberg-with-loan model: parameters, tabulated flow,
reward integral and the PDMP description used by the valuation operators.

Surplus grows at premium rate c, borrows at rate rho below zero, is ruined
below -c/rho, and pays dividends at rate c near the barrier b.  Drift and
dividend rate are the C2-smoothed versions with width eps; claims are
exponential with rate alpha and arrive with Poisson intensity lam.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError
from .flow import FlowTable, build_flow_table, cached_flow_table
from .model import ComponentSpec, Interval, ModelSpec
from .smoothing import (
    JumpKernelSpec,
    KernelBranch,
    smoothed_drift_loan,
    smoothed_reward_loan,
    unsmoothed_drift_loan,
)

__all__ = ["LoanParams", "SmoothedLoanModel", "unsmoothed_loan_model"]


@dataclass(frozen=True)
class LoanParams:
    """Parameter block of the numerical experiment."""

    c: float = 5.0
    rho: float = 0.05
    b: float = 3.24289
    lam: float = 4.0
    alpha: float = 1.0
    delta: float = 0.02
    eps: float = 0.01

    def __post_init__(self):
        for name in ("c", "rho", "b", "lam", "alpha", "delta"):
            if getattr(self, name) <= 0.0:
                raise InputError(f"{name} must be positive, got {getattr(self, name)}")

    @property
    def ruin_level(self) -> float:
        return -self.c / self.rho


@dataclass
class SmoothedLoanModel:
    """Built model: parameters plus the master flow table and PDMP spec.

    Component indices follow the three-component description of the smoothed
    model: 1 is the live interval (-c/rho, inf), 2 the ruin half-line below
    -c/rho, 3 the absorbing point at -c/rho (2 and 3 form the cemetery).
    """

    params: LoanParams
    table: FlowTable
    spec: ModelSpec = field(init=False)

    def __post_init__(self):
        p = self.params
        live = ComponentSpec(
            domain=Interval(p.ruin_level, math.inf),
            drift=self.drift,
            intensity=p.lam,
            intensity_bound=p.lam,
            flow=self.table.flow_at,
        )
        below = ComponentSpec(domain=Interval(-math.inf, p.ruin_level), is_cemetery=True)
        edge = ComponentSpec(
            domain=Interval(p.ruin_level, p.ruin_level, closed_lower=True, closed_upper=True),
            is_cemetery=True,
        )
        kernel = JumpKernelSpec(
            branches=(KernelBranch(prob=self._stay_prob, transform=self._jump_to, target=1),),
            eps=p.eps,
        )
        self.spec = ModelSpec(
            components={1: live, 2: below, 3: edge},
            jump_kernel=kernel,
            reward=lambda k, y: self.reward(y) if k == 1 else 0.0,
            terminal=lambda k, y: 0.0,
            discount=p.delta,
            reward_bound=p.c,
            terminal_bound=0.0,
        )

    # -- construction --------------------------------------------------------

    @classmethod
    def build(cls, c=5.0, rho=0.05, b=3.24289, lam=4.0, alpha=1.0, delta=0.02,
              eps=0.01, tol=1e-10, cache_dir=None) -> "SmoothedLoanModel":
        params = LoanParams(c=c, rho=rho, b=b, lam=lam, alpha=alpha, delta=delta, eps=eps)
        if lam + delta <= 3.0:
            # integrability condition for the substituted integrand to stay
            # bounded at the origin corner; a warning, not an error
            warnings.warn(
                f"lam + delta = {lam + delta} <= 3: the substituted integrand "
                "is unbounded near v = 0",
                stacklevel=2,
            )
        drift = lambda y: smoothed_drift_loan(y, c, rho, b, eps)
        reward = lambda y: smoothed_reward_loan(y, c, b, eps)
        make = lambda: build_flow_table(
            drift,
            (params.ruin_level, b),
            delta,
            reward,
            tol=tol,
            feature_scale=eps,
            refine_y=(-eps, 0.0, eps, b - 2.0 * eps, b - eps, b),
        )
        if cache_dir is not None:
            table = cached_flow_table((c, rho, b, eps, delta, tol), make, cache_dir)
        else:
            table = make()
        model = cls(params=params, table=table)
        model.spec.validate()  # sample-check declared bounds and support rules
        return model

    # -- local characteristics ------------------------------------------------

    def drift(self, y):
        p = self.params
        return smoothed_drift_loan(y, p.c, p.rho, p.b, p.eps)

    def reward(self, y):
        p = self.params
        return smoothed_reward_loan(y, p.c, p.b, p.eps)

    def jump_density(self, y):
        """Claim-size density f_Y(y) = alpha exp(-alpha y) on y >= 0."""
        a = self.params.alpha
        y = np.asarray(y, dtype=float)
        out = np.where(y >= 0.0, a * np.exp(-a * np.minimum(y, 700.0 / a)), 0.0)
        return out if out.ndim else float(out)

    def _stay_prob(self, y):
        # mass of claims that do not ruin from position y
        return 1.0 - math.exp(-self.params.alpha * (y - self.params.ruin_level))

    def _jump_to(self, u, y):
        # inverse transform of the claim size conditioned on surviving
        p = self._stay_prob(y)
        size = -math.log1p(-u * p) / self.params.alpha
        return y - size

    # -- derived quantities ----------------------------------------------------

    @property
    def lam(self) -> float:
        return self.params.lam

    @property
    def delta(self) -> float:
        return self.params.delta

    @property
    def value_bound(self) -> float:
        """C_V = c/delta (no terminal cost)."""
        return self.params.c / self.params.delta

    def flow(self, y, t):
        return self.table.flow_at(y, t)

    def reward_integral(self, y, t):
        """L(t, y): discounted dividends along the flow, t may be +inf."""
        return self.table.reward_integral(y, t)


def unsmoothed_loan_model(c=5.0, rho=0.05, b=3.24289, lam=4.0, alpha=1.0,
                          delta=0.02) -> ModelSpec:
    """Five-component description of the original (unsmoothed) loan model.

    Used for boundary-hitting demonstrations; the crude Monte Carlo reference
    simulates this model with piecewise closed-form flows instead.
    """
    ruin = -c / rho
    drift1 = lambda y: unsmoothed_drift_loan(y, c, rho, b)
    comps = {
        1: ComponentSpec(domain=Interval(0.0, b, closed_lower=True), drift=drift1,
                         intensity=lam, intensity_bound=lam),
        2: ComponentSpec(domain=Interval(ruin, 0.0), drift=drift1,
                         intensity=lam, intensity_bound=lam),
        3: ComponentSpec(domain=Interval(b, b, closed_lower=True, closed_upper=True),
                         intensity=lam, intensity_bound=lam),
        4: ComponentSpec(domain=Interval(-math.inf, ruin), is_cemetery=True),
        5: ComponentSpec(domain=Interval(ruin, ruin, closed_lower=True, closed_upper=True),
                         is_cemetery=True),
    }
    return ModelSpec(
        components=comps,
        jump_kernel=None,
        reward=lambda k, y: c if k == 3 else 0.0,
        terminal=lambda k, y: 0.0,
        discount=delta,
        reward_bound=c,
        terminal_bound=0.0,
    )
