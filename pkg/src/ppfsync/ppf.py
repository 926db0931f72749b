"""Prescribed performance funnel and the constrained/unconstrained error maps.

The funnel rho(t) decays exponentially from rho0 to rho_inf. A synchronization
error e is admissible while e/rho stays inside an open interval whose ends are
set by delta_upper / delta_lower and the sign of e at t=0:

  positive start:  -delta_lower < e/rho < delta_upper
  negative start:  -delta_upper < e/rho < delta_lower   (mirrored)

Inside that interval the log-ratio transform maps e/rho to an unconstrained
transformed error; leaving it is a FunnelViolation and aborts the run.
"""
import math
from dataclasses import dataclass

import numpy as np

from .errors import FunnelViolation


@dataclass(frozen=True)
class PpfParams:
    """Funnel parameters for one agent/channel."""

    rho0: float          # initial funnel radius, > rho_inf
    rho_inf: float       # terminal radius, > 0
    decay: float         # exponential rate, 1/s
    delta_upper: float   # upper interval scale, > 0
    delta_lower: float   # lower interval scale, > 0

    def __post_init__(self):
        if not (self.rho0 >= self.rho_inf > 0.0):
            raise ValueError(
                f"need rho0 >= rho_inf > 0, got {self.rho0}, {self.rho_inf}")
        if self.decay <= 0.0:
            raise ValueError("decay must be positive")
        if self.delta_upper <= 0.0 or self.delta_lower <= 0.0:
            raise ValueError("delta bounds must be strictly positive")


@dataclass(frozen=True)
class SignBranch:
    """Branch selector fixed at t=0 from the sign of the initial error.

    Switching never occurs after t=0; knowing sign(e(0)) is enough to keep
    one transform for the whole run.
    """

    positive_start: bool

    @staticmethod
    def from_initial_error(e0):
        return SignBranch(positive_start=bool(e0 >= 0.0))


def effective_bounds(p, branch):
    """(lower_scale, upper_scale) of the funnel interval for this branch.

    The negative-start branch mirrors the interval by swapping the roles of
    delta_upper and delta_lower.
    """
    if branch.positive_start:
        return p.delta_lower, p.delta_upper
    return p.delta_upper, p.delta_lower


@dataclass(frozen=True)
class TransformedErrors:
    """Transformed error chain for one agent/channel.

    eps[m-1] holds the order-m transformed error; phi1/phi2 are the shifted
    views [eps^1..eps^{M-1}] and [eps^2..eps^M] used by the filter algebra.
    """

    eps: np.ndarray
    r: float

    @property
    def phi1(self):
        return self.eps[:-1]

    @property
    def phi2(self):
        return self.eps[1:]


def ppf_value(p, t):
    """Funnel radius rho(t) = (rho0 - rho_inf) exp(-decay t) + rho_inf."""
    return (p.rho0 - p.rho_inf) * math.exp(-p.decay * t) + p.rho_inf


def ppf_derivative(p, t):
    """d rho / dt = -decay (rho0 - rho_inf) exp(-decay t), always <= 0."""
    return -p.decay * (p.rho0 - p.rho_inf) * math.exp(-p.decay * t)


def _check_inside(u, lo, up, t=None, agent=None, channel=None):
    if not (-lo < u < up):
        raise FunnelViolation(
            f"normalized error {u:.6g} outside open interval "
            f"({-lo:.6g}, {up:.6g})",
            t=t, agent=agent, channel=channel, ratio=float(u))


def transform_error(e, rho, p, branch=SignBranch(True)):
    """Map a constrained error to the unconstrained transformed error.

    eps = 0.5 ln[(lo + e/rho) / (up - e/rho)] with (lo, up) the effective
    branch bounds; strictly increasing in e. Raises FunnelViolation when
    e/rho is at or outside the open interval.
    """
    lo, up = effective_bounds(p, branch)
    u = e / rho
    _check_inside(u, lo, up)
    return 0.5 * math.log((lo + u) / (up - u))


def inverse_transform(eps, p, branch=SignBranch(True)):
    """Normalized error F(eps) in (-lo, up) for a transformed error eps.

    Evaluated in tanh form, (up - lo)/2 + (up + lo)/2 * tanh(eps), which is
    overflow-free for large |eps| and clamps to the asymptotes.
    """
    lo, up = effective_bounds(p, branch)
    return 0.5 * (up - lo) + 0.5 * (up + lo) * math.tanh(eps)


def r_factor(e, rho, p, branch=SignBranch(True)):
    """Funnel-geometry gain r = (1/(2 rho)) (1/(lo + e/rho) + 1/(up - e/rho)).

    Strictly positive inside the funnel and divergent at its edges; equals
    the slope of transform_error with respect to e at fixed rho.
    """
    lo, up = effective_bounds(p, branch)
    u = e / rho
    _check_inside(u, lo, up)
    return (1.0 / (lo + u) + 1.0 / (up - u)) / (2.0 * rho)


def epsilon_chain(e_derivs, rho, rho_dot, p, branch=SignBranch(True)):
    """Transformed-error chain for one channel from the error derivatives.

    eps^1 is the exact transform of e^1; higher orders follow the
    dominant-term recursion eps^{m+1} = r (e^{m+1} - e^m rho_dot/rho),
    neglecting the vanishing higher-order funnel-derivative terms.
    """
    e_derivs = np.asarray(e_derivs, dtype=float)
    order = e_derivs.shape[0]
    r = r_factor(e_derivs[0], rho, p, branch)
    eps = np.empty(order)
    eps[0] = transform_error(e_derivs[0], rho, p, branch)
    if order > 1:
        ratio = rho_dot / rho
        eps[1:] = r * (e_derivs[1:] - e_derivs[:-1] * ratio)
    return TransformedErrors(eps=eps, r=r)
