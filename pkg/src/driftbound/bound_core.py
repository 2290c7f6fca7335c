"""Model-agnostic total-variation convergence certificates.

A Markov chain that contracts a nonnegative energy function on a designated
subset of the state space (``E[f(X_1)|X_0=x] <= lambda*f(x) + b`` there) and
admits a uniform kernel component ``epsilon * Q`` on the sublevel set
``{f <= d}`` yields an explicit bound on the distance to stationarity:

    (1 - eps*Q_mass)^(r*k)
      + [ (alpha*Lambda)^(r*k) * (1 + E_init[f] + b/(1-lambda)) - alpha^(r*k) ]
        / (alpha^k - alpha^(r*k))
      + k * pi_exit + cumulative_exit(k)

with ``alpha^-1 = (1 + 2b + lambda*d)/(1 + d)`` and
``Lambda = 1 + 2(lambda*d + b)``.  The free exponent ``r`` defaults to the
value that balances the two geometric rates, giving a single decay factor
``gamma = (1 - eps*Q_mass)^r = alpha^-1 (alpha*Lambda)^r``.

The exit terms (``pi_exit``, ``cumulative_exit``) account for excursions off
the subset where the contraction holds; with the whole space as that subset
they vanish and the classic certificate is recovered.

Everything is evaluated in log space so certificates stay finite for step
counts up to 10**6 and beyond.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

__all__ = [
    "BoundError",
    "DriftParameters",
    "MinorizationCertificate",
    "DerivedConstants",
    "TailSequence",
    "derive_alpha_lambda",
    "optimal_r",
    "derived_constants",
    "evaluate_bound",
    "classic_bound",
    "mixing_time_certificate",
]


class BoundError(Exception):
    """A certificate input violates its contract."""


@dataclass(frozen=True)
class DriftParameters:
    """Energy-contraction constants plus the small-set level.

    ``d_small`` must exceed ``2*b_drift/(1-lam)``; below that threshold the
    derived constant alpha degenerates to <= 1 and no certificate exists.
    ``initial_drift_expectation`` is the energy of the (point-mass) initial
    distribution.
    """

    lam: float
    b_drift: float
    d_small: float
    initial_drift_expectation: float = 0.0

    def __post_init__(self):
        if not (0.0 < self.lam < 1.0):
            raise BoundError(f"lambda must lie in (0,1), got {self.lam!r}")
        if not (self.b_drift >= 0.0 and math.isfinite(self.b_drift)):
            raise BoundError(f"b_drift must be finite and >= 0, got {self.b_drift!r}")
        if not (self.d_small > 2.0 * self.b_drift / (1.0 - self.lam)):
            raise BoundError(
                f"d_small must exceed 2*b/(1-lambda) = "
                f"{2.0 * self.b_drift / (1.0 - self.lam)!r}, got {self.d_small!r}"
            )
        if not (self.initial_drift_expectation >= 0.0):
            raise BoundError("initial_drift_expectation must be >= 0")


@dataclass(frozen=True)
class MinorizationCertificate:
    """Uniform-component volume and a lower bound on its mass on the good set."""

    epsilon: float
    q_mass_lower: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.epsilon <= 1.0):
            raise BoundError(f"epsilon must lie in (0,1], got {self.epsilon!r}")
        if not (0.0 <= self.q_mass_lower <= 1.0):
            raise BoundError(f"q_mass_lower must lie in [0,1], got {self.q_mass_lower!r}")
        if not (self.epsilon * self.q_mass_lower < 1.0):
            raise BoundError("epsilon * q_mass_lower must be < 1")


@dataclass(frozen=True)
class DerivedConstants:
    """alpha, Lambda, and the balanced exponent r with its rate gamma.

    ``log_inv_gamma`` carries log(1/gamma) exactly.  For very small
    minorization mass the true gamma sits within one ulp of 1 and the float
    field rounds to 1.0; the strict inequality gamma < 1 is then certified
    by log_inv_gamma > 0, which never rounds away.
    """

    alpha: float
    Lambda: float
    r: float
    gamma: float
    log_inv_gamma: float

    def __post_init__(self):
        if not (self.alpha > 1.0):
            raise BoundError(f"alpha must exceed 1, got {self.alpha!r}")
        if not (self.Lambda >= 1.0):
            raise BoundError(f"Lambda must be >= 1, got {self.Lambda!r}")
        if not (0.0 < self.r < 1.0):
            raise BoundError(f"r must lie in (0,1), got {self.r!r}")
        if not (self.log_inv_gamma > 0.0):
            raise BoundError(f"log(1/gamma) must be positive, got {self.log_inv_gamma!r}")
        if not (0.0 < self.gamma <= 1.0):
            raise BoundError(f"gamma must lie in (0,1], got {self.gamma!r}")
        if abs(math.exp(-self.log_inv_gamma) - self.gamma) > 1e-12:
            raise BoundError("gamma and log_inv_gamma are inconsistent")


@dataclass(frozen=True)
class TailSequence:
    """Exit-probability budget: per-step stationary mass outside the good set
    and a cumulative bound on the chain's own exit probabilities."""

    pi_exit_bound: float = 0.0
    cumulative_exit_bound: Callable[[int], float] = field(default=lambda k: 0.0)

    def __post_init__(self):
        if not (self.pi_exit_bound >= 0.0):
            raise BoundError("pi_exit_bound must be >= 0")
        at_zero = self.cumulative_exit_bound(0)
        if at_zero != 0.0:
            raise BoundError(f"cumulative_exit_bound(0) must be 0, got {at_zero!r}")

    @staticmethod
    def zero() -> "TailSequence":
        return TailSequence()


def derive_alpha_lambda(p: DriftParameters) -> tuple[float, float]:
    """Closed forms alpha^-1 = (1+2b+lambda*d)/(1+d) and Lambda = 1+2(lambda*d+b)."""
    inv_alpha = (1.0 + 2.0 * p.b_drift + p.lam * p.d_small) / (1.0 + p.d_small)
    if inv_alpha >= 1.0:
        raise BoundError("small set too small relative to drift constants (alpha <= 1)")
    lam_cap = 1.0 + 2.0 * (p.lam * p.d_small + p.b_drift)
    return 1.0 / inv_alpha, lam_cap


def optimal_r(alpha: float, Lambda: float, eps_q: float) -> tuple[float, float]:
    """Balancing exponent r = log(alpha) / log(alpha*Lambda/(1-eps_q)).

    At this r the two geometric factors coincide:
    gamma = (1-eps_q)^r = alpha^-1 * (alpha*Lambda)^r.
    """
    if eps_q <= 0.0:
        raise BoundError("no minorization mass (eps_q <= 0)")
    if eps_q >= 1.0:
        raise BoundError(f"eps_q must be < 1, got {eps_q!r}")
    if not (alpha > 1.0 and Lambda >= 1.0):
        raise BoundError(f"need alpha > 1 and Lambda >= 1, got {alpha!r}, {Lambda!r}")
    log_alpha = math.log(alpha)
    denom = math.log(alpha * Lambda) - math.log1p(-eps_q)
    r = log_alpha / denom
    gamma = math.exp(r * math.log1p(-eps_q))
    return r, gamma


def derived_constants(
    p: DriftParameters,
    m: MinorizationCertificate,
    r_override: float | None = None,
) -> DerivedConstants:
    """Assemble DerivedConstants from drift and minorization certificates.

    With the default balanced r, the identity
    (1-eps*q)^r == alpha^-1 (alpha*Lambda)^r is verified to 1e-12 relative.
    """
    alpha, lam_cap = derive_alpha_lambda(p)
    eps_q = m.epsilon * m.q_mass_lower
    if eps_q <= 0.0:
        raise BoundError("no minorization mass (eps_q <= 0)")
    if r_override is None:
        r, gamma = optimal_r(alpha, lam_cap, eps_q)
        other = math.exp(r * math.log(alpha * lam_cap) - math.log(alpha))
        if abs(gamma - other) > 1e-12 * abs(gamma):
            raise BoundError("balanced-rate identity failed beyond 1e-12 relative error")
    else:
        if not (0.0 < r_override < 1.0):
            raise BoundError(f"r must lie in (0,1), got {r_override!r}")
        r = r_override
        gamma = math.exp(r * math.log1p(-eps_q))
    log_inv_gamma = -r * math.log1p(-eps_q)
    return DerivedConstants(
        alpha=alpha, Lambda=lam_cap, r=r, gamma=gamma, log_inv_gamma=log_inv_gamma
    )


def evaluate_bound(
    p: DriftParameters,
    m: MinorizationCertificate,
    dc: DerivedConstants,
    t: TailSequence,
    k: int,
) -> float:
    """Raw certificate value at step k (not clamped to [0,1]).

    All powers are computed as exp(k*log(.)); the coupling ratio is reduced
    so that every exponent is nonpositive, which keeps the evaluation finite
    for k up to 10**6 and beyond.
    """
    if not (isinstance(k, (int,)) and k >= 1):
        raise BoundError(f"k must be a positive integer, got {k!r}")
    if not (0.0 < dc.r < 1.0):
        raise BoundError(f"r must lie in (0,1) for the denominator to be positive, got {dc.r!r}")
    eps_q = m.epsilon * m.q_mass_lower
    if eps_q <= 0.0:
        raise BoundError("no minorization mass (eps_q <= 0)")

    log_alpha = math.log(dc.alpha)
    log_alpha_lam = math.log(dc.alpha * dc.Lambda)
    term1 = math.exp(dc.r * k * math.log1p(-eps_q))

    c0 = 1.0 + p.initial_drift_expectation + p.b_drift / (1.0 - p.lam)
    # [ (aL)^{rk} c0 - a^{rk} ] / (a^k - a^{rk}), divided through by a^k:
    e_num = math.exp(dc.r * k * log_alpha_lam - k * log_alpha + math.log(c0))
    e_sub = math.exp((dc.r - 1.0) * k * log_alpha)
    term2 = (e_num - e_sub) / (1.0 - e_sub)

    tails = k * t.pi_exit_bound + t.cumulative_exit_bound(k)
    return term1 + term2 + tails


def classic_bound(
    p: DriftParameters,
    epsilon: float,
    k: int,
    r_override: float | None = None,
) -> float:
    """Certificate with the whole space as the good set: full minorization
    mass and no exit terms."""
    m = MinorizationCertificate(epsilon=epsilon, q_mass_lower=1.0)
    dc = derived_constants(p, m, r_override=r_override)
    return evaluate_bound(p, m, dc, TailSequence.zero(), k)


def mixing_time_certificate(
    C1: float,
    C2: float,
    C3: float,
    gamma: float,
    c: float,
    n_floor: int = 1,
    log_inv_gamma: float | None = None,
) -> tuple[int, int]:
    """Step and sample-size thresholds certifying distance <= c.

    Splitting the three-term bound C1*gamma^k + C2*k(1+k)/n + C3*k/sqrt(n)
    into equal budgets of c/3 gives a step count
    ``K_bar = ceil[(log C1 - log(c/3)) / log(1/gamma)]`` (at least 1) and a
    sample-size threshold
    ``N_c = ceil max{n_floor, (K_bar*3*C3/c)^2, ((K_bar+1)*sqrt(3*C3/c))^2}``
    past which K_bar steps suffice.  ``log_inv_gamma``, when supplied,
    replaces log(1/gamma) exactly (needed when gamma rounds to 1.0).
    """
    if log_inv_gamma is None:
        if not (0.0 < gamma < 1.0):
            raise BoundError(f"gamma must lie in (0,1), got {gamma!r}")
        log_inv_gamma = math.log(1.0 / gamma)
    elif not (log_inv_gamma > 0.0 and 0.0 < gamma <= 1.0):
        raise BoundError(f"need log(1/gamma) > 0 and gamma in (0,1], got {log_inv_gamma!r}")
    if not (C1 > 0.0 and C2 > 0.0 and C3 > 0.0):
        raise BoundError("C1, C2, C3 must be positive")
    if not (0.0 < c < 1.0):
        raise BoundError(f"c must lie in (0,1), got {c!r}")
    if n_floor < 1:
        raise BoundError("n_floor must be >= 1")
    k_bar = max(1, math.ceil((math.log(C1) - math.log(c / 3.0)) / log_inv_gamma))
    n_c = max(
        float(n_floor),
        (k_bar * 3.0 * C3 / c) ** 2,
        ((k_bar + 1.0) * math.sqrt(3.0 * C3 / c)) ** 2,
    )
    if not math.isfinite(n_c):
        raise BoundError("sample-size threshold overflowed")
    return k_bar, math.ceil(n_c)
