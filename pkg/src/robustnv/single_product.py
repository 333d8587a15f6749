"""Single-product newsvendor ordering under moment ambiguity and misspecification.

The selling profit for an order of ``q`` units under materialized demand ``v``
is ``pi(q, v) = p*min(q, v) - c*q`` with unit price ``p`` and unit cost ``c``;
the critical fractile is ``kappa = (p - c)/p``.

Three layers of decision models live here:

* the *nominal* model — order the ``kappa``-quantile of a known demand law;
* the *ambiguity-averse* model — maximize the worst-case expected profit over
  all laws sharing a given mean ``mu`` and standard deviation ``sigma``
  (the classical minimax order quantity);
* the *misspecification-averse* model — additionally pay for the possibility
  that the true law sits outside the moment set, penalizing candidate laws by
  ``alpha`` times their quadratic optimal-transport distance to it.  The
  penalized inner problem collapses to the pointwise envelope
  ``ell(alpha, q, v) = min_u { pi(q, u) + alpha*(u - v)^2 }``, and the whole
  model admits closed-form order quantities indexed by ``alpha``: small
  ``alpha`` means strong aversion (``alpha -> 0`` orders nothing), while
  ``alpha -> INFINITY`` recovers the ambiguity-only model.

Every solver returns a :class:`SolveReport` carrying the quantity, the model
value, the attaining two-point worst-case law, and (where available) the dual
certificate ``(s_alpha, r_alpha, t_alpha)`` for the mean, second-moment, and
normalization constraints; the identity
``s*mu - r*(mu^2 + sigma^2) - t == value`` is checked on construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, ClassVar, Iterable, Sequence, Union

import numpy as np

from .validation import (
    DegenerateModelError,
    InputError,
    InternalCheckError,
    require,
    require_finite,
    require_nonnegative,
    require_positive,
)

__all__ = [
    "CostStructure",
    "MomentSpec",
    "MisspecIndex",
    "as_misspec_index",
    "DiscreteDistribution",
    "TransformRegime",
    "TransformSpec",
    "Regime",
    "SolveReport",
    "profit",
    "ell",
    "fractile_factor",
    "nominal_quantity",
    "transform",
    "push_forward",
    "ambiguity_worst_case",
    "worst_case_transformed_expectation",
    "scarf_quantity",
    "misspec_quantity",
    "misspec_worst_case",
    "price_threshold_scan",
    "variance_threshold_scan",
]

#: absolute tolerance for internal moment / value cross-checks
_CHECK_TOL = 1e-9


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CostStructure:
    """Unit price and unit cost; requires ``0 < cost < price``."""

    price: float
    cost: float

    def __post_init__(self) -> None:
        require_positive("price", self.price)
        require_finite("cost", self.cost)
        require(
            0.0 < self.cost < self.price,
            f"cost must satisfy 0 < cost < price, got cost={self.cost!r}, "
            f"price={self.price!r}",
        )

    @property
    def kappa(self) -> float:
        """Critical fractile (p - c)/p, always in (0, 1)."""
        return (self.price - self.cost) / self.price


@dataclass(frozen=True)
class MomentSpec:
    """First two moments of demand: mean ``mu > 0`` and std ``sigma >= 0``."""

    mean: float
    std: float

    def __post_init__(self) -> None:
        require_positive("mean", self.mean)
        require_nonnegative("std", self.std)

    @property
    def second_moment(self) -> float:
        return self.mean * self.mean + self.std * self.std


@dataclass(frozen=True)
class MisspecIndex:
    """Index of misspecification aversion.

    ``alpha`` is a finite penalty weight >= 0 (money per squared demand unit);
    the distinguished value :data:`MisspecIndex.INFINITY` selects the
    ambiguity-only model.  Formulas never do arithmetic with ``math.inf`` —
    every operation branches to its documented limit instead.
    """

    alpha: float

    INFINITY: ClassVar["MisspecIndex"]

    def __post_init__(self) -> None:
        a = float(self.alpha)
        if not (math.isinf(a) and a > 0):
            require_nonnegative("alpha", a)
        object.__setattr__(self, "alpha", a)

    @property
    def is_infinite(self) -> bool:
        return math.isinf(self.alpha)

    def __repr__(self) -> str:  # keep reports readable
        return "MisspecIndex.INFINITY" if self.is_infinite else f"MisspecIndex({self.alpha!r})"


MisspecIndex.INFINITY = MisspecIndex(math.inf)

AlphaLike = Union[MisspecIndex, float, int]


def as_misspec_index(alpha: AlphaLike) -> MisspecIndex:
    """Coerce a float (``math.inf`` allowed) or MisspecIndex to MisspecIndex."""
    if isinstance(alpha, MisspecIndex):
        return alpha
    return MisspecIndex(float(alpha))


def _merge_sorted(values, weights, rel_tol=1e-12):
    """Merge coincident support points of a value-sorted atom list."""
    out_v: list[float] = []
    out_w: list[float] = []
    for v, w in zip(values, weights):
        if out_v and abs(v - out_v[-1]) <= rel_tol * max(1.0, abs(out_v[-1])):
            out_w[-1] += w
        else:
            out_v.append(v)
            out_w.append(w)
    return out_v, out_w


@dataclass(frozen=True)
class DiscreteDistribution:
    """Finitely supported demand law with nonnegative, strictly sorted support.

    Invariants enforced on construction: support strictly increasing and
    >= 0, weights >= 0, weights summing to 1 within 1e-12.
    """

    support: tuple[float, ...]
    weights: tuple[float, ...]

    def __post_init__(self) -> None:
        require(len(self.support) > 0, "support must be non-empty")
        require(
            len(self.support) == len(self.weights),
            "support and weights must have equal length",
        )
        sup = tuple(float(v) for v in self.support)
        wts = tuple(float(w) for w in self.weights)
        for v in sup:
            require_finite("support point", v)
            require(v >= 0.0, f"support must be >= 0, got {v!r}")
        for w in wts:
            require_finite("weight", w)
            require(w >= 0.0, f"weights must be >= 0, got {w!r}")
        for a, b in zip(sup, sup[1:]):
            require(a < b, "support must be strictly increasing")
        total = math.fsum(wts)
        require(
            abs(total - 1.0) <= 1e-12,
            f"weights must sum to 1 within 1e-12, got {total!r}",
        )
        object.__setattr__(self, "support", sup)
        object.__setattr__(self, "weights", wts)

    # -- constructors -------------------------------------------------------

    @classmethod
    def from_pairs(
        cls, values: Iterable[float], weights: Iterable[float]
    ) -> "DiscreteDistribution":
        """Build from unsorted atoms: sorts, merges coincident points (rel tol
        1e-12), clamps floating-point dust (weights above -1e-12, support above
        -1e-9), drops zero-weight atoms, and renormalizes exactly.
        """
        v = np.asarray(list(values), dtype=float)
        w = np.asarray(list(weights), dtype=float)
        require(v.size > 0, "need at least one atom")
        require(v.size == w.size, "values and weights must have equal length")
        require(bool(np.all(np.isfinite(v))), "support must be finite")
        require(bool(np.all(np.isfinite(w))), "weights must be finite")
        require(bool(np.all(w >= -1e-12)), f"weights must be >= 0, got min {w.min()!r}")
        require(bool(np.all(v >= -1e-9)), f"support must be >= 0, got min {v.min()!r}")
        w = np.maximum(w, 0.0)
        v = np.maximum(v, 0.0)
        order = np.argsort(v, kind="stable")
        mv, mw = _merge_sorted(v[order], w[order])
        total = math.fsum(mw)
        require(abs(total - 1.0) <= 1e-9, f"weights must sum to ~1, got {total!r}")
        keep = [(x, p / total) for x, p in zip(mv, mw) if p > 1e-15]
        if not keep:  # all mass merged into dust — cannot happen for valid input
            raise InputError("no atom carries positive weight")
        return cls(tuple(x for x, _ in keep), tuple(p for _, p in keep))

    @classmethod
    def from_samples(cls, values: Iterable[float]) -> "DiscreteDistribution":
        """Empirical law: equal weight 1/N per observation, duplicates merged."""
        v = list(values)
        require(len(v) > 0, "need at least one sample")
        return cls.from_pairs(v, [1.0 / len(v)] * len(v))

    @classmethod
    def point_mass(cls, value: float) -> "DiscreteDistribution":
        return cls((float(value),), (1.0,))

    # -- queries ------------------------------------------------------------

    def support_array(self) -> np.ndarray:
        return np.asarray(self.support, dtype=float)

    def weights_array(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=float)

    def mean(self) -> float:
        return float(np.dot(self.support_array(), self.weights_array()))

    def second_moment(self) -> float:
        s = self.support_array()
        return float(np.dot(s * s, self.weights_array()))

    def variance(self) -> float:
        m = self.mean()
        return max(self.second_moment() - m * m, 0.0)

    def std(self) -> float:
        return math.sqrt(self.variance())

    def cdf(self, x: float) -> float:
        """P(V <= x), closed at atoms (tolerance 1e-12 on the comparison)."""
        s = self.support_array()
        return float(self.weights_array()[s <= x + 1e-12].sum())

    def quantile(self, kappa: float) -> float:
        """Left-continuous generalized inverse inf{x : CDF(x) >= kappa}."""
        require(0.0 < kappa <= 1.0, f"kappa must lie in (0, 1], got {kappa!r}")
        cum = np.cumsum(self.weights_array())
        idx = int(np.searchsorted(cum, kappa - 1e-12, side="left"))
        return self.support[min(idx, len(self.support) - 1)]

    def expectation(self, fn: Callable[[float], float]) -> float:
        return math.fsum(w * fn(v) for v, w in zip(self.support, self.weights))


class TransformRegime(str, Enum):
    QUADRATIC = "QUADRATIC"
    MIXED = "MIXED"


@dataclass(frozen=True)
class TransformSpec:
    """Increasing continuous demand transform encoding misspecification.

    QUADRATIC regime (``alpha < p/(4q)``): ``apply(v) = (alpha/p) v^2``.
    MIXED regime (``alpha >= p/(4q)``): quadratic below ``p/(2 alpha)``, the
    shift ``v - p/(4 alpha)`` above; the two pieces agree at the junction.
    ``apply(0) = 0`` in both regimes.  The infinite-index transform is the
    identity (MIXED with a vanishing shift).
    """

    alpha: float
    price: float
    order_quantity: float
    regime: TransformRegime

    def apply(self, v: float) -> float:
        v = float(v)
        require(v >= -0.0 and math.isfinite(v), f"v must be >= 0, got {v!r}")
        if self.regime is TransformRegime.QUADRATIC:
            return (self.alpha / self.price) * v * v
        if math.isinf(self.alpha):
            return v
        if v < self.price / (2.0 * self.alpha):
            return (self.alpha / self.price) * v * v
        return v - self.price / (4.0 * self.alpha)


def transform(alpha: AlphaLike, price: float, q: float) -> TransformSpec:
    """Build the transform attached to order quantity ``q``."""
    a = as_misspec_index(alpha)
    require_positive("price", price)
    require_nonnegative("q", q)
    if a.is_infinite:
        regime = TransformRegime.MIXED  # identity limit
    elif a.alpha == 0.0:
        raise DegenerateModelError("alpha = 0 admits no transform; the model orders zero")
    elif q == 0.0 or a.alpha < price / (4.0 * q):
        regime = TransformRegime.QUADRATIC
    else:
        regime = TransformRegime.MIXED
    return TransformSpec(a.alpha, float(price), float(q), regime)


def push_forward(dist: DiscreteDistribution, t: TransformSpec) -> DiscreteDistribution:
    """Image law of ``dist`` under ``t.apply``; coincident images merge."""
    return DiscreteDistribution.from_pairs(
        [t.apply(v) for v in dist.support], dist.weights
    )


class Regime(str, Enum):
    DEGENERATE = "DEGENERATE"
    LOW_ALPHA = "LOW_ALPHA"
    HIGH_ALPHA = "HIGH_ALPHA"
    AMBIGUITY_ONLY = "AMBIGUITY_ONLY"


@dataclass(frozen=True)
class SolveReport:
    """Outcome of a single-product solve.

    ``duals`` lists ``(name, value)`` pairs for the dual certificate
    (``s_alpha`` for the mean, ``r_alpha`` for the second moment, ``t_alpha``
    for normalization) where available; empty when the certificate degenerates.
    """

    quantity: float
    value: float
    regime: Regime
    alpha: MisspecIndex
    worst_case: DiscreteDistribution
    transformed_worst_case: DiscreteDistribution
    duals: tuple[tuple[str, float], ...] = field(default=())

    def dual(self, name: str) -> float:
        for key, val in self.duals:
            if key == name:
                return val
        raise KeyError(name)


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------


def profit(q: float, v: float, cost: CostStructure) -> float:
    """Selling profit p*min(q, v) - c*q."""
    q = require_nonnegative("q", q)
    v = require_nonnegative("v", v)
    return cost.price * min(q, v) - cost.cost * q


def ell(alpha: AlphaLike, q: float, v: float, cost: CostStructure) -> float:
    """Pointwise envelope min_u { pi(q, u) + alpha*(u - v)^2 }.

    Closed form: for ``q <= p/(4 alpha)`` it equals
    ``min(alpha v^2, p q) - c q``; otherwise ``alpha v^2 - c q`` when
    ``v <= p/(2 alpha)`` and ``p*min(v - p/(4 alpha), q) - c q`` above.
    The infinite index gives back ``pi`` itself.
    """
    a = as_misspec_index(alpha)
    if a.is_infinite:
        return profit(q, v, cost)
    if a.alpha == 0.0:
        raise DegenerateModelError(
            "alpha = 0 (strongest misspecification aversion): the envelope "
            "degenerates; use the robust limit q = 0"
        )
    q = require_nonnegative("q", q)
    v = require_nonnegative("v", v)
    p, c, av = cost.price, cost.cost, a.alpha
    if q <= p / (4.0 * av):
        return min(av * v * v, p * q) - c * q
    if v <= p / (2.0 * av):
        return av * v * v - c * q
    return p * min(v - p / (4.0 * av), q) - c * q


def fractile_factor(x: float) -> float:
    """The map f(x) = (1 - 2x) / (2 sqrt(x (1 - x))) on (0, 1)."""
    require(0.0 < x < 1.0, f"fractile_factor needs x in (0, 1), got {x!r}")
    return (1.0 - 2.0 * x) / (2.0 * math.sqrt(x * (1.0 - x)))


def nominal_quantity(demand: DiscreteDistribution, cost: CostStructure) -> float:
    """Critical-fractile order quantity: the left-continuous kappa-quantile."""
    return demand.quantile(cost.kappa)


# ---------------------------------------------------------------------------
# worst cases and value functions
# ---------------------------------------------------------------------------


def ambiguity_worst_case(q: float, m: MomentSpec) -> DiscreteDistribution:
    """Two-point law attaining the worst-case expected profit at quantity q
    among all laws with mean mu and second moment mu^2 + sigma^2.

    For ``q < (mu^2 + sigma^2)/(2 mu)`` the law puts mass at 0 and at
    ``(mu^2 + sigma^2)/mu``; otherwise at ``q -+ w`` with
    ``w = sqrt((q - mu)^2 + sigma^2)``.  The two constructions coincide at the
    boundary quantity.
    """
    q = require_nonnegative("q", q)
    mu, sig = m.mean, m.std
    b = m.second_moment
    if q < b / (2.0 * mu):
        hi = b / mu
        return DiscreteDistribution.from_pairs([0.0, hi], [sig * sig / b, mu * mu / b])
    w = math.hypot(q - mu, sig)
    if w <= 1e-15:  # sigma = 0 and q = mu: degenerate point mass
        return DiscreteDistribution.point_mass(mu)
    shift = (q - mu) / (2.0 * w)
    return DiscreteDistribution.from_pairs(
        [q - w, q + w], [0.5 + shift, 0.5 - shift]
    )


def _in_region_q(alpha: float, q: float, m: MomentSpec, cost: CostStructure) -> bool:
    """Membership in the square-root-branch region Q of the value function."""
    p = cost.price
    if q < p / (4.0 * alpha):
        return False
    return (2.0 * m.mean - p / alpha) * q >= m.second_moment - p * m.mean / (2.0 * alpha)


def worst_case_transformed_expectation(
    alpha: AlphaLike, q: float, m: MomentSpec, cost: CostStructure
) -> float:
    """Value function L_alpha(q): the worst-case expected transformed profit
    (equivalently, the worst-case expectation of ``ell(alpha, q, .)``) over the
    mean--std moment set.

    Two branches: on the region Q = {q >= p/(4 alpha)} intersected with
    {(2 mu - p/alpha) q >= mu^2 + sigma^2 - p mu/(2 alpha)} a square-root
    formula; elsewhere a formula driven by the discriminant of the two-point
    worst case.  The infinite index takes the documented limits (Q becomes
    {q >= (mu^2+sigma^2)/(2 mu)}; the other branch becomes linear in q).
    """
    a = as_misspec_index(alpha)
    q = require_nonnegative("q", q)
    mu, sig = m.mean, m.std
    b = m.second_moment
    p, c = cost.price, cost.cost
    if q == 0.0:
        return 0.0
    if a.is_infinite:
        if q >= b / (2.0 * mu):
            return 0.5 * p * (mu - q - math.hypot(q - mu, sig)) + (p - c) * q
        return p * q * mu * mu / b - c * q
    av = a.alpha
    if av == 0.0:
        raise DegenerateModelError(
            "alpha = 0: every order loses its full cost in the worst case; "
            "the model orders zero"
        )
    if _in_region_q(av, q, m, cost):
        u = q + p / (4.0 * av)
        return 0.5 * p * (mu - u - math.hypot(u - mu, sig)) + (p - c) * q
    w = p * q / av + b
    r = math.sqrt(max(w * w - 4.0 * mu * mu * p * q / av, 0.0))
    return 0.5 * av * (w - r) - c * q


def _dual_certificate(
    a: MisspecIndex, q: float, m: MomentSpec, cost: CostStructure
) -> tuple[tuple[str, float], ...]:
    """Dual variables (s, r, t) certifying L_alpha(q); empty when degenerate."""
    mu, sig = m.mean, m.std
    b = m.second_moment
    p, c = cost.price, cost.cost
    if a.is_infinite:
        if q >= b / (2.0 * mu):
            den = math.hypot(q - mu, sig)
            if den <= 1e-15:
                return ()
            r = p / (4.0 * den)
            s = 0.5 * p + 2.0 * r * q
            t = p * p / (16.0 * r) + r * q * q + 0.5 * p * q - (p - c) * q
        else:
            s = 2.0 * mu * p * q / b
            r = p * q * mu * mu / (b * b)
            t = c * q
        return (("s_alpha", s), ("r_alpha", r), ("t_alpha", t))
    av = a.alpha
    if _in_region_q(av, q, m, cost):
        u = q + p / (4.0 * av)
        den = math.hypot(u - mu, sig)
        if den <= 1e-15:
            return ()
        r = p / (4.0 * den)
        s = 0.5 * p + 2.0 * r * u
        t = p * p / (16.0 * r) + r * u * u + 0.5 * p * u - (p - c) * q
    else:
        w = p * q / av + b
        rad = math.sqrt(max(w * w - 4.0 * mu * mu * p * q / av, 0.0))
        if rad <= 1e-15:
            return ()
        s = 2.0 * mu * p * q / rad
        r = 0.5 * av * (w / rad - 1.0)
        t = 0.5 * p * q * (w / rad - 1.0) + c * q
    return (("s_alpha", s), ("r_alpha", r), ("t_alpha", t))


def misspec_worst_case(
    alpha: AlphaLike, q: float, m: MomentSpec, cost: CostStructure
) -> tuple[DiscreteDistribution, DiscreteDistribution]:
    """Worst-case law G* in the moment set at (alpha, q), and its image under
    the attached transform.

    G* has at most two atoms.  Inside the region Q the atoms sit at
    ``u -+ s`` with ``u = q + p/(4 alpha)`` and ``s = sqrt((u-mu)^2+sigma^2)``;
    outside they are the roots of a quadratic built from the discriminant of
    the moment constraints.  The expected profit of the transformed image at
    ``q`` reproduces ``worst_case_transformed_expectation`` within 1e-9
    (checked; violation raises :class:`InternalCheckError`).
    """
    a = as_misspec_index(alpha)
    q = require_nonnegative("q", q)
    mu, sig = m.mean, m.std
    b = m.second_moment
    p = cost.price
    if a.is_infinite:
        g_star = ambiguity_worst_case(q, m)
        transformed = g_star  # the infinite-index transform is the identity
    elif a.alpha == 0.0:
        raise DegenerateModelError("alpha = 0 has no attaining law; the model orders zero")
    elif _in_region_q(a.alpha, q, m, cost):
        u = q + p / (4.0 * a.alpha)
        s = math.hypot(u - mu, sig)
        if s <= 1e-15:
            g_star = DiscreteDistribution.point_mass(mu)
        else:
            shift = (u - mu) / (2.0 * s)
            g_star = DiscreteDistribution.from_pairs(
                [u - s, u + s], [0.5 + shift, 0.5 - shift]
            )
        transformed = push_forward(g_star, transform(a, p, q))
    else:
        w = p * q / a.alpha + b
        rad = math.sqrt(max(w * w - 4.0 * mu * mu * p * q / a.alpha, 0.0))
        if rad <= 1e-15:
            g_star = DiscreteDistribution.point_mass(0.5 * w / mu)
        else:
            v1 = (w - rad) / (2.0 * mu)
            v2 = (w + rad) / (2.0 * mu)
            shift = (mu * mu - sig * sig - p * q / a.alpha) / (2.0 * rad)
            g_star = DiscreteDistribution.from_pairs([v1, v2], [0.5 - shift, 0.5 + shift])
        transformed = push_forward(g_star, transform(a, p, q))

    _check_moments(g_star, m)
    expected = worst_case_transformed_expectation(a, q, m, cost)
    attained = transformed.expectation(lambda v: profit(q, v, cost))
    if abs(attained - expected) > _CHECK_TOL * max(1.0, abs(expected)):
        raise InternalCheckError(
            f"worst-case law fails to attain the value function: "
            f"{attained!r} vs {expected!r} at alpha={a!r}, q={q!r}"
        )
    return g_star, transformed


def _check_moments(g: DiscreteDistribution, m: MomentSpec) -> None:
    scale = max(1.0, m.second_moment)
    if abs(g.mean() - m.mean) > _CHECK_TOL * scale or (
        abs(g.second_moment() - m.second_moment) > _CHECK_TOL * scale
    ):
        raise InternalCheckError(
            f"constructed law violates its moment constraints: mean {g.mean()!r} "
            f"vs {m.mean!r}, second moment {g.second_moment()!r} vs {m.second_moment!r}"
        )


# ---------------------------------------------------------------------------
# solvers
# ---------------------------------------------------------------------------


def scarf_quantity(m: MomentSpec, cost: CostStructure) -> SolveReport:
    """Ambiguity-only minimax order quantity.

    Non-degenerate branch (``kappa >= sigma^2/(mu^2+sigma^2)``): quantity
    ``mu + sigma*f(1-kappa)``, value ``mu(p-c) - sigma*sqrt(c(p-c))``.
    Otherwise ordering anything is worthless: quantity 0, value 0
    (regime DEGENERATE).
    """
    kappa = cost.kappa
    mu, sig = m.mean, m.std
    p, c = cost.price, cost.cost
    gate = sig * sig / m.second_moment
    if kappa >= gate:
        q = mu + sig * fractile_factor(1.0 - kappa)
        value = mu * (p - c) - sig * math.sqrt(c * (p - c))
        regime = Regime.AMBIGUITY_ONLY
    else:
        q = 0.0
        value = 0.0
        regime = Regime.DEGENERATE
    g_star = ambiguity_worst_case(q, m)
    duals = _dual_certificate(MisspecIndex.INFINITY, q, m, cost)
    report = SolveReport(
        quantity=q,
        value=value,
        regime=regime,
        alpha=MisspecIndex.INFINITY,
        worst_case=g_star,
        transformed_worst_case=g_star,
        duals=duals,
    )
    _check_report(report, m, cost)
    return report


def misspec_quantity(alpha: AlphaLike, m: MomentSpec, cost: CostStructure) -> SolveReport:
    """Optimal order quantity under the misspecification-penalized model.

    Branches on the index: DEGENERATE (order 0) when
    ``kappa < sigma^2/(mu^2+sigma^2)``; otherwise HIGH_ALPHA
    ``mu + sigma f(1-kappa) - p/(4 alpha)`` once
    ``alpha >= p / (2 (mu - sigma sqrt((1-kappa)/kappa)))`` (infinite
    threshold when the parenthesis is nonpositive), and LOW_ALPHA
    ``(mu^2 - sigma^2 + 2 mu sigma f(1-kappa)) * alpha/p`` below it.  The
    quantity is continuous and non-decreasing in alpha and capped by the
    ambiguity-only quantity; the infinite index delegates to
    :func:`scarf_quantity`.
    """
    a = as_misspec_index(alpha)
    if a.is_infinite:
        return scarf_quantity(m, cost)
    kappa = cost.kappa
    mu, sig = m.mean, m.std
    p = cost.price
    if a.alpha == 0.0:
        # strongest aversion: max-min over all laws — order nothing
        g_star = ambiguity_worst_case(0.0, m)
        report = SolveReport(
            quantity=0.0,
            value=0.0,
            regime=Regime.DEGENERATE,
            alpha=a,
            worst_case=g_star,
            transformed_worst_case=g_star,
            duals=(),
        )
        return report
    gate = sig * sig / m.second_moment
    if kappa < gate:
        q = 0.0
        regime = Regime.DEGENERATE
    else:
        margin = mu - sig * math.sqrt((1.0 - kappa) / kappa)
        threshold = p / (2.0 * margin) if margin > 0.0 else math.inf
        if a.alpha >= threshold:
            q = mu + sig * fractile_factor(1.0 - kappa) - p / (4.0 * a.alpha)
            regime = Regime.HIGH_ALPHA
        else:
            f = fractile_factor(1.0 - kappa)
            q = (mu * mu - sig * sig + 2.0 * mu * sig * f) * a.alpha / p
            regime = Regime.LOW_ALPHA
    q = max(q, 0.0)
    value = worst_case_transformed_expectation(a, q, m, cost)
    g_star, transformed = misspec_worst_case(a, q, m, cost)
    duals = _dual_certificate(a, q, m, cost)
    report = SolveReport(
        quantity=q,
        value=value,
        regime=regime,
        alpha=a,
        worst_case=g_star,
        transformed_worst_case=transformed,
        duals=duals,
    )
    _check_report(report, m, cost)
    return report


def _check_report(report: SolveReport, m: MomentSpec, cost: CostStructure) -> None:
    """Internal consistency: moments of the worst case and the dual identity."""
    _check_moments(report.worst_case, m)
    if report.duals:
        s = report.dual("s_alpha")
        r = report.dual("r_alpha")
        t = report.dual("t_alpha")
        dual_value = s * m.mean - r * m.second_moment - t
        if abs(dual_value - report.value) > _CHECK_TOL * max(1.0, abs(report.value)):
            raise InternalCheckError(
                f"dual certificate mismatch: {dual_value!r} vs {report.value!r}"
            )


# ---------------------------------------------------------------------------
# threshold scans
# ---------------------------------------------------------------------------


def _tail_turn_index(quantities: Sequence[float], tol: float = 1e-12) -> int | None:
    """Smallest index j such that the series is non-increasing from j to the
    end, requiring at least one comparison (j <= len-2); None when only the
    vacuous single-point suffix qualifies.
    """
    n = len(quantities)
    if n < 2:
        return None
    j = n - 1
    while j > 0 and quantities[j] <= quantities[j - 1] + tol:
        j -= 1
    return j if j <= n - 2 else None


def price_threshold_scan(
    alpha: AlphaLike,
    m: MomentSpec,
    c: float,
    p_grid: Sequence[float],
) -> float | None:
    """Scan unit prices for the point past which the optimal quantity stops
    increasing: returns the smallest grid price after which q*(p) is
    non-increasing for the rest of the grid, or None if the series keeps
    rising (the ambiguity-only quantity always does).  Single-point grids
    return None by convention (no comparison is possible).
    """
    require_positive("c", c)
    grid = [require_finite("p_grid point", p) for p in p_grid]
    require(len(grid) > 0, "p_grid must be non-empty")
    for a_, b_ in zip(grid, grid[1:]):
        require(a_ < b_, "p_grid must be strictly increasing")
    require(grid[0] > c, f"all grid prices must exceed c={c!r}")
    a = as_misspec_index(alpha)
    quantities = [
        misspec_quantity(a, m, CostStructure(price=p, cost=c)).quantity for p in grid
    ]
    j = _tail_turn_index(quantities)
    return None if j is None else grid[j]


def variance_threshold_scan(
    alpha: AlphaLike,
    cost: CostStructure,
    mu: float,
    sigma_grid: Sequence[float],
) -> float | None:
    """Scan demand-std values for the point past which the optimal quantity
    stops increasing.  Scope: kappa >= 1/2 and the grid inside
    ``[0, mu*sqrt(kappa/(1-kappa))]`` (beyond it the model is degenerate).
    Same tail convention as :func:`price_threshold_scan`; single-point grids
    return None (documented choice between the two conventions offered).
    """
    kappa = cost.kappa
    require(kappa >= 0.5, f"scan requires kappa >= 1/2, got {kappa!r}")
    require_positive("mu", mu)
    grid = [require_nonnegative("sigma_grid point", s) for s in sigma_grid]
    require(len(grid) > 0, "sigma_grid must be non-empty")
    for a_, b_ in zip(grid, grid[1:]):
        require(a_ < b_, "sigma_grid must be strictly increasing")
    hi = mu * math.sqrt(kappa / (1.0 - kappa))
    require(
        grid[-1] <= hi + 1e-9,
        f"sigma_grid must stay within [0, {hi!r}] (non-degenerate region)",
    )
    a = as_misspec_index(alpha)
    quantities = [
        misspec_quantity(a, MomentSpec(mean=mu, std=s), cost).quantity for s in grid
    ]
    j = _tail_turn_index(quantities)
    return None if j is None else grid[j]
