"""
Closed-form exponential inequalities for supermartingale sums and polymer free energies.

Every function here is a pure evaluator of real parameters. Probability bounds are
returned as exp(-n * rate), rate functions as non-negative reals.
"""
import math
import sys
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

from scipy.optimize import bisect
from scipy.special import gamma

from .utils import DomainError, PreconditionError, require_count, require_finite, require_positive

SQRT2_PLUS_1_SQ = (1.0 + math.sqrt(2.0)) ** 2
GOLDEN_RATIO = (1.0 + math.sqrt(5.0)) / 2.0
RELATIVE_TOL = 1e-12


def _require_exponent(name: str, value: float) -> float:
    value = require_finite(name, value)
    if value <= 1:
        raise DomainError(f"{name} must be > 1, got {value}")
    return value


# --------------------------------------------------------------------------
# Rate duality
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ConjugatePair:
    q: float
    rho: float

    def __post_init__(self):
        _require_exponent("q", self.q)
        _require_exponent("rho", self.rho)
        if abs(1.0 / self.q + 1.0 / self.rho - 1.0) > RELATIVE_TOL:
            raise DomainError(f"1/q + 1/rho must equal 1, got q={self.q}, rho={self.rho}")

    @classmethod
    def from_q(cls, q: float) -> "ConjugatePair":
        return cls(q, conjugate_exponent(q))


@dataclass(frozen=True)
class RateDuality:
    """Tail rate r*x^q on one side, Laplace growth tau*t^rho on the other."""
    pair: ConjugatePair
    r: float
    tau: float

    def __post_init__(self):
        require_positive("r", self.r)
        require_positive("tau", self.tau)
        product = (self.rho * self.tau) ** (1.0 / self.rho) * (self.q * self.r) ** (1.0 / self.q)
        if abs(product - 1.0) > 1e-12:
            raise DomainError(f"(rho*tau)^(1/rho) * (q*r)^(1/q) must equal 1, got {product}")

    @property
    def q(self) -> float:
        return self.pair.q

    @property
    def rho(self) -> float:
        return self.pair.rho

    @classmethod
    def from_tail(cls, q: float, r: float) -> "RateDuality":
        return cls(ConjugatePair.from_q(q), r, dual_tau(q, r))

    @classmethod
    def from_laplace(cls, q: float, tau: float) -> "RateDuality":
        return cls(ConjugatePair.from_q(q), dual_rate(q, tau), tau)


def conjugate_exponent(q: float) -> float:
    """
    Hölder conjugate of q.

    Args:
        q (float): Exponent > 1.

    Returns:
        float: rho = q / (q - 1).

    Raises:
        DomainError: If q <= 1.
    """
    q = _require_exponent("q", q)
    return q / (q - 1.0)


def dual_rate(q: float, tau: float) -> float:
    """
    Tail coefficient r dual to the Laplace coefficient tau.

    Solves (rho*tau)^(1/rho) * (q*r)^(1/q) = 1 for r.

    Args:
        q (float): Tail exponent > 1.
        tau (float): Laplace coefficient > 0.

    Returns:
        float: The dual tail coefficient.
    """
    rho = conjugate_exponent(q)
    tau = require_positive("tau", tau)
    return (rho * tau) ** (-(q - 1.0)) / q


def dual_tau(q: float, r: float) -> float:
    """Inverse of dual_rate: the Laplace coefficient tau dual to the tail coefficient r."""
    rho = conjugate_exponent(q)
    r = require_positive("r", r)
    return (q * r) ** (-1.0 / (q - 1.0)) / rho


def legendre_sup(rho: float, tau: float, t0: float, x: float) -> float:
    """
    Closed form of sup_{t >= t0} (t*x - tau*t^rho).

    Valid once the unconstrained maximizer (x/(rho*tau))^(1/(rho-1)) is >= t0,
    where the supremum equals R*x^Q with (Q, R) dual to (rho, tau).

    Args:
        rho (float): Laplace exponent > 1.
        tau (float): Laplace coefficient > 0.
        t0 (float): Lower end of the supremum.
        x (float): Tail abscissa > 0.

    Returns:
        float: R * x^Q.

    Raises:
        PreconditionError: If x < rho * tau * t0^(rho - 1).
    """
    rho = _require_exponent("rho", rho)
    tau = require_positive("tau", tau)
    t0 = require_positive("t0", t0, strict=False)
    x = require_positive("x", x)
    threshold = rho * tau * t0 ** (rho - 1.0)
    if x < threshold * (1.0 - RELATIVE_TOL):
        raise PreconditionError(f"x={x} below the Legendre threshold {threshold}")
    q = conjugate_exponent(rho)
    return dual_rate(q, tau) * x ** q


# --------------------------------------------------------------------------
# Bernstein-type (exponential moment of |X|)
# --------------------------------------------------------------------------

def bernstein_rate(x: float, k: float) -> float:
    """
    Legendre transform (sqrt(x + k) - sqrt(k))^2 of the growth k*t^2/(1 - t).

    Evaluated as x^2 / (sqrt(x + k) + sqrt(k))^2 to avoid cancellation at small x.

    Args:
        x (float): Abscissa > 0.
        k (float): Moment constant > 0.

    Returns:
        float: The rate.
    """
    x = require_positive("x", x)
    k = require_positive("k", k)
    return x * x / (math.sqrt(x + k) + math.sqrt(k)) ** 2


def bernstein_tail(n: int, x: float, k: float) -> float:
    """Bound exp(-n (sqrt(x + k) - sqrt(k))^2) on P[S_n/n > x]."""
    n = require_count("n", n)
    return math.exp(-n * bernstein_rate(x, k))


def bernstein_piecewise(n: int, x: float, k: float) -> float:
    """
    Simplified two-regime Bernstein bound.

    Args:
        n (int): Path length.
        x (float): Abscissa > 0.
        k (float): Moment constant > 0.

    Returns:
        float: exp(-n x^2 / (k (1+sqrt2)^2)) for x <= k, exp(-n x / (1+sqrt2)^2) beyond.
    """
    n = require_count("n", n)
    x = require_positive("x", x)
    k = require_positive("k", k)
    if x <= k:
        return math.exp(-n * x * x / (k * SQRT2_PLUS_1_SQ))
    return math.exp(-n * x / SQRT2_PLUS_1_SQ)


def laplace_growth_bound(n: int, t: float, k: float) -> float:
    """Laplace bound exp(n k t^2 / (1 - t)) for t in (0, 1)."""
    n = require_count("n", n)
    t = require_finite("t", t)
    k = require_positive("k", k)
    if not 0 < t < 1:
        raise DomainError(f"t must lie in (0, 1), got {t}")
    return math.exp(n * k * t * t / (1.0 - t))


def half_interval_laplace_bound(n: int, t: float, k: float) -> float:
    """Quadratic Laplace bound exp(2 n k t^2), valid for t in (0, 1/2]."""
    n = require_count("n", n)
    t = require_finite("t", t)
    k = require_positive("k", k)
    if not 0 < t <= 0.5:
        raise DomainError(f"t must lie in (0, 1/2], got {t}")
    return math.exp(2.0 * n * k * t * t)


def _g_ratio(x: float, k: float) -> float:
    # bernstein_rate / x^2, strictly decreasing from 1/(4k)
    return 1.0 / (math.sqrt(x + k) + math.sqrt(k)) ** 2


def _f_ratio(x: float, k: float) -> float:
    # bernstein_rate / x, strictly increasing to 1
    return x * _g_ratio(x, k)


def _bracket_root(fn: Callable[[float], float], start: float = 1.0) -> Tuple[float, float]:
    # fn changes sign from negative to positive on (0, hi]
    hi = start
    while fn(hi) < 0:
        hi *= 2.0
        if hi > 1e300:
            raise DomainError("no sign change found while bracketing")
    return 0.0, hi


@dataclass(frozen=True)
class EpsilonThresholds:
    x0: float
    x1: float
    k1: float


def epsilon_thresholds(k: float, eps: float) -> EpsilonThresholds:
    """
    Knees of the three-regime Bernstein bound for a given relative loss eps.

    x0 solves g(x0) = 1/(4k(1+eps)) and x1 solves f(x1) = 1/(1+eps), where g and f
    are the rate divided by x^2 and x. Both roots by bisection to 1e-10.

    Args:
        k (float): Moment constant > 0.
        eps (float): Relative loss in (0, golden ratio).

    Returns:
        EpsilonThresholds: x0, x1 and the middle-regime constant k1 = 4k(1+eps)/x0.

    Raises:
        DomainError: If eps >= golden ratio, where x0 >= x1 and the middle regime vanishes.
    """
    k = require_positive("k", k)
    eps = require_positive("eps", eps)
    if eps >= GOLDEN_RATIO:
        raise DomainError(f"eps must be < {GOLDEN_RATIO:.6f} for x0 < x1, got {eps}")
    g_target = 1.0 / (4.0 * k * (1.0 + eps))
    f_target = 1.0 / (1.0 + eps)

    def g_gap(x: float) -> float:
        return g_target - _g_ratio(x, k) if x > 0 else g_target - 1.0 / (4.0 * k)

    def f_gap(x: float) -> float:
        return _f_ratio(x, k) - f_target if x > 0 else -f_target

    lo, hi = _bracket_root(g_gap)
    x0 = bisect(g_gap, lo, hi, xtol=1e-10, rtol=4 * sys.float_info.epsilon, maxiter=2000)
    lo, hi = _bracket_root(f_gap)
    x1 = bisect(f_gap, lo, hi, xtol=1e-10, rtol=4 * sys.float_info.epsilon, maxiter=2000)
    return EpsilonThresholds(x0=x0, x1=x1, k1=4.0 * k * (1.0 + eps) / x0)


def epsilon_piecewise(n: int, x: float, k: float, eps: float) -> float:
    """Three-regime bound: quadratic below x0, linear with 1/k1 up to x1, slope 1/(1+eps) beyond."""
    n = require_count("n", n)
    x = require_positive("x", x)
    th = epsilon_thresholds(k, eps)
    if x < th.x0:
        return math.exp(-n * x * x / (4.0 * k * (1.0 + eps)))
    if x <= th.x1:
        return math.exp(-n * x / th.k1)
    return math.exp(-n * x / (1.0 + eps))


def petrov_bound(n: int, x: float, a_coef: float, t_cap: float) -> float:
    """
    Tail bound from a quadratic Laplace bound E e^{tX} <= e^{A t^2} on (0, T].

    Args:
        n (int): Path length.
        x (float): Abscissa > 0.
        a_coef (float): Quadratic coefficient A.
        t_cap (float): Upper end T of the Laplace interval.

    Returns:
        float: exp(-n x^2/(4A)) for x < 2AT, else exp(-n T x / 2).
    """
    n = require_count("n", n)
    x = require_positive("x", x)
    a_coef = require_positive("a_coef", a_coef)
    t_cap = require_positive("t_cap", t_cap)
    if x < 2.0 * a_coef * t_cap:
        return math.exp(-n * x * x / (4.0 * a_coef))
    return math.exp(-n * t_cap * x / 2.0)


def bernstein_petrov_bound(n: int, x: float, k: float) -> float:
    """Coarser Bernstein-type bound through the quadratic Laplace bound 2k t^2 on (0, 1/2]."""
    return petrov_bound(n, x, 2.0 * require_positive("k", k), 0.5)


# --------------------------------------------------------------------------
# Hoeffding-type (exponential moment of X^2) and tail <-> Laplace conversions
# --------------------------------------------------------------------------

def hoeffding_bound(n: int, x: float, a: float) -> float:
    """Classical bound exp(-n x^2 / (2 a^2)) for increments bounded by a."""
    n = require_count("n", n)
    x = require_positive("x", x)
    a = require_positive("a", a)
    return math.exp(-n * x * x / (2.0 * a * a))


def laplace_abs_bound(t: float, r: float, k: float) -> float:
    """
    Bound on E e^{t|X|} when E e^{R X^2} <= K.

    Args:
        t (float): Laplace argument > 0.
        r (float): R > 0.
        k (float): K > 0.

    Returns:
        float: 1 + K sqrt(pi) / (2 sqrt(R)) * t * exp(t^2 / (4R)).
    """
    t = require_positive("t", t, strict=False)
    r = require_positive("r", r)
    k = require_positive("k", k)
    return 1.0 + k * math.sqrt(math.pi) / (2.0 * math.sqrt(r)) * t * math.exp(t * t / (4.0 * r))


def laplace_from_tail(t: float, duality: RateDuality, k: float) -> float:
    """
    Laplace bound implied by the tail bound P[X > x] <= K e^{-R x^Q}.

    Returns:
        float: 1 + K + a t^rho e^{tau t^rho} with a = K (2/R)^(1/(Q-1)).
    """
    t = require_positive("t", t, strict=False)
    k = require_positive("k", k)
    a = k * (2.0 / duality.r) ** (1.0 / (duality.q - 1.0))
    tr = t ** duality.rho
    return 1.0 + k + a * tr * math.exp(duality.tau * tr)


def moment_from_tail(r1: float, q: float, r: float, k: float) -> float:
    """
    Bound on E e^{R1 X^Q} from the tail bound P[X > x] <= K e^{-R x^Q}.

    Raises:
        DomainError: Unless 0 < r1 < r.
    """
    r1 = require_positive("r1", r1)
    q = require_finite("q", q)
    if q < 1:
        raise DomainError(f"q must be >= 1, got {q}")
    r = require_positive("r", r)
    k = require_positive("k", k)
    if r1 >= r:
        raise DomainError(f"r1 must be < r, got r1={r1}, r={r}")
    return (r + r1 * (k - 1.0)) / (r - r1)


@dataclass(frozen=True)
class QRegimeConstants:
    q: float
    rho: float
    tau: float
    t1: float
    x1: float
    r1: float
    a: float
    b: float
    tau1: float

    def __post_init__(self):
        product = (self.rho * self.tau1) ** (1.0 / self.rho) * (self.q * self.r1) ** (1.0 / self.q)
        if abs(product - 1.0) > 1e-12:
            raise DomainError(f"(rho*tau1, r1) are not dual: product {product}")


def _bisect_threshold(holds: Callable[[float], bool], tol: float = 1e-9) -> float:
    """Smallest t > 0 where a monotone predicate switches to True, approached from above."""
    hi = 1.0
    while not holds(hi):
        hi *= 2.0
        if hi > 1e12:
            raise PreconditionError("threshold search did not terminate")
    lo = 0.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if holds(mid):
            hi = mid
        else:
            lo = mid
    return hi


def q_laplace_threshold(q: float, r: float, k: float, tau1: float) -> float:
    """
    Smallest t with 1 + k + a t^rho e^{tau t^rho} <= e^{tau1 t^rho}.

    Compared in log form so large t does not overflow.
    """
    duality = RateDuality.from_tail(q, r)
    rho, tau = duality.rho, duality.tau
    log_a = math.log(k) + math.log(2.0 / r) / (q - 1.0)
    log_base = math.log1p(k)

    def holds(t: float) -> bool:
        if t <= 0:
            return False
        tr = t ** rho
        rhs = log_a + rho * math.log(t) + tau * tr
        hi_log, lo_log = max(rhs, log_base), min(rhs, log_base)
        lhs = hi_log + math.log1p(math.exp(lo_log - hi_log))
        return lhs <= tau1 * tr

    return _bisect_threshold(holds)


def q_regime_constants(q: float, r: float, k: float, tau1: float) -> QRegimeConstants:
    """
    Constants of the two-regime bounds under E e^{R|X|^Q} <= K.

    Args:
        q (float): Tail exponent Q > 1.
        r (float): Moment rate R > 0.
        k (float): Moment constant K > 0.
        tau1 (float): Relaxed Laplace coefficient, strictly above the dual tau.

    Returns:
        QRegimeConstants: t1, x1 = rho tau1 t1^(rho-1), r1 dual to tau1, the small-t
        Laplace coefficient a and the small-x tail coefficient b.

    Raises:
        PreconditionError: If tau1 <= tau.
    """
    duality = RateDuality.from_tail(q, r)
    k = require_positive("k", k)
    tau1 = require_positive("tau1", tau1)
    if tau1 <= duality.tau:
        raise PreconditionError(f"tau1={tau1} must exceed tau={duality.tau}")
    rho = duality.rho
    t1 = q_laplace_threshold(q, r, k, tau1)
    x1 = rho * tau1 * t1 ** (rho - 1.0)
    k_lin = math.exp(r) + k
    a = max(2.0 * k_lin / r ** 2, 4.0 * tau1 * t1 ** rho / r ** 2)
    # E e^{|rX|} <= e^R + K, so the Bernstein rate applies to r*x
    b = bernstein_rate(r * x1, k_lin) / x1 ** 2
    return QRegimeConstants(q=q, rho=rho, tau=duality.tau, t1=t1, x1=x1,
                            r1=dual_rate(q, tau1), a=a, b=b, tau1=tau1)


def q_regime_tail(n: int, x: float, consts: QRegimeConstants) -> float:
    n = require_count("n", n)
    x = require_positive("x", x)
    if x >= consts.x1:
        return math.exp(-n * consts.r1 * x ** consts.q)
    return math.exp(-n * consts.b * x * x)


def q_regime_laplace_bound(n: int, t: float, consts: QRegimeConstants) -> float:
    n = require_count("n", n)
    t = require_positive("t", t)
    if t >= consts.t1:
        return math.exp(n * consts.tau1 * t ** consts.rho)
    return math.exp(n * consts.a * t * t)


def hoeffding_type_constant(r: float, k: float, tau1: Optional[float] = None) -> float:
    """
    Constant c with E e^{tX} <= e^{c t^2} for all t > 0 when E X <= 0 and E e^{R X^2} <= K.

    Args:
        r (float): R > 0.
        k (float): K > 0.
        tau1 (float, optional): Relaxed Laplace coefficient; defaults to twice 1/(4R).

    Returns:
        float: max(2(e^R + K)/R^2, 4 tau1 t1^2 / R^2, tau1).
    """
    r = require_positive("r", r)
    k = require_positive("k", k)
    tau = dual_tau(2.0, r)
    tau1 = 2.0 * tau if tau1 is None else tau1
    consts = q_regime_constants(2.0, r, k, tau1)
    return max(consts.a, consts.tau1)


def hoeffding_type_tail(n: int, x: float, r: float, k: float) -> float:
    n = require_count("n", n)
    x = require_positive("x", x)
    return math.exp(-n * x * x / (4.0 * hoeffding_type_constant(r, k)))


# --------------------------------------------------------------------------
# Converse statements and asymptotic rates
# --------------------------------------------------------------------------

def converse_constant(kind: str, **params: float) -> float:
    """
    Moment constant recovered from an iid tail bound.

    Args:
        kind (str): 'bernstein' (delta, c, x1), 'hoeffding' (r, c),
            'q_tail' (r, r1, q, x1; two-sided, doubled) or
            'q_tail_one_sided' (same parameters, not doubled).

    Returns:
        float: The converse constant K.

    Raises:
        DomainError: On an unknown kind or violated parameter constraint.
    """
    if kind == "bernstein":
        delta = require_positive("delta", params["delta"])
        c = require_positive("c", params["c"])
        x1 = require_positive("x1", params["x1"], strict=False)
        if delta >= c:
            raise DomainError(f"delta must be < c, got delta={delta}, c={c}")
        return math.exp(delta * x1) + delta / (c - delta) * math.exp(-(c - delta) * x1)
    if kind == "hoeffding":
        r = require_positive("r", params["r"])
        c = require_positive("c", params["c"])
        if r >= 1.0 / (4.0 * c):
            raise DomainError(f"r must be < 1/(4c)={1.0 / (4.0 * c)}, got {r}")
        return 1.0 + r / (1.0 / (4.0 * c) - r)
    if kind in ("q_tail", "q_tail_one_sided"):
        r = require_positive("r", params["r"])
        r1 = require_positive("r1", params["r1"])
        q = require_finite("q", params["q"])
        x1 = require_positive("x1", params["x1"], strict=False)
        if r >= r1:
            raise DomainError(f"r must be < r1, got r={r}, r1={r1}")
        xq = x1 ** q
        one_side = math.exp(r * xq) + r / (r1 - r) * math.exp(-(r1 - r) * xq)
        return 2.0 * one_side if kind == "q_tail" else one_side
    raise DomainError(f"unknown converse kind: {kind}")


@dataclass(frozen=True)
class AsymptoticLimits:
    as_limit: float
    lp_limit: float


def asymptotic_limits(p: float, k: float, kind: str = "martingale") -> AsymptoticLimits:
    """
    Almost-sure and L^p ceilings for S_n / sqrt(n ln n) and n^{p/2} E[(|S_n|/n)^p].

    Args:
        p (float): Moment order > 0.
        k (float): Averaged moment constant K.
        kind (str): 'supermartingale' (positive part) or 'martingale' (absolute value).
    """
    p = require_positive("p", p)
    k = require_positive("k", k)
    base = p * k ** (p / 2.0) * gamma(p / 2.0)
    if kind == "supermartingale":
        lp = base * 2.0 ** (p - 1.0)
    elif kind == "martingale":
        lp = base * 2.0 ** p
    else:
        raise DomainError(f"kind must be 'supermartingale' or 'martingale', got {kind}")
    return AsymptoticLimits(as_limit=2.0 * math.sqrt(k), lp_limit=float(lp))


def burkholder_bound(n: int, p: float, k: float) -> float:
    """Moment bound n^{p/2} (18 p sqrt(p/(p-1)))^p K on E|S_n|^p when E|X_i|^p <= K, p >= 2."""
    n = require_count("n", n)
    p = require_finite("p", p)
    if p < 2:
        raise DomainError(f"p must be >= 2, got {p}")
    k = require_positive("k", k)
    q = p / (p - 1.0)
    return n ** (p / 2.0) * (18.0 * p * math.sqrt(q)) ** p * k


# --------------------------------------------------------------------------
# Directed polymer constants
# --------------------------------------------------------------------------

def polymer_k_constant(lambda_plus: float, lambda_minus: float) -> float:
    """K = 2 exp(lambda(beta) + lambda(-beta)) bounding the conditional moments of the increments of ln W_n."""
    return 2.0 * math.exp(require_finite("lambda_plus", lambda_plus)
                          + require_finite("lambda_minus", lambda_minus))


def csy_laplace_envelope(t: float, beta: float, lam: Callable[[float], float]) -> float:
    """
    Conditional Laplace envelope exp(L(t)) of the martingale increments of ln W_n.

    Args:
        t (float): Laplace argument.
        beta (float): Inverse temperature > 0.
        lam: Log-moment generating function of the environment.

    Returns:
        float: exp(lambda(t beta) + lambda(-t beta)) for |t| > 1,
        exp(lambda(-|t| beta) + |t| lambda(beta)) otherwise.
    """
    t = require_finite("t", t)
    beta = require_positive("beta", beta)
    if abs(t) > 1:
        exponent = lam(t * beta) + lam(-t * beta)
    else:
        exponent = lam(-abs(t) * beta) + abs(t) * lam(beta)
    return math.exp(exponent)


def mean_rate_bound(n: int, d: int, k: float) -> float:
    """Bound 2 sqrt(K) sqrt(d ln(2n)/n) + d ln(2n)/n on p_-(beta) - Q[ln W_n]/n."""
    n = require_count("n", n)
    d = require_count("d", d)
    k = require_positive("k", k, strict=False)
    d_n = d * math.log(2.0 * n) / n
    return 2.0 * math.sqrt(k) * math.sqrt(d_n) + d_n


def mean_rate_epsilon(n: int, d: int, k: float) -> float:
    """Optimizing epsilon sqrt(d_n) / (sqrt(K) + sqrt(d_n)) behind mean_rate_bound."""
    n = require_count("n", n)
    d = require_count("d", d)
    k = require_positive("k", k, strict=False)
    root = math.sqrt(d * math.log(2.0 * n) / n)
    return root / (math.sqrt(k) + root)


def in_probability_bound(n: int, x: float, k: float, delta: float) -> float:
    """2 exp(-n bernstein_rate((1 - delta) x, K)) for the deviation of ln W_n / n from its limit."""
    n = require_count("n", n)
    x = require_positive("x", x)
    if not 0 < delta < 1:
        raise DomainError(f"delta must lie in (0, 1), got {delta}")
    return min(1.0, 2.0 * math.exp(-n * bernstein_rate((1.0 - delta) * x, k)))


@dataclass(frozen=True)
class PolymerQConstants:
    t0: float
    x_threshold: float
    r1: float
    a: float
    b: float
    k: float
    q: float
    rho: float
    tau1: float
    beta: float


def polymer_q_constants(beta: float, k0: float, q: float, r: float, tau1: float,
                        lambda_plus: float, lambda_minus: float) -> PolymerQConstants:
    """
    Concentration constants of ln W_n for environments with Q[e^{R|eta|^Q}] = K0.

    Args:
        beta (float): Inverse temperature.
        k0 (float): Environment moment K0.
        q (float): Tail exponent Q > 1.
        r (float): Moment rate R.
        tau1 (float): Relaxed Laplace coefficient above the dual tau.
        lambda_plus (float): lambda(beta).
        lambda_minus (float): lambda(-beta).

    Returns:
        PolymerQConstants: Threshold, large-x rate r1, small-t Laplace coefficient a,
        small-x tail coefficient b and the polymer K.
    """
    beta = require_positive("beta", beta)
    consts = q_regime_constants(q, r, k0, tau1)
    rho = consts.rho
    t0 = max(consts.t1, 1.0)
    x_threshold = 2.0 * rho * beta * tau1 * t0 ** (rho - 1.0)
    r1 = (beta * (2.0 * rho * tau1) ** (1.0 / rho)) ** (-q) / q
    k = polymer_k_constant(lambda_plus, lambda_minus)
    delta = epsilon_thresholds(k, 0.5).x0
    a = max(4.0 * k, 4.0 * math.log(2.0) + 8.0 * tau1 * t0 ** rho)
    b = min(1.0 / (6.0 * k), bernstein_rate(delta, k) / x_threshold ** 2)
    return PolymerQConstants(t0=t0, x_threshold=x_threshold, r1=r1, a=a, b=b, k=k,
                             q=q, rho=rho, tau1=tau1, beta=beta)


# --------------------------------------------------------------------------
# Piecewise tail curves
# --------------------------------------------------------------------------

def _rate_bernstein(x: float, k: float, scale: float = 1.0) -> float:
    return bernstein_rate(scale * x, k)


def _rate_quadratic(x: float, c: float) -> float:
    return c * x * x


def _rate_linear(x: float, c: float) -> float:
    return c * x


def _rate_power(x: float, c: float, q: float) -> float:
    return c * x ** q


RATE_FUNCTIONS: Dict[str, Callable[..., float]] = {
    "bernstein": _rate_bernstein,
    "quadratic": _rate_quadratic,
    "linear": _rate_linear,
    "power": _rate_power,
}


@dataclass(frozen=True)
class Rate:
    name: str
    params: Dict[str, float] = field(default_factory=dict)

    def __call__(self, x: float) -> float:
        return RATE_FUNCTIONS[self.name](x, **self.params)

    def describe(self) -> str:
        args = ", ".join(f"{key}={value:.6g}" for key, value in sorted(self.params.items()))
        return f"{self.name}({args})"


@dataclass(frozen=True)
class Region:
    x_lo: float
    x_hi: float
    rate: Rate


@dataclass(frozen=True)
class TailBoundCurve:
    """Piecewise rate x -> c(x) with bound(n, x) = exp(-n c(x))."""
    name: str
    regions: Tuple[Region, ...]

    def __post_init__(self):
        if not self.regions:
            raise DomainError("a tail curve needs at least one region")
        if self.regions[0].x_lo != 0.0 or self.regions[-1].x_hi != math.inf:
            raise DomainError("regions must cover (0, inf)")
        for left, right in zip(self.regions, self.regions[1:]):
            if left.x_hi != right.x_lo:
                raise DomainError(f"regions must be contiguous, gap at {left.x_hi} / {right.x_lo}")
        for region in self.regions:
            if not region.x_lo < region.x_hi:
                raise DomainError(f"empty region [{region.x_lo}, {region.x_hi})")

    def region_for(self, x: float) -> Region:
        for region in self.regions:
            if x < region.x_hi:
                return region
        return self.regions[-1]

    def rate(self, x: float) -> float:
        x = require_positive("x", x)
        return self.region_for(x).rate(x)

    def bound(self, n: int, x: float) -> float:
        n = require_count("n", n)
        return math.exp(-n * self.rate(x))

    def describe(self) -> str:
        parts = [f"[{r.x_lo:.6g}, {r.x_hi:.6g}): {r.rate.describe()}" for r in self.regions]
        return f"{self.name}: " + "; ".join(parts)


def _curve(name: str, pieces: List[Tuple[float, Rate]]) -> TailBoundCurve:
    # pieces: (x_lo, rate) sorted by x_lo, first x_lo = 0
    regions = []
    for i, (x_lo, rate) in enumerate(pieces):
        x_hi = pieces[i + 1][0] if i + 1 < len(pieces) else math.inf
        regions.append(Region(x_lo, x_hi, rate))
    return TailBoundCurve(name, tuple(regions))


def bernstein_curve(k: float, scale: float = 1.0) -> TailBoundCurve:
    """Exact Bernstein-type curve; scale = delta when the hypothesis is E e^{delta|X|} <= K."""
    require_positive("k", k)
    require_positive("scale", scale)
    return _curve("bernstein", [(0.0, Rate("bernstein", {"k": k, "scale": scale}))])


def bernstein_piecewise_curve(k: float) -> TailBoundCurve:
    require_positive("k", k)
    return _curve("bernstein_piecewise", [
        (0.0, Rate("quadratic", {"c": 1.0 / (k * SQRT2_PLUS_1_SQ)})),
        (k, Rate("linear", {"c": 1.0 / SQRT2_PLUS_1_SQ})),
    ])


def epsilon_curve(k: float, eps: float) -> TailBoundCurve:
    th = epsilon_thresholds(k, eps)
    return _curve("epsilon", [
        (0.0, Rate("quadratic", {"c": 1.0 / (4.0 * k * (1.0 + eps))})),
        (th.x0, Rate("linear", {"c": 1.0 / th.k1})),
        (th.x1, Rate("linear", {"c": 1.0 / (1.0 + eps)})),
    ])


def petrov_curve(a_coef: float, t_cap: float) -> TailBoundCurve:
    require_positive("a_coef", a_coef)
    require_positive("t_cap", t_cap)
    return _curve("petrov", [
        (0.0, Rate("quadratic", {"c": 1.0 / (4.0 * a_coef)})),
        (2.0 * a_coef * t_cap, Rate("linear", {"c": t_cap / 2.0})),
    ])


def hoeffding_curve(a: float) -> TailBoundCurve:
    require_positive("a", a)
    return _curve("hoeffding", [(0.0, Rate("quadratic", {"c": 1.0 / (2.0 * a * a)}))])


def hoeffding_type_curve(r: float, k: float) -> TailBoundCurve:
    c = hoeffding_type_constant(r, k)
    return _curve("hoeffding_type", [(0.0, Rate("quadratic", {"c": 1.0 / (4.0 * c)}))])


def q_regime_curve(consts: QRegimeConstants) -> TailBoundCurve:
    return _curve("q_regime", [
        (0.0, Rate("quadratic", {"c": consts.b})),
        (consts.x1, Rate("power", {"c": consts.r1, "q": consts.q})),
    ])


def polymer_q_curve(consts: PolymerQConstants) -> TailBoundCurve:
    return _curve("polymer_q", [
        (0.0, Rate("quadratic", {"c": consts.b})),
        (consts.x_threshold, Rate("power", {"c": consts.r1, "q": consts.q})),
    ])


# --------------------------------------------------------------------------
# Named evaluators (cli eval / bounds_eval configs)
# --------------------------------------------------------------------------

def _q_regime_by_params(n: int, x: float, q: float, r: float, k: float,
                        tau1: Optional[float] = None) -> float:
    tau1 = 2.0 * dual_tau(q, r) if tau1 is None else tau1
    return q_regime_tail(n, x, q_regime_constants(q, r, k, tau1))


BOUND_EVALUATORS: Dict[str, Callable[..., float]] = {
    "bernstein_tail": bernstein_tail,
    "bernstein_piecewise": bernstein_piecewise,
    "epsilon_piecewise": epsilon_piecewise,
    "petrov_bound": petrov_bound,
    "bernstein_petrov_bound": bernstein_petrov_bound,
    "hoeffding_bound": hoeffding_bound,
    "hoeffding_type_tail": hoeffding_type_tail,
    "q_regime_tail": _q_regime_by_params,
    "in_probability_bound": in_probability_bound,
}


def evaluate_bound(name: str, n: int, x: float, params: Dict[str, float]) -> Tuple[float, float]:
    """
    Evaluate a named tail bound.

    Args:
        name (str): Key of BOUND_EVALUATORS.
        n (int): Path length.
        x (float): Abscissa.
        params (dict): Remaining keyword parameters of the bound (k, eps, a, r, q, ...).

    Returns:
        tuple: (rate, bound) with rate = -ln(bound)/n.

    Raises:
        DomainError: On an unknown name or missing/unexpected parameters.
    """
    if name not in BOUND_EVALUATORS:
        raise DomainError(f"unknown bound '{name}', expected one of {sorted(BOUND_EVALUATORS)}")
    try:
        bound = BOUND_EVALUATORS[name](n, x, **params)
    except TypeError as e:
        raise DomainError(f"bad parameters {sorted(params)} for bound '{name}': {e}")
    rate = -math.log(bound) / n if bound > 0 else math.inf
    return rate, bound
