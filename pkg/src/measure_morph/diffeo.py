"""Closed-form time reparametrizations and their Schwarzian calculus.

Every map is stored symbolically (family + parameters) and evaluated with
exact derivatives up to third order.  Interval families fix the endpoints of
``[a, b]``; half-axis families live on ``(0, inf)`` or on the real line and
may be restricted to an explicit window.

All evaluation functions accept scalars or numpy arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Tuple

import numpy as np

from .errors import (
    DomainMismatch,
    InvalidParameter,
    NoConvergence,
    OutOfDomain,
    OutOfRange,
    StepTooSmall,
)

_BOUND_RTOL = 1e-12
_SERIES_CUTOFF = 1e-5
# e**700 is the largest power that keeps g0' at the endpoints a normal float
_MAX_EXPONENT = 700.0
MAX_NEWTON_ITER = 128


class DerivBundle(NamedTuple):
    """Value and first three derivatives of a map at one or more points."""

    g: np.ndarray
    g1: np.ndarray
    g2: np.ndarray
    g3: np.ndarray


@dataclass(frozen=True)
class Interval:
    a: float
    b: float

    def __post_init__(self):
        if not (math.isfinite(self.a) and math.isfinite(self.b)):
            raise InvalidParameter(f"interval ends must be finite, got [{self.a}, {self.b}]")
        if not self.a < self.b:
            raise InvalidParameter(f"interval needs a < b, got [{self.a}, {self.b}]")

    @property
    def length(self) -> float:
        return self.b - self.a

    def as_tuple(self) -> Tuple[float, float]:
        return (self.a, self.b)


def _phi(z):
    """expm1(z)/z, with a 4th-order series near 0."""
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < _SERIES_CUTOFF
    safe = np.where(small, 1.0, z)
    series = 1.0 + z / 2.0 + z**2 / 6.0 + z**3 / 24.0 + z**4 / 120.0
    return np.where(small, series, np.expm1(safe) / safe)


def _log1p_over(x):
    """log1p(x)/x, with a 4th-order series near 0."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < _SERIES_CUTOFF
    safe = np.where(small, 1.0, x)
    series = 1.0 - x / 2.0 + x**2 / 3.0 - x**3 / 4.0 + x**4 / 5.0
    return np.where(small, series, np.log1p(safe) / safe)


def _bound_tol(lo: float, hi: float) -> float:
    scale = 1.0
    for v in (lo, hi):
        if math.isfinite(v):
            scale = max(scale, abs(v))
    return _BOUND_RTOL * scale


def _check_window(window, positive: bool):
    if window is None:
        return None
    lo, hi = (float(window[0]), float(window[1]))
    if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
        raise InvalidParameter(f"window must be finite with lo < hi, got {window}")
    if positive and lo <= 0:
        raise InvalidParameter(f"half-axis window needs 0 < t_min, got {window}")
    return (lo, hi)


class Diffeo:
    """Base class for strictly increasing C^3 maps.

    Subclasses provide ``domain``, ``closed``, ``range``, ``_derivs`` and
    ``_inverse``; ``_schwarzian`` is overridden where a closed form exists.
    """

    family = "abstract"

    # -- interface implemented by subclasses --------------------------------
    @property
    def domain(self) -> Tuple[float, float]:
        raise NotImplementedError

    @property
    def closed(self) -> Tuple[bool, bool]:
        """Whether each domain bound belongs to the domain."""
        lo, hi = self.domain
        return (math.isfinite(lo), math.isfinite(hi))

    @property
    def range(self) -> Tuple[float, float]:
        raise NotImplementedError

    def _derivs(self, t):
        raise NotImplementedError

    def _inverse(self, tau):
        raise NotImplementedError

    def _schwarzian(self, t):
        b = self._derivs(t)
        r = b.g2 / b.g1
        return b.g3 / b.g1 - 1.5 * r * r

    def to_dict(self) -> dict:
        raise NotImplementedError

    # -- public evaluation --------------------------------------------------
    def _check(self, t, bounds, closed, exc, what):
        arr = np.asarray(t, dtype=float)
        lo, hi = bounds
        tol = _bound_tol(lo, hi)
        if not np.all(np.isfinite(arr)):
            raise exc(f"{what} must be finite")
        bad_lo = arr < lo - tol if closed[0] else arr <= lo
        bad_hi = arr > hi + tol if closed[1] else arr >= hi
        if np.any(bad_lo) or np.any(bad_hi):
            raise exc(f"{what} outside [{lo}, {hi}] for {self.family}")
        if closed[0] or closed[1]:
            arr = np.clip(arr, lo if closed[0] else -np.inf, hi if closed[1] else np.inf)
        return arr

    def check_domain(self, t):
        return self._check(t, self.domain, self.closed, OutOfDomain, "t")

    def check_range(self, tau):
        return self._check(tau, self.range, self.closed, OutOfRange, "tau")

    def derivs(self, t) -> DerivBundle:
        return self._derivs(self.check_domain(t))

    def __call__(self, t):
        return self.derivs(t).g

    def inverse(self, tau):
        return self._inverse(self.check_range(tau))

    def schwarzian(self, t):
        return self._schwarzian(self.check_domain(t))

    def maps_interval_onto_itself(self, interval: Interval) -> bool:
        lo, hi = self.domain
        tol = _bound_tol(lo, hi)
        if interval.a < lo - tol or interval.b > hi + tol:
            return False
        ga, gb = self(np.array([interval.a, interval.b]))
        scale = _BOUND_RTOL * max(1.0, interval.length, abs(interval.a), abs(interval.b))
        return abs(ga - interval.a) <= scale and abs(gb - interval.b) <= scale


@dataclass(frozen=True)
class Identity(Diffeo):
    a: Optional[float] = None
    b: Optional[float] = None
    family = "identity"

    def __post_init__(self):
        if (self.a is None) != (self.b is None):
            raise InvalidParameter("identity needs both a and b or neither")
        if self.a is not None:
            Interval(self.a, self.b)

    @property
    def domain(self):
        if self.a is None:
            return (-math.inf, math.inf)
        return (float(self.a), float(self.b))

    @property
    def range(self):
        return self.domain

    def _derivs(self, t):
        zero = np.zeros_like(t)
        return DerivBundle(t, np.ones_like(t), zero, zero)

    def _inverse(self, tau):
        return tau

    def _schwarzian(self, t):
        return np.zeros_like(t)

    def to_dict(self):
        d = {"family": self.family}
        if self.a is not None:
            d.update(a=self.a, b=self.b)
        return d


@dataclass(frozen=True)
class G0(Diffeo):
    """Exponential map of [a, b] onto itself with Schwarzian -2 m^2.

    g(t) = a + (b - a) * expm1(2m(t - a)) / expm1(2m(b - a))
    """

    m: float
    a: float = 0.0
    b: float = 1.0
    family = "g0"

    def __post_init__(self):
        iv = Interval(self.a, self.b)
        if not math.isfinite(self.m):
            raise InvalidParameter("m must be finite")
        if abs(2.0 * self.m * iv.length) > _MAX_EXPONENT:
            raise InvalidParameter(
                f"|2 m (b - a)| = {abs(2 * self.m * iv.length):.4g} exceeds {_MAX_EXPONENT}: "
                "endpoint derivatives underflow"
            )

    @property
    def interval(self) -> Interval:
        return Interval(self.a, self.b)

    @property
    def domain(self):
        return (float(self.a), float(self.b))

    @property
    def range(self):
        return self.domain

    def _derivs(self, t):
        u = 2.0 * self.m
        length = self.b - self.a
        s = t - self.a
        p = _phi(u * length)
        g1 = np.exp(u * s) / p
        return DerivBundle(self.a + s * _phi(u * s) / p, g1, u * g1, u * u * g1)

    def _inverse(self, tau):
        u = 2.0 * self.m
        length = self.b - self.a
        r = (tau - self.a) / length
        x = r * np.expm1(u * length)
        return self.a + r * length * _phi(u * length) * _log1p_over(x)

    def _schwarzian(self, t):
        return np.full_like(t, -2.0 * self.m**2)

    def to_dict(self):
        return {"family": self.family, "m": self.m, "a": self.a, "b": self.b}


@dataclass(frozen=True)
class MobiusEnds(Diffeo):
    """Linear-fractional map ((a+b+delta) t - ab)/(t + delta) fixing a and b."""

    delta: float
    a: float = 0.0
    b: float = 1.0
    family = "mobius"

    def __post_init__(self):
        Interval(self.a, self.b)
        if not math.isfinite(self.delta):
            raise InvalidParameter("delta must be finite")
        if not (self.a + self.delta > 0 and self.b + self.delta > 0):
            raise InvalidParameter(
                f"delta={self.delta} puts the pole t={-self.delta} on the wrong side of "
                f"[{self.a}, {self.b}]; need a + delta > 0 and b + delta > 0"
            )

    @property
    def domain(self):
        return (float(self.a), float(self.b))

    @property
    def range(self):
        return self.domain

    def _derivs(self, t):
        d = t + self.delta
        k = (self.a + self.delta) * (self.b + self.delta)
        g = self.a + (t - self.a) * (self.b + self.delta) / d
        g1 = k / d**2
        return DerivBundle(g, g1, -2.0 * g1 / d, 6.0 * g1 / d**2)

    def _inverse(self, tau):
        s = tau - self.a
        return self.a + s * (self.a + self.delta) / (self.b + self.delta - s)

    def _schwarzian(self, t):
        return np.zeros_like(t)

    def to_dict(self):
        return {"family": self.family, "delta": self.delta, "a": self.a, "b": self.b}


@dataclass(frozen=True)
class Exp2m(Diffeo):
    """t -> exp(2 m t), mapping the real line onto the half-axis."""

    m: float
    window: Optional[Tuple[float, float]] = None
    family = "exp2m"

    def __post_init__(self):
        if not (math.isfinite(self.m) and self.m > 0):
            raise InvalidParameter(f"exp2m needs m > 0, got {self.m}")
        object.__setattr__(self, "window", _check_window(self.window, positive=False))
        lo, hi = self.domain
        for v in (lo, hi):
            if math.isfinite(v) and abs(2 * self.m * v) > _MAX_EXPONENT:
                raise InvalidParameter("window too wide for exp(2 m t) in double precision")

    @property
    def domain(self):
        return self.window if self.window is not None else (-math.inf, math.inf)

    @property
    def range(self):
        lo, hi = self.domain
        return (math.exp(2 * self.m * lo), math.exp(2 * self.m * hi))

    def _derivs(self, t):
        u = 2.0 * self.m
        g = np.exp(u * t)
        return DerivBundle(g, u * g, u * u * g, u**3 * g)

    def _inverse(self, tau):
        return np.log(tau) / (2.0 * self.m)

    def _schwarzian(self, t):
        return np.full_like(t, -2.0 * self.m**2)

    def to_dict(self):
        d = {"family": self.family, "m": self.m}
        if self.window is not None:
            d["window"] = list(self.window)
        return d


@dataclass(frozen=True)
class Log2m(Diffeo):
    """t -> ln(t) / (2 m) on the half-axis; closed-form inverse of Exp2m."""

    m: float
    window: Optional[Tuple[float, float]] = None
    family = "log2m"

    def __post_init__(self):
        if not (math.isfinite(self.m) and self.m > 0):
            raise InvalidParameter(f"log2m needs m > 0, got {self.m}")
        object.__setattr__(self, "window", _check_window(self.window, positive=True))

    @property
    def domain(self):
        return self.window if self.window is not None else (0.0, math.inf)

    @property
    def closed(self):
        return (True, True) if self.window is not None else (False, False)

    @property
    def range(self):
        lo, hi = self.domain
        f = lambda v: -math.inf if v == 0 else math.log(v) / (2 * self.m)  # noqa: E731
        return (f(lo), f(hi))

    def _derivs(self, t):
        c = 1.0 / (2.0 * self.m)
        return DerivBundle(c * np.log(t), c / t, -c / t**2, 2.0 * c / t**3)

    def _inverse(self, tau):
        return np.exp(2.0 * self.m * tau)

    def _schwarzian(self, t):
        return 0.5 / t**2

    def to_dict(self):
        d = {"family": self.family, "m": self.m}
        if self.window is not None:
            d["window"] = list(self.window)
        return d


@dataclass(frozen=True)
class PowerLaw(Diffeo):
    """t -> t**sigma on the half-axis (sigma >= 1)."""

    sigma: float
    window: Optional[Tuple[float, float]] = None
    family = "power"

    def __post_init__(self):
        if not (math.isfinite(self.sigma) and self.sigma >= 1.0):
            raise InvalidParameter(f"power law needs sigma >= 1, got {self.sigma}")
        object.__setattr__(self, "window", _check_window(self.window, positive=True))

    @property
    def domain(self):
        return self.window if self.window is not None else (0.0, math.inf)

    @property
    def closed(self):
        return (True, True) if self.window is not None else (False, False)

    @property
    def range(self):
        lo, hi = self.domain
        return (lo**self.sigma, hi**self.sigma)

    def _derivs(self, t):
        s = self.sigma
        g = t**s
        g1 = s * g / t
        g2 = (s - 1.0) * g1 / t
        g3 = (s - 2.0) * g2 / t
        return DerivBundle(g, g1, g2, g3)

    def _inverse(self, tau):
        return tau ** (1.0 / self.sigma)

    def _schwarzian(self, t):
        return (1.0 - self.sigma**2) / (2.0 * t**2)

    def to_dict(self):
        d = {"family": self.family, "sigma": self.sigma}
        if self.window is not None:
            d["window"] = list(self.window)
        return d


def _fits_lower(r_lo, r_closed, d_lo, d_closed, tol):
    if r_lo == d_lo:
        return d_closed or not r_closed
    if r_lo > d_lo + tol:
        return True
    return abs(r_lo - d_lo) <= tol and d_closed


def _fits_upper(r_hi, r_closed, d_hi, d_closed, tol):
    return _fits_lower(-r_hi, r_closed, -d_hi, d_closed, tol)


@dataclass(frozen=True)
class Composed(Diffeo):
    """outer o inner, with derivatives from the order-3 chain rule."""

    outer: Diffeo
    inner: Diffeo
    family = "composed"

    def __post_init__(self):
        r_lo, r_hi = self.inner.range
        d_lo, d_hi = self.outer.domain
        rc, dc = self.inner.closed, self.outer.closed
        tol = _bound_tol(d_lo, d_hi)
        if not (_fits_lower(r_lo, rc[0], d_lo, dc[0], tol) and _fits_upper(r_hi, rc[1], d_hi, dc[1], tol)):
            raise DomainMismatch(
                f"range {self.inner.range} of {self.inner.family} does not fit "
                f"domain {self.outer.domain} of {self.outer.family}"
            )

    @property
    def domain(self):
        return self.inner.domain

    @property
    def closed(self):
        return self.inner.closed

    @property
    def range(self):
        r_lo, r_hi = self.inner.range
        d_lo, d_hi = self.outer.domain
        o_lo, o_hi = self.outer.range
        lo = o_lo if r_lo == d_lo else float(self.outer(r_lo))
        hi = o_hi if r_hi == d_hi else float(self.outer(r_hi))
        return (lo, hi)

    def _derivs(self, t):
        i = self.inner._derivs(t)
        o = self.outer.derivs(i.g)
        g1 = o.g1 * i.g1
        g2 = o.g2 * i.g1**2 + o.g1 * i.g2
        g3 = o.g3 * i.g1**3 + 3.0 * o.g2 * i.g1 * i.g2 + o.g1 * i.g3
        return DerivBundle(o.g, g1, g2, g3)

    def _inverse(self, tau):
        tau = np.asarray(tau, dtype=float)
        out = np.array([_solve_increasing(self, float(v)) for v in tau.ravel()])
        return out.reshape(tau.shape) if tau.ndim else out[0]

    def to_dict(self):
        return {"family": self.family, "outer": self.outer.to_dict(), "inner": self.inner.to_dict()}


@dataclass(frozen=True)
class InverseOf(Diffeo):
    """Inverse map, with derivatives from the inverse-function rule."""

    of: Diffeo
    family = "inverse"

    @property
    def domain(self):
        return self.of.range

    @property
    def closed(self):
        return self.of.closed

    @property
    def range(self):
        return self.of.domain

    def _derivs(self, tau):
        t = self.of._inverse(tau)
        b = self.of.derivs(t)
        h1 = 1.0 / b.g1
        h2 = -b.g2 * h1**3
        h3 = (3.0 * b.g2**2 - b.g1 * b.g3) * h1**5
        return DerivBundle(t, h1, h2, h3)

    def _inverse(self, t):
        return self.of(t)

    def to_dict(self):
        return {"family": self.family, "of": self.of.to_dict()}


def _expand_bracket(d: Diffeo, tau: float):
    lo, hi = d.domain
    c_lo, c_hi = d.closed
    start = 0.5 * (lo + hi) if math.isfinite(lo) and math.isfinite(hi) else None
    if start is None:
        if math.isfinite(lo):
            start = lo + 1.0 if lo != 0.0 else 1.0
        elif math.isfinite(hi):
            start = hi - 1.0
        else:
            start = 0.0
    if not c_lo:
        x, step = start, 1.0
        for _ in range(MAX_NEWTON_ITER):
            if float(d(x)) <= tau:
                break
            x = 0.5 * (lo + x) if math.isfinite(lo) else x - step
            step *= 2.0
        else:
            raise NoConvergence(f"could not bracket tau={tau} from below")
        lo = x
    if not c_hi:
        x, step = start, 1.0
        for _ in range(MAX_NEWTON_ITER):
            if float(d(x)) >= tau:
                break
            x = 0.5 * (x + hi) if math.isfinite(hi) else x + step
            step *= 2.0
        else:
            raise NoConvergence(f"could not bracket tau={tau} from above")
        hi = x
    return lo, hi


def _solve_increasing(d: Diffeo, tau: float, maxiter: int = MAX_NEWTON_ITER) -> float:
    """Solve d(t) = tau by Newton steps kept inside a shrinking bisection bracket."""
    lo, hi = _expand_bracket(d, tau)
    if float(d(lo)) > tau or float(d(hi)) < tau:
        raise OutOfRange(f"tau={tau} not in the image of {d.family}")
    eps = np.finfo(float).eps
    t = 0.5 * (lo + hi)
    for _ in range(maxiter):
        b = d.derivs(t)
        val = float(b.g) - tau
        if val == 0.0:
            return t
        if val > 0:
            hi = t
        else:
            lo = t
        step = val / float(b.g1)
        nxt = t - step
        if not lo < nxt < hi:
            nxt = 0.5 * (lo + hi)
        if abs(nxt - t) <= 2.0 * eps * max(1.0, abs(t)) or hi - lo <= 2.0 * eps * max(1.0, abs(t)):
            return nxt
        t = nxt
    raise NoConvergence(f"no convergence for tau={tau} after {maxiter} iterations")


# ---------------------------------------------------------------------------
# functional interface


_LEAVES = {
    "identity": Identity,
    "g0": G0,
    "mobius": MobiusEnds,
    "exp2m": Exp2m,
    "log2m": Log2m,
    "power": PowerLaw,
}


def make_diffeo(spec=None, **params) -> Diffeo:
    """Build and probe-check a map from a JSON-style spec.

    >>> make_diffeo({"family": "g0", "m": 1.0, "a": 0.0, "b": 1.0})
    G0(m=1.0, a=0.0, b=1.0)

    ``"mobius-g0"`` builds the composition of an endpoint-fixing Möbius map
    with ``g0`` (fields ``m``, ``delta``, ``a``, ``b``).
    """
    if spec is None:
        spec = dict(params)
    elif isinstance(spec, str):
        spec = dict(params, family=spec)
    else:
        spec = dict(spec, **params)
    try:
        family = spec.pop("family")
    except KeyError:
        raise InvalidParameter("diffeo spec needs a 'family' key") from None

    try:
        if family == "composed":
            d = Composed(make_diffeo(spec["outer"]), make_diffeo(spec["inner"]))
        elif family == "inverse":
            d = InverseOf(make_diffeo(spec["of"]))
        elif family == "mobius-g0":
            a, b = spec.get("a", 0.0), spec.get("b", 1.0)
            d = Composed(MobiusEnds(spec["delta"], a, b), G0(spec["m"], a, b))
        elif family in _LEAVES:
            if "window" in spec and spec["window"] is not None:
                spec["window"] = tuple(spec["window"])
            d = _LEAVES[family](**spec)
        else:
            raise InvalidParameter(f"unknown diffeo family {family!r}")
    except (KeyError, TypeError) as exc:
        raise InvalidParameter(f"bad parameters for family {family!r}: {exc}") from None
    check_diffeo(d)
    return d


def probe_points(d: Diffeo, n: int = 1000) -> np.ndarray:
    """n interior points of the domain (unbounded domains are truncated)."""
    lo, hi = d.domain
    if not math.isfinite(lo):
        lo = hi - 10.0 if math.isfinite(hi) else -5.0
    elif lo == 0.0 and not d.closed[0]:
        lo = 1e-3
    if not math.isfinite(hi):
        hi = max(lo, 0.0) + (100.0 if d.domain[0] == 0.0 else 10.0)
    return np.linspace(lo, hi, n + 2)[1:-1]


def check_diffeo(d: Diffeo, n_probes: int = 1000) -> None:
    """Raise InvalidParameter unless g' > 0 and g, g', g'', g''' are finite at every probe."""
    t = probe_points(d, n_probes)
    with np.errstate(all="ignore"):
        b = d.derivs(t)
    vals = np.stack([b.g, b.g1, b.g2, b.g3])
    if not np.all(np.isfinite(vals)):
        raise InvalidParameter(f"{d.family}: non-finite derivatives at probe points")
    if not np.all(b.g1 > 0):
        raise InvalidParameter(f"{d.family}: not strictly increasing")
    if isinstance(d, (G0, MobiusEnds)) and not d.maps_interval_onto_itself(Interval(d.a, d.b)):
        raise InvalidParameter(f"{d.family}: endpoints not fixed")


def evaluate(d: Diffeo, t) -> DerivBundle:
    return d.derivs(t)


def inverse_eval(d: Diffeo, tau):
    """Return ``(t, dt/dtau)`` with ``d(t) = tau``."""
    t = d.inverse(tau)
    return t, 1.0 / d.derivs(t).g1


def schwarzian(d: Diffeo, t):
    """(g''/g')' - (g''/g')^2 / 2, using closed forms where the family has one."""
    return d.schwarzian(t)


def schwarzian_from_derivs(b: DerivBundle):
    r = b.g2 / b.g1
    return b.g3 / b.g1 - 1.5 * r * r


def schwarzian_fd(d: Diffeo, t: float, h: float) -> float:
    """Schwarzian from central differences of g'.

    g'' and g''' are the first and second central differences of the exact
    first derivative, so the error is O(h^2).
    """
    scale = max(1.0, abs(t))
    if not h > 0 or h < 1e-10 * scale:
        raise StepTooSmall(f"h={h} below 1e-10 * {scale}")
    d.check_domain(np.array([t - 2 * h, t + 2 * h]))
    g1m, g1c, g1p = d.derivs(np.array([t - h, t, t + h])).g1
    g2 = (g1p - g1m) / (2.0 * h)
    g3 = (g1p - 2.0 * g1c + g1m) / (h * h)
    r = g2 / g1c
    return float(g3 / g1c - 1.5 * r * r)


def compose(f: Diffeo, g: Diffeo) -> Diffeo:
    """f o g."""
    return Composed(f, g)


def schwarzian_chain(f: Diffeo, g: Diffeo, t):
    """S_f(g(t)) g'(t)^2 + S_g(t): the composition rule applied to the two legs."""
    b = g.derivs(t)
    return f.schwarzian(b.g) * b.g1**2 + g.schwarzian(t)
