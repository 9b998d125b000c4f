"""Shared model ingredients: nonlinearities, moving frames, grids, initial data.

Everything downstream (wave construction, matched approximation, time
integration, analysis) consumes the small immutable objects defined here.
Values are plain numpy arrays / floats; nothing in this module mutates its
inputs after construction.
"""

from dataclasses import dataclass
import math

import numpy as np

THREE_SQRT_PI = 3.0 * math.sqrt(math.pi)

__all__ = [
    "THREE_SQRT_PI",
    "Nonlinearity",
    "KppReport",
    "check_kpp",
    "Frame",
    "Grid1D",
    "InitialCondition",
    "make_initial",
    "fisher",
    "cubic",
    "nonlinearity_by_name",
]


@dataclass(frozen=True)
class Nonlinearity:
    """Reaction term f(u) of pulled (KPP) type.

    ``fprime0`` is supplied by the caller and cross-checked against a forward
    difference at construction; we never differentiate the callable
    symbolically.  ``absorption`` is N(u) = f'(0)*u - f(u) >= 0, used by the
    exponentially weighted formulations where computing f'(0)*u - f(u) from
    ``f`` directly would lose all digits in the far tail.  If no closed form
    is given the subtraction fallback is used.
    """

    name: str
    f: callable
    fprime0: float
    absorption: callable = None
    sample_count: int = 4096

    def __post_init__(self):
        if not np.isfinite(self.fprime0) or self.fprime0 <= 0.0:
            raise ValueError("fprime0 must be finite and positive")
        h = 1e-6
        fd = (self.f(h) - self.f(0.0)) / h
        if abs(fd - self.fprime0) > 1e-4:
            raise ValueError(
                f"supplied fprime0={self.fprime0} disagrees with forward "
                f"difference {fd} at h={h}"
            )

    def n_of(self, u):
        """Absorption N(u) = f'(0)*u - f(u) (nonnegative for KPP f)."""
        if self.absorption is not None:
            return self.absorption(u)
        return self.fprime0 * u - self.f(u)

    @property
    def minimal_speed(self):
        return 2.0 * math.sqrt(self.fprime0)


def _logistic_flow(u, tau):
    # exact solution of u' = u - u^2; written with expm1 so the tail
    # mode grows by exactly e^tau
    e = np.expm1(tau)
    return u + u * (1.0 - u) * e / (1.0 + u * e)


def _cubic_flow(u, tau):
    # u' = u - u^3 is Bernoulli: u^2 follows a logistic with rate 2
    e = np.expm1(2.0 * tau)
    return u * np.sqrt((1.0 + e) / (1.0 + u * u * e))


def fisher():
    """Classic logistic reaction u - u^2."""
    return Nonlinearity("fisher", lambda u: u - u * u, 1.0,
                        absorption=lambda u: u * u,
                        reaction_flow=_logistic_flow)


def cubic():
    """Cubic KPP reaction u - u^3."""
    return Nonlinearity("cubic", lambda u: u - u ** 3, 1.0,
                        absorption=lambda u: u ** 3,
                        reaction_flow=_cubic_flow)


_BUILTINS = {"fisher": fisher, "cubic": cubic}


def nonlinearity_by_name(name):
    try:
        return _BUILTINS[name]()
    except KeyError:
        raise ValueError(f"unknown nonlinearity {name!r}; "
                         f"known: {sorted(_BUILTINS)}") from None


@dataclass(frozen=True)
class KppReport:
    """Result of the dense admissibility scan of check_kpp."""

    name: str
    passed: bool
    max_violation: float      # max of f(u) - f'(0)*u over scan points
    violation_at: float       # argmax location in (0, 1)
    f_at_zero: float
    f_at_one: float
    sample_count: int
    tolerance: float = 1e-12


def check_kpp(nl, tol=1e-12):
    """Scan f on (0,1) for the pulled-front condition f(u) <= f'(0)*u.

    Returns a KppReport; ``passed`` requires f(0) and f(1) to vanish within
    ``tol`` and the scanned violation f(u) - f'(0)*u to stay below ``tol``.
    Non-finite values of f anywhere on the scan are rejected outright.
    """
    u = np.linspace(0.0, 1.0, nl.sample_count + 2)[1:-1]
    fu = np.asarray(nl.f(u), dtype=float)
    if not np.all(np.isfinite(fu)):
        raise ValueError(f"nonlinearity {nl.name!r} produced non-finite values")
    f0 = float(nl.f(0.0))
    f1 = float(nl.f(1.0))
    if not (np.isfinite(f0) and np.isfinite(f1)):
        raise ValueError(f"nonlinearity {nl.name!r} non-finite at endpoints")
    viol = fu - nl.fprime0 * u
    i = int(np.argmax(viol))
    passed = (abs(f0) <= tol) and (abs(f1) <= tol) and (viol[i] <= tol)
    return KppReport(nl.name, bool(passed), float(viol[i]), float(u[i]),
                     f0, f1, nl.sample_count, tol)


def _bramson_shift(t):
    return 2.0 * t - 1.5 * np.log(t)


def _bramson_rate(t):
    return 2.0 - 1.5 / t


class Frame:
    """Moving frame x_frame = x_lab - shift(t).

    Kinds: ``rest`` (shift 0), ``linear`` (c*t), ``bramson``
    (2t - (3/2)log t) and ``refined`` (Bramson minus 3*sqrt(pi)/sqrt(t)).
    The refined/bramson rates are hand-differentiated; ``check_rate``
    verifies them against Richardson-extrapolated differences of shift().
    """

    def __init__(self, kind, c=None):
        if kind not in ("rest", "linear", "bramson", "refined"):
            raise ValueError(f"unknown frame kind {kind!r}")
        if kind == "linear" and c is None:
            raise ValueError("linear frame needs a speed c")
        self.kind = kind
        self.c = float(c) if c is not None else None

    @classmethod
    def rest(cls):
        return cls("rest")

    @classmethod
    def linear(cls, c):
        return cls("linear", c)

    @classmethod
    def bramson(cls):
        return cls("bramson")

    @classmethod
    def refined(cls):
        return cls("refined")

    def shift(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "rest":
            return np.zeros_like(t)
        if self.kind == "linear":
            return self.c * t
        if self.kind == "bramson":
            return _bramson_shift(t)
        return _bramson_shift(t) - THREE_SQRT_PI / np.sqrt(t)

    def shift_rate(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "rest":
            return np.zeros_like(t)
        if self.kind == "linear":
            return np.full_like(t, self.c)
        if self.kind == "bramson":
            return _bramson_rate(t)
        return _bramson_rate(t) + 0.5 * THREE_SQRT_PI * t ** -1.5

    def check_rate(self, t):
        """|d/dt shift - shift_rate| at t, via 4th-order Richardson differencing.

        The step scales with t so the subtractive noise eps*|shift| stays at
        the 1e-12 level across t in [1, 1e6].
        """
        t = float(t)
        h = max(1e-3, 5e-4 * t)
        d1 = (self.shift(t + h) - self.shift(t - h)) / (2 * h)
        d2 = (self.shift(t + h / 2) - self.shift(t - h / 2)) / h
        richardson = (4.0 * d2 - d1) / 3.0
        return abs(richardson - float(self.shift_rate(t)))

    def __repr__(self):
        if self.kind == "linear":
            return f"Frame.linear({self.c})"
        return f"Frame.{self.kind}()"

    def __eq__(self, other):
        return (isinstance(other, Frame) and self.kind == other.kind
                and self.c == other.c)


@dataclass(frozen=True)
class Grid1D:
    """Uniform 1-D grid; node count is round((right-left)/dx) + 1."""

    left: float
    right: float
    dx: float

    def __post_init__(self):
        if self.dx <= 0.0:
            raise ValueError("grid spacing must be positive")
        if self.right <= self.left:
            raise ValueError("grid needs right > left")

    @property
    def n(self):
        return int(round((self.right - self.left) / self.dx)) + 1

    @property
    def x(self):
        return self.left + self.dx * np.arange(self.n)

    def index_of(self, xval, tol=1e-9):
        """Index of the node at xval; raises if xval is not a node."""
        j = (xval - self.left) / self.dx
        ji = int(round(j))
        if abs(j - ji) > tol or not (0 <= ji < self.n):
            raise ValueError(f"{xval} is not a node of {self}")
        return ji


def _smooth_bump(x, center, width, amplitude):
    s = (np.asarray(x, dtype=float) - center) / width
    out = np.zeros_like(s)
    inside = np.abs(s) < 1.0
    si = s[inside]
    out[inside] = amplitude * np.exp(1.0 - 1.0 / (1.0 - si * si))
    return out


@dataclass(frozen=True, eq=False)
class InitialCondition:
    """Front-like initial data: 1 left of -L, 0 right of +L.

    ``step`` ignores the bump fields and puts the jump at x = 0.
    ``step_plus_bump`` adds a compactly supported smooth bump on top of the
    step; ``custom_table`` interpolates a user table inside [-L, L].
    """

    kind: str = "step"
    support_radius: float = 0.0
    bump_center: float = 0.0
    bump_width: float = 1.0
    bump_amplitude: float = 0.0
    table_x: np.ndarray = None
    table_u: np.ndarray = None

    def __post_init__(self):
        if self.kind not in ("step", "step_plus_bump", "custom_table"):
            raise ValueError(f"unknown initial condition kind {self.kind!r}")
        if self.support_radius < 0.0:
            raise ValueError("support radius must be nonnegative")
        if self.kind == "step_plus_bump" and self.bump_width <= 0.0:
            raise ValueError("bump width must be positive")
        if self.kind == "custom_table" and (self.table_x is None or
                                            self.table_u is None):
            raise ValueError("custom_table needs table_x and table_u")

    @property
    def L(self):
        if self.kind == "step":
            return max(self.support_radius, 0.0)
        if self.kind == "step_plus_bump":
            return max(self.support_radius,
                       abs(self.bump_center) + self.bump_width)
        return max(self.support_radius, float(np.max(np.abs(self.table_x))))


def make_initial(ic, grid):
    """Evaluate an InitialCondition on a grid.

    The grid must cover [-L-1, L+1].  The result is exactly 1 for x < -L and
    exactly 0 for x >= L (taking L = 0 to mean the plain step at the origin),
    and any bump that pushes values outside [0, 1] is rejected.
    """
    L = ic.L
    if grid.left > -L - 1.0 or grid.right < L + 1.0:
        raise ValueError(
            f"grid [{grid.left}, {grid.right}] does not cover "
            f"[{-L - 1.0}, {L + 1.0}]")
    x = grid.x
    u = np.where(x < 0.0, 1.0, 0.0)
    if ic.kind == "step_plus_bump":
        u = u + _smooth_bump(x, ic.bump_center, ic.bump_width,
                             ic.bump_amplitude)
    elif ic.kind == "custom_table":
        inside = (x > -L) & (x < L)
        u[inside] = np.interp(x[inside], ic.table_x, ic.table_u)
    # plateaus are exact by construction of the masks below
    u[x < -L] = 1.0
    u[x >= L] = 0.0
    bad = (u < 0.0) | (u > 1.0)
    if np.any(bad):
        j = int(np.argmax(bad))
        raise ValueError(
            f"initial data leaves [0,1]: u({x[j]:.6g}) = {u[j]:.6g}")
    return u
