"""Minimal-speed traveling wave and its universal tail constants.

The profile solves -phi'' - c phi' = f(phi), phi(-inf)=1, phi(+inf)=0 with
c = 2*sqrt(f'(0)), discretized by second-order central collocation and a
damped Gauss-Newton iteration.  The truncated system closes with

  * a left row tying 1-phi to the stable decay exponent mu of the
    linearization about u=1,
  * a right row demanding that g = e^{lam*xi} * phi be affine (strided
    second difference; lam = sqrt(f'(0)) is the tail decay rate),
  * a phase row pinning phi = 1/2 at a chosen node, which removes the
    translation degeneracy.  The system is one row taller than square and
    is solved in the least-squares sense; it is consistent up to the
    exponentially small truncation error of the two closures.

Minimal-speed fronts are resonant: the linearization at u=0 has a double
root, and the central scheme's truncation error excites it, so the raw
phi-table's weighted tail e^{lam xi} phi picks up a polynomially growing
O(h^2 xi^3) error that would wreck any direct tail fit.  The tail is
therefore re-solved on a right subdomain in the weighted variable g, where
the equation g'' = e^{lam xi} (f'(0) u - f(u)), u = e^{-lam xi} g, has no
resonance; the universal constants come from fitting
g ~ a*xi + b + C*exp(-omega0*xi) there, Richardson-extrapolated over the
(h, h/2) pair of solves.

The stored table follows the phi(0) = 1/2 convention.  The reported
k = ln(a)/lam + b/a is the affine tail offset of the *unit-slope*
translate (the normalization for which e^{lam x} phi(x) -> x + k), is
invariant under re-pinning, and is the constant the matched two-zone
approximation consumes.  The unit-slope profile is exposed as
``eval_wave_star``; its half level sits at xi5 = -ln(a)/lam, stored as
``half_level_xi``.
"""

import math

import numpy as np
from scipy import sparse
from scipy.interpolate import CubicSpline
from scipy.sparse.linalg import splu

from .model import Grid1D, check_kpp

__all__ = [
    "WaveProfile",
    "WaveSolveError",
    "TailFitError",
    "TailFit",
    "solve_wave",
    "extract_tail",
    "eval_wave",
    "eval_wave_star",
    "wave_residual",
]


class WaveSolveError(RuntimeError):
    pass


class TailFitError(RuntimeError):
    pass


class TailFit:
    """Affine-plus-exponential tail fit of g = e^{lam xi} phi."""

    def __init__(self, a, b, k, k_stderr, omega0, omega0_stderr,
                 correlation, window, lam):
        self.a = a                    # tail slope in the table's own frame
        self.b = b                    # tail intercept in the table's frame
        self.k = k                    # unit-slope offset ln(a)/lam + b/a
        self.k_stderr = k_stderr
        self.omega0 = omega0          # fitted decay rate of the remainder
        self.omega0_stderr = omega0_stderr
        self.correlation = correlation  # |corr| of the log-linear rate fit
        self.window = window
        self.lam = lam

    def __repr__(self):
        return (f"TailFit(k={self.k:.9g}, omega0={self.omega0:.4g}, "
                f"a={self.a:.9g}, window={self.window})")


def _fit_tail(xi, g, lam, window):
    """Fit g ~ a*xi + b + C*exp(-omega0*xi) on the window.

    The affine part is anchored on the upper half of the window, where the
    exponential remainder is already negligible; fitting it on the full
    window would tilt the line by the decaying hump at the left edge.  The
    decay rate comes from a log-linear fit of the remainder on the lower
    half, and one joint linear refit on {xi, 1, exp(-omega0*xi)} over the
    full window removes the residual coupling.  Returns a TailFit with
    regression standard errors.
    """
    lo, hi = window
    m = (xi >= lo) & (xi <= hi)
    if m.sum() < 16:
        raise TailFitError(f"tail window {window} holds only {m.sum()} points")
    xw, gw = xi[m], g[m]
    mid = 0.5 * (lo + hi)

    up = xw >= mid
    A = np.column_stack([xw[up], np.ones(int(up.sum()))])
    (a0, b0), *_ = np.linalg.lstsq(A, gw[up], rcond=None)
    r = gw - (a0 * xw + b0)

    floor = 1e-13 * max(1.0, float(np.max(np.abs(gw))))
    dn = (~up) & (np.abs(r) > floor)
    if dn.sum() < 8:
        # remainder at roundoff already: pure affine tail (synthetic tables)
        resid = gw[up] - A @ np.array([a0, b0])
        sigma2 = float(resid @ resid) / max(int(up.sum()) - 2, 1)
        cov = sigma2 * np.linalg.inv(A.T @ A)
        k, k_err = _k_from_ab(a0, b0, cov, lam)
        return TailFit(float(a0), float(b0), k, k_err, math.inf, 0.0,
                       1.0, window, lam)

    def rate_fit(rvals):
        dn_ = (~up) & (np.abs(rvals) > floor)
        if dn_.sum() < 8:
            return None
        xr, lr = xw[dn_], np.log(np.abs(rvals[dn_]))
        B = np.column_stack([xr, np.ones_like(xr)])
        (slope, _logc), *_ = np.linalg.lstsq(B, lr, rcond=None)
        lfit = B @ np.array([slope, _logc])
        ss_res = float(np.sum((lr - lfit) ** 2))
        ss_tot = float(np.sum((lr - lr.mean()) ** 2))
        corr = math.sqrt(max(0.0, 1.0 - ss_res / ss_tot)) if ss_tot > 0 else 0.0
        sigma2_r = ss_res / max(len(xr) - 2, 1)
        sxx = float(np.sum((xr - xr.mean()) ** 2))
        err = math.sqrt(sigma2_r / sxx) if sxx > 0 else math.inf
        return -float(slope), err, corr

    rf = rate_fit(gw - (a0 * xw + b0))
    if rf is None:
        raise TailFitError(
            f"tail remainder unusable on {window}; domain too small")
    omega0, omega0_err, correlation = rf
    if omega0 <= 0.0:
        raise TailFitError(
            f"tail remainder does not decay on {window} "
            f"(rate {omega0:.3g}); domain too small")

    # joint refit; the remainder basis carries the quadratic prefactor the
    # double root produces, so (a, b) come out essentially unbiased
    damp = np.exp(-omega0 * (xw - lo))
    C = np.column_stack([xw, np.ones_like(xw),
                         damp, xw * damp, xw * xw * damp])
    coef, *_ = np.linalg.lstsq(C, gw, rcond=None)
    a, b = float(coef[0]), float(coef[1])
    resid = gw - C @ coef
    sigma2 = float(resid @ resid) / max(len(gw) - 5, 1)
    cov2 = np.linalg.inv(C.T @ C)[:2, :2] * sigma2
    k, k_err = _k_from_ab(a, b, cov2, lam)
    return TailFit(a, b, k, k_err, omega0, omega0_err, correlation,
                   window, lam)


def _k_from_ab(a, b, cov, lam):
    if a <= 0.0:
        raise TailFitError(f"tail slope {a:.3g} is not positive")
    k = math.log(a) / lam + b / a
    da = 1.0 / (lam * a) - b / (a * a)
    db = 1.0 / a
    var = (da * da * cov[0, 0] + db * db * cov[1, 1]
           + 2.0 * da * db * cov[0, 1])
    return float(k), float(math.sqrt(max(var, 0.0)))


def _mu_left(nl):
    c = nl.minimal_speed
    d = 1e-6
    fp1 = (nl.f(1.0 + d) - nl.f(1.0 - d)) / (2.0 * d)
    if fp1 >= 0.0:
        raise WaveSolveError(f"f'(1) = {fp1:.3g} >= 0; u=1 is not stable")
    return 0.5 * (-c + math.sqrt(c * c + 4.0 * abs(fp1)))


def _fprime_numeric(nl, u):
    d = 1e-7
    return (nl.f(u + d) - nl.f(u - d)) / (2.0 * d)


def _solve_phi(nl, X, h, pin_xi, tol, max_iter):
    """Damped Gauss-Newton on the phi-form collocation system."""
    grid = Grid1D(-X, X, h)
    xi = grid.x
    n = grid.n
    j0 = grid.index_of(pin_xi)
    c = nl.minimal_speed
    lam = math.sqrt(nl.fprime0)
    mu = _mu_left(nl)

    stride = max(1, int(round(0.5 / h)))
    e1 = math.exp(-lam * stride * h)
    e2 = e1 * e1
    emu = math.exp(-mu * h)
    h2 = h * h

    def residual(phi):
        F = np.empty(n + 1)
        F[0] = (1.0 - phi[0]) - (1.0 - phi[1]) * emu
        interior = (-(phi[2:] - 2.0 * phi[1:-1] + phi[:-2]) / h2
                    - c * (phi[2:] - phi[:-2]) / (2.0 * h)
                    - nl.f(phi[1:-1]))
        F[1:n - 1] = interior * h2          # row scaling for the LSQ balance
        F[n - 1] = phi[n - 1] - 2.0 * e1 * phi[n - 1 - stride] \
            + e2 * phi[n - 1 - 2 * stride]
        F[n] = phi[j0] - 0.5
        return F, float(np.max(np.abs(interior)))

    j = np.arange(1, n - 1)
    base_rows = np.concatenate([[0, 0], j, j, j,
                                [n - 1, n - 1, n - 1, n]])
    base_cols = np.concatenate([[0, 1], j - 1, j, j + 1,
                                [n - 1, n - 1 - stride, n - 1 - 2 * stride,
                                 j0]])

    def jacobian(phi):
        fp = _fprime_numeric(nl, phi[1:-1])
        sub = np.full(n - 2, -1.0 + c * h / 2.0)
        dia = 2.0 - h2 * fp
        sup = np.full(n - 2, -1.0 - c * h / 2.0)
        vals = np.concatenate([[-1.0, emu], sub, dia, sup,
                               [1.0, -2.0 * e1, e2, 1.0]])
        return sparse.csr_matrix((vals, (base_rows, base_cols)),
                                 shape=(n + 1, n))

    phi = 1.0 / (1.0 + np.exp(np.clip(xi - pin_xi, -500, 500)))
    F, res_int = residual(phi)
    best = float(np.linalg.norm(F))
    iters = 0
    for iters in range(1, max_iter + 1):
        if res_int < tol:
            break
        J = jacobian(phi)
        JtJ = (J.T @ J).tocsc()
        rhs = -(J.T @ F)
        delta = splu(JtJ).solve(rhs)
        step = 1.0
        while step > 1e-6:
            cand = phi + step * delta
            Fc, res_c = residual(cand)
            nc = float(np.linalg.norm(Fc))
            if nc < best:
                phi, F, res_int, best = cand, Fc, res_c, nc
                break
            step *= 0.5
        else:
            raise WaveSolveError(
                f"damped Newton stalled at iteration {iters}; "
                f"max interior residual {res_int:.3e}")
    if res_int >= tol:
        raise WaveSolveError(
            f"no convergence in {max_iter} iterations; "
            f"last max interior residual {res_int:.3e}")
    return grid, phi, res_int, iters, mu


def _refit_tail_g(nl, anchor_xi, anchor_g, anchor_gp, X, h):
    """March the tail in g = e^{lam z} phi on [anchor_xi, X].

    The weighted equation g'' = e^{lam z} N(e^{-lam z} g), with
    N(u) = f'(0) u - f(u), has no resonance at the tail, so this table's
    affine part carries no polynomially growing discretization error.
    Any boundary closure at the far end would be vacuous (every solution
    turns affine), so the problem is posed as an initial-value march from
    Cauchy data (g, g') supplied by the phi-form solution: a central
    second-difference (Stoermer) recurrence with an O(h^4) first step.
    """
    lam = math.sqrt(nl.fprime0)

    def w_of(z, g):
        return math.exp(lam * z) * nl.n_of(math.exp(-lam * z) * g)

    n = int(round((X - anchor_xi) / h)) + 1
    z = anchor_xi + h * np.arange(n)
    g = np.empty(n)
    g[0] = anchor_g
    w0 = w_of(z[0], g[0])
    # g''' = lam*e^{lam z}N(u) - lam*N'(u)g + N'(u)g'  (u = e^{-lam z} g)
    u0 = math.exp(-lam * z[0]) * g[0]
    np0 = nl.fprime0 - float(_fprime_numeric(nl, u0))
    g3 = lam * w0 - lam * np0 * g[0] + np0 * anchor_gp
    g[1] = g[0] + h * anchor_gp + 0.5 * h * h * w0 + (h ** 3 / 6.0) * g3
    h2 = h * h
    for i in range(1, n - 1):
        g[i + 1] = 2.0 * g[i] - g[i - 1] + h2 * w_of(z[i], g[i])
    return z, g


class WaveProfile:
    """Solved minimal-speed wave: phi(pin)=1/2 table plus tail constants.

    ``grid``/``phi`` hold the full phi-form collocation table.  Evaluation
    uses the phi table left of the tail anchor and the weighted-variable
    refit right of it (exactly continuous at the anchor), with asymptotic
    closures beyond both table edges.
    """

    def __init__(self, nl, grid, phi, tail, mu_left, residual_max,
                 newton_iters, k, k_stderr, z_refit, g_refit, pin_xi=0.0):
        self.nl = nl
        self.c_star = nl.minimal_speed
        self.lam = math.sqrt(nl.fprime0)
        self.grid = grid
        self.phi = phi
        self.tail = tail                       # fit of the requested-h refit
        self.k = k                             # Richardson (h, h/2) value
        self.k_stderr = k_stderr
        self.omega0 = tail.omega0
        self.a_slope = tail.a
        # half level of the unit-slope translate; independent of the pin
        self.half_level_xi = -math.log(tail.a) / self.lam
        self.mu_left = mu_left
        self.residual_max = residual_max
        self.newton_iters = newton_iters
        self.pin_xi = pin_xi
        self.normalization = "phi(pin)=1/2 table; unit-tail-slope constants"
        self._z_refit = z_refit                # z = xi - pin coordinates
        self._g_refit = g_refit
        self._anchor = float(z_refit[0])
        self._phi_spline = CubicSpline(grid.x, phi)
        self._g_spline = CubicSpline(z_refit, g_refit)
        self._left_amp = (1.0 - phi[0]) * math.exp(-mu_left * grid.left)

    def __call__(self, xi):
        return eval_wave(self, xi)

    def star(self, xi):
        return eval_wave_star(self, xi)

    def weighted_star(self, x):
        """e^{lam x} * phi_star(x), computed without overflow: -> x + k."""
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 0
        x = np.atleast_1d(x)
        z = x - self.half_level_xi          # refit coordinate
        out = np.empty_like(z)
        lo = z < self._anchor
        hi = z > self._z_refit[-1]
        mid = ~(lo | hi)
        if np.any(mid):
            out[mid] = self._g_spline(z[mid]) / self.a_slope
        if np.any(hi):
            out[hi] = z[hi] + (self.tail.b / self.a_slope)
        if np.any(lo):
            out[lo] = (np.exp(self.lam * x[lo])
                       * eval_wave_star(self, x[lo]))
        return float(out[0]) if scalar else out

    def constants(self):
        return {
            "c_star": self.c_star,
            "k": self.k,
            "k_stderr": self.k_stderr,
            "omega0": self.omega0,
            "a_slope": self.a_slope,
            "half_level_xi": self.half_level_xi,
            "mu_left": self.mu_left,
            "normalization": self.normalization,
        }


def wave_residual(nl, xi, phi):
    """Central collocation residual of -phi'' - c phi' - f(phi) on interior nodes."""
    h = xi[1] - xi[0]
    c = nl.minimal_speed
    d2 = (phi[2:] - 2.0 * phi[1:-1] + phi[:-2]) / (h * h)
    d1 = (phi[2:] - phi[:-2]) / (2.0 * h)
    return -d2 - c * d1 - nl.f(phi[1:-1])


def solve_wave(nl, half_width=40.0, spacing=0.0125, tol=1e-11,
               max_iter=60, pin_xi=0.0, tail_window=None):
    """Solve the minimal-speed wave BVP on [-X, X].

    Requires half_width >= 30 and spacing <= 0.05.  The returned profile has
    phi(pin_xi) = 1/2 pinned by the phase row and max collocation residual
    below ``tol`` on interior nodes.  Tail constants are measured on the
    weighted-variable refit and Richardson-extrapolated over spacings
    (h, h/2), which removes their leading O(h^2) drift.
    """
    report = check_kpp(nl)
    if not report.passed:
        raise WaveSolveError(f"nonlinearity failed KPP check: {report}")
    if half_width < 30.0:
        raise ValueError("half_width must be at least 30")
    if spacing > 0.05:
        raise ValueError("spacing must be at most 0.05")

    X, h = float(half_width), float(spacing)
    lam = math.sqrt(nl.fprime0)
    anchor = 5.0 / lam
    if tail_window is None:
        tail_window = (X / 3.0, 2.0 * X / 3.0)

    def one_level(hh):
        grid, phi, res, iters, mu = _solve_phi(nl, X, hh, pin_xi, tol,
                                               max_iter)
        # Cauchy data for the tail march, read off the table at the node
        # nearest pin + anchor (5-point derivative keeps it O(h^4) local)
        ja = grid.index_of(pin_xi + round(anchor / hh) * hh)
        za = grid.x[ja] - pin_xi
        phi_a = phi[ja]
        dphi_a = (phi[ja - 2] - 8.0 * phi[ja - 1] + 8.0 * phi[ja + 1]
                  - phi[ja + 2]) / (12.0 * hh)
        ga = math.exp(lam * za) * phi_a
        gpa = math.exp(lam * za) * (lam * phi_a + dphi_a)
        z, g = _refit_tail_g(nl, za, ga, gpa, X - pin_xi, hh)
        fit = _fit_tail(z, g, lam, tail_window)
        return grid, phi, res, iters, mu, z, g, fit

    grid, phi, res, iters, mu, z, g, fit = one_level(h)
    *_, fit_half = one_level(h / 2.0)

    k = (4.0 * fit_half.k - fit.k) / 3.0
    k_err = abs(fit_half.k - fit.k) / 3.0 + fit_half.k_stderr

    return WaveProfile(nl, grid, phi, fit, mu, res, iters, k, k_err,
                       z, g, pin_xi=pin_xi)


def extract_tail(profile, phi=None, lam=1.0, window=None):
    """Tail constants (k, omega0, diagnostics) from a profile or raw table.

    Accepts a WaveProfile (fits its weighted-variable refit table), or a
    pair of arrays (xi, phi) for synthetic tables.  k is the unit-slope
    affine offset ln(a)/lam + b/a; omega0 the fitted decay rate of the
    affine remainder.  Raises TailFitError when the remainder fails to
    decay on the window (domain too small).
    """
    if isinstance(profile, WaveProfile):
        if window is None:
            X = profile.grid.right - profile.pin_xi
            window = (X / 3.0, 2.0 * X / 3.0)
        return _fit_tail(profile._z_refit, profile._g_refit,
                         profile.lam, window)
    xi = np.asarray(profile, dtype=float)
    ph = np.asarray(phi, dtype=float)
    if window is None:
        X = float(xi[-1])
        window = (X / 3.0, 2.0 * X / 3.0)
    g = np.exp(lam * xi) * ph
    return _fit_tail(xi, g, lam, window)


def eval_wave(profile, xi):
    """Evaluate the phi(pin)=1/2 table as a total function of xi.

    Cubic interpolation inside the table (weighted-variable refit right of
    the tail anchor); a*(z + b/a)*e^{-lam z} beyond the right edge;
    1 - A*e^{mu xi} beyond the left edge.  Values are clipped to [0, 1]
    (the clip only ever trims roundoff-level overshoot).
    """
    x = np.asarray(xi, dtype=float)
    scalar = x.ndim == 0
    x = np.atleast_1d(x).astype(float)
    out = np.empty_like(x)
    g = profile.grid
    z = x - profile.pin_xi
    left = x < g.left
    right = z > profile._z_refit[-1]
    tail = (z >= profile._anchor) & ~right
    mid = ~(left | right | tail)
    if np.any(mid):
        out[mid] = profile._phi_spline(x[mid])
    if np.any(tail):
        out[tail] = profile._g_spline(z[tail]) * np.exp(-profile.lam * z[tail])
    if np.any(left):
        out[left] = 1.0 - profile._left_amp * np.exp(profile.mu_left * x[left])
    if np.any(right):
        zt = z[right]
        out[right] = (profile.tail.a * zt + profile.tail.b) \
            * np.exp(-profile.lam * zt)
    np.clip(out, 0.0, 1.0, out=out)
    return float(out[0]) if scalar else out


def eval_wave_star(profile, xi):
    """The unit-tail-slope translate: e^{lam xi} * value -> xi + k at +inf.

    This is the normalization the matched two-zone approximation is built
    on; its half level sits at profile.half_level_xi.
    """
    return eval_wave(profile, np.asarray(xi) + profile.pin_xi
                     - profile.half_level_xi)
