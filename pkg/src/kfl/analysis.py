"""Front positions, diffusive amplitudes, expansion fits, model comparisons.

All functions here are pure consumers of immutable snapshot/trace data.
The headline operation is ``fit_expansion``: regressing the Bramson-detrended
front position d(t) = sigma_s(t) - 2t + (3/2) log t on {1, t^-1/2, t^-1}
and reading off the t^-1/2 coefficient, whose universal value is
-3 sqrt(pi) ~ -5.3174.
"""

import math
from dataclasses import dataclass

import numpy as np

from .model import THREE_SQRT_PI
from .spectral import eigenpair, project_e0, HalfLineField

__all__ = [
    "FrontTrace",
    "MassTrace",
    "LevelCrossing",
    "level_position",
    "DiffusiveAmplitude",
    "AlphaEstimate",
    "estimate_alpha",
    "ExpansionFit",
    "fit_expansion",
    "CompareResult",
    "compare_to_vapp",
    "w_diagnostics",
    "RateFit",
    "probe_rate",
]


@dataclass(eq=False)
class FrontTrace:
    """Rows of (t, level, position in frame and lab coords, amplitude)."""

    t: np.ndarray
    level: np.ndarray
    pos_frame: np.ndarray
    pos_lab: np.ndarray
    amplitude: np.ndarray
    dx: float = float("nan")
    frame_kind: str = ""
    formulation: str = ""

    def rows_for(self, s):
        m = np.abs(self.level - s) < 1e-12
        return self.t[m], self.pos_frame[m], self.pos_lab[m], self.amplitude[m]

    @property
    def levels(self):
        return np.unique(self.level)

    def check_ordering(self):
        """sigma_s strictly decreasing in s at fixed t (monotone profiles)."""
        for t in np.unique(self.t):
            m = self.t == t
            lv, pf = self.level[m], self.pos_frame[m]
            order = np.argsort(lv)
            if np.any(np.diff(pf[order]) >= 0):
                return False
        return True


@dataclass(eq=False)
class MassTrace:
    """Samples of the half-line mass of the linear probe."""

    t: np.ndarray
    mass: np.ndarray
    c: float = float("nan")


@dataclass(frozen=True)
class LevelCrossing:
    position: float
    multiple: bool


def level_position(x, values=None, s=0.5):
    """Rightmost crossing of level s, refined by local cubic interpolation.

    Accepts (x, values) arrays or a snapshot-like object with .x and
    .values.  Raises when the level is never crossed; when the data is not
    monotone and crosses several times, returns the rightmost crossing
    with ``multiple=True``.
    """
    if values is None or isinstance(values, (int, float)):
        if values is not None:
            s = values
        snap = x
        x, values = snap.x, snap.values
    x = np.asarray(x, dtype=float)
    v = np.asarray(values, dtype=float)
    if not 0.0 < s < 1.0 and not (v.min() <= s <= v.max()):
        raise ValueError(f"level {s} out of range")
    d = v - s
    sign = np.sign(d)
    change = np.nonzero(sign[:-1] * sign[1:] < 0)[0]
    exact = np.nonzero(d == 0.0)[0]
    if len(change) == 0 and len(exact) == 0:
        raise ValueError(f"no crossing of level {s}")
    candidates = list(change)
    n_cross = len(change) + len(exact)
    if len(exact) and (len(change) == 0 or exact[-1] > change[-1] + 1):
        return LevelCrossing(float(x[exact[-1]]), n_cross > 1)
    i = int(candidates[-1])
    lo = max(i - 1, 0)
    hi = min(i + 3, len(x))
    xs, vs = x[lo:hi], d[lo:hi]
    coef = np.polyfit(xs - x[i], vs, min(3, len(xs) - 1))
    poly = np.poly1d(coef)
    a, b = 0.0, float(x[i + 1] - x[i])
    fa, fb = poly(a), poly(b)
    if fa * fb > 0:
        root = a if abs(fa) < abs(fb) else b
    else:
        for _ in range(80):
            midp = 0.5 * (a + b)
            fm = poly(midp)
            if fa * fm <= 0:
                b, fb = midp, fm
            else:
                a, fa = midp, fm
        root = 0.5 * (a + b)
    return LevelCrossing(float(x[i] + root), n_cross > 1)


@dataclass(frozen=True)
class DiffusiveAmplitude:
    t: float
    alpha: float
    window: tuple
    residual_rms: float


@dataclass(eq=False)
class AlphaEstimate:
    series: list
    alpha_latest: float
    alpha_extrapolated: float
    x_inf_latest: float
    x_inf: float
    drift: float


def _snapshot_v_on_bramson(snap, x_window):
    """(x_B, v_B) of a snapshot restricted to a Bramson-frame window.

    v_B(x_B) = e^{x_B} u; converting from the snapshot's own frame only
    shifts the coordinate.  Restricting before exponentiating keeps e^x
    finite.
    """
    from .model import Frame
    t = snap.t
    shift_own = float(snap.frame.shift(t))
    shift_b = float(Frame.bramson().shift(t))
    xb = snap.x + (shift_own - shift_b)
    m = (xb >= x_window[0]) & (xb <= x_window[1])
    xb = xb[m]
    if snap.formulation == "v_form":
        # v in own frame: v_own = e^{x_own} u; rescale to the Bramson frame
        v = snap.values[m] * np.exp(shift_own - shift_b)
    else:
        v = np.exp(xb) * snap.values[m]
    return xb, v


def estimate_alpha(snapshots, eta_window=(0.5, 2.0)):
    """Diffusive amplitude series and the induced front shift x_inf.

    Least squares of v(t, x) against x e^{-x^2/(4t)} over
    x in [eta_window[0] sqrt(t), eta_window[1] sqrt(t)] in the Bramson
    frame.  ``x_inf_latest`` is log(alpha) at the latest time (the direct
    estimator); ``x_inf`` uses a 1/sqrt(t) extrapolation of the alpha
    series, which removes the leading finite-time drift and is what the
    model comparison uses for alignment.
    """
    series = []
    for snap in sorted(snapshots, key=lambda s: s.t):
        t = snap.t
        if t < 100.0:
            raise ValueError("alpha estimation needs t >= 100")
        win = (eta_window[0] * math.sqrt(t), eta_window[1] * math.sqrt(t))
        xb, v = _snapshot_v_on_bramson(snap, win)
        if len(xb) < 10:
            raise ValueError("snapshot does not cover the diffusive window")
        b = xb * np.exp(-xb ** 2 / (4.0 * t))
        alpha = float(np.dot(v, b) / np.dot(b, b))
        if alpha <= 0.0:
            raise ValueError(
                f"negative diffusive amplitude {alpha:.3e} (frame misaligned)")
        rms = float(np.sqrt(np.mean((v - alpha * b) ** 2)))
        series.append(DiffusiveAmplitude(t, alpha, win, rms))
    alphas = np.array([d.alpha for d in series])
    times = np.array([d.t for d in series])
    a_latest = float(alphas[-1])
    if len(series) >= 3:
        X = np.column_stack([np.ones_like(times), times ** -0.5])
        coef, *_ = np.linalg.lstsq(X, alphas, rcond=None)
        a_extrap = float(coef[0])
        if a_extrap <= 0.0:
            a_extrap = a_latest
    else:
        a_extrap = a_latest
    drift = float(np.max(np.log(alphas)) - np.min(np.log(alphas)))
    return AlphaEstimate(series, a_latest, a_extrap,
                         math.log(a_latest), math.log(a_extrap), drift)


@dataclass(eq=False)
class ExpansionFit:
    window: tuple
    basis: tuple
    coefficients: np.ndarray
    stderr: np.ndarray
    covariance: np.ndarray
    rms_residual: float
    window_spread_b: float
    n_points: int

    @property
    def a(self):
        return float(self.coefficients[0])

    @property
    def b(self):
        return float(self.coefficients[1])

    @property
    def c(self):
        return float(self.coefficients[2])


def _expansion_design(t, with_log=False):
    cols = [np.ones_like(t), t ** -0.5, 1.0 / t]
    tags = ("1", "t^-1/2", "t^-1")
    if with_log:
        cols.append(np.log(t) / t)
        tags = tags + ("log(t)/t",)
    return np.column_stack(cols), tags


def fit_expansion(trace, s=0.5, window=None, with_log=False,
                  stability_scan=True):
    """Fit d(t) = sigma_s(t) - 2t + (3/2)log t on {1, t^-1/2, t^-1}.

    Positions are taken in lab coordinates.  Returns the coefficients with
    covariance standard errors plus the spread of the t^-1/2 coefficient
    over five sub-windows sliding half a decade down from the requested
    window (the t^-1 nuisance term biases b on short windows; the scan
    quantifies it).
    """
    t_all, _, pos_lab, _ = trace.rows_for(s)
    if window is None:
        window = (float(t_all[-1]) / 100.0, float(t_all[-1]))
    if window[0] < 50.0:
        raise ValueError("fit window must start at t >= 50")

    def fit_on(w):
        m = (t_all >= w[0]) & (t_all <= w[1])
        t = t_all[m]
        if len(t) < 8:
            raise ValueError(f"window {w} holds only {len(t)} trace rows")
        d = pos_lab[m] - 2.0 * t + 1.5 * np.log(t)
        X, tags = _expansion_design(t, with_log)
        cond = np.linalg.cond(X.T @ X)
        if cond > 1e14:
            raise ValueError(
                f"normal equations ill-conditioned (cond {cond:.2e}); "
                f"window too narrow")
        coef, *_ = np.linalg.lstsq(X, d, rcond=None)
        resid = d - X @ coef
        dof = max(len(t) - X.shape[1], 1)
        sigma2 = float(resid @ resid) / dof
        cov = sigma2 * np.linalg.inv(X.T @ X)
        return coef, cov, float(np.sqrt(np.mean(resid ** 2))), tags, len(t)

    coef, cov, rms, tags, npts = fit_on(window)
    spread = 0.0
    if stability_scan:
        bs = []
        for i in range(5):
            f = 10.0 ** (-0.5 * i / 4.0)
            try:
                c_i, *_ = fit_on((window[0] * f, window[1] * f))
                bs.append(float(c_i[1]))
            except ValueError:
                continue
        if len(bs) >= 2:
            spread = float(np.max(bs) - np.min(bs))
    return ExpansionFit(tuple(window), tags, coef, np.sqrt(np.diag(cov)),
                        cov, rms, spread, npts)


@dataclass(frozen=True)
class CompareResult:
    t: float
    error: float
    argsup: float
    x_inf: float


def compare_to_vapp(snap, model, x_inf_hat, x_window=(-20.0, None)):
    """Weighted sup distance between a v-form snapshot and V_app.

    E(t) = sup_{x in [-20, 3 sqrt t]} |v(t,x) - e^{-x_inf} V_app(t, x+x_inf)|
           / (1 + |x|).

    The snapshot must live in the refined frame (V_app's own frame); the
    alignment shift x_inf comes from estimate_alpha.  The factor e^{-x_inf}
    is the weight's Jacobian under the shift: aligning u by x_inf
    multiplies v = e^x u by e^{-x_inf}.
    """
    if snap.frame.kind != "refined":
        raise ValueError(
            f"snapshot frame {snap.frame.kind!r} is not the refined frame")
    t = snap.t
    hi = 3.0 * math.sqrt(t) if x_window[1] is None else x_window[1]
    x = snap.x
    m = (x >= x_window[0]) & (x <= hi)
    x = x[m]
    if snap.formulation == "v_form":
        v = snap.values[m]
    else:
        v = np.exp(x) * snap.values[m]
    vapp = math.exp(-x_inf_hat) * model.eval_Vapp(t, x + x_inf_hat)
    err = np.abs(v - vapp) / (1.0 + np.abs(x))
    i = int(np.argmax(err))
    return CompareResult(t, float(err[i]), float(x[i]), x_inf_hat)


def w_diagnostics(snapshots, model, x_inf_hat, eta_max=4.0,
                  eta_spacing=0.002):
    """Spectral decay series of the weighted difference w = e^{eta^2/8} W.

    W(t, eta) = v(t, eta sqrt t) - aligned V_app, interpolated onto a
    uniform eta-grid on [0, eta_max] (eta_max <= 4: beyond that the weight
    amplifies far-field discretization noise).  Returns arrays
    (tau, <e0, w>, ||w_perp||) with tau = log t.
    """
    if eta_max > 4.0:
        raise ValueError("eta_max must not exceed 4 (weight truncation)")
    e0 = eigenpair(0, eta_max=eta_max, spacing=eta_spacing)
    eta = e0.field.eta
    taus, coefs, orths = [], [], []
    for snap in sorted(snapshots, key=lambda s: s.t):
        t = snap.t
        x_need = eta * math.sqrt(t)
        if x_need[-1] > snap.x[-1] + 1e-9:
            raise ValueError(
                f"snapshot at t={t:g} does not cover eta window "
                f"(needs x up to {x_need[-1]:.1f})")
        if snap.formulation == "v_form":
            v = np.interp(x_need, snap.x, snap.values)
        else:
            u = np.interp(x_need, snap.x, snap.values)
            v = np.exp(x_need) * u
        vapp = math.exp(-x_inf_hat) * model.eval_Vapp(t, x_need + x_inf_hat)
        w = np.exp(eta ** 2 / 8.0) * (v - vapp)
        coef, orth = project_e0(HalfLineField(eta, w), e0=e0, strict=False)
        from .spectral import inner
        taus.append(math.log(t))
        coefs.append(coef)
        orths.append(math.sqrt(max(inner(orth, orth), 0.0)))
    return np.array(taus), np.array(coefs), np.array(orths)


@dataclass(frozen=True)
class RateFit:
    p: float
    p_stderr: float
    amplitude: float
    window: tuple
    n_points: int
    flagged: bool
    note: str = ""


def probe_rate(trace, window=None, ref_mass=None):
    """Fit |mass(t) - mass(t_end)| to A t^{-p} on a log-log window.

    The default window ends at t_end/5: closer to t_end the remainder
    against the plug-in limit mass(t_end) drops below its own bias and the
    fit is flagged.  Requires at least 30 samples spanning a decade.
    """
    t, mass = trace.t, trace.mass
    if ref_mass is None:
        ref_mass = float(mass[-1])
    if window is None:
        window = (float(t[0]), float(t[-1]) / 5.0)
    m = (t >= window[0]) & (t <= window[1])
    if m.sum() < 30:
        raise ValueError(f"window {window} holds only {int(m.sum())} samples")
    if t[m][-1] / t[m][0] < 10.0:
        raise ValueError("window must span at least a decade")
    r = np.abs(mass[m] - ref_mass)
    floor = 1e-12 * max(1.0, abs(ref_mass))
    good = r > floor
    flagged = bool(np.any(~good))
    lt, lr = np.log(t[m][good]), np.log(r[good])
    X = np.column_stack([lt, np.ones_like(lt)])
    (slope, loga), *_ = np.linalg.lstsq(X, lr, rcond=None)
    resid = lr - X @ np.array([slope, loga])
    dof = max(len(lt) - 2, 1)
    sxx = float(np.sum((lt - lt.mean()) ** 2))
    stderr = math.sqrt(float(resid @ resid) / dof / sxx)
    note = "window ends too close to t_end" if flagged else ""
    return RateFit(-float(slope), stderr, math.exp(float(loga)),
                   window, int(good.sum()), flagged, note)
