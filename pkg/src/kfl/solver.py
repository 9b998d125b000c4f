"""Long-horizon IMEX integration of the front problem in moving frames.

One step treats diffusion and the frame drift with Crank-Nicolson (the
tridiagonal solve) and the reaction with an explicit Heun substep; the
splitting is plain IMEX, second order in dt for the smooth fronts at hand.
Three formulations share the machinery:

  u_form       u_t = u_xx + s'(t) u_x + f(u)        on a growing interval,
               Dirichlet 1 on the far left, 0 on the far right;
  v_form       v = e^x u:
               v_t = v_xx + (s'-2) v_x + (2-s')v - e^x N(e^{-x} v),
               Dirichlet e^{x_left} on the left, a lagged quadratic
               extrapolation (transparent for the linearly growing
               diffusive tail) on the right;
  linear probe U_t = U_yy + sigma'(t) U_y + U on y > 0 with U(t,0) = 0,
               for the moving Dirichlet boundary
               sigma(t) = 2t - (3/2) log t - c/sqrt(t).

The time step follows dt = min(dt_max, dt_factor*dx^2*(1+t/10)) clipped to
land exactly on sample/snapshot/checkpoint times, so a run is a
deterministic function of its configuration and resuming from a
checkpoint reproduces the straight run bitwise.

The domain is re-gridded on the fly: the right edge tracks lam_right *
sqrt(t) (plus margin) in blocks of 200*dx, the left edge is truncated at
-(40 + 2 log t) where the solution is flat to ~1e-15.
"""

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import lapack

from .analysis import FrontTrace, MassTrace, level_position
from .model import Frame, Grid1D, make_initial

try:
    import numba

    @numba.njit(cache=True)
    def _cn_sweep(u, R, r, q, dt, bcl, bcr):
        """Fused Crank-Nicolson right side + Thomas solve.

        Interior rows: -(r-q) u_{j-1} + (1+2r) u_j - (r+q) u_{j+1} = rhs_j,
        rhs_j = (r-q)u_{j-1} + (1-2r)u_j + (r+q)u_{j+1} + dt R_j; identity
        rows at both ends.  The matrix is strictly diagonally dominant, so
        the unpivoted sweep is stable.
        """
        n = u.shape[0]
        cp = np.empty(n)
        dp = np.empty(n)
        out = np.empty(n)
        lo = -(r - q)
        hi = -(r + q)
        dia = 1.0 + 2.0 * r
        cp[0] = 0.0
        dp[0] = bcl
        for j in range(1, n - 1):
            rhs = ((r - q) * u[j - 1] + (1.0 - 2.0 * r) * u[j]
                   + (r + q) * u[j + 1] + dt * R[j])
            m = dia - lo * cp[j - 1]
            cp[j] = hi / m
            dp[j] = (rhs - lo * dp[j - 1]) / m
        cp[n - 1] = 0.0
        dp[n - 1] = bcr
        out[n - 1] = dp[n - 1]
        for j in range(n - 2, -1, -1):
            out[j] = dp[j] - cp[j] * out[j + 1]
        return out

    _HAVE_NUMBA = True
except ImportError:                                    # pragma: no cover
    _HAVE_NUMBA = False

__all__ = [
    "SolverConfig",
    "Snapshot",
    "RunResult",
    "RunAborted",
    "run",
    "run_linear_probe",
    "save_checkpoint",
    "load_checkpoint",
    "CHECKPOINT_VERSION",
]

CHECKPOINT_VERSION = 1


class RunAborted(RuntimeError):
    def __init__(self, message, checkpoint=None):
        super().__init__(message)
        self.checkpoint = checkpoint


@dataclass(frozen=True)
class SolverConfig:
    """Numerics and sampling for one integration."""

    frame: Frame
    formulation: str = "u_form"     # u_form | v_form | linear_probe
    dx: float = 0.02
    t_start: float = 1.0
    t_end: float = 1000.0
    dt_max: float = 0.05
    dt_factor: float = 0.25        # dt = min(dt_max, dt_factor*dx^2*(1+t/10))
    lam_right: float = 6.0         # right margin factor Lambda (units sqrt t)
    right_margin: float = 10.0
    trace_levels: tuple = (0.5,)
    trace_samples: int = 400
    snapshot_times: tuple = ()
    checkpoint_times: tuple = ()
    probe_speed_c: float = 0.0
    guard_every: int = 25
    config_hash: str = ""

    def __post_init__(self):
        if self.dx <= 0.0:
            raise ValueError("dx must be positive")
        if self.lam_right < 6.0:
            raise ValueError("lam_right must be at least 6")
        if self.formulation not in ("u_form", "v_form", "linear_probe"):
            raise ValueError(f"unknown formulation {self.formulation!r}")
        if self.t_end <= self.t_start:
            raise ValueError("t_end must exceed t_start")
        if self.dt_max > 0.05 + 1e-15:
            raise ValueError("dt_max above the 0.05 stability cap")

    def dt_of(self, t):
        return min(self.dt_max, self.dt_factor * self.dx * self.dx
                   * (1.0 + t / 10.0))

    def trace_times(self):
        if self.trace_samples <= 0 or not self.trace_levels:
            return np.empty(0)
        lo = max(self.t_start * 1.5, 2.0)
        return np.geomspace(lo, self.t_end, self.trace_samples)


@dataclass(eq=False)
class Snapshot:
    """One field at one time, tagged with frame and formulation."""

    t: float
    frame: Frame
    formulation: str
    x0: float
    dx: float
    values: np.ndarray

    @property
    def x(self):
        return self.x0 + self.dx * np.arange(len(self.values))

    @property
    def grid(self):
        return Grid1D(self.x0, self.x0 + self.dx * (len(self.values) - 1),
                      self.dx)

    def as_u(self):
        if self.formulation == "v_form":
            return np.exp(-self.x) * self.values
        return self.values


@dataclass(eq=False)
class RunResult:
    trace: FrontTrace
    snapshots: list
    checkpoints: list
    final: Snapshot
    mass: MassTrace = None


class _State:
    __slots__ = ("t", "x0", "dx", "u", "plateaus", "_x")

    def __init__(self, t, x0, dx, u, plateaus=(1.0, 0.0)):
        self.t = t
        self.x0 = x0
        self.dx = dx
        self.u = u
        self.plateaus = plateaus      # far-field u values (left, right)
        self._x = None

    @property
    def x(self):
        if self._x is None or len(self._x) != len(self.u) \
                or self._x[0] != self.x0:
            self._x = self.x0 + self.dx * np.arange(len(self.u))
        return self._x


def _reaction(config, nl, state_x, t, v):
    kind = config.formulation
    if kind == "u_form":
        return nl.f(v)
    if kind == "linear_probe":
        return v
    sp = float(config.frame.shift_rate(t))
    lin = (2.0 - sp) * v
    x = state_x
    absorb = np.empty_like(v)
    near = x < 300.0
    if np.any(near):
        u = np.exp(-x[near]) * v[near]
        absorb[near] = np.exp(x[near]) * nl.n_of(u)
    if np.any(~near):
        # Taylor form of e^x N(e^-x v); exact for quadratic N
        absorb[~near] = _half_n2(nl) * np.exp(-x[~near]) * v[~near] ** 2
    return lin - absorb


_N2_CACHE = {}


def _half_n2(nl):
    try:
        return _N2_CACHE[id(nl)]
    except KeyError:
        val = float(nl.n_of(1e-4)) / 1e-8
        _N2_CACHE[id(nl)] = val
        return val


def _drift(config, t):
    if config.formulation == "u_form":
        return float(config.frame.shift_rate(t))
    if config.formulation == "linear_probe":
        c = config.probe_speed_c
        return 2.0 - 1.5 / t + 0.5 * c * t ** -1.5
    return float(config.frame.shift_rate(t)) - 2.0


def _boundary_values(config, state, t_new):
    kind = config.formulation
    if kind == "u_form":
        return state.plateaus
    if kind == "linear_probe":
        return 0.0, 0.0
    v = state.u
    right = 3.0 * v[-2] - 3.0 * v[-3] + v[-4]   # lagged transparent closure
    return math.exp(state.x0) * state.plateaus[0], right


def _step(config, nl, state, dt):
    """One IMEX step: CN for diffusion+drift, Heun for the reaction."""
    t, dx, u = state.t, state.dx, state.u
    n = len(u)
    x = state.x if config.formulation == "v_form" else None

    r1 = _reaction(config, nl, x, t, u)
    r2 = _reaction(config, nl, x, t + dt, u + dt * r1)
    R = 0.5 * (r1 + r2)

    a = _drift(config, t + 0.5 * dt)
    r = dt / (2.0 * dx * dx)
    q = a * dt / (4.0 * dx)
    bcl, bcr = _boundary_values(config, state, t + dt)

    if _HAVE_NUMBA:
        state.u = _cn_sweep(u, R, r, q, dt, bcl, bcr)
        state.t = t + dt
        return state

    rhs = np.empty(n)
    rhs[1:-1] = ((r - q) * u[:-2] + (1.0 - 2.0 * r) * u[1:-1]
                 + (r + q) * u[2:] + dt * R[1:-1])
    rhs[0] = bcl
    rhs[-1] = bcr
    dl = np.full(n - 1, -(r - q))
    dmain = np.full(n, 1.0 + 2.0 * r)
    du = np.full(n - 1, -(r + q))
    dmain[0] = dmain[-1] = 1.0
    du[0] = 0.0
    dl[-1] = 0.0
    _, _, _, xsol, info = lapack.dgtsv(dl, dmain, du, rhs,
                                       overwrite_dl=1, overwrite_d=1,
                                       overwrite_du=1, overwrite_b=1)
    if info != 0:
        raise RunAborted(f"tridiagonal solve failed (info={info}) at t={t}")
    state.u = xsol
    state.t = t + dt
    return state


def _regrid(config, nl, state):
    """Grow the right edge with sqrt(t), truncate the flat left plateau."""
    kind = config.formulation
    dx = state.dx
    target_right = config.lam_right * math.sqrt(state.t) + config.right_margin
    right = state.x0 + dx * (len(state.u) - 1)
    if right < target_right:
        block = 200 * int(math.ceil((target_right - right) / (200 * dx)))
        oldn = len(state.u)
        newu = np.empty(oldn + block)
        newu[:oldn] = state.u
        if kind == "v_form":
            xe = state.x0 + dx * (oldn - 1)
            xnew = xe + dx * np.arange(1, block + 1)
            ve = state.u[-1]
            if ve > 0.0 and xe > 0.0:
                t = state.t
                newu[oldn:] = ve * (xnew / xe) * np.exp(
                    -(xnew ** 2 - xe ** 2) / (4.0 * t))
            else:
                newu[oldn:] = 0.0
        else:
            fill = state.plateaus[1] if kind == "u_form" else 0.0
            newu[oldn:] = fill
        state.u = newu
    if kind != "linear_probe":
        target_left = -(40.0 + 2.0 * math.log(max(state.t, 1.0)))
        if state.x0 < target_left - 5.0:
            drop = int(math.floor((target_left - state.x0) / dx))
            state.u = state.u[drop:]
            state.x0 += drop * dx
    return state


def _tail_amplitude(config, state, t):
    """Cheap diffusive-amplitude fit for the trace (NaN when unavailable)."""
    if t < 100.0:
        return float("nan")
    lo, hi = 0.5 * math.sqrt(t), 2.0 * math.sqrt(t)
    shift_own = float(config.frame.shift(t))
    shift_b = float(Frame.bramson().shift(t))
    x = state.x + (shift_own - shift_b)
    m = (x >= lo) & (x <= hi)
    if m.sum() < 10:
        return float("nan")
    xb = x[m]
    if config.formulation == "v_form":
        v = state.u[m] * math.exp(shift_own - shift_b)
    else:
        v = np.exp(xb) * state.u[m]
    b = xb * np.exp(-xb ** 2 / (4.0 * t))
    denom = float(np.dot(b, b))
    return float(np.dot(v, b) / denom) if denom > 0 else float("nan")


def _guard(config, state):
    u = state.u
    if not np.all(np.isfinite(u)):
        raise RunAborted(f"non-finite state at t={state.t:.6g}",
                         checkpoint=_checkpoint_dict(config, state))
    if config.formulation == "u_form":
        if float(u.max()) > 1.0 + 1e-8 or float(u.min()) < -1e-8:
            raise RunAborted(
                f"u outside [0,1] beyond 1e-8 at t={state.t:.6g} "
                f"(min {u.min():.3e}, max {u.max():.3e}); dt too large",
                checkpoint=_checkpoint_dict(config, state))
    else:
        if float(u.min()) < -1e-8:
            raise RunAborted(
                f"negative values beyond -1e-8 at t={state.t:.6g}",
                checkpoint=_checkpoint_dict(config, state))


def _checkpoint_dict(config, state):
    return {
        "version": CHECKPOINT_VERSION,
        "t": state.t,
        "x0": state.x0,
        "dx": state.dx,
        "values": state.u.copy(),
        "formulation": config.formulation,
        "frame_kind": config.frame.kind,
        "frame_c": config.frame.c if config.frame.c is not None else np.nan,
        "config_hash": config.config_hash,
        "plateau_left": state.plateaus[0],
        "plateau_right": state.plateaus[1],
    }


def save_checkpoint(path, chk):
    np.savez(path, **chk)


def load_checkpoint(path):
    with np.load(path, allow_pickle=False) as data:
        chk = {k: data[k] for k in data.files}
    chk["version"] = int(chk["version"])
    if chk["version"] != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {chk['version']}")
    for key in ("t", "x0", "dx"):
        chk[key] = float(chk[key])
    chk["formulation"] = str(chk["formulation"])
    chk["frame_kind"] = str(chk["frame_kind"])
    chk["config_hash"] = str(chk["config_hash"])
    return chk


def _initial_state(config, nl, ic):
    t0 = config.t_start
    dx = config.dx
    left = -(40.0 + 2.0 * math.log(max(t0, 1.0)))
    left = math.floor(left / dx) * dx
    right = config.lam_right * math.sqrt(t0) + config.right_margin
    n = int(math.ceil((right - left) / dx)) + 1
    x = left + dx * np.arange(n)
    shift = float(config.frame.shift(t0))
    lab_grid = Grid1D(x[0] + shift, x[-1] + shift, dx)
    u = make_initial(ic, lab_grid)
    plateaus = (float(u[0]), float(u[-1]))
    if config.formulation == "v_form":
        u = np.exp(x) * u
    return _State(t0, float(x[0]), dx, u, plateaus)


def _state_from_checkpoint(config, chk):
    if chk["formulation"] != config.formulation:
        raise ValueError("checkpoint formulation does not match config")
    if chk["frame_kind"] != config.frame.kind:
        raise ValueError("checkpoint frame does not match config")
    plateaus = (float(chk.get("plateau_left", 1.0)),
                float(chk.get("plateau_right", 0.0)))
    return _State(chk["t"], chk["x0"], chk["dx"],
                  np.asarray(chk["values"], dtype=float), plateaus)


def run(config, nl, ic=None, resume_from=None):
    """Integrate from t_start (or a checkpoint) to t_end.

    Returns a RunResult with the level trace, requested snapshots and
    checkpoint dictionaries.  Aborts (RunAborted) carry a final checkpoint
    of the offending state.
    """
    if config.formulation == "linear_probe":
        raise ValueError("use run_linear_probe for the probe formulation")
    if resume_from is not None:
        state = _state_from_checkpoint(config, resume_from)
    else:
        state = _initial_state(config, nl, ic)

    trace_times = config.trace_times()
    snap_times = np.sort(np.asarray(config.snapshot_times, dtype=float))
    chk_times = np.sort(np.asarray(config.checkpoint_times, dtype=float))
    events = np.unique(np.concatenate([
        trace_times, snap_times, chk_times, [config.t_end],
    ]))
    events = events[events > state.t + 1e-12]

    rows = []
    snapshots = []
    checkpoints = []
    steps = 0
    guard_every = max(config.guard_every, 1)

    def is_member(tval, arr):
        if len(arr) == 0:
            return False
        i = np.searchsorted(arr, tval)
        for j in (i - 1, i):
            if 0 <= j < len(arr) and abs(arr[j] - tval) < 1e-9 * max(tval, 1.0):
                return True
        return False

    def sample(tval):
        if config.trace_levels and is_member(tval, trace_times):
            shift = float(config.frame.shift(tval))
            uvals = state.u if config.formulation == "u_form" \
                else np.exp(-state.x) * state.u
            amp = _tail_amplitude(config, state, tval)
            for s in config.trace_levels:
                try:
                    cr = level_position(state.x, uvals, s)
                except ValueError:
                    continue
                rows.append((tval, s, cr.position, cr.position + shift, amp))
        if is_member(tval, snap_times):
            snapshots.append(Snapshot(tval, config.frame,
                                      config.formulation, state.x0,
                                      state.dx, state.u.copy()))
        if is_member(tval, chk_times):
            checkpoints.append(_checkpoint_dict(config, state))

    ei = 0
    while state.t < config.t_end - 1e-12:
        next_event = events[ei]
        dt = min(config.dt_of(state.t), next_event - state.t)
        _step(config, nl, state, dt)
        steps += 1
        if steps % guard_every == 0:
            _guard(config, state)
        if abs(state.t - next_event) < 1e-12 * max(1.0, next_event):
            state.t = float(next_event)
            _guard(config, state)
            sample(state.t)
            ei += 1
        _regrid(config, nl, state)

    _guard(config, state)
    t_arr = np.array([r[0] for r in rows])
    trace = FrontTrace(
        t_arr,
        np.array([r[1] for r in rows]),
        np.array([r[2] for r in rows]),
        np.array([r[3] for r in rows]),
        np.array([r[4] for r in rows]),
        dx=config.dx, frame_kind=config.frame.kind,
        formulation=config.formulation)
    final = Snapshot(state.t, config.frame, config.formulation,
                     state.x0, state.dx, state.u.copy())
    return RunResult(trace, snapshots, checkpoints, final)


def run_linear_probe(c, config, initial):
    """Integrate the linear Dirichlet probe; returns the mass trace.

    ``initial`` is a callable y -> U(1, y), compactly supported and
    nonnegative (checked).  The equation is frame-fixed so the moving
    boundary sits at node 0 for all times.
    """
    if config.t_start < 1.0:
        raise ValueError("probe runs start at t >= 1")
    config = replace(config, formulation="linear_probe", probe_speed_c=c)
    dx = config.dx
    right = config.lam_right * math.sqrt(config.t_start) + config.right_margin
    n = int(math.ceil(right / dx)) + 1
    y = dx * np.arange(n)
    u0 = np.asarray(initial(y), dtype=float)
    if np.any(u0 < 0.0) or u0[0] != 0.0:
        raise ValueError("probe initial data must be nonnegative with U(0)=0")
    state = _State(config.t_start, 0.0, dx, u0)

    sample_times = config.trace_times()
    events = np.unique(np.concatenate([sample_times, [config.t_end]]))
    events = events[events > state.t + 1e-12]
    ts, masses = [], []
    steps = 0
    ei = 0
    while state.t < config.t_end - 1e-12:
        next_event = events[ei]
        dt = min(config.dt_of(state.t), next_event - state.t)
        _step(config, nl=None, state=state, dt=dt)
        steps += 1
        if steps % config.guard_every == 0:
            if not np.all(np.isfinite(state.u)):
                raise RunAborted(f"non-finite probe state at t={state.t:.6g}")
            if float(state.u.min()) < -1e-8:
                raise RunAborted(
                    f"probe went negative beyond -1e-8 at t={state.t:.6g}")
        if abs(state.t - next_event) < 1e-12 * max(1.0, next_event):
            state.t = float(next_event)
            ts.append(state.t)
            masses.append(float(np.trapezoid(state.u, dx=dx)))
            ei += 1
        _regrid(config, None, state)
    return MassTrace(np.array(ts), np.array(masses), c=c)
