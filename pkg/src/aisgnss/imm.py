"""Kinematic-consistency screening with a two-model (CV / CTRV) IMM filter.

State per model: ``[p_x, p_y, v, psi, psi_dot]`` with positions in meters on a
local east/north tangent plane, ``psi`` the mathematical heading (radians,
counter-clockwise from east) and ``psi_dot`` the yaw rate. AIS course over
ground is a compass bearing, so ``psi = pi/2 - radians(cog)``.

The numerical core is compiled with numba; the Python functions below wrap the
same kernels so that the API and the batch path cannot drift apart.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .config import ImmConfig, PipelineConfig
from .geo import GeoPos, project_xy, unproject_xy, wrap_pi
from .ingest import Track

CV, CTRV = 0, 1
NX = 5

# packed parameter vector layout
_SIG_POS, _SIG_SOG, _SIG_COG, _SA, _SYAW_CV, _SYAW_CTRV, _EPS = range(7)
_P0V, _P0PSI, _P0W, _MAXDT, _REANCHOR, _VTH = range(7, 13)


class ImmStepError(ValueError):
    """The step was rejected; the input state is unchanged."""


def pack_params(cfg: ImmConfig, v_th: float = 30.0) -> np.ndarray:
    return np.array([
        cfg.sigma_pos, cfg.sigma_sog, math.radians(cfg.sigma_cog_deg), cfg.sigma_acc,
        cfg.sigma_yaw_acc_cv, cfg.sigma_yaw_acc_ctrv, cfg.ctrv_yaw_epsilon,
        cfg.p0_speed, math.radians(cfg.p0_heading_deg), cfg.p0_yaw_rate,
        cfg.max_dt, cfg.reanchor_distance, v_th,
    ])


def cog_to_heading(cog_deg: float) -> float:
    return float(wrap_pi(math.pi / 2 - math.radians(cog_deg)))


# --- motion models ---------------------------------------------------------


@njit(cache=True)
def cv_transition(x, dt):
    out = x.copy()
    c, s = math.cos(x[3]), math.sin(x[3])
    out[0] = x[0] + x[2] * c * dt
    out[1] = x[1] + x[2] * s * dt
    out[3] = wrap_pi(x[3])
    out[4] = 0.0
    return out


@njit(cache=True)
def cv_jacobian(x, dt):
    F = np.eye(NX)
    c, s = math.cos(x[3]), math.sin(x[3])
    F[0, 2] = c * dt
    F[0, 3] = -x[2] * s * dt
    F[1, 2] = s * dt
    F[1, 3] = x[2] * c * dt
    F[4, 4] = 0.0
    return F


@njit(cache=True)
def ctrv_transition(x, dt, eps):
    out = x.copy()
    v, psi, w = x[2], x[3], x[4]
    if abs(w) < eps:
        out[0] = x[0] + v * math.cos(psi) * dt
        out[1] = x[1] + v * math.sin(psi) * dt
    else:
        psi1 = psi + w * dt
        out[0] = x[0] + v / w * (math.sin(psi1) - math.sin(psi))
        out[1] = x[1] + v / w * (math.cos(psi) - math.cos(psi1))
    out[3] = wrap_pi(psi + w * dt)
    return out


@njit(cache=True)
def ctrv_jacobian(x, dt, eps):
    F = np.eye(NX)
    v, psi, w = x[2], x[3], x[4]
    F[3, 4] = dt
    if abs(w) < eps:
        c, s = math.cos(psi), math.sin(psi)
        F[0, 2] = c * dt
        F[0, 3] = -v * s * dt
        F[1, 2] = s * dt
        F[1, 3] = v * c * dt
        return F
    psi1 = psi + w * dt
    s0, c0 = math.sin(psi), math.cos(psi)
    s1, c1 = math.sin(psi1), math.cos(psi1)
    F[0, 2] = (s1 - s0) / w
    F[0, 3] = v / w * (c1 - c0)
    F[0, 4] = -v / (w * w) * (s1 - s0) + v / w * dt * c1
    F[1, 2] = (c0 - c1) / w
    F[1, 3] = v / w * (s1 - s0)
    F[1, 4] = -v / (w * w) * (c0 - c1) + v / w * dt * s1
    return F


@njit(cache=True)
def process_noise(x, dt, sigma_acc, sigma_yaw_acc):
    """Longitudinal-acceleration and yaw-acceleration white noise mapped into the state."""
    G = np.zeros((NX, 2))
    h = 0.5 * dt * dt
    G[0, 0] = h * math.cos(x[3])
    G[1, 0] = h * math.sin(x[3])
    G[2, 0] = dt
    G[3, 1] = h
    G[4, 1] = dt
    qa = sigma_acc * sigma_acc
    qy = sigma_yaw_acc * sigma_yaw_acc
    Q = np.empty((NX, NX))
    for i in range(NX):
        for j in range(NX):
            Q[i, j] = qa * G[i, 0] * G[j, 0] + qy * G[i, 1] * G[j, 1]
    return Q


@njit(cache=True)
def _predict(model, x, P, dt, p):
    if model == CV:
        F = cv_jacobian(x, dt)
        xn = cv_transition(x, dt)
        Q = process_noise(x, dt, p[_SA], p[_SYAW_CV])
    else:
        F = ctrv_jacobian(x, dt, p[_EPS])
        xn = ctrv_transition(x, dt, p[_EPS])
        Q = process_noise(x, dt, p[_SA], p[_SYAW_CTRV])
    return xn, _sandwich(F, P, Q)


@njit(cache=True)
def _sandwich(A, P, Q):
    """Symmetrized ``A P A^T + Q`` for small square matrices."""
    n = A.shape[0]
    AP = np.zeros((n, n))
    for i in range(n):
        for k in range(n):
            a = A[i, k]
            if a != 0.0:
                for j in range(n):
                    AP[i, j] += a * P[k, j]
    M = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            acc = 0.0
            for k in range(n):
                acc += AP[i, k] * A[j, k]
            M[i, j] = acc
    out = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            out[i, j] = 0.5 * (M[i, j] + M[j, i]) + 0.5 * (Q[i, j] + Q[j, i])
    return out


# --- IMM cycle -------------------------------------------------------------


@njit(cache=True)
def fuse(xs, Ps, mu):
    """Probability-weighted state and covariance including the spread of means."""
    x = np.zeros(NX)
    ref = xs[0, 3]
    dpsi = 0.0
    for i in range(xs.shape[0]):
        for k in range(NX):
            if k != 3:
                x[k] += mu[i] * xs[i, k]
        dpsi += mu[i] * wrap_pi(xs[i, 3] - ref)
    x[3] = wrap_pi(ref + dpsi)
    P = np.zeros((NX, NX))
    for i in range(xs.shape[0]):
        if mu[i] == 0.0:
            continue
        d = xs[i] - x
        d[3] = wrap_pi(d[3])
        for a in range(NX):
            for b in range(NX):
                P[a, b] += mu[i] * (Ps[i, a, b] + d[a] * d[b])
    return x, 0.5 * (P + P.T)


@njit(cache=True)
def _mix(xs, Ps, mu, Pi):
    m = xs.shape[0]
    c = np.zeros(m)
    for j in range(m):
        for i in range(m):
            c[j] += Pi[i, j] * mu[i]
    x0 = xs.copy()
    P0 = Ps.copy()
    for j in range(m):
        if c[j] <= 1e-300:
            continue
        w = np.empty(m)
        for i in range(m):
            w[i] = Pi[i, j] * mu[i] / c[j]
        xj, Pj = fuse(xs, Ps, w)
        x0[j] = xj
        P0[j] = Pj
    return x0, P0, c


@njit(cache=True)
def _kf_update(x, P, z, r):
    """Kalman update for H = [I_4 | 0] and R = diag(r), Joseph-form covariance.

    Returns the posterior and the Gaussian log-likelihood of the innovation.
    """
    m = 4
    S = np.empty((m, m))
    for i in range(m):
        for j in range(m):
            S[i, j] = 0.5 * (P[i, j] + P[j, i])
        S[i, i] += r[i]
    L = np.zeros((m, m))
    logdet = 0.0
    for i in range(m):
        for j in range(i + 1):
            acc = S[i, j]
            for k in range(j):
                acc -= L[i, k] * L[j, k]
            if i == j:
                if acc <= 0.0:
                    acc = 1e-300
                L[i, i] = math.sqrt(acc)
                logdet += 2.0 * math.log(L[i, i])
            else:
                L[i, j] = acc / L[j, j]
    Li = np.zeros((m, m))
    for i in range(m):
        Li[i, i] = 1.0 / L[i, i]
        for j in range(i):
            acc = 0.0
            for k in range(j, i):
                acc -= L[i, k] * Li[k, j]
            Li[i, j] = acc / L[i, i]
    Si = np.zeros((m, m))
    for i in range(m):
        for j in range(m):
            acc = 0.0
            for k in range(max(i, j), m):
                acc += Li[k, i] * Li[k, j]
            Si[i, j] = acc
    y = np.empty(m)
    for i in range(m):
        y[i] = z[i] - x[i]
    y[3] = wrap_pi(y[3])
    K = np.zeros((NX, m))
    for i in range(NX):
        for j in range(m):
            acc = 0.0
            for k in range(m):
                acc += P[i, k] * Si[k, j]
            K[i, j] = acc
    xn = x.copy()
    for i in range(NX):
        for k in range(m):
            xn[i] += K[i, k] * y[k]
    xn[3] = wrap_pi(xn[3])
    A = np.eye(NX)
    for i in range(NX):
        for k in range(m):
            A[i, k] -= K[i, k]
    KRK = np.empty((NX, NX))
    for i in range(NX):
        for j in range(NX):
            acc = 0.0
            for k in range(m):
                acc += K[i, k] * r[k] * K[j, k]
            KRK[i, j] = acc
    Pn = _sandwich(A, P, KRK)
    q = 0.0
    for i in range(m):
        for j in range(m):
            q += y[i] * Si[i, j] * y[j]
    ll = -0.5 * (q + logdet + m * math.log(2.0 * math.pi))
    return xn, Pn, ll


@njit(cache=True)
def imm_cycle(xs, Ps, mu, z, dt, Pi, p):
    """One IMM step. ``z = [p_x, p_y, sog, psi]`` in the state's plane.

    Returns updated (xs, Ps, mu), the fused posterior and the distance between
    the fused prediction and the measured position.
    """
    x0, P0, c = _mix(xs, Ps, mu, Pi)
    xp = np.empty_like(xs)
    Pp = np.empty_like(Ps)
    for j in range(2):
        xj, Pj = _predict(j, x0[j], P0[j], dt, p)
        xp[j] = xj
        Pp[j] = Pj
    px = c[0] * xp[0, 0] + c[1] * xp[1, 0]
    py = c[0] * xp[0, 1] + c[1] * xp[1, 1]
    csum = c[0] + c[1]
    residual = math.hypot(z[0] - px / csum, z[1] - py / csum)

    r = np.empty(4)
    r[0] = p[_SIG_POS] ** 2
    r[1] = r[0]
    r[2] = p[_SIG_SOG] ** 2
    r[3] = p[_SIG_COG] ** 2
    xu = np.empty_like(xs)
    Pu = np.empty_like(Ps)
    logw = np.empty(2)
    for j in range(2):
        xj, Pj, ll = _kf_update(xp[j], Pp[j], z, r)
        xu[j] = xj
        Pu[j] = Pj
        logw[j] = ll + math.log(c[j]) if c[j] > 0.0 else -np.inf
    top = max(logw[0], logw[1])
    mu_new = np.zeros(2)
    if top == -np.inf:
        mu_new[:] = c / csum
    else:
        for j in range(2):
            mu_new[j] = math.exp(logw[j] - top)
        mu_new /= mu_new.sum()
    xf, Pf = fuse(xu, Pu, mu_new)
    return xu, Pu, mu_new, xf, Pf, residual


@njit(cache=True)
def _init_models(sog, psi, p, mu0):
    xs = np.zeros((2, NX))
    Ps = np.zeros((2, NX, NX))
    for j in range(2):
        xs[j, 2] = sog
        xs[j, 3] = psi
        Ps[j, 0, 0] = p[_SIG_POS] ** 2
        Ps[j, 1, 1] = p[_SIG_POS] ** 2
        Ps[j, 2, 2] = p[_P0V] ** 2
        Ps[j, 3, 3] = p[_P0PSI] ** 2
        Ps[j, 4, 4] = p[_P0W] ** 2
    return xs, Ps, mu0.copy()


@njit(cache=True)
def _heading(cog_deg):
    return wrap_pi(0.5 * math.pi - math.radians(cog_deg))


@njit(cache=True)
def scan_cues(t, lat, lon, sog, cog, Pi, mu0, p, stop_at_first):
    """Run the filter along one time-sorted track.

    Returns (index, residual, dt) arrays for each cue. Non-increasing
    timestamps are skipped; gaps over ``max_dt`` restart the filter.
    """
    n = len(t)
    idx = np.empty(n, dtype=np.int64)
    res = np.empty(n)
    dts = np.empty(n)
    nc = 0
    if n < 2:
        return idx[:0], res[:0], dts[:0]
    lat0, lon0 = lat[0], lon[0]
    xs, Ps, mu = _init_models(sog[0], _heading(cog[0]), p, mu0)
    t_last = t[0]
    z = np.empty(4)
    for k in range(1, n):
        if t[k] <= t_last:
            continue
        dt = (t[k] - t_last) / 1000.0
        t_last = t[k]
        if dt > p[_MAXDT]:
            lat0, lon0 = lat[k], lon[k]
            xs, Ps, mu = _init_models(sog[k], _heading(cog[k]), p, mu0)
            continue
        zx, zy = project_xy(lat0, lon0, lat[k], lon[k])
        if math.hypot(zx, zy) > p[_REANCHOR]:
            for j in range(2):
                la, lo = unproject_xy(lat0, lon0, xs[j, 0], xs[j, 1])
                nx, ny = project_xy(lat[k], lon[k], la, lo)
                xs[j, 0] = nx
                xs[j, 1] = ny
            lat0, lon0 = lat[k], lon[k]
            zx, zy = 0.0, 0.0
        z[0] = zx
        z[1] = zy
        z[2] = sog[k]
        z[3] = _heading(cog[k])
        xs, Ps, mu, xf, Pf, r = imm_cycle(xs, Ps, mu, z, dt, Pi, p)
        if r / dt > p[_VTH] or sog[k] > p[_VTH]:
            idx[nc] = k
            res[nc] = r
            dts[nc] = dt
            nc += 1
            if stop_at_first:
                break
            lat0, lon0 = lat[k], lon[k]
            xs, Ps, mu = _init_models(sog[k], _heading(cog[k]), p, mu0)
    return idx[:nc], res[:nc], dts[:nc]


# --- Python API ------------------------------------------------------------


@dataclass(frozen=True)
class ImmState:
    """Per-model estimates, mode probabilities and the plane they live on."""

    xs: np.ndarray  # (2, 5): CV, CTRV
    Ps: np.ndarray  # (2, 5, 5)
    mu: np.ndarray  # (2,)
    origin: GeoPos
    t: int = 0

    @property
    def x(self) -> np.ndarray:
        return fuse(self.xs, self.Ps, self.mu)[0]

    @property
    def P(self) -> np.ndarray:
        return fuse(self.xs, self.Ps, self.mu)[1]


@dataclass(frozen=True)
class KinematicCue:
    mmsi: int
    t: int
    pos: GeoPos
    implied_speed: float
    residual_distance: float
    dt: float


def _params(cfg: ImmConfig | None, v_th: float = 30.0):
    cfg = cfg or ImmConfig()
    return cfg, pack_params(cfg, v_th), np.array(cfg.transition, dtype=np.float64), np.array(cfg.mu0)


def cv_predict(x, P, dt: float, cfg: ImmConfig | None = None):
    if not dt > 0:
        raise ValueError("dt must be positive")
    _, p, _, _ = _params(cfg)
    return _predict(CV, np.asarray(x, float), np.asarray(P, float), float(dt), p)


def ctrv_predict(x, P, dt: float, cfg: ImmConfig | None = None):
    if not dt > 0:
        raise ValueError("dt must be positive")
    _, p, _, _ = _params(cfg)
    return _predict(CTRV, np.asarray(x, float), np.asarray(P, float), float(dt), p)


def init_state(origin: GeoPos, sog: float, cog: float, t: int = 0, cfg: ImmConfig | None = None) -> ImmState:
    _, p, _, mu0 = _params(cfg)
    xs, Ps, mu = _init_models(float(sog), cog_to_heading(cog), p, mu0)
    return ImmState(xs, Ps, mu, origin, t)


def imm_step(state: ImmState, z, dt: float, cfg: ImmConfig | None = None) -> tuple[ImmState, float]:
    """Mix, predict, update and fuse.

    ``z = [p_x, p_y, sog, cog_deg]`` in the state's plane. Raises
    :class:`ImmStepError` for non-finite input or ``dt <= 0``.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (4,) or not np.all(np.isfinite(z)):
        raise ImmStepError("measurement must be 4 finite numbers")
    if not (math.isfinite(dt) and dt > 0):
        raise ImmStepError("dt must be positive and finite")
    _, p, Pi, _ = _params(cfg)
    zz = z.copy()
    zz[3] = cog_to_heading(z[3])
    xs, Ps, mu, _, _, residual = imm_cycle(state.xs, state.Ps, state.mu, zz, float(dt), Pi, p)
    if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(Ps)) and np.all(np.isfinite(mu))):
        raise ImmStepError("filter produced non-finite state")
    return ImmState(xs, Ps, mu, state.origin, state.t + int(round(dt * 1000))), float(residual)


def _scan(records, cfg: PipelineConfig, stop_at_first=False):
    _, p, Pi, mu0 = _params(cfg.imm, cfg.v_th)
    return scan_cues(records.t, records.lat, records.lon, records.sog, records.cog, Pi, mu0, p, stop_at_first)


def extract_kinematic_cues(track: Track, cfg: PipelineConfig | None = None) -> list[KinematicCue]:
    """Cue every record whose residual-implied speed or reported SOG exceeds ``v_th``."""
    cfg = cfg or PipelineConfig()
    r = track.records
    if len(r) < 2:
        return []
    idx, res, dts = _scan(r, cfg)
    return [
        KinematicCue(track.mmsi, int(r.t[k]), GeoPos(float(r.lat[k]), float(r.lon[k])),
                     float(rd / d), float(rd), float(d))
        for k, rd, d in zip(idx, res, dts)
    ]


def has_kinematic_cue(records, cfg: PipelineConfig) -> bool:
    if len(records) < 2:
        return False
    idx, _, _ = _scan(records, cfg, stop_at_first=True)
    return len(idx) > 0
