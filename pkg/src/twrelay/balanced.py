"""
Balanced interference-free transceiver.

The BS uses a ZF precoder and a ZF detector on the equivalent channels
seen through the relay. The RS matrix is a convex combination of a
downlink-oriented design ``W1 = (H_ur^T)^+ G_r1 U^T`` and an
uplink-oriented design ``W2 = U G_r2 H_ur^+``, rescaled to the RS power
budget. The mixing factor ``gamma`` is picked by a grid search on the
bidirectional sum rate.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from . import linalg
from .errors import (DegenerateChannel, DegenerateInput, InsufficientAntennas,
                     RankDeficientEquivalentChannel)
from .model import Transceiver, evaluate, link_metrics

__all__ = ['GAMMA_GRID', 'BalancedDecomposition', 'bs_precoder',
           'bs_detector', 'rs_weight_downlink', 'rs_weight_uplink',
           'balanced_decomposition', 'balanced_at', 'balance',
           'sweep_gamma', 'gamma_sweep_metrics', 'relay_row_space_projector',
           'direction_objective']

GAMMA_GRID = np.round(np.linspace(0.0, 1.0, 101), 2)

# Stop the column sweeps once a full pass gains less than this.
_SWEEP_TOL = 1e-8
_MAX_SWEEPS = 50
_TIE_TOL = 1e-12


@dataclass(frozen=True)
class BalancedDecomposition:
    """Intermediate quantities of the balanced design for one channel."""
    u_star: np.ndarray
    g_r1: np.ndarray
    g_r2: np.ndarray
    w_r_down: np.ndarray
    w_r_up: np.ndarray
    u_star_up: np.ndarray = None
    gamma: float = None
    c_gamma: float = None
    objective_trace: tuple = field(default=(), repr=False)


def _zf_precoder(e, p_b):
    """Column-normalized pseudo-inverse of a stack of ``(n_u, n_b)``."""
    w = linalg.pinv(e)
    norms = np.sqrt(np.sum(np.abs(w) ** 2, axis=-2, keepdims=True))
    n_u = e.shape[-2]
    with np.errstate(divide='ignore', invalid='ignore'):
        w = w * (math.sqrt(p_b / n_u) / norms)
    return np.nan_to_num(w)


def bs_precoder(ch, w_r, cfg):
    """
    BS ZF precoder with equal power per stream.

    ``W_bt = pinv(H_ur^T W_r H_br)`` with every column rescaled so that
    ``||w_bti||^2 = p_b / n_u``.

    Raises
    ------
    RankDeficientEquivalentChannel
        If the downlink equivalent channel has rank below ``n_u``.
    """
    e = ch.h_ur.T @ w_r @ ch.h_br
    if linalg.numerical_rank(e) < e.shape[0]:
        raise RankDeficientEquivalentChannel(
            "downlink equivalent channel H_ur^T W_r H_br is rank deficient")
    return _zf_precoder(e, cfg.p_b)


def bs_detector(ch, w_r):
    """
    BS ZF detector ``W_br = pinv(H_br^T W_r H_ur)^T``.

    The resulting uplink equivalent ``W_br^T H_br^T W_r H_ur`` is the
    identity.
    """
    x = ch.h_br.T @ w_r @ ch.h_ur
    if linalg.numerical_rank(x) < x.shape[1]:
        raise RankDeficientEquivalentChannel(
            "uplink equivalent channel H_br^T W_r H_ur is rank deficient")
    return linalg.pinv(x).T


def _check_dims(cfg):
    if cfg.n_r < cfg.n_u or cfg.n_b < cfg.n_u:
        raise InsufficientAntennas(
            f"balanced design needs n_b >= n_u and n_r >= n_u, got "
            f"n_b={cfg.n_b}, n_r={cfg.n_r}, n_u={cfg.n_u}")


def _user_projectors(ch):
    # u_i^T h_jr = 0 for j != i  <=>  u_i in the null space of Hbar_i^T
    return [linalg.orth_complement_projector(ch.h_bar(i).T)
            for i in range(ch.h_ur.shape[1])]


def _bs_side_gain(ch, u, i):
    """``||u_i^T H_br S(Ubar_i^T H_br)||`` for column ``i`` of `u`."""
    ubar = np.delete(u, i, axis=1)
    s = linalg.orth_complement_projector(ubar.T @ ch.h_br)
    return np.linalg.norm(u[:, i] @ ch.h_br @ s)


def direction_objective(ch, u, scale):
    """Sum over streams of ``log2(1 + scale * gain_i^2)``."""
    return sum(math.log2(1.0 + scale * _bs_side_gain(ch, u, i) ** 2)
               for i in range(u.shape[1]))


def _downlink_column_matrix(ch, proj, u, i):
    ubar = np.delete(u, i, axis=1)
    s = linalg.orth_complement_projector(ubar.T @ ch.h_br)
    return proj.T @ ch.h_br @ s


def _uplink_column_matrix(ch, proj, u, i):
    # BS detects RS-forwarded stream i through H_br^T u_i; the ZF
    # detector rejects the other forwarded directions H_br^T Ubar_i.
    ubar = np.delete(u, i, axis=1)
    s = linalg.orth_complement_projector(ch.h_br.T @ ubar)
    n = s @ ch.h_br.T @ proj
    # max ||n x|| over unit x, written as max ||x^T n^T||
    return n.T


def _design_directions(ch, column_matrix, scale):
    """
    Cyclic column-wise design of the RS receive directions ``U``.

    Starts from ``U = 0``, so the first pass sees an unconstrained BS
    side. Later updates of a column are kept only when they do not lower
    the total objective; sweeps stop once a pass gains less than the
    tolerance.
    """
    n_r, n_u = ch.h_ur.shape
    projs = _user_projectors(ch)
    for i, p in enumerate(projs):
        if np.linalg.norm(p.T @ ch.h_br) <= \
                1e-12 * max(1.0, np.linalg.norm(ch.h_br)):
            raise DegenerateInput(
                f"user {i}: no BS energy reaches its feasible RS subspace")

    def best_column(u, i):
        x = linalg.dominant_left_singular_vector(
            column_matrix(ch, projs[i], u, i))
        ui = projs[i] @ x
        return ui / np.linalg.norm(ui)

    u = np.zeros((n_r, n_u), dtype=complex)
    for i in range(n_u):
        u[:, i] = best_column(u, i)
    obj = direction_objective(ch, u, scale)
    trace = [obj]
    for _ in range(_MAX_SWEEPS):
        start = obj
        for i in range(n_u):
            cand = u.copy()
            cand[:, i] = best_column(u, i)
            new = direction_objective(ch, cand, scale)
            if new >= obj:
                u, obj = cand, new
            trace.append(obj)
        if obj - start < _SWEEP_TOL:
            break
    return u, tuple(trace)


def _align_to(u, q):
    """Rephase each ``u_i`` so that ``q_i^H u_i`` is real positive."""
    out = u.copy()
    for i in range(u.shape[1]):
        c = np.vdot(q[:, i], u[:, i])
        if abs(c) > 1e-12 * np.linalg.norm(q[:, i]):
            out[:, i] = u[:, i] * (np.conj(c) / abs(c))
        else:
            out[:, i] = linalg.canonical_phase(u[:, i])
    return out


def _equal_gains(u_norms, f_norms):
    # every rank-1 stream term g_i * f_i u_i^T gets the same norm
    return 1.0 / (u_norms * f_norms)


def rs_weight_downlink(cfg, ch, _trace=None):
    """
    Downlink-oriented RS matrix ``W1 = (H_ur^T)^+ G_r1 U^T``.

    Returns
    -------
    w_r_down : (n_r, n_r) array, unit Frobenius norm
    u_star : (n_r, n_u) array of unit-norm receive directions
    g_r1 : (n_u,) positive per-stream gains
    """
    _check_dims(cfg)
    q = linalg.pinv(ch.h_ur.T)
    u, trace = _design_directions(ch, _downlink_column_matrix,
                                  cfg.p_b / (cfg.n_u * cfg.n0))
    u = _align_to(u, q)
    g = _equal_gains(np.linalg.norm(u, axis=0), np.linalg.norm(q, axis=0))
    w = (q * g) @ u.T
    scale = np.linalg.norm(w)
    if _trace is not None:
        _trace.extend(trace)
    return w / scale, u, g / scale


def rs_weight_uplink(cfg, ch, _trace=None):
    """
    Uplink-oriented RS matrix ``W2 = U G_r2 H_ur^+``.

    The RS separates the users with ``H_ur^+`` and forwards stream ``i``
    along ``u_i``; the directions maximize the ZF detection gain at the
    BS. Returns ``(w_r_up, u_star, g_r2)`` normalized like
    `rs_weight_downlink`.
    """
    _check_dims(cfg)
    q = linalg.pinv(ch.h_ur.T)
    r = linalg.pinv(ch.h_ur)
    u, trace = _design_directions(ch, _uplink_column_matrix,
                                  cfg.p_u / cfg.n0)
    u = _align_to(u, q)
    g = _equal_gains(np.linalg.norm(u, axis=0), np.linalg.norm(r, axis=1))
    w = (u * g) @ r
    scale = np.linalg.norm(w)
    if _trace is not None:
        _trace.extend(trace)
    return w / scale, u, g / scale


def balanced_decomposition(cfg, ch):
    """Both candidate RS matrices and their ingredients."""
    trace = []
    w1, u1, g1 = rs_weight_downlink(cfg, ch, _trace=trace)
    w2, u2, g2 = rs_weight_uplink(cfg, ch)
    return BalancedDecomposition(u_star=u1, g_r1=g1, g_r2=g2, w_r_down=w1,
                                 w_r_up=w2, u_star_up=u2,
                                 objective_trace=tuple(trace))


def _gamma_stack(cfg, ch, dec, gammas):
    """Build and evaluate the balanced transceiver for each gamma."""
    gammas = np.asarray(gammas, dtype=float)
    w_r = (gammas[:, None, None] * dec.w_r_down
           + (1.0 - gammas)[:, None, None] * dec.w_r_up)
    h_br, h_ur = ch.h_br, ch.h_ur
    e_dn = h_ur.T @ w_r @ h_br
    ok = linalg.numerical_rank(e_dn) >= cfg.n_u
    w_bt = _zf_precoder(e_dn, cfg.p_b)
    p = (np.sum(np.abs(w_r @ h_br @ w_bt) ** 2, axis=(-2, -1))
         + cfg.p_u * np.sum(np.abs(w_r @ h_ur) ** 2, axis=(-2, -1))
         + cfg.n0 * np.sum(np.abs(w_r) ** 2, axis=(-2, -1)))
    ok &= p > 0
    c = np.sqrt(cfg.p_r / np.where(p > 0, p, 1.0))
    w_r = w_r * c[:, None, None]
    e_up = h_br.T @ w_r @ h_ur
    ok &= linalg.numerical_rank(e_up) >= cfg.n_u
    w_br = linalg.pinv(e_up).mT
    m = link_metrics(cfg, h_br, h_ur, w_bt, w_br, w_r)
    m['r_s'] = np.where(ok, m['r_s'], -np.inf)
    return m, (w_bt, w_br, w_r), c, ok


def _pick(r_s, ok):
    if not np.any(ok):
        raise DegenerateChannel("every balancing factor is rank degenerate")
    return int(np.flatnonzero(r_s >= np.max(r_s) - _TIE_TOL)[0])


def balanced_at(cfg, ch, gamma, decomposition=None):
    """
    Balanced transceiver for a fixed `gamma`.

    Returns ``(Transceiver, RateReport)``.
    """
    dec = decomposition or balanced_decomposition(cfg, ch)
    m, (w_bt, w_br, w_r), c, ok = _gamma_stack(cfg, ch, dec, [gamma])
    if not ok[0]:
        raise RankDeficientEquivalentChannel(
            f"gamma={gamma}: equivalent channel is rank deficient")
    t = Transceiver(w_bt=w_bt[0], w_br=w_br[0], w_r=w_r[0])
    return t, evaluate(cfg, ch, t)


def gamma_sweep_metrics(cfg, ch, gammas=GAMMA_GRID, decomposition=None):
    """
    Link metrics of the balanced transceiver stacked over `gammas`.

    Returns ``(metrics, ok)``; `metrics` is the `link_metrics` dict with a
    leading gamma axis and `ok` flags the rank-valid entries. ``r_s`` is
    ``-inf`` where `ok` is false.
    """
    dec = decomposition or balanced_decomposition(cfg, ch)
    m, _, _, ok = _gamma_stack(cfg, ch, dec, gammas)
    return m, ok


def sweep_gamma(cfg, ch, gammas=GAMMA_GRID, decomposition=None):
    """Reports for every `gamma`; rank-degenerate entries are ``None``."""
    dec = decomposition or balanced_decomposition(cfg, ch)
    m, (w_bt, w_br, w_r), c, ok = _gamma_stack(cfg, ch, dec, gammas)
    out = []
    for k in range(len(gammas)):
        if not ok[k]:
            out.append(None)
            continue
        t = Transceiver(w_bt=w_bt[k], w_br=w_br[k], w_r=w_r[k])
        out.append((t, evaluate(cfg, ch, t)))
    return out


def balance(cfg, ch, gammas=GAMMA_GRID, decomposition=None):
    """
    Grid-search the balancing factor for the best bidirectional rate.

    Returns
    -------
    t : Transceiver
    gamma_star : float
        Smallest grid value whose sum rate is within 1e-12 of the best.
    report : RateReport
    """
    dec = decomposition or balanced_decomposition(cfg, ch)
    m, (w_bt, w_br, w_r), c, ok = _gamma_stack(cfg, ch, dec, gammas)
    best = _pick(m['r_s'], ok)
    t = Transceiver(w_bt=w_bt[best], w_br=w_br[best], w_r=w_r[best])
    return t, float(gammas[best]), evaluate(cfg, ch, t)


def relay_row_space_projector(h_ur):
    """
    Projector ``V_ur V_ur^H`` onto the column space of ``(H_ur^T)^+``.

    Left-multiplying any RS matrix by it keeps every downlink SINR and
    never raises the RS power.
    """
    q = linalg.pinv(np.asarray(h_ur).T)
    return q @ linalg.pinv(q)
