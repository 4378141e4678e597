"""
Alternating-optimization benchmark under the IUI-free constraints.

One of ``W_r``, ``W_bt``, ``W_br`` is optimized while the other two are
held fixed. ``W_br`` has a closed form per stream (a rank-one generalized
Rayleigh quotient). ``W_r`` and ``W_bt`` are improved by projected
gradient ascent inside the linear subspace that keeps every IUI
constraint satisfied, with power feasibility restored by scaling.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from . import linalg
from .balanced import balance
from .baselines import sa_scheme, zf_scheme
from .errors import EmptyNullSpace, InfeasibleDimensions, TwrsError
from .model import Transceiver, evaluate, scale_rs_power

__all__ = ['StepOptions', 'AltOptTrace', 'init_feasible', 'update_wbr',
           'update_wr_pg', 'update_wbt_pg', 'alternate', 'run_starts',
           'multi_start', 'constraint_rows', 'FEASIBLE_TOL']

FEASIBLE_TOL = 1e-8


@dataclass(frozen=True)
class StepOptions:
    """Projected-gradient settings shared by the W_r and W_bt updates."""
    max_steps: int = 200
    rel_tol: float = 1e-7
    fd_rel_step: float = 1e-6
    max_halvings: int = 40


@dataclass
class AltOptTrace:
    """Sum-rate history of one alternating-optimization run.

    `iterates` holds ``(iteration, r_s, residual_iui)`` tuples starting
    with the initial point as iteration 0.
    """
    started_from: str
    iterates: list = field(default_factory=list)
    converged: bool = False

    @property
    def final_rate(self):
        return self.iterates[-1][1]

    @property
    def iterations(self):
        return len(self.iterates) - 1


def _rng(seed):
    return np.random.default_rng(seed)


def _crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) \
        / math.sqrt(2.0)


def _pairs(n_u):
    return [(i, j) for i in range(n_u) for j in range(n_u) if i != j]


def constraint_rows(ch, w_bt=None, w_br=None):
    """
    Rows ``k`` with ``k @ vec(W_r) = 0`` for every IUI-free constraint.

    Constraint families whose fixed matrix is ``None`` are left out, so
    ``constraint_rows(ch)`` is the user-to-user family alone.
    """
    h_br, h_ur = ch.h_br, ch.h_ur
    n_r, n_u = h_ur.shape
    rows = []
    for i, j in _pairs(n_u):
        # h_ir^T W_r h_jr
        rows.append(np.kron(h_ur[:, j], h_ur[:, i]))
        if w_br is not None:
            # w_bri^T H_br^T W_r h_jr
            rows.append(np.kron(h_ur[:, j], h_br @ w_br[:, i]))
        if w_bt is not None:
            # h_ir^T W_r H_br w_btj
            rows.append(np.kron(h_br @ w_bt[:, j], h_ur[:, i]))
    if not rows:
        return np.zeros((0, n_r * n_r), dtype=complex)
    return np.array(rows)


def _precoder_bases(ch, w_r):
    n_u = ch.h_ur.shape[1]
    return [linalg.null_space_basis(ch.h_bar(j).T @ w_r @ ch.h_br)
            for j in range(n_u)]


def _detector_bases(ch, w_r):
    n_u = ch.h_ur.shape[1]
    return [linalg.null_space_basis((ch.h_br.T @ w_r @ ch.h_bar(i)).T)
            for i in range(n_u)]


def init_feasible(cfg, ch, seed):
    """
    Random transceiver satisfying all IUI constraints and both budgets.

    ``vec(W_r)`` is drawn from the null space of the user-to-user
    constraints; the BS precoder and detector columns are then drawn from
    their own constraint null spaces. The BS uses its full budget and the
    RS matrix is scaled to ``p_r``.

    Raises
    ------
    InfeasibleDimensions
        If any of the required null spaces is empty.
    """
    rng = _rng(seed)
    basis = linalg.null_space_basis(constraint_rows(ch))
    if basis.shape[1] == 0:
        raise InfeasibleDimensions("no RS matrix removes user-user leakage")
    w_r = linalg.unvec(basis @ _crandn(rng, basis.shape[1]),
                       cfg.n_r, cfg.n_r)
    w_bt = np.empty((cfg.n_b, cfg.n_u), dtype=complex)
    w_br = np.empty((cfg.n_b, cfg.n_u), dtype=complex)
    for j, b in enumerate(_precoder_bases(ch, w_r)):
        if b.shape[1] == 0:
            raise InfeasibleDimensions(f"no precoder column {j} is IUI-free")
        w_bt[:, j] = b @ _crandn(rng, b.shape[1])
    for i, b in enumerate(_detector_bases(ch, w_r)):
        if b.shape[1] == 0:
            raise InfeasibleDimensions(f"no detector column {i} is IUI-free")
        w = b @ _crandn(rng, b.shape[1])
        w_br[:, i] = w / np.linalg.norm(w)
    w_bt *= math.sqrt(cfg.p_b) / np.linalg.norm(w_bt)
    return scale_rs_power(cfg, ch, Transceiver(w_bt=w_bt, w_br=w_br,
                                               w_r=w_r))


def update_wbr(cfg, ch, t):
    """
    Optimal BS receive weights for fixed ``W_r`` and ``W_bt``.

    Per stream, the feasible detectors are ``U_perp x`` with ``U_perp``
    spanning the null space of ``(H_br^T W_r Hbar_i)^T``. The SNR is a
    Rayleigh quotient with a rank-one numerator, so the maximizer is one
    linear solve instead of an eigenproblem. Columns are unit norm.
    """
    h_brT_wr = ch.h_br.T @ t.w_r
    k_in = cfg.n0 * (h_brT_wr @ h_brT_wr.conj().T
                     + np.eye(cfg.n_b, dtype=complex))
    w_br = np.empty((cfg.n_b, cfg.n_u), dtype=complex)
    for i, b in enumerate(_detector_bases(ch, t.w_r)):
        if b.shape[1] == 0:
            raise EmptyNullSpace(f"detector column {i} has no freedom")
        s = b.T @ (h_brT_wr @ ch.h_ur[:, i])
        y = np.linalg.solve(b.T @ k_in @ b.conj(), s)
        w = b @ y.conj()
        w_br[:, i] = w / np.linalg.norm(w)
    return w_br


def _to_real(x):
    return np.concatenate([x.real, x.imag])


def _to_complex(z):
    d = z.shape[-1] // 2
    return z[..., :d] + 1j * z[..., d:]


def _ascend(f, z0, opts):
    """
    Gradient ascent with central finite differences and a safeguarded
    Barzilai-Borwein step.

    `f` maps a stack of real parameter vectors ``(k, n)`` to objective
    values ``(k,)`` and is invariant to positive rescaling of its input,
    so iterates are renormalized after each step. The trial step is
    halved until the objective strictly increases.
    """
    z = z0 / np.linalg.norm(z0)
    fz = float(f(z[None])[0])
    n = z.size
    eye = np.eye(n)
    alpha = None
    z_prev = g_prev = None
    for _ in range(opts.max_steps):
        h = opts.fd_rel_step * np.linalg.norm(z)
        vals = f(np.concatenate([z + h * eye, z - h * eye]))
        g = (vals[:n] - vals[n:]) / (2.0 * h)
        gnorm = np.linalg.norm(g)
        if not gnorm > 0 or not np.isfinite(gnorm):
            break
        if alpha is None:
            alpha = 0.1 / gnorm
        else:
            s, y = z - z_prev, g - g_prev
            sy = abs(s @ y)
            alpha = (s @ s) / sy if sy > 0 else 2.0 * alpha
        for _ in range(opts.max_halvings):
            cand = z + alpha * g
            cand /= np.linalg.norm(cand)
            fc = float(f(cand[None])[0])
            if fc > fz:
                break
            alpha *= 0.5
        else:
            break
        improvement = fc - fz
        z_prev, g_prev = z, g
        z, fz = cand, fc
        if improvement < opts.rel_tol * abs(fz):
            break
    return z, fz


def _offdiag_mask(n):
    return 1.0 - np.eye(n)


def _uplink_rate(cfg, ch, w_br, w_r, mask):
    bs_front = w_br.mT @ ch.h_br.T @ w_r
    e = np.abs(bs_front @ ch.h_ur) ** 2
    sig = cfg.p_u * np.einsum('...ii->...i', e)
    den = (cfg.p_u * np.sum(e * mask, axis=-1)
           + cfg.n0 * (np.sum(np.abs(bs_front) ** 2, axis=-1)
                       + np.sum(np.abs(w_br) ** 2, axis=-2)))
    return 0.5 * np.sum(np.log2(1.0 + sig / den), axis=-1)


def _downlink_rate(cfg, ch, w_bt, w_r, mask):
    user_front = ch.h_ur.T @ w_r
    e = np.abs(user_front @ ch.h_br @ w_bt) ** 2
    c = np.abs(user_front @ ch.h_ur) ** 2
    sig = np.einsum('...ii->...i', e)
    den = (np.sum(e * mask, axis=-1) + cfg.p_u * np.sum(c * mask, axis=-1)
           + cfg.n0 * (np.sum(np.abs(user_front) ** 2, axis=-1) + 1.0))
    return 0.5 * np.sum(np.log2(1.0 + sig / den), axis=-1)


def _scaled_relay_rates(cfg, ch, w_bt, w_br, basis):
    n_r = cfg.n_r
    a = ch.h_br @ w_bt
    mask = _offdiag_mask(cfg.n_u)

    def f(z):
        x = _to_complex(z)
        w_r = (x @ basis.T).reshape(-1, n_r, n_r).mT
        p = (np.sum(np.abs(w_r @ a) ** 2, axis=(-2, -1))
             + cfg.p_u * np.sum(np.abs(w_r @ ch.h_ur) ** 2, axis=(-2, -1))
             + cfg.n0 * np.sum(np.abs(w_r) ** 2, axis=(-2, -1)))
        w_r = w_r * np.sqrt(cfg.p_r / p)[:, None, None]
        return (_uplink_rate(cfg, ch, w_br, w_r, mask)
                + _downlink_rate(cfg, ch, w_bt, w_r, mask))

    return f


def update_wr_pg(cfg, ch, t, step_opts=None):
    """
    Improve ``W_r`` for fixed BS matrices by projected gradient ascent.

    ``vec(W_r)`` is restricted to the null space of `constraint_rows`
    (all three families), and the RS budget is met with equality after
    every step. Never returns a lower sum rate than the input achieves at
    full RS power.
    """
    opts = step_opts or StepOptions()
    basis = linalg.null_space_basis(constraint_rows(ch, t.w_bt, t.w_br))
    start = scale_rs_power(cfg, ch, t)
    if basis.shape[1] == 0:
        return start.w_r
    x0 = basis.conj().T @ linalg.vec(start.w_r)
    f = _scaled_relay_rates(cfg, ch, t.w_bt, t.w_br, basis)
    z, fz = _ascend(f, _to_real(x0), opts)
    if not fz > evaluate(cfg, ch, start).r_s:
        return start.w_r
    w_r = linalg.unvec(basis @ _to_complex(z), cfg.n_r, cfg.n_r)
    return scale_rs_power(cfg, ch, t.replace(w_r=w_r)).w_r


def _max_feasible_scale(cfg, ch, w_r, w_bt):
    """Largest ``c`` with ``c * w_bt`` inside both power budgets (stack)."""
    a = np.sum(np.abs(w_r @ ch.h_br @ w_bt) ** 2, axis=(-2, -1))
    rest = (cfg.p_u * np.sum(np.abs(w_r @ ch.h_ur) ** 2)
            + cfg.n0 * np.sum(np.abs(w_r) ** 2))
    bs = np.sum(np.abs(w_bt) ** 2, axis=(-2, -1))
    c_bs = np.sqrt(cfg.p_b / bs)
    with np.errstate(divide='ignore'):
        c_rs = np.sqrt(np.maximum(cfg.p_r - rest, 0.0) / a)
    return np.minimum(c_bs, c_rs)


def update_wbt_pg(cfg, ch, t, step_opts=None):
    """
    Improve ``W_bt`` for fixed ``W_r`` and ``W_br``.

    Each precoder column stays in the null space of its downlink IUI
    constraints. After every step the precoder is scaled to the largest
    multiple that satisfies both the BS and the RS budget.
    """
    opts = step_opts or StepOptions()
    bases = _precoder_bases(ch, t.w_r)
    dims = [b.shape[1] for b in bases]
    if min(dims) == 0:
        return t.w_bt
    offsets = np.cumsum([0] + dims)

    def assemble(x):
        cols = [x[..., offsets[j]:offsets[j + 1]] @ bases[j].T
                for j in range(cfg.n_u)]
        return np.stack(cols, axis=-1)

    mask = _offdiag_mask(cfg.n_u)

    def f(z):
        w_bt = assemble(_to_complex(z))
        w_bt = w_bt * _max_feasible_scale(cfg, ch, t.w_r, w_bt)[:, None, None]
        return _downlink_rate(cfg, ch, w_bt, t.w_r, mask)

    x0 = np.concatenate([b.conj().T @ t.w_bt[:, j]
                         for j, b in enumerate(bases)])
    c0 = _max_feasible_scale(cfg, ch, t.w_r, t.w_bt)
    start = t.w_bt * c0
    z, fz = _ascend(f, _to_real(x0), opts)
    if not fz > evaluate(cfg, ch, t.replace(w_bt=start)).r_d:
        return start
    w_bt = assemble(_to_complex(z))
    return w_bt * _max_feasible_scale(cfg, ch, t.w_r, w_bt)


def alternate(cfg, ch, t0, tol=1e-5, max_iter=50, step_opts=None,
              started_from='custom'):
    """
    Cycle the ``W_r``, ``W_bt`` and ``W_br`` updates until the sum rate
    gains less than `tol` per iteration or `max_iter` is reached.

    An iteration that would lower the sum rate is discarded and ends the
    run, so the recorded rates never decrease.

    Returns
    -------
    t : Transceiver
    trace : AltOptTrace
    """
    rep = evaluate(cfg, ch, t0)
    trace = AltOptTrace(started_from=started_from)
    trace.iterates.append((0, rep.r_s, rep.residual_iui))
    t, rate = t0, rep.r_s
    for it in range(1, max_iter + 1):
        nxt = t.replace(w_r=update_wr_pg(cfg, ch, t, step_opts))
        nxt = nxt.replace(w_bt=update_wbt_pg(cfg, ch, nxt, step_opts))
        nxt = nxt.replace(w_br=update_wbr(cfg, ch, nxt))
        rep = evaluate(cfg, ch, nxt)
        if rep.r_s < rate or rep.residual_iui > FEASIBLE_TOL:
            trace.iterates.append((it, rate, trace.iterates[-1][2]))
            break
        gain = rep.r_s - rate
        t, rate = nxt, rep.r_s
        trace.iterates.append((it, rate, rep.residual_iui))
        if gain < tol:
            trace.converged = True
            break
    return t, trace


_INITIALIZERS = ('balanced', 'zf', 'sa')


def _initial_point(cfg, ch, tag):
    if tag == 'balanced':
        return balance(cfg, ch)[0]
    if tag == 'zf':
        return zf_scheme(cfg, ch)
    if tag == 'sa':
        return sa_scheme(cfg, ch)
    raise ValueError(f"unknown initializer {tag!r}")


def _start_seed(seed, j):
    return int(np.random.SeedSequence([int(seed), j]).generate_state(
        1, np.uint64)[0])


def run_starts(cfg, ch, k, seed=0, initializers=_INITIALIZERS, **kwargs):
    """
    Run `alternate` from each named initializer and `k` random feasible
    points. Initializers that fail or are not IUI-free are skipped.

    Returns a list of ``(Transceiver, AltOptTrace)`` in start order.
    """
    runs = []
    for tag in initializers:
        try:
            t0 = _initial_point(cfg, ch, tag)
        except TwrsError:
            continue
        if evaluate(cfg, ch, t0).residual_iui > FEASIBLE_TOL:
            continue
        runs.append(alternate(cfg, ch, t0, started_from=tag, **kwargs))
    for j in range(k):
        s = _start_seed(seed, j)
        try:
            t0 = init_feasible(cfg, ch, s)
        except TwrsError:
            continue
        runs.append(alternate(cfg, ch, t0, started_from=f'random({s})',
                              **kwargs))
    return runs


def _start_rank(trace):
    tag = trace.started_from
    if tag in _INITIALIZERS:
        return (_INITIALIZERS.index(tag), 0)
    if tag.startswith('random('):
        return (len(_INITIALIZERS), int(tag[7:-1]))
    return (len(_INITIALIZERS) + 1, 0)


def best_run(runs):
    """
    Highest final sum rate. Ties go to balanced, then ZF, then SA, then
    the random start with the smallest seed.
    """
    if not runs:
        raise InfeasibleDimensions("no alternating-optimization start")
    return min(runs, key=lambda r: (-r[1].final_rate, _start_rank(r[1])))


def multi_start(cfg, ch, k, seed=0, initializers=_INITIALIZERS, **kwargs):
    """
    Best of `alternate` runs from the balanced, ZF and SA transceivers
    plus `k` random feasible starts. Deterministic given `seed`.

    Returns ``(Transceiver, AltOptTrace)`` of the winning run.
    """
    return best_run(run_starts(cfg, ch, k, seed, initializers, **kwargs))
