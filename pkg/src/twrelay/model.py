"""
System model of the multi-user two-way AF relay cellular link.

A BS with ``n_b`` antennas exchanges one stream per user with ``n_u``
single-antenna users through an ``n_r``-antenna relay (RS). Phase one is
multiple access to the RS, phase two is the RS broadcast over the
reciprocal (transposed) channels. Both the BS and every user cancel their
own echoed signal before detection.

SINRs are computed analytically from the matrix products; no signals are
sampled. Residual inter-user interference is kept in the SINR
denominators, so the formulas reduce to the interference-free SNRs when
all IUI constraints hold.
"""

from dataclasses import dataclass, field, replace
import math

import numpy as np

from .errors import ConfigError, DegenerateInput

__all__ = ['SystemConfig', 'ChannelSet', 'Transceiver', 'RateReport',
           'DEFAULT_CONFIG', 'sample_channels', 'evaluate', 'link_metrics',
           'rs_transmit_power', 'bs_transmit_power', 'iui_residual',
           'scale_rs_power']


@dataclass(frozen=True)
class SystemConfig:
    """Antenna counts, linear power budgets and noise variance."""
    n_b: int = 2
    n_r: int = 4
    n_u: int = 2
    p_b: float = 2.0
    p_r: float = 2.0
    p_u: float = 1.0
    n0: float = 1e-3

    def __post_init__(self):
        for name in ('n_b', 'n_r', 'n_u'):
            value = getattr(self, name)
            if isinstance(value, bool) or int(value) != value or value < 1:
                raise ConfigError(f"{name} must be a positive integer, "
                                  f"got {value!r}")
            object.__setattr__(self, name, int(value))
        for name in ('p_b', 'p_r', 'p_u', 'n0'):
            value = float(getattr(self, name))
            if not (value > 0 and math.isfinite(value)):
                raise ConfigError(f"{name} must be positive and finite, "
                                  f"got {value!r}")
            object.__setattr__(self, name, value)

    @classmethod
    def from_snr_db(cls, snr_db, **kwargs):
        """Build a config whose transmit SNR ``1/n0`` is `snr_db`."""
        return cls(n0=10.0 ** (-float(snr_db) / 10.0), **kwargs)

    @property
    def snr_db(self):
        # + 0.0 turns a negative zero (n0 == 1) into 0.0
        return -10.0 * math.log10(self.n0) + 0.0

    def with_snr_db(self, snr_db):
        return replace(self, n0=10.0 ** (-float(snr_db) / 10.0))

    def replace(self, **changes):
        return replace(self, **changes)


DEFAULT_CONFIG = SystemConfig()


def _frozen(a):
    a = np.array(a, dtype=complex)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ChannelSet:
    """
    One channel realization.

    Attributes
    ----------
    h_br : (n_r, n_b) complex array
        BS to RS channel.
    h_ur : (n_r, n_u) complex array
        User to RS channels; column ``i`` is ``h_ir``.
    """
    h_br: np.ndarray
    h_ur: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'h_br', _frozen(self.h_br))
        object.__setattr__(self, 'h_ur', _frozen(self.h_ur))
        if self.h_br.ndim != 2 or self.h_ur.ndim != 2:
            raise ConfigError("channels must be 2-D matrices")
        if self.h_br.shape[0] != self.h_ur.shape[0]:
            raise ConfigError("h_br and h_ur must share the RS dimension")

    def h_bar(self, i):
        """Channels of all users but ``i`` (``h_ur`` without column i)."""
        return np.delete(self.h_ur, i, axis=1)

    def check(self, cfg):
        if self.h_br.shape != (cfg.n_r, cfg.n_b) or \
                self.h_ur.shape != (cfg.n_r, cfg.n_u):
            raise ConfigError(
                f"channel shapes {self.h_br.shape}, {self.h_ur.shape} do "
                f"not match config ({cfg.n_b}, {cfg.n_r}, {cfg.n_u})")


@dataclass(frozen=True)
class Transceiver:
    """BS precoder `w_bt`, BS receive weights `w_br`, RS matrix `w_r`."""
    w_bt: np.ndarray
    w_br: np.ndarray
    w_r: np.ndarray

    def __post_init__(self):
        for name in ('w_bt', 'w_br', 'w_r'):
            object.__setattr__(self, name, _frozen(getattr(self, name)))

    def replace(self, **changes):
        return replace(self, **changes)


@dataclass(frozen=True)
class RateReport:
    """Per-user SINRs, sum rates (bit/s/Hz), residual IUI and powers."""
    snr_u: np.ndarray
    snr_d: np.ndarray
    r_u: float
    r_d: float
    r_s: float
    residual_iui: float
    bs_power_used: float
    rs_power_used: float
    rates_u: np.ndarray = field(repr=False, default=None)
    rates_d: np.ndarray = field(repr=False, default=None)


def sample_channels(cfg, seed):
    """
    Draw i.i.d. CN(0, 1) Rayleigh channels for `cfg`.

    The result depends only on the dimensions of `cfg` and `seed`.
    """
    rng = np.random.default_rng(int(seed))
    n_r, n_b, n_u = cfg.n_r, cfg.n_b, cfg.n_u
    g = rng.standard_normal((2, n_r, n_b + n_u)) / math.sqrt(2.0)
    h = g[0] + 1j * g[1]
    return ChannelSet(h_br=h[:, :n_b], h_ur=h[:, n_b:])


def _sq(a, axis):
    return np.sum(np.abs(a) ** 2, axis=axis)


def _ratio(num, den):
    # 0/0 counts as no interference; x/0 as unbounded interference.
    with np.errstate(divide='ignore', invalid='ignore'):
        r = num / den
    return np.where(den > 0, r, np.where(num > 0, np.inf, 0.0))


def _offdiag(a):
    n = a.shape[-1]
    return a * (1.0 - np.eye(n))


def link_metrics(cfg, h_br, h_ur, w_bt, w_br, w_r):
    """
    Array-level evaluation broadcasting over leading stack dimensions.

    Returns a dict with keys ``snr_u``, ``snr_d`` (shape ``(..., n_u)``),
    ``r_u``, ``r_d``, ``r_s``, ``residual``, ``rs_power`` and
    ``bs_power`` (shape ``(...)``).
    """
    p_u, n0 = cfg.p_u, cfg.n0
    h_brT = h_br.T
    h_urT = h_ur.T
    # uplink: BS stream i <- user j, after the BS cancels its own echo
    bs_front = w_br.mT @ h_brT @ w_r                  # (..., n_u, n_r)
    e_up = bs_front @ h_ur
    # downlink: user i <- BS stream j, and user i <- user j uplink
    user_front = h_urT @ w_r                          # (..., n_u, n_r)
    e_dn = user_front @ h_br @ w_bt
    c_uu = user_front @ h_ur

    up_sig = p_u * np.abs(np.diagonal(e_up, axis1=-2, axis2=-1)) ** 2
    up_int = p_u * _sq(_offdiag(e_up), -1)
    up_noise = n0 * (_sq(bs_front, -1) + _sq(w_br, -2))
    dn_sig = np.abs(np.diagonal(e_dn, axis1=-2, axis2=-1)) ** 2
    dn_int = _sq(_offdiag(e_dn), -1) + p_u * _sq(_offdiag(c_uu), -1)
    dn_noise = n0 * (_sq(user_front, -1) + 1.0)

    snr_u = _ratio(up_sig, up_int + up_noise)
    snr_d = _ratio(dn_sig, dn_int + dn_noise)
    rates_u = 0.5 * np.log2(1.0 + snr_u)
    rates_d = 0.5 * np.log2(1.0 + snr_d)
    r_u = np.sum(rates_u, axis=-1)
    r_d = np.sum(rates_d, axis=-1)

    # Normalized by the desired amplitude at the same receiver; the
    # user-user term is compared against the downlink desired signal.
    d_up = np.abs(np.diagonal(e_up, axis1=-2, axis2=-1))[..., :, None]
    d_dn = np.abs(np.diagonal(e_dn, axis1=-2, axis2=-1))[..., :, None]
    res = np.maximum(_ratio(np.abs(_offdiag(e_up)), d_up),
                     _ratio(np.abs(_offdiag(e_dn)), d_dn))
    res = np.maximum(res, _ratio(math.sqrt(p_u) * np.abs(_offdiag(c_uu)),
                                 d_dn))
    residual = np.max(res, axis=(-2, -1))

    rs_power = (_sq(w_r @ h_br @ w_bt, (-2, -1))
                + p_u * _sq(w_r @ h_ur, (-2, -1))
                + n0 * _sq(w_r, (-2, -1)))
    bs_power = _sq(w_bt, (-2, -1))
    return {'snr_u': snr_u, 'snr_d': snr_d, 'rates_u': rates_u,
            'rates_d': rates_d, 'r_u': r_u, 'r_d': r_d, 'r_s': r_u + r_d,
            'residual': residual, 'rs_power': rs_power,
            'bs_power': bs_power}


def evaluate(cfg, ch, t):
    """Exact SINRs, sum rates and residual IUI of transceiver `t`."""
    m = link_metrics(cfg, ch.h_br, ch.h_ur, t.w_bt, t.w_br, t.w_r)
    return RateReport(snr_u=m['snr_u'], snr_d=m['snr_d'],
                      r_u=float(m['r_u']), r_d=float(m['r_d']),
                      r_s=float(m['r_u']) + float(m['r_d']),
                      residual_iui=float(m['residual']),
                      bs_power_used=float(m['bs_power']),
                      rs_power_used=float(m['rs_power']),
                      rates_u=m['rates_u'], rates_d=m['rates_d'])


def rs_transmit_power(cfg, ch, t):
    """Expected RS transmit power ``E||W_r y_r||^2``."""
    return float(_sq(t.w_r @ ch.h_br @ t.w_bt, None)
                 + cfg.p_u * _sq(t.w_r @ ch.h_ur, None)
                 + cfg.n0 * _sq(t.w_r, None))


def bs_transmit_power(t):
    return float(_sq(t.w_bt, None))


def iui_residual(ch, t, p_u=1.0):
    """
    Largest normalized violation of the three IUI-free constraint families.

    Each cross term is divided by the desired-signal amplitude at the
    same receiver, which makes the measure invariant to RS and BS
    receive scaling. `p_u` weights the user-to-user leakage against the
    downlink signal.
    """
    cfg = SystemConfig(n_b=ch.h_br.shape[1], n_r=ch.h_br.shape[0],
                       n_u=ch.h_ur.shape[1], p_u=p_u)
    m = link_metrics(cfg, ch.h_br, ch.h_ur, t.w_bt, t.w_br, t.w_r)
    return float(m['residual'])


def scale_rs_power(cfg, ch, t):
    """Scale `t.w_r` so the RS transmits exactly ``cfg.p_r``.

    Raises
    ------
    DegenerateInput
        If the current RS power is zero.
    """
    p = rs_transmit_power(cfg, ch, t)
    if not p > 0:
        raise DegenerateInput("RS weighting matrix forwards no power")
    return t.replace(w_r=t.w_r * math.sqrt(cfg.p_r / p))
