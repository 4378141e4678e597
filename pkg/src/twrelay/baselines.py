"""
Existing interference-free baselines: relay-side ZF and signal alignment.
"""

import math

import numpy as np

from . import linalg
from .balanced import bs_detector, bs_precoder
from .errors import InsufficientAntennas
from .model import Transceiver, scale_rs_power

__all__ = ['zf_scheme', 'sa_scheme']


def _stream_gains(forward, receive):
    # equal norm for every rank-1 term  a_k * forward[:, k] receive[k, :]
    f = np.linalg.norm(forward, axis=0)
    r = np.linalg.norm(receive, axis=1)
    with np.errstate(divide='ignore'):
        g = np.where(f * r > 0, 1.0 / (f * r), 0.0)
    return g


def zf_scheme(cfg, ch):
    """
    RS-only zero-forcing transceiver.

    The BS sends its ``n_u`` streams on fixed orthonormal beams. The RS
    separates all ``2 n_u`` received streams with ``pinv([H_br W_bt,
    H_ur])``, swaps the uplink and downlink blocks, and zero-forces the
    broadcast towards the BS beams and the users with the pseudo-inverse
    of the stacked transmit channels. Each stream gets the same
    amplification norm and the RS matrix is scaled to ``p_r``. The BS
    detector is ZF on the resulting uplink equivalent channel.

    With ``n_r < 2 n_u`` the pseudo-inverses are rank deficient and the
    returned transceiver leaks residual interference.
    """
    if cfg.n_b < cfg.n_u:
        raise InsufficientAntennas(
            f"ZF scheme needs n_b >= n_u, got n_b={cfg.n_b}, n_u={cfg.n_u}")
    n_u = cfg.n_u
    beams = np.eye(cfg.n_b, n_u, dtype=complex)
    w_bt = beams * math.sqrt(cfg.p_b / n_u)
    h_br, h_ur = ch.h_br, ch.h_ur

    # receive side: rows [downlink streams, uplink streams]
    rx = linalg.pinv(np.hstack([h_br @ w_bt, h_ur]))
    # transmit side: columns [towards BS beams, towards users]
    tx = linalg.pinv(np.vstack([beams.T @ h_br.T, h_ur.T]))
    swap = np.r_[np.arange(n_u, 2 * n_u), np.arange(n_u)]
    rx = rx[swap]
    w_r = (tx * _stream_gains(tx, rx)) @ rx

    t = scale_rs_power(cfg, ch, Transceiver(w_bt=w_bt, w_br=beams, w_r=w_r))
    x = h_br.T @ t.w_r @ h_ur
    return t.replace(w_br=linalg.pinv(x).T)


def sa_scheme(cfg, ch):
    """
    Signal-alignment transceiver ``W_r = (H_ur^T)^+ G H_ur^+``.

    The RS separates the users with ``H_ur^+`` and forwards each user's
    aligned uplink/downlink pair back along the ZF broadcast beam
    ``(H_ur^T)^+``. ``G`` equalizes the per-stream forwarding norms. The
    BS uses ZF precoding and detection on the equivalent channels.
    """
    if cfg.n_b < cfg.n_u or cfg.n_r < cfg.n_u:
        raise InsufficientAntennas(
            f"SA scheme needs n_b >= n_u and n_r >= n_u, got "
            f"n_b={cfg.n_b}, n_r={cfg.n_r}, n_u={cfg.n_u}")
    q = linalg.pinv(ch.h_ur.T)
    r = linalg.pinv(ch.h_ur)
    w_r = (q * _stream_gains(q, r)) @ r
    w_r = w_r / np.linalg.norm(w_r)
    w_bt = bs_precoder(ch, w_r, cfg)
    t = scale_rs_power(cfg, ch, Transceiver(w_bt=w_bt, w_br=w_bt, w_r=w_r))
    return t.replace(w_br=bs_detector(ch, t.w_r))
