"""
Interference-free transceivers for a multi-user two-way AF relay link.

The package evaluates a BS, an ``n_r``-antenna amplify-and-forward relay
and ``n_u`` single-antenna users exchanging data in two phases. It
provides the balanced relay design, the relay-side ZF and signal
alignment baselines, an alternating-optimization benchmark and a
Monte-Carlo harness with a command-line front end.
"""

from .errors import (ConfigError, DegenerateChannel, DegenerateInput,
                     EmptyNullSpace, InfeasibleDimensions,
                     InsufficientAntennas, RankDeficientEquivalentChannel,
                     TwrsError)
from .model import (DEFAULT_CONFIG, ChannelSet, RateReport, SystemConfig,
                    Transceiver, evaluate, iui_residual, rs_transmit_power,
                    bs_transmit_power, sample_channels, scale_rs_power)
from .balanced import (GAMMA_GRID, balance, balanced_at,
                       balanced_decomposition, bs_detector, bs_precoder,
                       rs_weight_downlink, rs_weight_uplink, sweep_gamma)
from .baselines import sa_scheme, zf_scheme
from .altopt import alternate, init_feasible, multi_start
from .harness import (ExperimentSpec, TrialRow, aggregate, outage_curve,
                      run_experiment)

__version__ = '0.1.0'
