"""
Declarative Monte-Carlo runner for the scheme comparisons.

An `ExperimentSpec` names the schemes, one swept variable, the base
system, the trial count and a master seed. `run_experiment` returns one
`TrialRow` per (scheme, swept value, trial) in a fixed order, so the CSV
written by `write_csv` depends only on the `ExperimentSpec`.

Channels are a pure function of ``(master_seed, trial_index)`` and the
antenna counts. Every scheme and every swept value with the same
dimensions therefore sees the same realization.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace
import csv
import io
import json
import math
import os

import numpy as np

from . import altopt
from .balanced import balance, gamma_sweep_metrics
from .baselines import sa_scheme, zf_scheme
from .errors import ConfigError, TwrsError
from .model import DEFAULT_CONFIG, SystemConfig, evaluate, sample_channels

__all__ = ['SCHEMES', 'SWEEP_VARIABLES', 'ExperimentSpec', 'TrialRow',
           'OutageRow', 'trial_seed', 'trial_channels', 'run_experiment',
           'aggregate', 'outage_curve', 'write_csv', 'rows_to_csv',
           'outage_to_csv', 'worker_count', 'load_spec_dict']

SCHEMES = ('balanced', 'zf', 'sa', 'altopt')
SWEEP_VARIABLES = ('gamma', 'n_r', 'n_u', 'snr_db', 'none')
SKIPPED = 'skipped'

_CONFIG_KEYS = ('n_b', 'n_r', 'n_u', 'p_b', 'p_r', 'p_u', 'n0', 'snr_db')
_SPEC_KEYS = ('schemes', 'sweep', 'base', 'trials', 'master_seed',
              'outage_threshold', 'altopt_random_starts')


def _config_from_dict(d):
    if not isinstance(d, dict):
        raise ConfigError("'base' must be an object")
    unknown = set(d) - set(_CONFIG_KEYS)
    if unknown:
        raise ConfigError(f"unknown base fields: {sorted(unknown)}")
    d = dict(d)
    if 'snr_db' in d:
        if 'n0' in d:
            raise ConfigError("give either 'n0' or 'snr_db', not both")
        snr = d.pop('snr_db')
        if isinstance(snr, bool) or not isinstance(snr, (int, float)):
            raise ConfigError(f"snr_db must be a number, got {snr!r}")
        d['n0'] = 10.0 ** (-float(snr) / 10.0)
    try:
        return SystemConfig(**d)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def _config_to_dict(cfg):
    return {k: getattr(cfg, k) for k in _CONFIG_KEYS[:-1]}


@dataclass(frozen=True)
class ExperimentSpec:
    """
    What to simulate.

    Attributes
    ----------
    schemes : tuple of str
        Subset of `SCHEMES`; rows follow this order.
    sweep_variable : str
        One of `SWEEP_VARIABLES`.
    sweep_values : tuple
        Values of the swept variable; empty for ``'none'``.
    base : SystemConfig
        Fixed system parameters; the swept variable overrides its field.
    trials : int
    master_seed : int
        Unsigned 64-bit seed all trial seeds are derived from.
    outage_threshold : float or None
        Sum-rate threshold (bit/s/Hz) used by `outage_curve`.
    altopt_random_starts : int
        Random starts per trial for the ``altopt`` scheme. With 0 the
        benchmark is a single run from the balanced transceiver.
    """
    schemes: tuple = ('balanced', 'zf', 'sa')
    sweep_variable: str = 'none'
    sweep_values: tuple = ()
    base: SystemConfig = DEFAULT_CONFIG
    trials: int = 1
    master_seed: int = 0
    outage_threshold: float = None
    altopt_random_starts: int = 0

    def __post_init__(self):
        schemes = self.schemes
        if isinstance(schemes, str):
            schemes = tuple(s.strip() for s in schemes.split(',') if s.strip())
        schemes = tuple(schemes)
        if not schemes:
            raise ConfigError("at least one scheme is required")
        for s in schemes:
            if s not in SCHEMES:
                raise ConfigError(f"unknown scheme {s!r}; choose from "
                                  f"{', '.join(SCHEMES)}")
        if len(set(schemes)) != len(schemes):
            raise ConfigError("schemes must not repeat")
        object.__setattr__(self, 'schemes', schemes)

        if self.sweep_variable not in SWEEP_VARIABLES:
            raise ConfigError(f"unknown sweep variable "
                              f"{self.sweep_variable!r}; choose from "
                              f"{', '.join(SWEEP_VARIABLES)}")
        object.__setattr__(self, 'sweep_values',
                           self._checked_values(tuple(self.sweep_values)))
        if self.sweep_variable == 'gamma' and schemes != ('balanced',):
            raise ConfigError("a gamma sweep applies to the balanced "
                              "scheme only")
        if not isinstance(self.base, SystemConfig):
            raise ConfigError("base must be a SystemConfig")
        object.__setattr__(self, 'trials', _count('trials', self.trials, 1))
        object.__setattr__(self, 'altopt_random_starts',
                           _count('altopt_random_starts',
                                  self.altopt_random_starts, 0))
        seed = self.master_seed
        if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)) \
                or not 0 <= seed < 2 ** 64:
            raise ConfigError(f"master_seed must be an unsigned 64-bit "
                              f"integer, got {seed!r}")
        object.__setattr__(self, 'master_seed', int(seed))
        thr = self.outage_threshold
        if thr is not None:
            if isinstance(thr, bool) or not isinstance(thr, (int, float)) \
                    or not math.isfinite(thr):
                raise ConfigError(f"outage_threshold must be a finite "
                                  f"number, got {thr!r}")
            object.__setattr__(self, 'outage_threshold', float(thr))

    def _checked_values(self, values):
        var = self.sweep_variable
        if var == 'none':
            if values:
                raise ConfigError("sweep 'none' takes no values")
            return ()
        if not values:
            raise ConfigError(f"sweep over {var} needs at least one value")
        out = []
        for v in values:
            if isinstance(v, bool) or not isinstance(v, (int, float,
                                                         np.number)):
                raise ConfigError(f"{var} value {v!r} is not a number")
            if var in ('n_r', 'n_u'):
                if int(v) != v or v < 1:
                    raise ConfigError(f"{var} values must be positive "
                                      f"integers, got {v!r}")
                out.append(int(v))
            else:
                if not math.isfinite(v):
                    raise ConfigError(f"{var} value {v!r} is not finite")
                if var == 'gamma' and not 0.0 <= v <= 1.0:
                    raise ConfigError(f"gamma values must lie in [0, 1], "
                                      f"got {v!r}")
                out.append(float(v))
        if len(set(out)) != len(out):
            raise ConfigError(f"{var} values must not repeat")
        return tuple(out)

    @property
    def points(self):
        """Swept values, or ``(None,)`` when nothing is swept."""
        return self.sweep_values if self.sweep_variable != 'none' else (None,)

    def config_at(self, value):
        """System configuration at one swept value."""
        var = self.sweep_variable
        if var in ('n_r', 'n_u'):
            return replace(self.base, **{var: value})
        if var == 'snr_db':
            return self.base.with_snr_db(value)
        return self.base

    def replace(self, **changes):
        return replace(self, **changes)

    @classmethod
    def from_dict(cls, d):
        """Build a spec from its JSON object form."""
        if not isinstance(d, dict):
            raise ConfigError("experiment spec must be a JSON object")
        unknown = set(d) - set(_SPEC_KEYS)
        if unknown:
            raise ConfigError(f"unknown spec fields: {sorted(unknown)}")
        kw = {k: d[k] for k in ('trials', 'master_seed', 'outage_threshold',
                                'altopt_random_starts') if k in d}
        if 'schemes' in d:
            kw['schemes'] = d['schemes']
        if 'base' in d:
            kw['base'] = _config_from_dict(d['base'])
        if 'sweep' in d:
            sweep = d['sweep']
            if not isinstance(sweep, dict) or 'variable' not in sweep:
                raise ConfigError("'sweep' must be an object with a "
                                  "'variable' field")
            extra = set(sweep) - {'variable', 'values'}
            if extra:
                raise ConfigError(f"unknown sweep fields: {sorted(extra)}")
            kw['sweep_variable'] = sweep['variable']
            values = sweep.get('values', [])
            if not isinstance(values, list):
                raise ConfigError("sweep values must be a list")
            kw['sweep_values'] = tuple(values)
        return cls(**kw)

    @classmethod
    def from_json(cls, path):
        """Load a spec file; unreadable or malformed files raise ConfigError."""
        return cls.from_dict(load_spec_dict(path))

    def to_dict(self):
        d = {'schemes': list(self.schemes),
             'sweep': {'variable': self.sweep_variable,
                       'values': list(self.sweep_values)},
             'base': _config_to_dict(self.base),
             'trials': self.trials, 'master_seed': self.master_seed,
             'altopt_random_starts': self.altopt_random_starts}
        if self.outage_threshold is not None:
            d['outage_threshold'] = self.outage_threshold
        return d


def load_spec_dict(path):
    """
    Raw JSON object of a spec file, checked to form a valid spec.

    Raises
    ------
    ConfigError
        Naming `path` when the file is unreadable, is not JSON or does not
        describe a valid spec.
    """
    try:
        with open(path, encoding='utf-8') as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: "
                          f"{exc.strerror or exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: "
                          f"{exc}") from None
    try:
        ExperimentSpec.from_dict(data)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return data


def _count(name, value, minimum):
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)) \
            or value < minimum:
        raise ConfigError(f"{name} must be an integer >= {minimum}, "
                          f"got {value!r}")
    return int(value)


@dataclass(frozen=True)
class TrialRow:
    """One scheme on one channel realization at one swept value.

    Skipped rows carry ``r_s == 'skipped'`` and ``None`` result fields.
    """
    scheme: str
    trial_index: int
    swept_value: object
    n_b: int
    n_r: int
    n_u: int
    p_b: float
    p_r: float
    p_u: float
    snr_db: float
    gamma_star: float = None
    r_u: float = None
    r_d: float = None
    r_s: object = None
    residual_iui: float = None
    iterations: int = None

    @property
    def skipped(self):
        return self.r_s == SKIPPED


FIELDS = tuple(f.name for f in fields(TrialRow))


@dataclass(frozen=True)
class OutageRow:
    snr_db: float
    scheme: str
    outage_probability: float


def trial_seed(master_seed, trial_index):
    """64-bit channel seed of one trial, independent of all other trials."""
    ss = np.random.SeedSequence([int(master_seed), int(trial_index)])
    return int(ss.generate_state(1, np.uint64)[0])


def trial_channels(spec, cfg, trial_index):
    return sample_channels(cfg, trial_seed(spec.master_seed, trial_index))


def _row(scheme, trial, value, cfg, **result):
    return TrialRow(scheme=scheme, trial_index=trial, swept_value=value,
                    n_b=cfg.n_b, n_r=cfg.n_r, n_u=cfg.n_u, p_b=cfg.p_b,
                    p_r=cfg.p_r, p_u=cfg.p_u, snr_db=cfg.snr_db, **result)


def _from_report(rep, **extra):
    return dict(r_u=rep.r_u, r_d=rep.r_d, r_s=rep.r_u + rep.r_d,
                residual_iui=rep.residual_iui, **extra)


def _run_scheme(spec, scheme, cfg, ch, trial):
    if scheme == 'balanced':
        _, gamma, rep = balance(cfg, ch)
        return _from_report(rep, gamma_star=gamma)
    if scheme == 'zf':
        return _from_report(evaluate(cfg, ch, zf_scheme(cfg, ch)))
    if scheme == 'sa':
        return _from_report(evaluate(cfg, ch, sa_scheme(cfg, ch)))
    k = spec.altopt_random_starts
    if k == 0:
        t, trace = altopt.alternate(cfg, ch, balance(cfg, ch)[0],
                                    started_from='balanced')
    else:
        t, trace = altopt.multi_start(cfg, ch, k,
                                      seed=trial_seed(spec.master_seed,
                                                      trial))
    return _from_report(evaluate(cfg, ch, t), iterations=trace.iterations)


def _gamma_rows(spec, trial):
    cfg = spec.base
    ch = trial_channels(spec, cfg, trial)
    try:
        m, ok = gamma_sweep_metrics(cfg, ch, np.array(spec.sweep_values))
    except TwrsError:
        return [_row('balanced', trial, g, cfg, r_s=SKIPPED)
                for g in spec.sweep_values]
    rows = []
    for k, g in enumerate(spec.sweep_values):
        if not ok[k]:
            rows.append(_row('balanced', trial, g, cfg, r_s=SKIPPED))
            continue
        r_u, r_d = float(m['r_u'][k]), float(m['r_d'][k])
        rows.append(_row('balanced', trial, g, cfg, gamma_star=g, r_u=r_u,
                         r_d=r_d, r_s=r_u + r_d,
                         residual_iui=float(m['residual'][k])))
    return rows


def _trial_rows(spec, trial):
    """Every row of one trial, in scheme-major order within the trial."""
    if spec.sweep_variable == 'gamma':
        return _gamma_rows(spec, trial)
    rows = []
    channels = {}
    for value in spec.points:
        cfg = spec.config_at(value)
        dims = (cfg.n_b, cfg.n_r, cfg.n_u)
        if dims not in channels:
            channels[dims] = trial_channels(spec, cfg, trial)
        ch = channels[dims]
        for scheme in spec.schemes:
            try:
                result = _run_scheme(spec, scheme, cfg, ch, trial)
            except TwrsError:
                result = {'r_s': SKIPPED}
            rows.append(_row(scheme, trial, value, cfg, **result))
    return rows


def _trial_block(args):
    spec, trials = args
    return [row for t in trials for row in _trial_rows(spec, t)]


def worker_count(default=None):
    """Process count, capped by the ``TWRS_THREADS`` environment variable."""
    n = default if default is not None else (os.cpu_count() or 1)
    cap = os.environ.get('TWRS_THREADS')
    if cap is not None and cap.strip():
        try:
            c = int(cap)
        except ValueError:
            raise ConfigError(f"TWRS_THREADS must be a positive integer, "
                              f"got {cap!r}") from None
        if c < 1:
            raise ConfigError(f"TWRS_THREADS must be a positive integer, "
                              f"got {cap!r}")
        n = min(n, c)
    return max(1, n)


def run_experiment(spec, workers=None):
    """
    Run every (scheme, swept value, trial) combination of `spec`.

    Trials run in up to `workers` processes (default: `worker_count`).
    The result is sorted by scheme (in spec order), swept value (in spec
    order) and trial index, so it does not depend on `workers`.
    """
    workers = worker_count() if workers is None else max(1, int(workers))
    trials = range(spec.trials)
    if workers == 1 or spec.trials == 1:
        rows = _trial_block((spec, trials))
    else:
        n_blocks = min(spec.trials, 4 * workers)
        blocks = [(spec, trials[b::n_blocks]) for b in range(n_blocks)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = [r for block in pool.map(_trial_block, blocks)
                    for r in block]
    scheme_pos = {s: k for k, s in enumerate(spec.schemes)}
    value_pos = {v: k for k, v in enumerate(spec.points)}
    rows.sort(key=lambda r: (scheme_pos[r.scheme], value_pos[r.swept_value],
                             r.trial_index))
    return rows


def aggregate(rows):
    """
    Mean rates per ``(scheme, swept_value)`` over the non-skipped rows.

    Returns a dict mapping ``(scheme, swept_value)`` to a dict with keys
    ``r_u``, ``r_d``, ``r_s``, ``residual_iui_max``, ``trials`` and
    ``skipped``. Means use exactly rounded summation.
    """
    groups = {}
    for r in rows:
        groups.setdefault((r.scheme, r.swept_value), []).append(r)
    out = {}
    for key, group in groups.items():
        done = [r for r in group if not r.skipped]
        n = len(done)
        entry = {'trials': n, 'skipped': len(group) - n}
        for name in ('r_u', 'r_d', 'r_s'):
            entry[name] = (math.fsum(getattr(r, name) for r in done) / n
                           if n else math.nan)
        entry['residual_iui_max'] = (max(r.residual_iui for r in done)
                                     if n else math.nan)
        out[key] = entry
    return out


def outage_curve(spec, rows=None, workers=None):
    """
    Fraction of trials whose sum rate falls below the outage threshold.

    The sweep must be over ``snr_db`` (or ``none``, using the base SNR).
    Skipped trials count as outages. Returns `OutageRow` entries ordered
    by SNR point, then scheme.
    """
    if spec.outage_threshold is None:
        raise ConfigError("outage_curve needs outage_threshold")
    if spec.sweep_variable not in ('snr_db', 'none'):
        raise ConfigError("outage_curve sweeps snr_db only")
    if rows is None:
        rows = run_experiment(spec, workers)
    thr = spec.outage_threshold
    counts = {}
    for r in rows:
        c = counts.setdefault((r.swept_value, r.scheme), [0, 0])
        c[0] += 1 if r.skipped or r.r_s < thr else 0
        c[1] += 1
    out = []
    for value in spec.points:
        for scheme in spec.schemes:
            hit, n = counts[(value, scheme)]
            snr = spec.config_at(value).snr_db
            out.append(OutageRow(snr_db=snr, scheme=scheme,
                                 outage_probability=hit / n))
    return out


def _fmt(v):
    if v is None:
        return ''
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), '.9g')


def _to_csv(header, records):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator='\n')
    w.writerow(header)
    for rec in records:
        w.writerow([_fmt(getattr(rec, h)) for h in header])
    return buf.getvalue()


def rows_to_csv(rows):
    """CSV text with header `FIELDS` and 9-significant-digit floats."""
    return _to_csv(FIELDS, rows)


def outage_to_csv(table):
    return _to_csv(('snr_db', 'scheme', 'outage_probability'), table)


def write_csv(text, path=None, stream=None):
    """Write CSV text to `path`, or to `stream` when no path is given."""
    if path is None:
        stream.write(text)
        return
    with open(path, 'w', encoding='utf-8', newline='') as fh:
        fh.write(text)
