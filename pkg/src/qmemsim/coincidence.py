"""Singles and coincidence counting, conditional probabilities and g2.

Every trial is one gate. Its click record is a bitmask over
:data:`qmemsim.protocol.CHANNELS`. :class:`CoincidenceStats` keeps the
histogram of those masks, so any n-fold coincidence count can be read off
exactly and two stats objects merge by adding histograms.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_consistent_length, check_is_fitted

from .exceptions import FitError, InsufficientStatistics
from .protocol import CHANNELS, channel_bit

__all__ = [
    "EstimateWithError",
    "CoincidenceStats",
    "DEFAULT_TRIPLES",
    "accumulate",
    "conditional_prob",
    "cross_correlation_g2",
    "separation",
    "G2DecayFit",
    "G2DecayFitter",
    "fit_g2_decay",
    "g2_decay_model",
]

N_PATTERNS = 1 << len(CHANNELS)

DEFAULT_TRIPLES = (
    ("S1", "AS2", "S3"),
    ("S1", "S2", "S3"),
    ("S1", "S3", "AS4"),
    ("S1", "S3", "AS5"),
    ("S1", "S3", "AS6"),
    ("S1", "S2", "AS2"),
)


@dataclass(frozen=True)
class EstimateWithError:
    value: float
    stderr: float

    def __iter__(self):
        yield self.value
        yield self.stderr

    def __format__(self, spec):
        spec = spec or ".4g"
        return f"{self.value:{spec}} +/- {self.stderr:{spec}}"


def _mask(channels):
    if isinstance(channels, str):
        channels = (channels,)
    m = 0
    for ch in channels:
        m |= channel_bit(ch)
    return m


def _pattern_name(channels):
    return "&".join(channels)


def _default_watched():
    out = [(c,) for c in CHANNELS]
    out += list(itertools.combinations(CHANNELS, 2))
    out += list(DEFAULT_TRIPLES)
    return tuple(out)


class CoincidenceStats:
    """Histogram of per-trial click masks.

    Parameters
    ----------
    pattern_counts : array of int, length ``2**len(CHANNELS)``
        ``pattern_counts[m]`` is the number of trials whose exact click set
        is the bitmask ``m``.
    watched : sequence of channel tuples, optional
        Coincidence patterns reported by :meth:`table` and the exports.
    """

    def __init__(self, pattern_counts=None, watched=None):
        if pattern_counts is None:
            pattern_counts = np.zeros(N_PATTERNS, dtype=np.int64)
        counts = np.asarray(pattern_counts, dtype=np.int64)
        if counts.shape != (N_PATTERNS,) or (counts < 0).any():
            raise ValueError("pattern_counts must be a non-negative vector of length "
                             f"{N_PATTERNS}")
        self.pattern_counts = counts
        self.watched = tuple(tuple(p) for p in (watched or _default_watched()))
        for p in self.watched:
            _mask(p)
        self._superset_cache = None

    @classmethod
    def from_masks(cls, masks, watched=None):
        masks = np.asarray(masks, dtype=np.int64)
        return cls(np.bincount(masks, minlength=N_PATTERNS), watched)

    @property
    def n_trials(self):
        return int(self.pattern_counts.sum())

    def _supersets(self):
        # counts[m] = number of trials whose click set contains m
        if self._superset_cache is None:
            c = self.pattern_counts.copy()
            for bit in range(len(CHANNELS)):
                step = 1 << bit
                for m in range(N_PATTERNS):
                    if not m & step:
                        c[m] += c[m | step]
            self._superset_cache = c
        return self._superset_cache

    def count(self, channels=()):
        """Trials in which every channel in ``channels`` clicked."""
        return int(self._supersets()[_mask(channels)])

    def singles(self, channel):
        return self.count((channel,))

    def pairs(self, a, b):
        return self.count((a, b))

    def triples(self, a, b, c):
        return self.count((a, b, c))

    def exact_pattern(self, channels):
        """Trials whose click set is exactly ``channels``."""
        return int(self.pattern_counts[_mask(channels)])

    def merge(self, other):
        return CoincidenceStats(self.pattern_counts + other.pattern_counts,
                                self.watched + tuple(p for p in other.watched
                                                     if p not in self.watched))

    __add__ = merge

    def __eq__(self, other):
        if not isinstance(other, CoincidenceStats):
            return NotImplemented
        return bool(np.array_equal(self.pattern_counts, other.pattern_counts))

    def __repr__(self):
        return (f"CoincidenceStats(n_trials={self.n_trials}, "
                + ", ".join(f"{c}={self.singles(c)}" for c in CHANNELS) + ")")

    def table(self):
        rows = [("*", 0, self.n_trials)]
        rows += [(_pattern_name(p), len(p), self.count(p)) for p in self.watched]
        return rows

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(["pattern", "fold", "count"])
        w.writerows(self.table())
        return buf.getvalue()

    def to_dict(self):
        return {
            "n_trials": self.n_trials,
            "counts": {name: count for name, fold, count in self.table()[1:]},
            "pattern_histogram": {
                _pattern_name([c for c in CHANNELS if m & channel_bit(c)]) or "-": int(n)
                for m, n in enumerate(self.pattern_counts) if n
            },
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def accumulate(outcomes, watched=None):
    """Count a stream of :class:`~qmemsim.trajectory.TrialOutcome` records."""
    if watched is not None and not len(watched):
        raise ValueError("watched pattern list must not be empty")
    counts = np.zeros(N_PATTERNS, dtype=np.int64)
    for o in outcomes:
        counts[o.mask] += 1
    return CoincidenceStats(counts, watched)


def _channels(given):
    if isinstance(given, str):
        return (given,)
    return tuple(given)


def conditional_prob(stats, target, given):
    """``P(target | given)`` from coincidence counts, with binomial error.

    ``given`` is a channel or a set of channels that must all have clicked;
    an empty ``given`` means the unconditional click probability.
    """
    given = _channels(given)
    n_given = stats.count(given) if given else stats.n_trials
    if n_given == 0:
        raise InsufficientStatistics(
            f"no trials with {' & '.join(given) or 'any'} to condition on")
    n_joint = stats.count(given + (target,))
    p = n_joint / n_given
    return EstimateWithError(p, math.sqrt(p * (1 - p) / n_given))


def cross_correlation_g2(stats, a, b):
    """Gated cross-correlation ``N_ab N / (N_a N_b)``.

    The error propagates the three binomial uncertainties as if they were
    uncorrelated. With zero coincidences the value is 0 and the reported
    error is the one-count scale ``N / (N_a N_b)``.
    """
    n = stats.n_trials
    na, nb, nab = stats.singles(a), stats.singles(b), stats.pairs(a, b)
    if na == 0 or nb == 0:
        raise InsufficientStatistics(f"no singles on {a if na == 0 else b}")
    g2 = nab * n / (na * nb)
    if nab == 0:
        return EstimateWithError(0.0, n / (na * nb))
    rel = (1 - nab / n) / nab + (1 - na / n) / na + (1 - nb / n) / nb
    return EstimateWithError(g2, g2 * math.sqrt(rel))


def separation(a, b):
    """Signed separation ``(a - b) / sqrt(sa^2 + sb^2)`` of two estimates."""
    s = math.hypot(a.stderr, b.stderr)
    if s == 0:
        return math.inf if a.value != b.value else 0.0
    return (a.value - b.value) / s


# --- g2 storage-time decay fit ------------------------------------------------

def g2_decay_model(t, C, A, B):
    t = np.asarray(t, dtype=float)
    return 1.0 + C / (1.0 + A * t ** 2 + B * t)


@dataclass(frozen=True)
class G2DecayFit:
    C: float
    A: float
    B: float
    residual: float
    g2_residual: float

    def __iter__(self):
        yield from (self.C, self.A, self.B, self.residual)


class G2DecayFitter(RegressorMixin, BaseEstimator):
    """Fit ``g2(t) = 1 + C / (1 + A t^2 + B t)`` by reciprocal linearisation.

    ``y = 1/(g2 - 1)`` is a quadratic in ``t``; ordinary least squares on the
    basis ``{1, t, t^2}`` then gives ``C = 1/c0``, ``B = c1/c0``, ``A = c2/c0``.

    Attributes
    ----------
    C_, A_, B_ : float
    residual_ : float
        RMS of the relative residual ``(y_fit - y)/y``.
    g2_residual_ : float
        RMS of the relative residual of ``g2`` itself.
    """

    def fit(self, t, g2):
        t = check_array(np.asarray(t, dtype=float), ensure_2d=False)
        g2 = check_array(np.asarray(g2, dtype=float), ensure_2d=False)
        check_consistent_length(t, g2)
        if t.size < 3:
            raise FitError("need at least 3 points to fit the g2 decay")
        if (g2 <= 1).any():
            raise FitError("every g2 must exceed 1 (1/(g2-1) is undefined otherwise)")
        design = np.column_stack([np.ones_like(t), t, t ** 2])
        if np.linalg.matrix_rank(design) < 3:
            raise FitError("need at least 3 distinct storage times")
        y = 1.0 / (g2 - 1.0)
        coef, *_ = np.linalg.lstsq(design, y, rcond=None)
        c0, c1, c2 = (float(v) for v in coef)
        if c0 <= 0:
            raise FitError("fitted 1/C is not positive")
        self.C_, self.B_, self.A_ = 1.0 / c0, c1 / c0, c2 / c0
        y_fit = design @ coef
        self.residual_ = float(np.sqrt(np.mean(((y_fit - y) / y) ** 2)))
        g_fit = self.predict(t)
        self.g2_residual_ = float(np.sqrt(np.mean(((g_fit - g2) / g2) ** 2)))
        return self

    def predict(self, t):
        check_is_fitted(self, "C_")
        return g2_decay_model(t, self.C_, self.A_, self.B_)

    @property
    def result(self):
        check_is_fitted(self, "C_")
        return G2DecayFit(self.C_, self.A_, self.B_, self.residual_, self.g2_residual_)


def fit_g2_decay(points):
    """Fit a list of ``(t, g2)`` pairs; returns :class:`G2DecayFit`."""
    pts = np.asarray(list(points), dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise FitError("points must be (t, g2) pairs")
    return G2DecayFitter().fit(pts[:, 0], pts[:, 1]).result
