"""Two-readout interference: combiner, fringe fitting and the collapse-model estimate.

The two anti-Stokes read-outs (AS2 through the long arm, AS4 through the
short arm) meet on a 50:50 combiner whose outputs are AS5 and AS6. A phase
``beta`` on AS4 is scanned and the normalised ratio ``R`` is fitted to
``a [0.5 + 0.5 V cos(beta + delta)]``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_consistent_length, check_is_fitted

from . import fock
from .exceptions import ConfigurationError, FitError, InsufficientStatistics
from .protocol import COMBINER_PHASE

__all__ = [
    "PhaseScanPoint",
    "VisibilityFit",
    "MeasuredProbs",
    "interfere_readouts",
    "fringe_model",
    "FringeFitter",
    "fit_visibility",
    "estimate_visibility_VE",
    "two_beam_visibility",
    "phase_scan_csv",
    "ratio_from_counts",
    "measured_probs",
    "phase_scan",
]


@dataclass(frozen=True)
class PhaseScanPoint:
    beta: float
    R: float
    stderr: float = 0.0

    @property
    def R_complement(self):
        return 1.0 - self.R


@dataclass(frozen=True)
class VisibilityFit:
    a: float
    V: float
    delta: float
    residual: float
    V_stderr: float = math.nan

    @property
    def exceeds_unity(self):
        """``True`` when noise pushed the raw visibility above 1 (never clamped)."""
        return self.V > 1.0


@dataclass(frozen=True)
class MeasuredProbs:
    P_S1: float
    P_S3: float
    P_S3_given_S1: float
    P_AS2_given_S1: float
    P_AS4_given_S1: float
    P_AS4_given_S3: float

    def __post_init__(self):
        for name, v in self.__dict__.items():
            if not 0.0 <= v <= 1.0:
                raise ConfigurationError(f"{name}={v} is not a probability")

    @classmethod
    def from_sequence(cls, values):
        values = list(values)
        if len(values) != 6:
            raise ConfigurationError("expected six probabilities "
                                     "(P_S1, P_S3, P_S3|S1, P_AS2|S1, P_AS4|S1, P_AS4|S3)")
        return cls(*map(float, values))


def interfere_readouts(state, beta, split=math.pi / 4):
    """Phase ``beta`` on AS4, combine AS2 and AS4, rename the outputs AS5 and AS6.

    ``split`` is the combiner mixing angle (``pi/4`` is 50:50). A photon
    shared equally between the arms leaves through AS5 with probability
    ``(1 + cos beta) / 2``.
    """
    if "AS2" not in state or "AS4" not in state:
        raise ConfigurationError("interfere_readouts needs AS2 and AS4 in the register")
    state = fock.apply_phase_shift(state, "AS4", beta)
    state = fock.apply_beam_splitter(state, "AS2", "AS4", split, COMBINER_PHASE)
    return fock.relabel(state, {"AS2": "AS5", "AS4": "AS6"})


def fringe_model(beta, a, V, delta):
    beta = np.asarray(beta, dtype=float)
    return a * (0.5 + 0.5 * V * np.cos(beta + delta))


def ratio_from_counts(n5, n6, eta_ud=1.0):
    """``R = N5 / (N5 + eta_ud N6)`` with its binomial error."""
    denom = n5 + eta_ud * n6
    if denom <= 0:
        raise InsufficientStatistics("no AS5/AS6 coincidences at this phase")
    r = n5 / denom
    return r, math.sqrt(max(r * (1 - r), 0.0) / (n5 + n6))


class FringeFitter(RegressorMixin, BaseEstimator):
    """Linear least-squares fringe fit on the basis ``{1, cos beta, sin beta}``.

    With ``R = c0 + c1 cos(beta) + c2 sin(beta)`` the fringe parameters are
    ``a = 2 c0``, ``V = hypot(c1, c2) / c0`` and ``delta = atan2(-c2, c1)``.

    Parameters
    ----------
    weighted : bool, default True
        Weight points by ``1/stderr^2`` when errors are passed to :meth:`fit`.
    """

    def __init__(self, weighted=True):
        self.weighted = weighted

    def fit(self, beta, R, stderr=None):
        beta = check_array(np.asarray(beta, dtype=float), ensure_2d=False)
        R = check_array(np.asarray(R, dtype=float), ensure_2d=False)
        check_consistent_length(beta, R)
        if np.unique(np.round(np.mod(beta, 2 * np.pi), 12)).size < 3:
            raise FitError("need at least 3 distinct phases")
        X = np.column_stack([np.ones_like(beta), np.cos(beta), np.sin(beta)])
        known_errors = (self.weighted and stderr is not None
                        and np.all(np.asarray(stderr, dtype=float) > 0))
        if known_errors:
            w = 1.0 / np.asarray(stderr, dtype=float)
        else:
            w = np.ones_like(R)
        Xw, Rw = X * w[:, None], R * w
        coef, *_ = np.linalg.lstsq(Xw, Rw, rcond=None)
        if np.linalg.matrix_rank(Xw) < 3:
            raise FitError("phases do not determine a fringe")
        cov = np.linalg.inv(Xw.T @ Xw)
        resid = R - X @ coef
        if not known_errors:
            dof = max(R.size - 3, 1)
            cov = cov * float(resid @ resid) / dof
        c0, c1, c2 = (float(v) for v in coef)
        if c0 <= 0:
            raise FitError("fitted mean level is not positive")
        amp = math.hypot(c1, c2)
        V = amp / c0
        delta = math.atan2(-c2, c1) if amp > 1e-15 * max(c0, 1.0) else 0.0
        # gradient of V = hypot(c1, c2)/c0 with respect to (c0, c1, c2)
        if amp > 0:
            grad = np.array([-V / c0, c1 / (amp * c0), c2 / (amp * c0)])
            V_err = float(math.sqrt(max(grad @ cov @ grad, 0.0)))
        else:
            V_err = float(math.sqrt(max(cov[1, 1] + cov[2, 2], 0.0)) / c0)
        self.coef_ = coef
        self.a_, self.V_, self.delta_ = 2 * c0, V, delta
        self.V_stderr_ = V_err
        self.residual_ = float(np.sqrt(np.mean(resid ** 2)))
        return self

    def predict(self, beta):
        check_is_fitted(self, "coef_")
        return fringe_model(beta, self.a_, self.V_, self.delta_)

    @property
    def result(self):
        check_is_fitted(self, "coef_")
        return VisibilityFit(self.a_, self.V_, self.delta_, self.residual_, self.V_stderr_)


def fit_visibility(points, weighted=True):
    """Fit a list of :class:`PhaseScanPoint`; returns :class:`VisibilityFit`."""
    points = list(points)
    if len(points) < 3:
        raise FitError("need at least 3 phase-scan points")
    beta = [p.beta for p in points]
    R = [p.R for p in points]
    err = [p.stderr for p in points]
    return FringeFitter(weighted=weighted).fit(beta, R, err).result


def two_beam_visibility(i1, i2):
    """Contrast ``2 sqrt(I1 I2) / (I1 + I2)`` of two fully coherent beams."""
    if i1 + i2 <= 0:
        raise InsufficientStatistics("both intensities are zero")
    return 2.0 * math.sqrt(i1 * i2) / (i1 + i2)


def estimate_visibility_VE(p):
    """Visibility expected if detecting S3 collapsed the stored superposition.

    ``|c5|^2 = (P_AS4|S1 / P_AS2|S1) (P_S3|S1 / P_S3)`` weights the branch
    where the pair survives in the memory, and::

        V_E = 2 sqrt(P_AS2|S1 P_AS4|S3)
              / (|c5|^2 (P_AS4|S1 + P_AS4|S3) + (P_AS2|S1 + P_AS4|S3))
    """
    if not isinstance(p, MeasuredProbs):
        p = MeasuredProbs.from_sequence(p)
    if p.P_AS2_given_S1 <= 0 or p.P_S3 <= 0:
        raise InsufficientStatistics("P_AS2|S1 and P_S3 must be positive")
    c5 = (p.P_AS4_given_S1 / p.P_AS2_given_S1) * (p.P_S3_given_S1 / p.P_S3)
    denom = c5 * (p.P_AS4_given_S1 + p.P_AS4_given_S3) + (p.P_AS2_given_S1 + p.P_AS4_given_S3)
    if denom <= 0:
        raise InsufficientStatistics("denominator of the visibility estimate is zero")
    return 2.0 * math.sqrt(p.P_AS2_given_S1 * p.P_AS4_given_S3) / denom


def phase_scan_csv(rows):
    """CSV text with columns ``beta, R_AS5, R_AS6, stderr``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(["beta", "R_AS5", "R_AS6", "stderr"])
    for p in rows:
        w.writerow([repr(float(p.beta)), repr(float(p.R)), repr(float(p.R_complement)),
                    repr(float(p.stderr))])
    return buf.getvalue()


def measured_probs(stats):
    """:class:`MeasuredProbs` from the counts of a run without the combiner."""
    from .coincidence import conditional_prob
    return MeasuredProbs(
        conditional_prob(stats, "S1", ()).value,
        conditional_prob(stats, "S3", ()).value,
        conditional_prob(stats, "S3", "S1").value,
        conditional_prob(stats, "AS2", "S1").value,
        conditional_prob(stats, "AS4", "S1").value,
        conditional_prob(stats, "AS4", "S3").value,
    )


def phase_scan(config, betas, heralds=(("S1",),), trials=None, jobs=1):
    """Simulate the combiner at each phase; one point list per herald pattern.

    ``R = N5 / (N5 + eta_UD N6)`` is formed from trials where every channel
    of the herald clicked, with ``eta_UD = 1 / as6_eff_ratio`` undoing the
    AS6 efficiency imbalance. ``R`` and its error are NaN at phases where
    the herald never coincided with an anti-Stokes click.
    """
    from .trajectory import simulate
    eta_ud = 1.0 / config.as6_eff_ratio
    heralds = [tuple(h) for h in heralds]
    out = {h: [] for h in heralds}
    for beta in betas:
        stats = simulate(config.replace(mzi=True, mzi_beta=float(beta)), trials, jobs=jobs)
        for h in heralds:
            try:
                r, err = ratio_from_counts(stats.count(h + ("AS5",)),
                                           stats.count(h + ("AS6",)), eta_ud)
            except InsufficientStatistics:
                r, err = math.nan, math.nan
            out[h].append(PhaseScanPoint(float(beta), r, err))
    return out
