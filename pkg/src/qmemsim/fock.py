"""Truncated multi-mode bosonic Fock space.

A :class:`StateVector` stores complex amplitudes as a dense tensor with one
axis per mode, each axis running over photon numbers ``0..n_max``. All
operations return new states; nothing is modified in place.

Conventions
-----------
Two-mode squeezing of modes ``(a, b)`` with parameter ``r`` and phase ``phi``
is ``exp(xi a^dag b^dag - xi^* a b)`` with ``xi = r exp(i phi)``. Acting on
vacuum it gives amplitudes ``(exp(i phi) tanh r)^n / cosh r`` on ``|n, n>``.

The beam splitter acts on the mode operators as::

    a -> a cos(theta) + i exp(i phi) b sin(theta)
    b -> i exp(-i phi) a sin(theta) + b cos(theta)

so a single photon in ``a`` moves to ``b`` with probability ``sin^2(theta)``.

Components pushed above ``n_max`` are dropped and their weight is added to
``norm_deficit``. States are renormalised only when a measurement collapses
them.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np

from ._validation import check_int, check_probability, check_scalar
from .exceptions import ConfigurationError

__all__ = [
    "Mode",
    "Truncation",
    "StateVector",
    "ancilla",
    "vacuum",
    "basis_state",
    "from_amplitudes",
    "add_modes",
    "apply_two_mode_squeeze",
    "apply_beam_splitter",
    "apply_phase_shift",
    "apply_loss_sampled",
    "loss_outcomes",
    "click_outcomes",
    "click_probability",
    "measure_click",
    "project_number",
    "relabel",
    "expected_photon_number",
    "photon_number_distribution",
    "two_mode_squeeze_matrix",
    "beam_splitter_matrix",
]


class Mode(str, Enum):
    ATOM = "Atom"
    S1 = "S1"
    S2 = "S2"
    S3 = "S3"
    AS2 = "AS2"
    AS4 = "AS4"
    AS5 = "AS5"
    AS6 = "AS6"

    def __str__(self):
        return self.value


_ANCILLA = re.compile(r"^Ancilla_\d+$")
_FIXED = frozenset(m.value for m in Mode)


def ancilla(k):
    return f"Ancilla_{check_int(k, 'ancilla index', min_val=0)}"


def _label(mode):
    label = mode.value if isinstance(mode, Mode) else mode
    if not isinstance(label, str) or not (label in _FIXED or _ANCILLA.match(label)):
        raise ConfigurationError(f"unknown mode label {mode!r}")
    return label


@dataclass(frozen=True)
class Truncation:
    """Per-mode photon-number cutoff; each mode spans ``|0>..|n_max>``."""

    n_max: int = 3

    def __post_init__(self):
        check_int(self.n_max, "n_max", min_val=1)

    @property
    def dim(self):
        return self.n_max + 1


def _as_n_max(trunc):
    if isinstance(trunc, Truncation):
        return trunc.n_max
    return Truncation(trunc).n_max


@dataclass(frozen=True, eq=False)
class StateVector:
    """Pure state on an ordered register of modes.

    Attributes
    ----------
    register : tuple of str
        Mode labels; axis ``i`` of ``amplitudes`` belongs to ``register[i]``.
    amplitudes : ndarray of complex, shape ``(n_max + 1,) * len(register)``
    n_max : int
    norm_deficit : float
        Weight lost to truncation since the last renormalisation.
    """

    register: tuple
    amplitudes: np.ndarray
    n_max: int
    norm_deficit: float = 0.0

    @property
    def dim(self):
        return self.n_max + 1

    def axis(self, mode):
        label = _label(mode)
        try:
            return self.register.index(label)
        except ValueError:
            raise ConfigurationError(
                f"mode {label!r} is not in register {self.register}") from None

    def norm(self):
        """Sum of squared amplitude moduli (excludes ``norm_deficit``)."""
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def amplitude(self, occupation):
        """Amplitude of the basis state ``{mode: n}`` (unlisted modes at 0)."""
        idx = [0] * len(self.register)
        for mode, n in occupation.items():
            if n > self.n_max:
                return 0j
            idx[self.axis(mode)] = n
        return complex(self.amplitudes[tuple(idx)])

    def probabilities(self):
        return np.abs(self.amplitudes) ** 2

    def __contains__(self, mode):
        return _label(mode) in self.register

    def __repr__(self):
        return (f"StateVector(register={self.register}, n_max={self.n_max}, "
                f"norm={self.norm():.12g}, norm_deficit={self.norm_deficit:.3g})")


def _check_register(register):
    labels = tuple(_label(m) for m in register)
    if not labels:
        raise ConfigurationError("register must contain at least one mode")
    if len(set(labels)) != len(labels):
        raise ConfigurationError(f"duplicate mode labels in {labels}")
    return labels


def vacuum(register, trunc=3):
    """All modes of ``register`` in their vacuum state."""
    labels = _check_register(register)
    n_max = _as_n_max(trunc)
    amps = np.zeros((n_max + 1,) * len(labels), dtype=complex)
    amps[(0,) * len(labels)] = 1.0
    return StateVector(labels, amps, n_max, 0.0)


def basis_state(register, occupation, trunc=3):
    """Number state ``|n_1, n_2, ...>`` given as ``{mode: n}`` (unlisted modes empty)."""
    state = vacuum(register, trunc)
    idx = [0] * len(state.register)
    for mode, n in occupation.items():
        n = check_int(n, "n", min_val=0)
        if n > state.n_max:
            raise ConfigurationError(f"n={n} exceeds n_max={state.n_max}")
        idx[state.axis(mode)] = n
    amps = np.zeros_like(state.amplitudes)
    amps[tuple(idx)] = 1.0
    return StateVector(state.register, amps, state.n_max, 0.0)


def from_amplitudes(register, amplitudes, normalize=True):
    """State from an explicit amplitude array of shape ``(n_max + 1,) * len(register)``."""
    labels = _check_register(register)
    amps = np.asarray(amplitudes, dtype=complex)
    if amps.ndim != len(labels) or len(set(amps.shape)) != 1 or amps.shape[0] < 2:
        raise ConfigurationError("amplitudes must be a hypercube with one axis per mode")
    norm = float(np.vdot(amps, amps).real)
    if norm <= 0:
        raise ConfigurationError("amplitudes are all zero")
    if normalize:
        amps = amps / math.sqrt(norm)
    return StateVector(labels, amps, amps.shape[0] - 1, 0.0)


def add_modes(state, modes):
    """Append vacuum modes to the register (the tensor product with ``|0>``)."""
    new = tuple(_label(m) for m in modes if _label(m) not in state.register)
    if not new:
        return state
    labels = _check_register(state.register + new)
    amps = state.amplitudes.reshape(state.amplitudes.shape + (1,) * len(new))
    pad = [(0, 0)] * state.amplitudes.ndim + [(0, state.n_max)] * len(new)
    return StateVector(labels, np.pad(amps, pad), state.n_max, state.norm_deficit)


def _two_mode_axes(state, a, b):
    ia, ib = state.axis(a), state.axis(b)
    if ia == ib:
        raise ConfigurationError(f"a two-mode operation needs distinct modes, got {a!r} twice")
    return ia, ib


def _apply_two_mode(state, ia, ib, matrix):
    d = state.dim
    amps = np.moveaxis(state.amplitudes, (ia, ib), (0, 1))
    rest = amps.shape[2:]
    out = (matrix @ amps.reshape(d * d, -1)).reshape((d, d) + rest)
    out = np.moveaxis(out, (0, 1), (ia, ib))
    leaked = max(state.norm() - float(np.vdot(out, out).real), 0.0)
    return StateVector(state.register, out, state.n_max, state.norm_deficit + leaked)


@lru_cache(maxsize=256)
def two_mode_squeeze_matrix(n_max, r, phase=0.0):
    """Exact matrix elements of the two-mode squeezer, restricted to the cutoff.

    Uses the normal-ordered disentangling
    ``S = exp(g a^dag b^dag) cosh(r)^-(n_a + n_b + 1) exp(-g^* a b)`` with
    ``g = exp(i phi) tanh(r)``, which is exact for the infinite-dimensional
    operator. Rows above ``n_max`` are simply absent, so applying the matrix
    can lose norm; columns are never truncated.
    Returned shape is ``(d*d, d*d)`` with index ``n_a * d + n_b``.
    """
    d = n_max + 1
    g = np.exp(1j * phase) * math.tanh(r)
    ch = math.cosh(r)
    fact = [math.factorial(k) for k in range(2 * d)]
    out = np.zeros((d, d, d, d), dtype=complex)
    for na in range(d):
        for nb in range(d):
            for ma in range(d):
                mb = ma - na + nb
                if not 0 <= mb < d:
                    continue
                total = 0j
                for l in range(min(na, nb) + 1):
                    ka, kb = na - l, nb - l
                    j = ma - ka
                    if j < 0:
                        continue
                    total += (g ** j / fact[j] * (-np.conj(g)) ** l / fact[l]
                              * math.sqrt(fact[ma] * fact[mb] * fact[na] * fact[nb])
                              / (fact[ka] * fact[kb]) * ch ** (-(ka + kb + 1)))
                out[ma, mb, na, nb] = total
    out = out.reshape(d * d, d * d)
    out.flags.writeable = False
    return out


@lru_cache(maxsize=256)
def beam_splitter_matrix(n_max, theta, phase=0.0):
    """Beam-splitter matrix on two modes, shape ``(d*d, d*d)``.

    Built by expanding ``(c a^dag + s1 b^dag)^na (c b^dag + s2 a^dag)^nb``
    with ``s1 = i exp(-i phi) sin(theta)``, ``s2 = i exp(i phi) sin(theta)``.
    Output amplitudes above the cutoff are dropped.
    """
    d = n_max + 1
    c, s = math.cos(theta), math.sin(theta)
    s1 = 1j * np.exp(-1j * phase) * s
    s2 = 1j * np.exp(1j * phase) * s
    fact = [math.factorial(k) for k in range(2 * d)]
    out = np.zeros((d, d, d, d), dtype=complex)
    for na in range(d):
        for nb in range(d):
            norm = 1.0 / math.sqrt(fact[na] * fact[nb])
            for k in range(na + 1):
                ck = math.comb(na, k) * c ** k * s1 ** (na - k)
                for q in range(nb + 1):
                    cq = math.comb(nb, q) * c ** q * s2 ** (nb - q)
                    ma = k + nb - q
                    mb = na - k + q
                    if ma < d and mb < d:
                        out[ma, mb, na, nb] += norm * ck * cq * math.sqrt(fact[ma] * fact[mb])
    out = out.reshape(d * d, d * d)
    out.flags.writeable = False
    return out


def apply_two_mode_squeeze(state, a, b, r, phase=0.0):
    """Two-mode squeeze modes ``a`` and ``b`` (pair creation)."""
    r = check_scalar(r, "r", min_val=0.0)
    phase = check_scalar(phase, "phase")
    ia, ib = _two_mode_axes(state, a, b)
    if r == 0.0:
        return state
    return _apply_two_mode(state, ia, ib, two_mode_squeeze_matrix(state.n_max, r, phase))


def apply_beam_splitter(state, a, b, theta, phase=0.0):
    """Mix modes ``a`` and ``b``; ``sin(theta)^2`` is the single-photon transfer."""
    theta = check_scalar(theta, "theta")
    phase = check_scalar(phase, "phase")
    ia, ib = _two_mode_axes(state, a, b)
    if theta == 0.0:
        return state
    return _apply_two_mode(state, ia, ib, beam_splitter_matrix(state.n_max, theta, phase))


def apply_phase_shift(state, mode, phi):
    """Multiply each ``|n>`` component of ``mode`` by ``exp(i n phi)``."""
    ax = state.axis(mode)
    phi = check_scalar(phi, "phi")
    shape = [1] * state.amplitudes.ndim
    shape[ax] = state.dim
    factor = np.exp(1j * phi * np.arange(state.dim)).reshape(shape)
    return StateVector(state.register, state.amplitudes * factor, state.n_max,
                       state.norm_deficit)


def photon_number_distribution(state, mode):
    """Marginal ``P(n)``, normalised over the retained (non-leaked) weight."""
    ax = state.axis(mode)
    probs = state.probabilities()
    other = tuple(i for i in range(probs.ndim) if i != ax)
    marginal = probs.sum(axis=other) if other else probs
    total = marginal.sum()
    if total <= 0:
        raise ConfigurationError("state has zero norm")
    return marginal / total


def expected_photon_number(state, mode):
    p = photon_number_distribution(state, mode)
    return float(np.dot(np.arange(state.dim), p))


def project_number(state, mode, n, retire=False):
    """Project ``mode`` onto ``|n>`` and renormalise.

    With ``retire=True`` the projected mode is removed from the register;
    the remaining state is then the exact conditional state of the rest.
    """
    ax = state.axis(mode)
    n = check_int(n, "n", min_val=0)
    if n > state.n_max:
        raise ConfigurationError(f"n={n} exceeds n_max={state.n_max}")
    sliced = np.take(state.amplitudes, n, axis=ax)
    weight = float(np.vdot(sliced, sliced).real)
    if weight <= 0:
        raise ConfigurationError(f"outcome n={n} on {mode!r} has zero probability")
    sliced = sliced / math.sqrt(weight)
    if retire:
        register = state.register[:ax] + state.register[ax + 1:]
        if not register:
            raise ConfigurationError("cannot retire the last mode of a register")
        return StateVector(register, sliced, state.n_max, 0.0)
    amps = np.zeros_like(state.amplitudes)
    idx = [slice(None)] * amps.ndim
    idx[ax] = n
    amps[tuple(idx)] = sliced
    return StateVector(state.register, amps, state.n_max, 0.0)


def relabel(state, mapping):
    """Rename modes, e.g. ``{"AS2": "AS5", "AS4": "AS6"}``."""
    register = tuple(_label(mapping.get(m, m)) for m in state.register)
    for old in mapping:
        state.axis(old)
    return StateVector(_check_register(register), state.amplitudes, state.n_max,
                       state.norm_deficit)


def _free_ancilla(state):
    k = 0
    while ancilla(k) in state.register:
        k += 1
    return ancilla(k)


def loss_outcomes(state, mode, eta):
    """Branches of a loss channel realised as a beam splitter to a fresh ancilla.

    Returns a list of ``(lost, probability, conditional_state)`` for every
    ancilla photon number with non-zero probability. The ancilla is removed.
    """
    eta = check_probability(eta, "eta")
    state.axis(mode)
    if eta == 1.0:
        return [(0, 1.0, state)]
    anc = _free_ancilla(state)
    mixed = apply_beam_splitter(add_modes(state, [anc]), mode, anc, math.acos(math.sqrt(eta)))
    probs = photon_number_distribution(mixed, anc)
    return [(k, float(p), project_number(mixed, anc, k, retire=True))
            for k, p in enumerate(probs) if p > 0]


def _pick(probs, u):
    cdf = np.cumsum(probs)
    idx = int(np.searchsorted(cdf, u * cdf[-1], side="right"))
    return min(idx, len(probs) - 1)


def apply_loss_sampled(state, mode, eta, rng):
    """Sample one trajectory of the loss channel; returns ``(state, lost_count)``."""
    branches = loss_outcomes(state, mode, eta)
    k = _pick([b[1] for b in branches], rng.random())
    lost, _, out = branches[k]
    return out, lost


def click_probability(n, eta, dark_prob):
    """Threshold-detector response ``1 - (1 - dark)(1 - eta)^n``."""
    return 1.0 - (1.0 - dark_prob) * (1.0 - eta) ** np.asarray(n)


def click_outcomes(state, mode, eta, dark_prob=0.0):
    """Joint outcomes ``(n, clicked, probability)`` of a threshold detector.

    ``n`` is the photon number the mode is projected onto; only outcomes with
    non-zero probability are listed.
    """
    eta = check_probability(eta, "eta")
    dark_prob = check_probability(dark_prob, "dark_prob")
    pn = photon_number_distribution(state, mode)
    q = click_probability(np.arange(state.dim), eta, dark_prob)
    out = []
    for n, p in enumerate(pn):
        for clicked, w in ((False, p * (1.0 - q[n])), (True, p * q[n])):
            if w > 0:
                out.append((n, clicked, float(w)))
    return out


def measure_click(state, mode, eta, dark_prob, rng, retire=False):
    """Sample a click/no-click record and the collapsed state.

    The mode is projected onto the sampled photon number, which leaves the
    rest of the register in its exact conditional state.
    """
    outcomes = click_outcomes(state, mode, eta, dark_prob)
    n, clicked, _ = outcomes[_pick([o[2] for o in outcomes], rng.random())]
    return clicked, project_number(state, mode, n, retire=retire)
