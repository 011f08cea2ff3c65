"""Exact density-matrix reference for small truncations.

Ground truth for the Monte Carlo trajectories. Unitaries come from
exponentiating the truncated generators with :func:`scipy.linalg.expm`, loss
is a Kraus channel, and detectors are threshold POVMs. None of this reuses
the closed-form matrix elements in :mod:`qmemsim.fock`.

The density matrix is stored as a tensor with ``2k`` axes, ket indices first
and bra indices second.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from ._validation import check_int, check_probability
from .exceptions import ConfigurationError
from .fock import _check_register, _label

__all__ = [
    "DensityMatrix",
    "Unitary",
    "KrausChannel",
    "annihilation",
    "two_mode_squeeze_unitary",
    "beam_splitter_unitary",
    "phase_unitary",
    "loss_channel",
    "dephase_channel",
    "phase_mixture_channel",
    "evolve_exact",
    "detect_and_trace",
    "click_probabilities_exact",
    "run_schedule_exact",
]

MAX_MODES = 4
MAX_N = 6


def annihilation(n_max):
    return np.diag(np.sqrt(np.arange(1, n_max + 1, dtype=float)), 1).astype(complex)


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    register: tuple
    tensor: np.ndarray
    n_max: int

    @classmethod
    def vacuum(cls, register, n_max=3):
        labels = _check_register(register)
        n_max = check_int(n_max, "n_max", min_val=1)
        if n_max > MAX_N or len(labels) > MAX_MODES:
            raise ConfigurationError(
                f"oracle is limited to {MAX_MODES} modes at n_max <= {MAX_N}")
        d = n_max + 1
        t = np.zeros((d,) * (2 * len(labels)), dtype=complex)
        t[(0,) * (2 * len(labels))] = 1.0
        return cls(labels, t, n_max)

    @classmethod
    def from_state_vector(cls, psi):
        amps = psi.amplitudes
        return cls(psi.register, np.multiply.outer(amps, amps.conj()), psi.n_max)

    @property
    def k(self):
        return len(self.register)

    @property
    def dim(self):
        return (self.n_max + 1) ** self.k

    @property
    def matrix(self):
        return self.tensor.reshape(self.dim, self.dim)

    def axis(self, mode):
        label = _label(mode)
        if label not in self.register:
            raise ConfigurationError(f"mode {label!r} is not in register {self.register}")
        return self.register.index(label)

    def trace(self):
        return float(np.trace(self.matrix).real)

    def with_modes(self, modes):
        new = [m for m in (_label(x) for x in modes) if m not in self.register]
        if not new:
            return self
        if self.k + len(new) > MAX_MODES:
            raise ConfigurationError(f"oracle is limited to {MAX_MODES} live modes")
        d = self.n_max + 1
        vac = np.zeros((d, d), dtype=complex)
        vac[0, 0] = 1.0
        t = self.tensor
        register = self.register
        for m in new:
            # insert the new ket axis after the existing kets, bra axis at the end
            t = np.multiply.outer(t, vac)
            t = np.moveaxis(t, -2, len(register))
            register = register + (m,)
        return DensityMatrix(_check_register(register), t, self.n_max)

    def partial_trace(self, mode):
        ax = self.axis(mode)
        t = np.trace(self.tensor, axis1=ax, axis2=ax + self.k)
        register = self.register[:ax] + self.register[ax + 1:]
        return DensityMatrix(register, t, self.n_max)

    def number_distribution(self, modes):
        """Joint photon-number distribution of ``modes`` (diagonal of the reduced state)."""
        rho = self
        for m in self.register:
            if m not in [_label(x) for x in modes]:
                rho = rho.partial_trace(m)
        diag = np.einsum(rho.matrix.reshape(rho.dim, rho.dim), [0, 0], [0]).real
        diag = diag.reshape((self.n_max + 1,) * rho.k)
        order = [rho.register.index(_label(m)) for m in modes]
        return np.transpose(diag, order)

    def expected_photon_number(self, mode):
        p = self.number_distribution([mode])
        return float(np.dot(np.arange(self.n_max + 1), p) / max(self.trace(), 1e-300))

    def check(self, tol_herm=1e-12, tol_psd=1e-9):
        """Raise if the matrix is not Hermitian, PSD, and trace-bounded."""
        m = self.matrix
        if np.abs(m - m.conj().T).max() > tol_herm:
            raise AssertionError("density matrix is not Hermitian")
        ev = np.linalg.eigvalsh((m + m.conj().T) / 2)
        if ev.min() < -tol_psd:
            raise AssertionError(f"density matrix has eigenvalue {ev.min():.3g}")
        if self.trace() > 1 + 1e-9:
            raise AssertionError(f"trace {self.trace()} exceeds 1")
        return self


@dataclass(frozen=True, eq=False)
class Unitary:
    modes: tuple
    matrix: np.ndarray
    defect: float = field(default=0.0)


@dataclass(frozen=True, eq=False)
class KrausChannel:
    modes: tuple
    operators: tuple
    kind: str

    def completeness_defect(self):
        d = self.operators[0].shape[1]
        s = sum(k.conj().T @ k for k in self.operators)
        return float(np.abs(s - np.eye(d)).max())


def _unitary(modes, generator):
    u = expm(generator)
    defect = float(np.abs(u.conj().T @ u - np.eye(u.shape[0])).max())
    return Unitary(tuple(_label(m) for m in modes), u, defect)


def two_mode_squeeze_unitary(a, b, n_max, r, phase=0.0):
    """``expm(xi a^dag b^dag - xi^* a b)`` on the truncated two-mode space."""
    op = annihilation(n_max)
    eye = np.eye(n_max + 1)
    A, B = np.kron(op, eye), np.kron(eye, op)
    xi = r * np.exp(1j * phase)
    return _unitary((a, b), xi * A.conj().T @ B.conj().T - np.conj(xi) * A @ B)


def beam_splitter_unitary(a, b, n_max, theta, phase=0.0):
    """``expm(i theta (e^{i phi} a^dag b + e^{-i phi} a b^dag))``."""
    op = annihilation(n_max)
    eye = np.eye(n_max + 1)
    A, B = np.kron(op, eye), np.kron(eye, op)
    g = np.exp(1j * phase) * A.conj().T @ B
    return _unitary((a, b), 1j * theta * (g + g.conj().T))


def phase_unitary(mode, n_max, phi):
    return Unitary((_label(mode),), np.diag(np.exp(1j * phi * np.arange(n_max + 1))))


def loss_channel(mode, n_max, eta):
    """Pure-loss Kraus operators ``K_k = sum_n sqrt(C(n,k) eta^(n-k) (1-eta)^k) |n-k><n|``."""
    eta = check_probability(eta, "eta")
    d = n_max + 1
    ops = []
    for k in range(d):
        op = np.zeros((d, d), dtype=complex)
        for n in range(k, d):
            op[n - k, n] = math.sqrt(math.comb(n, k) * eta ** (n - k) * (1 - eta) ** k)
        ops.append(op)
    return KrausChannel((_label(mode),), tuple(ops), f"Loss({eta})")


def dephase_channel(mode, n_max, p):
    """With probability ``p`` apply the parity phase ``exp(i pi n)``."""
    p = check_probability(p, "p")
    d = n_max + 1
    ops = (math.sqrt(1 - p) * np.eye(d, dtype=complex),
           math.sqrt(p) * np.diag(np.exp(1j * math.pi * np.arange(d))))
    return KrausChannel((_label(mode),), ops, f"Dephase({p})")


def phase_mixture_channel(mode, n_max, phases, weights):
    d = n_max + 1
    ops = tuple(math.sqrt(w) * np.diag(np.exp(1j * ph * np.arange(d)))
                for ph, w in zip(phases, weights))
    return KrausChannel((_label(mode),), ops, "PhaseMixture")


def _apply_local(rho, modes, op_ket, op_bra):
    """Return ``op_ket . rho . op_bra^dag`` with the operator acting on ``modes``."""
    k = rho.k
    d = rho.n_max + 1
    axes = [rho.axis(m) for m in modes]
    m = len(axes)
    t = rho.tensor
    ok = op_ket.reshape((d,) * (2 * m))
    ob = op_bra.conj().reshape((d,) * (2 * m))
    t = np.tensordot(ok, t, axes=(list(range(m, 2 * m)), axes))
    t = np.moveaxis(t, list(range(m)), axes)
    bra_axes = [a + k for a in axes]
    t = np.tensordot(t, ob, axes=(bra_axes, list(range(m, 2 * m))))
    t = np.moveaxis(t, list(range(2 * k - m, 2 * k)), bra_axes)
    return DensityMatrix(rho.register, t, rho.n_max)


def evolve_exact(rho, step):
    """Apply a :class:`Unitary` or :class:`KrausChannel` to ``rho``."""
    d = rho.n_max + 1
    if isinstance(step, Unitary):
        if step.matrix.shape != (d ** len(step.modes),) * 2:
            raise ConfigurationError("unitary dimension does not match the register")
        return _apply_local(rho, step.modes, step.matrix, step.matrix)
    if isinstance(step, KrausChannel):
        if any(op.shape != (d, d) for op in step.operators) or len(step.modes) != 1:
            raise ConfigurationError("Kraus operator dimension does not match the register")
        out = None
        for op in step.operators:
            part = _apply_local(rho, step.modes, op, op)
            out = part.tensor if out is None else out + part.tensor
        return DensityMatrix(rho.register, out, rho.n_max)
    raise TypeError(f"unsupported step {step!r}")


def detect_and_trace(rho, mode, eta, dark_prob=0.0):
    """Split ``rho`` by a threshold detector on ``mode`` and trace the mode out.

    Returns the unnormalised reduced states ``(rho_click, rho_noclick)``.
    """
    eta = check_probability(eta, "eta")
    dark_prob = check_probability(dark_prob, "dark_prob")
    d = rho.n_max + 1
    no_click = np.diag((1 - dark_prob) * (1 - eta) ** np.arange(d)).astype(complex)
    root = np.sqrt(no_click)
    rho_nc = _apply_local(rho, [mode], root, root).partial_trace(mode)
    traced = rho.partial_trace(mode)
    rho_c = DensityMatrix(traced.register, traced.tensor - rho_nc.tensor, rho.n_max)
    return rho_c, rho_nc


def click_probabilities_exact(rho, detectors):
    """Joint click-pattern distribution for threshold detectors on distinct modes.

    Parameters
    ----------
    rho : DensityMatrix
    detectors : sequence of ``(mode, eta, dark_prob)``

    Returns
    -------
    dict mapping a tuple of booleans (one per detector, ``True`` = click) to
    its probability, normalised by ``Tr(rho)``.
    """
    modes = [_label(m) for m, _, _ in detectors]
    if len(set(modes)) != len(modes):
        raise ConfigurationError(f"duplicate detector modes {modes}")
    pn = rho.number_distribution(modes)
    pn = pn / pn.sum()
    d = rho.n_max + 1
    resp = [(1 - dark) * (1 - eta) ** np.arange(d) for _, eta, dark in detectors]
    out = {}
    for pattern in np.ndindex(*(2,) * len(modes)):
        w = pn
        for i, click in enumerate(pattern):
            e = 1 - resp[i] if click else resp[i]
            shape = [1] * len(modes)
            shape[i] = d
            w = w * e.reshape(shape)
        out[tuple(bool(c) for c in pattern)] = float(w.sum())
    return out


def run_schedule_exact(steps, n_max=3):
    """Exact click-mask distribution of a protocol schedule.

    ``steps`` is the operation list produced by
    :func:`qmemsim.protocol.build_schedule`. Detection steps fork the state
    into click and no-click branches (keyed by channel bitmask) and trace the
    detected mode out, so only a few modes are ever live.
    Returns ``{mask: probability}`` normalised to the retained weight.
    """
    # imported here to avoid a cycle: protocol depends on fock, not on oracle
    from .protocol import (BeamSplit, Detect, Loss, PhaseJitter, PhaseShift,
                           Relabel, Squeeze, channel_bit)

    branches = {0: None}
    for step in steps:
        new = {}
        for mask, rho in branches.items():
            if rho is None:
                first = step.modes[0]
                rho = DensityMatrix.vacuum([first], n_max)
            rho = rho.with_modes(step.modes)
            if isinstance(step, Squeeze):
                rho = evolve_exact(rho, two_mode_squeeze_unitary(*step.modes, n_max, step.r, step.phase))
            elif isinstance(step, BeamSplit):
                rho = evolve_exact(rho, beam_splitter_unitary(*step.modes, n_max, step.theta, step.phase))
            elif isinstance(step, PhaseShift):
                rho = evolve_exact(rho, phase_unitary(step.modes[0], n_max, step.phi))
            elif isinstance(step, Loss):
                rho = evolve_exact(rho, loss_channel(step.modes[0], n_max, step.eta))
            elif isinstance(step, PhaseJitter):
                rho = evolve_exact(rho, phase_mixture_channel(
                    step.modes[0], n_max, step.phases, step.weights))
            elif isinstance(step, Relabel):
                reg = tuple(dict(step.mapping).get(m, m) for m in rho.register)
                rho = DensityMatrix(_check_register(reg), rho.tensor, n_max)
            elif isinstance(step, Detect):
                rc, rn = detect_and_trace(rho, step.modes[0], step.eta, step.dark_prob)
                bit = channel_bit(step.channel)
                _accumulate(new, mask | bit, rc, step)
                _accumulate(new, mask, rn, step)
                continue
            else:
                raise TypeError(f"unsupported step {step!r}")
            _accumulate(new, mask, rho, step)
        branches = new
    total = sum(_trace_any(r) for r in branches.values())
    return {mask: _trace_any(r) / total for mask, r in sorted(branches.items())}


def _trace_any(rho):
    if isinstance(rho, float):
        return rho
    return rho.trace()


def _accumulate(branches, mask, rho, step):
    # a branch whose register became empty keeps only its weight
    if isinstance(rho, DensityMatrix) and rho.k == 0:
        rho = float(rho.tensor.real)
    if mask in branches:
        prev = branches[mask]
        if isinstance(prev, float):
            branches[mask] = prev + _trace_any(rho)
        else:
            branches[mask] = DensityMatrix(prev.register, prev.tensor + rho.tensor, prev.n_max)
    else:
        branches[mask] = rho
