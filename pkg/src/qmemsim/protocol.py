"""Write / herald / store / read / probe / read sequence of the memory experiment.

The physics of one trial is a short list of operations on a handful of
modes. :func:`build_schedule` turns a :class:`ProtocolConfig` into that list;
the Monte Carlo engine (:mod:`qmemsim.trajectory`) and the exact oracle
(:func:`qmemsim.oracle.run_schedule_exact`) both interpret it.

Also here: the coupling calibration, the memory decay model and the
closed-form amplification relations used to check the simulations.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from ._validation import check_int, check_probability, check_scalar
from .exceptions import ConfigurationError
from .fock import Mode

__all__ = [
    "CHANNELS",
    "channel_bit",
    "DelayMode",
    "PulseRole",
    "PulseSpec",
    "ProtocolConfig",
    "DEFAULT_K_CAL",
    "analytic_amplification",
    "calibrate_coupling",
    "energy_for_excitation",
    "memory_transmission",
    "high_order_mean",
    "Squeeze",
    "BeamSplit",
    "PhaseShift",
    "PhaseJitter",
    "Loss",
    "Relabel",
    "Detect",
    "COMBINER_PHASE",
    "build_schedule",
    "detection_sequence",
    "run_trial",
]

CHANNELS = ("S1", "S2", "S3", "AS2", "AS4", "AS5", "AS6")
_BITS = {ch: 1 << i for i, ch in enumerate(CHANNELS)}


def channel_bit(channel):
    try:
        return _BITS[str(channel)]
    except KeyError:
        raise ConfigurationError(f"unknown channel {channel!r}") from None


class DelayMode(str, Enum):
    """Fiber delay in front of the anti-Stokes detector."""

    FIBER_2M = "2m"
    FIBER_50M = "50m"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        text = str(value).strip().lower().replace("fiber", "").replace("_", "")
        for member in cls:
            if text == member.value:
                return member
        raise ConfigurationError(f"unknown delay mode {value!r} (use '2m' or '50m')")


class PulseRole(str, Enum):
    WRITE = "Write"
    READ1 = "Read1"
    PROBE = "Probe"
    READ2 = "Read2"


@dataclass(frozen=True)
class PulseSpec:
    energy: float
    role: PulseRole
    time_offset: float

    @property
    def is_squeeze(self):
        return self.role in (PulseRole.WRITE, PulseRole.PROBE)


# 220 pJ gives an intrinsic excitation probability sinh^2 = 0.025
DEFAULT_K_CAL = math.asinh(math.sqrt(0.025)) / math.sqrt(220.0)

# ns between consecutive control pulses after the first read
PULSE_SPACING = 150.0


def calibrate_coupling(energy, k_cal=DEFAULT_K_CAL):
    """Squeeze parameter ``kappa*dt = k_cal * sqrt(energy)`` for a pulse energy in pJ."""
    energy = check_scalar(energy, "energy", min_val=0.0)
    k_cal = check_scalar(k_cal, "k_cal", min_val=0.0, include_min=False)
    return k_cal * math.sqrt(energy)


def energy_for_excitation(p, k_cal=DEFAULT_K_CAL):
    """Inverse calibration: pulse energy whose pair-creation probability ``sinh^2`` is ``p``."""
    p = check_scalar(p, "p", min_val=0.0)
    return (math.asinh(math.sqrt(p)) / k_cal) ** 2


def memory_transmission(t, tau1, tau2):
    """Spin-wave survival ``exp(-t/tau1 - (t/tau2)^2)`` after storage time ``t`` (ns)."""
    t = check_scalar(t, "t", min_val=0.0)
    tau1 = check_scalar(tau1, "tau1", min_val=0.0, include_min=False)
    tau2 = check_scalar(tau2, "tau2", min_val=0.0, include_min=False)
    return math.exp(-t / tau1 - (t / tau2) ** 2)


def analytic_amplification(n_S0, n_E0, kappa_dt):
    """Mean Stokes and excitation numbers after a pair-creation pulse.

    ``n_S = n_S0 cosh^2 + (1 + n_E0) sinh^2`` and symmetrically for ``n_E``.
    """
    n_S0 = check_scalar(n_S0, "n_S0", min_val=0.0)
    n_E0 = check_scalar(n_E0, "n_E0", min_val=0.0)
    kappa_dt = check_scalar(kappa_dt, "kappa_dt", min_val=0.0)
    c2 = math.cosh(kappa_dt) ** 2
    s2 = math.sinh(kappa_dt) ** 2
    return n_S0 * c2 + (1.0 + n_E0) * s2, n_E0 * c2 + (1.0 + n_S0) * s2


def high_order_mean(p):
    """Small-``p`` mean number of excess excitations, ``2 p^2``."""
    p = check_probability(p, "p")
    return 2.0 * p * p


_BOOL_TRUE = {"1", "true", "yes", "on"}
_BOOL_FALSE = {"0", "false", "no", "off"}


@dataclass(frozen=True)
class ProtocolConfig:
    """All knobs of one simulated experiment.

    Energies are in pJ, times in ns. ``retrieval1`` / ``retrieval2`` are the
    intrinsic read efficiencies ``sin^2(theta)`` of the two read pulses. The
    read pulse also scatters weakly into S2 when ``read_scatter`` is on, with
    a strength set by ``read1_energy``.
    """

    write_energy: float = 220.0
    read1_energy: float = 220.0
    probe_energy: float = 220.0
    read2_energy: float = 220.0
    k_cal: float = DEFAULT_K_CAL
    retrieval1: float = 0.15
    retrieval2: float = 0.15
    read_scatter: bool = True
    storage_time: float = 200.0
    # chosen so the g2(t) decay over 0..420 ns visibly follows 1 + C/(1 + A t^2 + B t)
    tau1: float = 600.0
    tau2: float = 400.0
    det_eff_S: float = 0.071
    det_eff_AS: float = 0.054
    dark_prob_S: float = 0.0
    dark_prob_AS: float = 0.0
    delay_mode: DelayMode = DelayMode.FIBER_2M
    mzi: bool = False
    mzi_beta: float = 0.0
    mzi_split: float = 0.5
    mzi_phase_noise: float = 0.0
    as6_eff_ratio: float = 1.0
    n_max: int = 3
    trials: int = 1_000_000
    master_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "delay_mode", DelayMode.parse(self.delay_mode))
        for name in ("write_energy", "read1_energy", "probe_energy", "read2_energy",
                     "storage_time", "mzi_phase_noise"):
            check_scalar(getattr(self, name), name, min_val=0.0)
        check_scalar(self.k_cal, "k_cal", min_val=0.0, include_min=False)
        for name in ("tau1", "tau2", "as6_eff_ratio"):
            check_scalar(getattr(self, name), name, min_val=0.0, include_min=False)
        for name in ("retrieval1", "retrieval2", "det_eff_S", "det_eff_AS",
                     "dark_prob_S", "dark_prob_AS", "mzi_split"):
            check_probability(getattr(self, name), name)
        check_scalar(self.mzi_beta, "mzi_beta")
        check_probability(self.det_eff_AS * self.as6_eff_ratio, "det_eff_AS * as6_eff_ratio")
        check_int(self.n_max, "n_max", min_val=1)
        check_int(self.trials, "trials", min_val=1)
        check_int(self.master_seed, "master_seed", min_val=0)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    @property
    def pulses(self):
        t0 = self.storage_time
        return (
            PulseSpec(self.write_energy, PulseRole.WRITE, 0.0),
            PulseSpec(self.read1_energy, PulseRole.READ1, t0),
            PulseSpec(self.probe_energy, PulseRole.PROBE, t0 + PULSE_SPACING),
            PulseSpec(self.read2_energy, PulseRole.READ2, t0 + 2 * PULSE_SPACING),
        )

    @property
    def write_kappa(self):
        return calibrate_coupling(self.write_energy, self.k_cal)

    @property
    def probe_kappa(self):
        return calibrate_coupling(self.probe_energy, self.k_cal)

    @property
    def read_scatter_kappa(self):
        if not self.read_scatter:
            return 0.0
        return calibrate_coupling(self.read1_energy, self.k_cal)

    @property
    def memory_eta(self):
        return memory_transmission(self.storage_time, self.tau1, self.tau2)

    # --- plain-text key=value files -------------------------------------

    @classmethod
    def from_mapping(cls, values, base=None):
        base = base or cls()
        fields = {f.name: f for f in dataclasses.fields(cls)}
        changes = {}
        for key, raw in values.items():
            if key not in fields:
                raise ConfigurationError(f"unknown configuration key {key!r}")
            changes[key] = _coerce(key, raw, getattr(base, key))
        try:
            return dataclasses.replace(base, **changes)
        except TypeError as exc:
            raise ConfigurationError(str(exc)) from None

    @classmethod
    def from_text(cls, text, base=None):
        values = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigurationError(f"line {lineno}: expected key = value, got {line!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            if key in values:
                raise ConfigurationError(f"line {lineno}: duplicate key {key!r}")
            values[key] = value
        return cls.from_mapping(values, base)

    @classmethod
    def from_file(cls, path, base=None):
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from None
        return cls.from_text(text, base)

    def to_text(self):
        lines = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, Enum):
                v = v.value
            elif isinstance(v, bool):
                v = "true" if v else "false"
            else:
                v = repr(v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    def as_dict(self):
        out = dataclasses.asdict(self)
        out["delay_mode"] = self.delay_mode.value
        return out


def _coerce(key, raw, default):
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    try:
        if isinstance(default, bool):
            low = text.lower()
            if low in _BOOL_TRUE:
                return True
            if low in _BOOL_FALSE:
                return False
            raise ValueError(text)
        if isinstance(default, Enum):
            return DelayMode.parse(text)
        if isinstance(default, int):
            value = float(text)
            if not value.is_integer():
                raise ValueError(text)
            return int(value)
        return float(text)
    except ValueError:
        raise ConfigurationError(f"bad value {raw!r} for key {key!r}") from None


# --- operation schedule ---------------------------------------------------

@dataclass(frozen=True)
class Squeeze:
    modes: tuple
    r: float
    phase: float = 0.0


@dataclass(frozen=True)
class BeamSplit:
    modes: tuple
    theta: float
    phase: float = 0.0


@dataclass(frozen=True)
class PhaseShift:
    modes: tuple
    phi: float


@dataclass(frozen=True)
class PhaseJitter:
    """Random phase on one mode, drawn from a discrete Gauss-Hermite mixture."""

    modes: tuple
    phases: tuple
    weights: tuple


@dataclass(frozen=True)
class Loss:
    modes: tuple
    eta: float


@dataclass(frozen=True)
class Relabel:
    mapping: tuple
    modes: tuple = ()


@dataclass(frozen=True)
class Detect:
    """Threshold detection of a mode; the mode is retired afterwards."""

    modes: tuple
    eta: float
    dark_prob: float
    channel: str = field(default="")


# 50:50 combiner phase such that P(AS5) = (1 + cos beta)/2 for a balanced photon
COMBINER_PHASE = -math.pi / 2
JITTER_NODES = 7


def _gauss_hermite_phases(sigma):
    x, w = np.polynomial.hermite.hermgauss(JITTER_NODES)
    return tuple(float(v) for v in math.sqrt(2.0) * sigma * x), tuple(float(v) for v in w / math.sqrt(math.pi))


def build_schedule(config, order="physical"):
    """Operation list for one trial.

    ``order="physical"`` places the AS2 detection where the delay mode puts
    it (before the probe for 2 m, after the S3 detection for 50 m).
    ``order="canonical"`` always uses emission order, i.e. the 2 m layout;
    because the intervening operations never touch AS2, both orders give
    the same joint outcome distribution.
    """
    if order not in ("physical", "canonical"):
        raise ConfigurationError(f"unknown schedule order {order!r}")
    c = config
    A = Mode.ATOM.value
    late_as2 = order == "physical" and c.delay_mode is DelayMode.FIBER_50M
    steps = [
        Squeeze((A, "S1"), c.write_kappa),
        Detect(("S1",), c.det_eff_S, c.dark_prob_S, "S1"),
        Loss((A,), c.memory_eta),
    ]
    if c.read_scatter_kappa > 0:
        steps += [Squeeze((A, "S2"), c.read_scatter_kappa),
                  Detect(("S2",), c.det_eff_S, c.dark_prob_S, "S2")]
    steps.append(BeamSplit((A, "AS2"), math.asin(math.sqrt(c.retrieval1))))
    as2_detect = Detect(("AS2",), c.det_eff_AS, c.dark_prob_AS, "AS2")
    if not c.mzi and not late_as2:
        steps.append(as2_detect)
    steps += [Squeeze((A, "S3"), c.probe_kappa),
              Detect(("S3",), c.det_eff_S, c.dark_prob_S, "S3")]
    if not c.mzi and late_as2:
        steps.append(as2_detect)
    steps.append(BeamSplit((A, "AS4"), math.asin(math.sqrt(c.retrieval2))))
    if c.mzi:
        steps.append(PhaseShift(("AS4",), c.mzi_beta))
        if c.mzi_phase_noise > 0:
            phases, weights = _gauss_hermite_phases(c.mzi_phase_noise)
            steps.append(PhaseJitter(("AS4",), phases, weights))
        steps += [
            BeamSplit(("AS2", "AS4"), math.asin(math.sqrt(c.mzi_split)), COMBINER_PHASE),
            Relabel((("AS2", "AS5"), ("AS4", "AS6"))),
            Detect(("AS5",), c.det_eff_AS, c.dark_prob_AS, "AS5"),
            Detect(("AS6",), c.det_eff_AS * c.as6_eff_ratio, c.dark_prob_AS, "AS6"),
        ]
    else:
        steps.append(Detect(("AS4",), c.det_eff_AS, c.dark_prob_AS, "AS4"))
    return steps


def detection_sequence(config):
    """Channels in the order their detectors fire for this configuration."""
    return [s.channel for s in build_schedule(config, "physical") if isinstance(s, Detect)]


def run_trial(config, trial_index):
    """Simulate a single trial; see :func:`qmemsim.trajectory.run_trial`."""
    from .trajectory import run_trial as _run
    return _run(config, trial_index)
