"""Monte Carlo quantum trajectories of the protocol.

Each trial starts in vacuum and runs the operation schedule. Deterministic
operations act on a pure :class:`~qmemsim.fock.StateVector`. Every stochastic
step (memory loss, photon detection, phase jitter) samples one outcome by
inverse CDF from the trial's own uniform and collapses the state.

A trajectory's state is fixed by its outcome history, so states are cached
in a lazily grown :class:`BranchTree`. Then a block of trials is sampled with
vectorised table lookups instead of per-trial state algebra. The statistics
are the same as evolving every trial independently.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import fock
from .coincidence import CoincidenceStats
from .exceptions import ConfigurationError
from .protocol import (CHANNELS, BeamSplit, DelayMode, Detect, Loss, PhaseJitter,
                       PhaseShift, Relabel, Squeeze, build_schedule, channel_bit,
                       detection_sequence)
from .rng import stream_width, trial_uniforms

__all__ = ["TrialOutcome", "BranchTree", "run_trial", "iter_trials", "simulate",
           "sample_masks", "simulate_schedule", "DEFAULT_BLOCK"]

DEFAULT_BLOCK = 1 << 16
_RANDOM_STEPS = (Detect, Loss, PhaseJitter)


@dataclass(frozen=True)
class TrialOutcome:
    """Click record of one trial.

    ``detection_order`` lists the channels that clicked, ordered by detector
    firing time under the configured delay mode.
    """

    clicks: dict
    detection_order: tuple
    seed_index: int

    @property
    def mask(self):
        m = 0
        for ch, hit in self.clicks.items():
            if hit:
                m |= channel_bit(ch)
        return m

    @classmethod
    def from_mask(cls, mask, order, seed_index):
        clicks = {ch: bool(mask & channel_bit(ch)) for ch in CHANNELS}
        return cls(clicks, tuple(ch for ch in order if clicks[ch]), int(seed_index))


def apply_step(state, step):
    """Apply one deterministic schedule step to a state vector."""
    state = fock.add_modes(state, step.modes)
    if isinstance(step, Squeeze):
        return fock.apply_two_mode_squeeze(state, *step.modes, step.r, step.phase)
    if isinstance(step, BeamSplit):
        return fock.apply_beam_splitter(state, *step.modes, step.theta, step.phase)
    if isinstance(step, PhaseShift):
        return fock.apply_phase_shift(state, step.modes[0], step.phi)
    if isinstance(step, Relabel):
        return fock.relabel(state, dict(step.mapping))
    raise TypeError(f"{type(step).__name__} is not a deterministic step")


def _branches(state, step):
    """``(probability, click_bit, child_state)`` for every outcome of a random step."""
    state = fock.add_modes(state, step.modes)
    mode = step.modes[0]
    if isinstance(step, Detect):
        bit = channel_bit(step.channel)
        out = []
        for n, clicked, p in fock.click_outcomes(state, mode, step.eta, step.dark_prob):
            out.append((p, bit if clicked else 0, fock.project_number(state, mode, n, retire=True)))
        return out
    if isinstance(step, Loss):
        return [(p, 0, s) for _, p, s in fock.loss_outcomes(state, mode, step.eta)]
    if isinstance(step, PhaseJitter):
        return [(w, 0, fock.apply_phase_shift(state, mode, ph))
                for ph, w in zip(step.phases, step.weights)]
    raise TypeError(f"{type(step).__name__} is not a random step")


class BranchTree:
    """Cache of trajectory states keyed by outcome history.

    Parameters
    ----------
    steps : list
        Schedule from :func:`~qmemsim.protocol.build_schedule`.
    n_max : int
        Per-mode photon cutoff.
    initial : StateVector, optional
        Starting state; the default is the empty memory (Atom in vacuum).
    """

    def __init__(self, steps, n_max, initial=None):
        self.n_max = n_max
        # group deterministic ops in front of each random step
        self.stages = []
        pending = []
        for step in steps:
            if isinstance(step, _RANDOM_STEPS):
                self.stages.append((tuple(pending), step))
                pending = []
            else:
                pending.append(step)
        self.tail = tuple(pending)
        root = fock.vacuum([fock.Mode.ATOM.value], n_max) if initial is None else initial
        if root.n_max != n_max:
            raise ConfigurationError("initial state has a different cutoff")
        self._states = [self._advance(root, 0)]
        self._depth = [0]
        self._tables = {}

    @property
    def n_random(self):
        return len(self.stages)

    @property
    def width(self):
        return stream_width(self.n_random)

    @property
    def n_nodes(self):
        return len(self._states)

    def _advance(self, state, depth):
        if depth >= len(self.stages):
            return state
        for step in self.stages[depth][0]:
            state = apply_step(state, step)
        return state

    def expand(self, node):
        """Outcome table of ``node``: cumulative bounds, child ids, click bits."""
        table = self._tables.get(node)
        if table is not None:
            return table
        depth = self._depth[node]
        _, step = self.stages[depth]
        branches = _branches(self._states[node], step)
        probs = np.array([b[0] for b in branches])
        probs /= probs.sum()
        bounds = np.cumsum(probs)
        bounds[-1] = np.inf
        children = np.empty(len(branches), dtype=np.int64)
        for i, (_, _, child) in enumerate(branches):
            children[i] = len(self._states)
            self._states.append(self._advance(child, depth + 1))
            self._depth.append(depth + 1)
        bits = np.array([b[1] for b in branches], dtype=np.int64)
        self._states[node] = None  # no longer needed once expanded
        table = (bounds, children, bits)
        self._tables[node] = table
        return table

    def sample(self, uniforms):
        """Click masks for a block of trials; ``uniforms`` has one row per trial."""
        n = uniforms.shape[0]
        cur = np.zeros(n, dtype=np.int64)
        masks = np.zeros(n, dtype=np.int64)
        for j in range(self.n_random):
            uniq, inv = np.unique(cur, return_inverse=True)
            tables = [self.expand(int(node)) for node in uniq]
            width = max(len(t[0]) for t in tables)
            bounds = np.full((len(uniq), width), np.inf)
            children = np.zeros((len(uniq), width), dtype=np.int64)
            bits = np.zeros((len(uniq), width), dtype=np.int64)
            for i, (b, c, m) in enumerate(tables):
                bounds[i, :len(b)] = b
                children[i, :len(c)] = c
                bits[i, :len(m)] = m
            idx = (uniforms[:, j, None] >= bounds[inv]).sum(axis=1)
            cur = children[inv, idx]
            masks |= bits[inv, idx]
        return masks

    def leaf_state(self, history):
        """State after following the given branch indices (for inspection)."""
        node = 0
        for i in history:
            _, children, _ = self.expand(node)
            node = int(children[i])
        state = self._states[node]
        for step in self.tail if self._depth[node] == self.n_random else ():
            state = apply_step(state, step)
        return state


_TREE_CACHE = {}


def _tree(config):
    # sampling always follows emission order; see build_schedule
    key = (config.replace(trials=1, master_seed=0, delay_mode=DelayMode.FIBER_2M),)
    tree = _TREE_CACHE.get(key)
    if tree is None:
        if len(_TREE_CACHE) > 64:
            _TREE_CACHE.clear()
        tree = BranchTree(build_schedule(config, order="canonical"), config.n_max)
        _TREE_CACHE[key] = tree
    return tree


def sample_masks(config, start, stop):
    """Click masks of trials ``start..stop-1`` of ``config``'s run."""
    tree = _tree(config)
    u = trial_uniforms(config.master_seed, start, stop, tree.width)
    return tree.sample(u)


def run_trial(config, trial_index):
    """One trial of the protocol as a :class:`TrialOutcome`."""
    mask = int(sample_masks(config, trial_index, trial_index + 1)[0])
    return TrialOutcome.from_mask(mask, detection_sequence(config), trial_index)


def iter_trials(config, start=0, stop=None, block=DEFAULT_BLOCK):
    """Yield :class:`TrialOutcome` records; meant for small runs and tests."""
    stop = config.trials if stop is None else stop
    order = detection_sequence(config)
    for lo in range(start, stop, block):
        hi = min(lo + block, stop)
        for i, m in enumerate(sample_masks(config, lo, hi)):
            yield TrialOutcome.from_mask(int(m), order, lo + i)


def _block_stats(args):
    config, lo, hi = args
    return np.bincount(sample_masks(config, lo, hi), minlength=1 << len(CHANNELS))


def simulate(config, trials=None, jobs=1, block=DEFAULT_BLOCK, watched=None):
    """Run ``trials`` trials (default ``config.trials``) into :class:`CoincidenceStats`.

    Trials are processed in fixed blocks; the result depends only on the
    configuration and seed, not on ``jobs``.
    """
    trials = config.trials if trials is None else int(trials)
    if trials < 1:
        raise ConfigurationError("trials must be >= 1")
    if jobs is None or jobs < 1:
        raise ConfigurationError("jobs must be >= 1")
    work = [(config, lo, min(lo + block, trials)) for lo in range(0, trials, block)]
    if jobs == 1 or len(work) == 1:
        parts = map(_block_stats, work)
        total = sum(parts, np.zeros(1 << len(CHANNELS), dtype=np.int64))
    else:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            total = sum(ex.map(_block_stats, work), np.zeros(1 << len(CHANNELS), dtype=np.int64))
    return CoincidenceStats(total, watched)


def simulate_schedule(steps, n_max=3, trials=1_000_000, master_seed=0, block=DEFAULT_BLOCK,
                      watched=None, initial=None):
    """Run an arbitrary operation list (not built from a config) into stats.

    Detections must carry a channel name from :data:`~qmemsim.protocol.CHANNELS`.
    """
    trials = int(trials)
    if trials < 1:
        raise ConfigurationError("trials must be >= 1")
    tree = BranchTree(list(steps), n_max, initial)
    total = np.zeros(1 << len(CHANNELS), dtype=np.int64)
    for lo in range(0, trials, block):
        hi = min(lo + block, trials)
        u = trial_uniforms(master_seed, lo, hi, tree.width)
        total += np.bincount(tree.sample(u), minlength=total.size)
    return CoincidenceStats(total, watched)
