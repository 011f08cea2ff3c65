import math

import numpy as np
import pytest

from qmemsim import fock, oracle
from qmemsim.exceptions import ConfigurationError
from qmemsim.protocol import ProtocolConfig, build_schedule


def tmsv(r, n_max=6):
    rho = oracle.DensityMatrix.vacuum(["Atom", "S1"], n_max)
    return oracle.evolve_exact(rho, oracle.two_mode_squeeze_unitary("Atom", "S1", n_max, r))


@pytest.mark.parametrize("eta", [0.0, 0.3, 0.822, 1.0])
def test_loss_scales_mean(eta):
    s = fock.apply_two_mode_squeeze(fock.vacuum(["Atom", "S1"], 4), "Atom", "S1", 0.4)
    rho = oracle.DensityMatrix.from_state_vector(s)
    n0 = rho.expected_photon_number("Atom")
    out = oracle.evolve_exact(rho, oracle.loss_channel("Atom", 4, eta))
    assert out.expected_photon_number("Atom") == pytest.approx(eta * n0, abs=1e-13)
    assert out.expected_photon_number("S1") == pytest.approx(n0, abs=1e-13)


@pytest.mark.parametrize("r", [0.1575, 0.2, 0.25])
def test_tmsv_pair_series(r):
    # percent-level excitation; at n_max = 6 the cutoff error grows past 1e-8 near r = 0.3
    dist = tmsv(r).number_distribution(["Atom", "S1"])
    for n in range(5):
        expected = math.tanh(r) ** (2 * n) / math.cosh(r) ** 2
        assert dist[n, n] == pytest.approx(expected, abs=1e-8)


def test_identity_channel():
    rho = tmsv(0.2, 3)
    ident = oracle.Unitary(("Atom", "S1"), np.eye(16, dtype=complex))
    np.testing.assert_allclose(oracle.evolve_exact(rho, ident).tensor, rho.tensor, atol=1e-15)
    unit = oracle.evolve_exact(rho, oracle.loss_channel("S1", 3, 1.0))
    np.testing.assert_allclose(unit.tensor, rho.tensor, atol=1e-15)


@pytest.mark.parametrize("channel", [
    oracle.loss_channel("Atom", 5, 0.37),
    oracle.dephase_channel("Atom", 5, 0.2),
    oracle.phase_mixture_channel("Atom", 5, (0.1, -0.4, 1.0), (0.2, 0.5, 0.3)),
])
def test_kraus_completeness(channel):
    assert channel.completeness_defect() < 1e-10


def test_density_matrix_invariants_after_protocol_steps():
    rho = tmsv(0.3, 4)
    rho = oracle.evolve_exact(rho, oracle.loss_channel("Atom", 4, 0.5))
    rho = rho.with_modes(["AS2"])
    rho = oracle.evolve_exact(rho, oracle.beam_splitter_unitary("Atom", "AS2", 4, 0.5))
    rho.check()
    m = rho.matrix
    assert np.abs(m - m.conj().T).max() < 1e-12
    assert np.linalg.eigvalsh(m).min() > -1e-9
    assert rho.trace() <= 1 + 1e-12


def test_unitary_defect_is_reported():
    u = oracle.two_mode_squeeze_unitary("Atom", "S1", 3, 0.2)
    assert u.defect < 1e-12


def test_dimension_mismatch():
    rho = oracle.DensityMatrix.vacuum(["Atom", "S1"], 3)
    bad = oracle.two_mode_squeeze_unitary("Atom", "S1", 4, 0.1)
    with pytest.raises(ConfigurationError):
        oracle.evolve_exact(rho, bad)


def test_size_limits():
    with pytest.raises(ConfigurationError):
        oracle.DensityMatrix.vacuum(["Atom"], oracle.MAX_N + 1)
    with pytest.raises(ConfigurationError):
        oracle.DensityMatrix.vacuum(["Atom", "S1", "S2", "S3", "AS2"], 2)


def test_click_vacuum():
    rho = oracle.DensityMatrix.vacuum(["S1"], 3)
    assert oracle.click_probabilities_exact(rho, [("S1", 0.5, 0.0)])[(False,)] == 1.0


def test_click_single_photon():
    rho = oracle.DensityMatrix.from_state_vector(fock.basis_state(["S1"], {"S1": 1}))
    p = oracle.click_probabilities_exact(rho, [("S1", 0.071, 0.0)])
    assert p[(True,)] == pytest.approx(0.071, abs=1e-15)


def test_click_distribution_is_valid():
    rho = tmsv(0.3, 5)
    dist = oracle.click_probabilities_exact(rho, [("Atom", 0.4, 0.01), ("S1", 0.9, 0.0)])
    assert min(dist.values()) >= 0
    assert sum(dist.values()) == pytest.approx(1.0, abs=1e-10)


def test_duplicate_detectors():
    with pytest.raises(ConfigurationError):
        oracle.click_probabilities_exact(tmsv(0.1, 3), [("S1", 0.5, 0), ("S1", 0.4, 0)])


def test_detect_and_trace_matches_pattern_probabilities():
    rho = tmsv(0.3, 5)
    click, no_click = oracle.detect_and_trace(rho, "S1", 0.3, 0.02)
    p = oracle.click_probabilities_exact(rho, [("S1", 0.3, 0.02)])
    assert click.trace() == pytest.approx(p[(True,)], abs=1e-13)
    assert no_click.trace() == pytest.approx(p[(False,)], abs=1e-13)


def test_schedule_distribution_sums_to_one():
    dist = oracle.run_schedule_exact(build_schedule(ProtocolConfig()))
    assert sum(dist.values()) == pytest.approx(1.0, abs=1e-12)
    assert min(dist.values()) >= 0


@pytest.mark.parametrize("cfg", [
    ProtocolConfig(),
    ProtocolConfig(det_eff_S=0.5, det_eff_AS=0.3, dark_prob_AS=0.01, retrieval1=0.4),
])
def test_measurement_order_invariance_is_exact(cfg):
    a = oracle.run_schedule_exact(build_schedule(cfg.replace(delay_mode="2m")))
    b = oracle.run_schedule_exact(build_schedule(cfg.replace(delay_mode="50m")))
    assert a.keys() == b.keys()
    for k in a:
        assert a[k] == pytest.approx(b[k], abs=1e-15)


def test_default_config_singles_rate():
    # oracle value of P(S1) at 2.5 % excitation and 7.1 % detection
    dist = oracle.run_schedule_exact(build_schedule(ProtocolConfig()))
    p_s1 = sum(p for m, p in dist.items() if m & 1)
    assert p_s1 == pytest.approx(0.0017718433708848744, rel=1e-12)
    assert p_s1 == pytest.approx(0.025 / 1.025 * 0.071, rel=0.03)
