import csv
import io
import json
import math

import numpy as np
import pytest

from qmemsim import experiments
from qmemsim.exceptions import ConfigurationError
from qmemsim.experiments import (
    REFERENCE_PROBS,
    ScenarioResult,
    Verdict,
    calibrate_energies,
    exact_click_probability,
    preset_config,
    scenario_anticorrelation,
    scenario_enhancement,
    scenario_g2_storage,
    scenario_interference,
    scenario_single,
    scenario_ve_estimate,
    thermal_reference_g2,
)
from qmemsim.protocol import ProtocolConfig, energy_for_excitation

IDEAL = ProtocolConfig(det_eff_S=1.0, det_eff_AS=1.0, storage_time=0.0, retrieval1=0.0,
                       read_scatter=False)


def mzi_config(r1, r2, probe=0.0):
    return ProtocolConfig(write_energy=energy_for_excitation(0.01), probe_energy=probe,
                          retrieval1=r1, retrieval2=r2, read_scatter=False, storage_time=0.0,
                          det_eff_S=1.0, det_eff_AS=1.0)


def test_scenarios_are_deterministic():
    cfg = ProtocolConfig(master_seed=5)
    a = scenario_anticorrelation(cfg, trials=100_000)
    b = scenario_anticorrelation(cfg, trials=100_000, jobs=2)
    assert a.to_json() == b.to_json()
    assert a.to_csv() == b.to_csv()
    c = scenario_anticorrelation(cfg.replace(master_seed=6), trials=100_000)
    assert c.to_json() != a.to_json()


def test_ideal_enhancement_ratio():
    result = scenario_anticorrelation(IDEAL, trials=1_000_000)
    r = IDEAL.probe_kappa
    analytic = (1 + math.cosh(r) ** 2) / (1 + math.sinh(r) ** 2)
    row = result.rows[0]
    assert row["energy"] == 220.0
    assert abs(row["enhancement"].value - analytic) < 3 * row["enhancement"].stderr
    assert result.summary["bitwise_identical"] is True


def test_zero_probe_gives_zero_rates():
    result = scenario_anticorrelation(ProtocolConfig(write_energy=2000), energies=(0.0, 0.0),
                                      trials=200_000)
    for row in result.rows:
        for key in ("P_S3", "P_S3|S1", "P_S3|S1&AS2"):
            assert row[key].value == 0.0


def test_anticorrelation_needs_two_energies():
    with pytest.raises(ConfigurationError):
        scenario_anticorrelation(ProtocolConfig(), energies=(220.0,))
    with pytest.raises(ConfigurationError):
        scenario_anticorrelation(ProtocolConfig(), sweep_key="tau1")


def test_depletion_holds_exactly_in_oracle():
    cfg = ProtocolConfig()
    heralded = exact_click_probability(cfg, "S3", "S1")
    depleted = exact_click_probability(cfg, "S3", ("S1", "AS2"))
    assert depleted < heralded < 2 * depleted


def test_calibration_hits_target_rates():
    cfg = calibrate_energies(ProtocolConfig(), REFERENCE_PROBS.P_S1, REFERENCE_PROBS.P_S3)
    assert exact_click_probability(cfg, "S1") == pytest.approx(REFERENCE_PROBS.P_S1, rel=1e-6)
    assert exact_click_probability(cfg, "S3") == pytest.approx(REFERENCE_PROBS.P_S3, rel=1e-6)
    heralded = exact_click_probability(cfg, "S3", "S1")
    assert heralded == pytest.approx(REFERENCE_PROBS.P_S3_given_S1, rel=0.2)


# --- g2 against storage time ---------------------------------------------------

def test_g2_decays_to_one_for_long_storage():
    cfg = preset_config("g2-storage").replace(storage_time=3000.0)
    joint = exact_click_probability(cfg, "AS2", "S1")
    assert joint / exact_click_probability(cfg, "AS2") == pytest.approx(1.0, abs=1e-6)


def test_oracle_g2_at_zero_storage():
    cfg = preset_config("g2-storage").replace(storage_time=0.0)
    g2 = exact_click_probability(cfg, "AS2", "S1") / exact_click_probability(cfg, "AS2")
    assert g2 == pytest.approx(1 + 1 / 0.05, rel=0.25)
    assert g2 > 6


def test_thermal_source_is_classical():
    ref = thermal_reference_g2(preset_config("g2-storage"), trials=2_000_000)
    assert ref.value <= 2.0 + 3 * ref.stderr
    assert ref.value > 1.5


def test_g2_scan_needs_four_times():
    with pytest.raises(ConfigurationError):
        scenario_g2_storage(preset_config("g2-storage"), times=(0, 70, 140))


def test_g2_scan_reports_fit():
    result = scenario_g2_storage(preset_config("g2-storage"), times=(0, 140, 280, 420),
                                 trials=1_000_000, thermal=False)
    assert {"C", "A", "B", "residual"} <= set(result.summary)
    assert result.columns()[:4] == ["t", "eta_mem", "g2", "g2_stderr"]
    assert all(v.status != "fail" for v in result.verdicts if v.name.startswith("nonclassical"))


# --- enhancement -----------------------------------------------------------------

def test_enhancement_analytic_factors():
    # from vacuum the Stokes mean scales as 1 + n_E0
    result = scenario_enhancement(preset_config("enhancement"), trials=100_000)
    assert result.summary["analytic_factor_one_excitation"] == pytest.approx(2.0, rel=1e-12)
    assert result.summary["analytic_factor_two_excitations"] == pytest.approx(3.0, rel=1e-12)


def test_high_order_fraction():
    result = scenario_enhancement(preset_config("enhancement"), trials=100_000)
    assert result.summary["high_order_fraction_at_0.09"] == pytest.approx(0.18)
    assert result.verdict("high-order-estimate").passed


def test_enhancement_ordering_at_full_statistics():
    result = scenario_enhancement(preset_config("enhancement"), trials=3_000_000, jobs=4)
    assert result.verdict("double-herald-enhancement").passed
    assert result.verdict("read-herald-enhancement").passed


def test_strong_write_breaks_high_order_estimate():
    cfg = preset_config("enhancement").replace(write_energy=energy_for_excitation(0.3))
    result = scenario_enhancement(cfg, trials=50_000)
    assert result.verdict("high-order-estimate").status == "fail"
    assert not result.passed


# --- interference ------------------------------------------------------------------

def interference_fit(cfg, trials=1_000_000):
    betas = np.linspace(0, 2 * np.pi, 8, endpoint=False)
    return scenario_interference(cfg, betas, trials=trials, jobs=4).summary


def test_balanced_lossless_visibility_is_one():
    s = interference_fit(mzi_config(0.5, 1.0))
    assert s["V_S1"] == pytest.approx(1.0, abs=0.02)


def test_unbalanced_arms_give_two_beam_contrast():
    s = interference_fit(mzi_config(0.2, 1.0))
    assert s["V_S1"] == pytest.approx(0.8, abs=0.02)


@pytest.fixture(scope="module")
def preset_interference():
    return scenario_interference(preset_config("interference"), jobs=4)


def test_preset_visibility_band(preset_interference):
    s = preset_interference.summary
    assert 0.7 <= s["V_S1&S3"] <= 0.9
    assert s["V_S1&S3"] > s["V_E"]
    assert preset_interference.passed


def test_interference_outputs(preset_interference):
    rows = list(csv.reader(io.StringIO(preset_interference.to_csv())))
    assert rows[0] == ["beta", "R_S1", "R_S1_stderr", "R_S1&S3", "R_S1&S3_stderr"]
    assert len(rows) == 1 + len(experiments.DEFAULT_BETAS)
    data = json.loads(preset_interference.to_json())
    assert {v["name"] for v in data["verdicts"]} == {
        "herald-ordering", "above-collapse-bound[S1]", "above-collapse-bound[S1&S3]"}


@pytest.mark.parametrize("betas", [
    (0.0, 1.0, 2.0, 3.0),
    (0.0, 0.5, 1.0, 1.5, 2.0),
])
def test_phase_scan_validation(betas):
    with pytest.raises(ConfigurationError):
        scenario_interference(preset_config("interference"), betas, trials=1000)


# --- odds and ends -------------------------------------------------------------------

def test_ve_scenario():
    result = scenario_ve_estimate(REFERENCE_PROBS)
    assert result.summary["V_E"] == pytest.approx(0.551, abs=0.005)
    assert result.rows[-1] == {"quantity": "V_E", "value": result.summary["V_E"]}
    assert result.status == "pass"


def test_single_scenario_table():
    result = scenario_single(ProtocolConfig(), trials=50_000)
    assert result.rows[0] == {"pattern": "*", "fold": 0, "count": 50_000}


def test_unknown_preset():
    with pytest.raises(ConfigurationError):
        preset_config("nope")


def test_result_status_rules():
    ok = Verdict("a", "pass", 4.0, 3.0)
    maybe = Verdict("b", "inconclusive", 1.0, 3.0)
    bad = Verdict("c", "fail", -4.0, 3.0)
    assert ScenarioResult("x", {}, [], [ok, maybe]).status == "inconclusive"
    assert ScenarioResult("x", {}, [], [ok, maybe]).passed
    assert not ScenarioResult("x", {}, [], [ok, bad]).passed
    assert ScenarioResult("x", {}, [], [ok]).summary_lines()[0] == "scenario x: pass"


def test_json_has_no_nan():
    result = ScenarioResult("x", {}, [{"v": math.nan}], [Verdict("a", "inconclusive", math.nan, 3)])
    data = json.loads(result.to_json())
    assert data["rows"][0]["v"] is None
    assert data["verdicts"][0]["statistic"] is None
    assert result.to_csv().split("\r\n")[1] == '""'
