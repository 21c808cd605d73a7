import json

import numpy as np
import pytest
from scipy import stats as sps

from localvar.adaptive import IntervalGrid
from localvar.exceptions import ConfigError, UnstableParams
from localvar.scenarios import (
    THETA_1,
    THETA_1_D4,
    THETA_2,
    THETA_2_D4,
    ScenarioSpec,
    Variant,
    block_embed,
    default_variants,
    generate_scenario,
    interpolate,
    run_study,
)
from localvar.var import VarParams, is_stable, simulate_var


def test_segment_templates():
    assert [ScenarioSpec.number(n).n_obs for n in (1, 2, 3)] == [146, 146, 200]
    assert ScenarioSpec.number(1).breaks == [84]
    assert ScenarioSpec.number(2).breaks == [84, 99]
    assert ScenarioSpec.number(3).segments() == [(96, "a"), (16, "mix"), (88, "b")]
    with pytest.raises(ConfigError):
        ScenarioSpec("zigzag")
    with pytest.raises(ConfigError):
        ScenarioSpec.number(4)


def test_regime_assignment():
    regimes = ScenarioSpec.number(2).regimes()
    assert regimes[83] is THETA_1 and regimes[84] is THETA_2
    assert regimes[98] is THETA_2 and regimes[99] is THETA_1
    smooth = ScenarioSpec.number(3).regimes()
    assert smooth[95] is THETA_1
    assert smooth[111] == THETA_2                    # weight 16/16
    assert smooth[112] is THETA_2
    np.testing.assert_allclose(smooth[103].lags, interpolate(THETA_1, THETA_2, 0.5).lags)


def test_interpolation_endpoints():
    assert interpolate(THETA_1, THETA_2, 0.0) == THETA_1
    assert interpolate(THETA_1, THETA_2, 1.0) == THETA_2
    mid = interpolate(THETA_1, THETA_2, 0.25)
    np.testing.assert_allclose(mid.sigma, 0.75 * THETA_1.sigma + 0.25 * THETA_2.sigma)


def test_unstable_regime_rejected():
    bad = VarParams(THETA_1.intercept, [[[1.05, 0], [0, 0.3]]], THETA_1.sigma)
    with pytest.raises(UnstableParams):
        ScenarioSpec("single-break", theta_b=bad)


def test_four_dimensional_defaults():
    for theta in (THETA_1_D4, THETA_2_D4):
        assert theta.d == 4 and is_stable(theta)
    np.testing.assert_allclose(THETA_1_D4.lags[0][:2, :2], THETA_1.lags[0])
    np.testing.assert_allclose(THETA_1_D4.lags[0][:2, 2:], 0.05)
    assert block_embed(THETA_2) == THETA_2_D4


def test_generation_is_deterministic_and_batch_free():
    spec = ScenarioSpec.number(1, n_replications=5, seed=3)
    a = generate_scenario(spec, 4)
    b = generate_scenario(spec, 4)
    np.testing.assert_array_equal(a.values, b.values)
    assert a.n_obs == 146 and a.label(0) == "1"
    assert not np.array_equal(a.values, generate_scenario(spec, 3).values)
    with pytest.raises(ConfigError):
        generate_scenario(spec, 5)


def test_no_break_looks_homogeneous():
    spec = ScenarioSpec("single-break", THETA_1, THETA_1, n_replications=200, seed=4)
    scen = np.array([generate_scenario(spec, i).values[-62:, 0].mean() for i in range(200)])
    homo = np.array([simulate_var(THETA_1, 146, seed=1000 + i).values[-62:, 0].mean()
                     for i in range(200)])
    assert sps.ttest_ind(scen, homo).pvalue > 0.05
    assert sps.levene(scen, homo).pvalue > 0.05


def test_break_moves_mean_in_predicted_direction():
    spec = ScenarioSpec.number(1, n_replications=50, seed=5)
    mu_a, mu_b = THETA_1.unconditional_mean(), THETA_2.unconditional_mean()
    diffs = np.array([generate_scenario(spec, i).values[100:].mean(axis=0)
                      - generate_scenario(spec, i).values[20:84].mean(axis=0) for i in range(50)])
    assert np.all(np.sign(diffs.mean(axis=0)) == np.sign(mu_b - mu_a))


def test_lagged_state_is_continuous():
    spec = ScenarioSpec.number(1, n_replications=1, seed=6)
    y = generate_scenario(spec, 0).values
    # row 84 equals theta_2 applied to row 83 plus a shock of plausible size
    resid = y[84] - THETA_2.intercept - THETA_2.lags[0] @ y[83]
    assert np.all(np.abs(resid) < 6 * np.sqrt(np.diag(THETA_2.sigma)))


@pytest.fixture(scope="module")
def small_study(small_bank):
    spec = ScenarioSpec.number(1, n_replications=40, seed=7)
    variants = default_variants() + [Variant("rho_0.088", 0.088)]
    return run_study(spec, bank=small_bank, variants=variants,
                     rho_grid=[0.01, 0.05, 0.088, 0.2, 0.5])


def test_study_shapes_and_ranges(small_study):
    s = small_study
    assert s.variants == ["optimal", "modal", "rho_0.5", "optimal_unrestricted", "rho_0.088"]
    assert s.k_hat["optimal"].shape == (40, 100)
    assert s.tau_rel[0] == 1 and s.taus[0] == 46
    for name in s.variants:
        med = s.median_k(name)
        assert set(np.unique(med)) <= set(range(1, 7))
        q05, q50, q95 = s.lr_bands(name)
        ok = np.isfinite(q05)
        assert np.all(q05[ok] <= q50[ok]) and np.all(q50[ok] <= q95[ok])
    assert s.modal_rho in (0.01, 0.05, 0.088, 0.2, 0.5)
    assert np.all(s.rho["rho_0.5"] == 0.5)


def test_study_is_deterministic(small_bank):
    spec = ScenarioSpec.number(1, n_replications=6, seed=8)
    a = run_study(spec, bank=small_bank, rho_grid=[0.05, 0.5])
    b = run_study(spec, bank=small_bank, rho_grid=[0.05, 0.5], n_jobs=2)
    for name in a.variants:
        np.testing.assert_array_equal(a.k_hat[name], b.k_hat[name])
        np.testing.assert_array_equal(a.lr_next[name], b.lr_next[name])


def test_unrestricted_recovers_no_slower(small_study):
    s = small_study
    after = (s.tau_rel > 39) & (s.tau_rel <= 100)
    gap = s.mean_k("optimal_unrestricted")[after] - s.mean_k("optimal")[after]
    # restriction only holds windows down after a detected break
    assert np.all(gap >= 0)


def test_split_parts(small_study):
    assert small_study.part("homogeneous").tolist() == list(range(1, 39))
    assert small_study.part("heterogeneous")[[0, -1]].tolist() == [39, 84]
    with pytest.raises(ConfigError):
        small_study.part("middle")
    q = small_study.step_quantiles("homogeneous")
    assert q["step"].tolist() == list(range(2, 8))


def test_write_outputs(tmp_path, small_study):
    manifest = small_study.write(tmp_path, prefix="s1")
    assert manifest["spec_fingerprint"] == small_study.spec.fingerprint()
    for name in manifest["files"]:
        assert (tmp_path / name).stat().st_size > 0
    doc = json.loads((tmp_path / "s1_manifest.json").read_text())
    assert doc["discarded_initial_rows"] == 46


def test_variant_names_must_be_unique(small_bank):
    spec = ScenarioSpec.number(1, n_replications=2)
    with pytest.raises(ConfigError):
        run_study(spec, bank=small_bank, variants=[Variant("a", 0.1), Variant("a", 0.2)])
    with pytest.raises(ConfigError):
        run_study(spec, bank=small_bank, variants=[Variant("a", "best")])
