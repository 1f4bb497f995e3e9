"""Monte Carlo engine: determinism, protocol behavior, scenario grids."""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from gsnb import (
    AccrualCapped,
    DesignSpec,
    InterimAnalyzer,
    NbParams,
    SimConfig,
    TrialData,
    obrien_fleming_type,
    operating_characteristics,
    pocock_type,
    run_replication,
    sample_size,
    max_information,
    scenario_grid,
)
from gsnb.trial_sim import _rep_rng

from conftest import hf_design, ms_design


def small_null_config(reps=200, method="standard_wald", n=50, looks=3, seed=7):
    fractions = tuple((k + 1) / looks for k in range(looks))
    design = DesignSpec(
        alpha=0.025, delta=1.0, fractions=fractions,
        spending=pocock_type(0.025), exposure=AccrualCapped(1.5, 0.5),
    )
    truth = NbParams(8.0, 8.0, 3.0)
    return SimConfig(design, truth, n, n, reps=reps, seed=seed, method=method)


class TestInterimAnalyzer:
    def test_skips_look_without_new_information(self, rng):
        from conftest import make_nb_data

        data = make_nb_data(rng, n1=60, n2=60)
        analyzer = InterimAnalyzer(
            spending=pocock_type(0.025), i_max=30.0, n_looks=2
        )
        first = analyzer.analyze(data)
        assert first.tested
        second = analyzer.analyze(data)  # identical snapshot: no info gain
        assert not second.tested
        assert second.pi == 0.0
        assert second.critical == -math.inf
        assert not second.reject

    def test_fit_failure_continues(self):
        analyzer = InterimAnalyzer(spending=pocock_type(0.025), i_max=10.0, n_looks=2)
        bad = TrialData([1, 2], [0.0, 0.0], [1.0, 1.0], [0, 4])
        res = analyzer.analyze(bad)
        assert not res.tested and not res.reject and res.error

    def test_look_budget_enforced(self, rng):
        from conftest import make_nb_data

        analyzer = InterimAnalyzer(spending=pocock_type(0.025), i_max=30.0, n_looks=1)
        analyzer.analyze(make_nb_data(rng))
        with pytest.raises(ValueError):
            analyzer.analyze(make_nb_data(rng))

    def test_final_look_spends_remaining_alpha(self, rng):
        from conftest import make_nb_data

        analyzer = InterimAnalyzer(spending=pocock_type(0.025), i_max=1e4, n_looks=2)
        first = analyzer.analyze(make_nb_data(rng, n1=40, n2=40))
        second = analyzer.analyze(make_nb_data(rng, n1=80, n2=80))
        f = pocock_type(0.025)
        assert second.pi == pytest.approx(0.025 - float(f(first.info / 1e4)), abs=1e-12)

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            InterimAnalyzer(spending=pocock_type(0.025), i_max=1.0, n_looks=1, method="waldo")


class TestRunReplication:
    def test_bit_reproducible(self):
        config = small_null_config(reps=1).resolved()
        a = run_replication(config, _rep_rng(config.seed, 0))
        b = run_replication(config, _rep_rng(config.seed, 0))
        assert a == b

    def test_look_times_resolved_once(self):
        config = small_null_config().resolved()
        assert config.look_times is not None
        assert len(config.look_times) == 3
        assert config.look_times[-1] == pytest.approx(2.0, abs=1e-6)
        assert config.i_max is not None

    def test_outcome_fields(self):
        config = small_null_config(reps=1).resolved()
        out = run_replication(config, _rep_rng(config.seed, 3))
        assert any(abs(out.duration - t) < 1e-12 for t in config.look_times)
        assert 0 < out.n_recruited <= config.n1 + config.n2
        assert out.info_used > 0
        assert out.rejected == (out.stop_look is not None)


class TestOperatingCharacteristics:
    def test_deterministic_across_workers(self):
        config = small_null_config(reps=60)
        seq = operating_characteristics(config, workers=1)
        par = operating_characteristics(config, workers=3)
        assert seq == par

    def test_invariants(self):
        config = small_null_config(reps=300)
        oc = operating_characteristics(config)
        assert sum(oc.reject_prob_by_look) == pytest.approx(oc.reject_prob_total, abs=1e-12)
        assert all(0 <= p <= 1 for p in oc.reject_prob_by_look)
        if oc.reject_prob_total > 0:
            early = sum(oc.reject_prob_by_look[:-1])
            assert oc.p_stop_early * oc.reject_prob_total == pytest.approx(early, abs=1e-12)

    def test_single_look_equals_fixed_design(self):
        config = small_null_config(reps=400, looks=1, n=200)
        oc = operating_characteristics(config)
        assert len(oc.reject_prob_by_look) == 1
        assert oc.p_stop_early == 0.0
        # fixed-design Wald size is near alpha for a decent sample size
        assert oc.reject_prob_total < 0.07

    def test_boundary_null_size_large_n(self):
        # size close to alpha on the null boundary for a big trial
        design = DesignSpec(
            alpha=0.025, delta=1.0, fractions=(0.5, 1.0),
            spending=pocock_type(0.025), exposure=AccrualCapped(1.5, 0.5),
        )
        truth = NbParams(8.4, 8.4, 2.0)
        config = SimConfig(design, truth, 800, 800, reps=1200, seed=11)
        oc = operating_characteristics(config)
        se = math.sqrt(0.025 * 0.975 / config.reps)
        assert abs(oc.reject_prob_total - 0.025) <= 3.5 * se

    def test_estimated_information_tracks_theory(self):
        config = small_null_config(reps=250, n=500, looks=2, seed=5).resolved()
        oc = operating_characteristics(config)
        # nearly every trial runs to the end at this sample size under the null
        assert oc.expected_information == pytest.approx(config.i_max, rel=0.02)

    def test_csv_row_format(self):
        oc = operating_characteristics(small_null_config(reps=50))
        row = oc.to_csv_row("cell-1")
        assert row.startswith("cell-1,")
        assert len(row.split(",")) == len(oc.CSV_HEADER.split(","))


class TestPowerScenario:
    def test_ms_pocock_row(self):
        spec = ms_design()
        size = sample_size(spec, max_information(spec))
        config = SimConfig(
            spec, spec.params, size.n1, size.n2, reps=1500, seed=42,
            i_max=size.achieved_information,
        )
        oc = operating_characteristics(config)
        se = oc.mc_standard_error
        assert abs(oc.reject_prob_total - 0.8057) <= 3.5 * se
        assert oc.expected_duration_years <= spec.exposure.study_end

    def test_power_monotone_in_effect(self):
        weaker = ms_design(theta_star=0.7)
        stronger = ms_design(theta_star=0.5)
        size = sample_size(weaker, max_information(weaker))
        oc_w = operating_characteristics(
            SimConfig(weaker, weaker.params, size.n1, size.n2, reps=600, seed=3,
                      i_max=size.achieved_information)
        )
        oc_s = operating_characteristics(
            SimConfig(stronger, NbParams(0.5 * 8.4, 8.4, 0.7 * 8.4 / (0.5 * 8.4)), size.n1,
                      size.n2, reps=600, seed=3, i_max=size.achieved_information)
        )
        # same design, stronger truth: more rejections
        assert oc_s.reject_prob_total > oc_w.reject_prob_total


class TestScenarioGrid:
    def test_null_grid_counts(self):
        configs = scenario_grid(
            alpha=0.025, delta=1.0, exposure=AccrualCapped(1.5, 0.5),
            phis=(2.0, 3.0, 4.0), looks=(2, 3),
            spendings=(obrien_fleming_type(0.025), pocock_type(0.025)),
            rates=(6.0, 8.0, 10.0), sample_sizes=tuple(range(50, 231, 30)),
            reps=100, seed=1, include_fixed=True,
        )
        # 3 phi x 2 K x 7 n x 3 mu x 2 spendings, plus fixed designs
        assert len(configs) == 3 * 2 * 7 * 3 * 2 + 3 * 3 * 7
        assert all(c.truth.mu1 == c.truth.mu2 for c in configs)
        fixed = [c for c in configs if c.design.n_looks == 1]
        assert len(fixed) == 63
        assert len({c.scenario_id for c in configs}) == len(configs)

    def test_powered_grid_counts(self):
        configs = scenario_grid(
            alpha=0.025, delta=1.0, exposure=AccrualCapped(1.5, 0.5),
            phis=(2.0, 3.0), looks=(2, 3, 5), spendings=(pocock_type(0.025),),
            powers=(0.8, 0.9), theta_stars=(0.5, 0.7), mu2=8.4,
            reps=100, seed=1,
        )
        # powers x theta x phi x K for one spending: Table-4-like row count
        assert len(configs) == 2 * 2 * 2 * 3
        assert all(c.i_max is not None for c in configs)
        assert all(c.truth.theta in (0.5, 0.7) for c in configs)

    def test_mode_exclusivity(self):
        with pytest.raises(ValueError):
            scenario_grid(
                alpha=0.025, delta=1.0, exposure=AccrualCapped(1.5, 0.5),
                phis=(2.0,), looks=(2,), spendings=(pocock_type(0.025),),
                reps=10, seed=1,
            )

    def test_empty_grid(self):
        configs = scenario_grid(
            alpha=0.025, delta=1.0, exposure=AccrualCapped(1.5, 0.5),
            phis=(), looks=(2,), spendings=(pocock_type(0.025),),
            rates=(8.0,), sample_sizes=(50,), reps=10, seed=1,
        )
        assert configs == []


class TestConfigValidation:
    def test_bad_reps(self):
        with pytest.raises(ValueError):
            small_null_config(reps=0)

    def test_bad_method(self):
        with pytest.raises(ValueError):
            small_null_config(method="bogus")
