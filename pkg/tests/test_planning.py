"""Planning: information targets, sample sizes, calendar projections."""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from gsnb import (
    AccrualCapped,
    AccrualToEnd,
    DesignSpec,
    EqualFollowup,
    ExplicitExposures,
    calendar_curves,
    calendar_time_for_information,
    fixed_design_information,
    max_information,
    obrien_fleming_type,
    pocock_type,
    sample_size,
)
from gsnb.planning import exposure_pattern_from_json

from conftest import hf_design, ms_design


class TestExposurePatterns:
    def test_equal_followup(self):
        pat = EqualFollowup(0.5)
        assert pat.study_end == 0.5
        assert_allclose(pat.final_exposures(pat.entry_times(4)), [0.5] * 4)
        assert_allclose(pat.exposure_at(np.zeros(3), 0.2), [0.2] * 3)

    def test_accrual_capped(self):
        pat = AccrualCapped(1.5, 0.5)
        entries = pat.entry_times(3)
        assert_allclose(entries, [0.25, 0.75, 1.25])
        assert pat.study_end == 2.0
        assert_allclose(pat.final_exposures(entries), [0.5] * 3)
        assert_allclose(pat.exposure_at(entries, 1.0), [0.5, 0.25, 0.0])

    def test_accrual_to_end(self):
        pat = AccrualToEnd(1.25, 4.0)
        entries = pat.entry_times(5)
        finals = pat.final_exposures(entries)
        assert finals.min() >= 4.0 - 1.25
        assert finals.max() <= 4.0
        assert pat.exposure_at(entries, 10.0) == pytest.approx(finals)

    def test_explicit(self):
        pat = ExplicitExposures((0.5, 1.0, 2.0))
        assert pat.study_end == 2.0
        assert_allclose(pat.exposure_at(pat.entry_times(3), 0.75), [0.5, 0.75, 0.75])
        with pytest.raises(ValueError):
            pat.entry_times(2)

    def test_validation(self):
        with pytest.raises(ValueError):
            EqualFollowup(0.0)
        with pytest.raises(ValueError):
            AccrualToEnd(2.0, 1.5)

    def test_json_round_trip(self):
        for pat in (
            EqualFollowup(0.5),
            AccrualCapped(1.5, 0.5),
            AccrualToEnd(1.25, 4.0),
            ExplicitExposures((1.0, 2.0)),
        ):
            assert exposure_pattern_from_json(pat.to_json()) == pat
        with pytest.raises(ValueError):
            exposure_pattern_from_json({"kind": "bogus"})

    def test_sampled_entries_within_accrual(self, rng):
        pat = AccrualCapped(1.5, 0.5)
        entries = pat.sample_entry_times(100, rng)
        assert ((entries >= 0) & (entries <= 1.5)).all()


class TestDesignSpec:
    def test_validation(self):
        with pytest.raises(ValueError):
            ms_design(fractions=(0.5, 0.9))  # last fraction must be 1
        with pytest.raises(ValueError):
            ms_design(fractions=(0.7, 0.5, 1.0))
        with pytest.raises(ValueError):
            ms_design(theta_star=1.2)  # above delta

    def test_spending_alpha_must_match(self):
        with pytest.raises(ValueError):
            DesignSpec(
                alpha=0.05,
                delta=1.0,
                fractions=(1.0,),
                spending=pocock_type(0.025),
                exposure=EqualFollowup(0.5),
            )

    def test_planning_fields_required(self):
        spec = DesignSpec(
            alpha=0.025,
            delta=1.0,
            fractions=(1.0,),
            spending=pocock_type(0.025),
            exposure=EqualFollowup(0.5),
        )
        with pytest.raises(ValueError, match="planning requires"):
            max_information(spec)


class TestMaxInformation:
    def test_fixed_design_closed_form(self):
        assert fixed_design_information(0.025, 0.8, 0.5) == pytest.approx(16.336, abs=5e-4)

    def test_single_look_matches_closed_form(self):
        spec = ms_design(fractions=(1.0,))
        assert max_information(spec) == pytest.approx(
            fixed_design_information(0.025, 0.8, 0.5), abs=1e-6
        )

    def test_tabulated_fixed_information(self):
        assert fixed_design_information(0.025, 0.8, 0.5) == pytest.approx(16.33, abs=0.01)
        val7 = fixed_design_information(0.025, 0.8, 0.7)
        assert 61.60 - 0.15 <= val7 <= 61.74 + 0.15

    def test_independent_of_nuisance_parameters(self):
        a = max_information(ms_design(phi=2.0))
        b = max_information(ms_design(phi=5.0))
        assert a == pytest.approx(b, abs=1e-9)
        c = max_information(ms_design(phi=2.0))
        assert a == pytest.approx(c, abs=1e-12)

    def test_of_k2_theta07(self):
        # tabulated value; the analytic requirement sits within its tolerance
        assert max_information(hf_design()) == pytest.approx(61.94, abs=0.05)

    def test_power_achieved(self):
        from gsnb import LookSchedule, crossing_probability, solve_boundary

        spec = ms_design()
        i_max = max_information(spec)
        bound = solve_boundary(spec.spending, LookSchedule(spec.fractions, 1.0))
        sched = LookSchedule(tuple(w * i_max for w in spec.fractions), i_max)
        total = crossing_probability(bound.criticals, sched, spec.drift).total
        assert total == pytest.approx(0.8, abs=1e-6)

    def test_ordering_across_grid(self):
        for theta in (0.5, 0.7):
            for k in (2, 3):
                fr = tuple((i + 1) / k for i in range(k))
                fix = fixed_design_information(0.025, 0.8, theta)
                of = max_information(ms_design("obf", fractions=fr, theta_star=theta))
                po = max_information(ms_design("pocock", fractions=fr, theta_star=theta))
                assert po > of >= fix - 1e-9

    def test_degenerate_power(self):
        with pytest.raises(ValueError):
            max_information(ms_design(power=0.02))


class TestSampleSize:
    def test_ms_closed_form(self):
        spec = ms_design(fractions=(1.0,), spending="pocock")
        size = sample_size(spec, fixed_design_information(0.025, 0.8, 0.5))
        assert abs(size.n1 - 77) <= 1
        assert size.n2 == size.n1

    def test_ms_pocock_achieved_information(self):
        spec = ms_design()
        size = sample_size(spec, max_information(spec))
        assert size.n1 == 86
        assert size.achieved_information == pytest.approx(18.24, abs=0.02)

    def test_equal_followup_spec_uses_closed_form(self):
        spec = DesignSpec(
            alpha=0.025, delta=1.0, fractions=(1.0,), spending=pocock_type(0.025),
            exposure=EqualFollowup(0.5), power=0.8, theta_star=0.5, mu2=8.4, phi=2.0,
        )
        size = sample_size(spec, 16.336)
        assert size.n1 == 77
        assert size.achieved_information == pytest.approx(16.3333, abs=1e-3)

    def test_hf_staggered(self):
        of = hf_design("obf")
        size_of = sample_size(of, max_information(of))
        assert abs(size_of.n1 - 606) <= 2
        po = hf_design("pocock")
        size_po = sample_size(po, max_information(po))
        assert abs(size_po.n1 - 678) <= 2

    def test_nearest_integer_solution(self):
        # the chosen n1 brackets the continuous information solution within 1/2
        spec = hf_design()
        i_max = max_information(spec)
        size = sample_size(spec, i_max)
        below = sample_size(spec, i_max).n1 - 1

        def info_at(n):
            entries = spec.exposure.entry_times(n)
            t = spec.exposure.final_exposures(entries)
            from gsnb import information_level

            return information_level(t, t, spec.params.mu1, spec.params.mu2, spec.phi)

        assert info_at(size.n1 + 1) > i_max
        assert info_at(max(below, 1)) < i_max or below < 1

    def test_ratio_rounding(self):
        spec = ms_design()
        spec2 = DesignSpec(
            alpha=spec.alpha, delta=spec.delta, fractions=spec.fractions,
            spending=spec.spending, exposure=spec.exposure, power=spec.power,
            theta_star=spec.theta_star, mu2=spec.mu2, phi=spec.phi, ratio=1.5,
        )
        size = sample_size(spec2, 10.0)
        assert size.n2 == math.ceil(1.5 * size.n1)

    def test_zero_target_rejected(self):
        with pytest.raises(ValueError):
            sample_size(ms_design(), 0.0)

    def test_explicit_pattern_rejected(self):
        spec = DesignSpec(
            alpha=0.025, delta=1.0, fractions=(1.0,), spending=pocock_type(0.025),
            exposure=ExplicitExposures((0.5,) * 20), power=0.8, theta_star=0.5,
            mu2=8.4, phi=2.0,
        )
        with pytest.raises(ValueError, match="explicit"):
            sample_size(spec, 5.0)


class TestCalendarCurves:
    def hf_reference(self):
        # four-year study, 15-month accrual, 978 per arm, phi=5
        return hf_design(phi=5.0), 978, 978

    def test_hf_information_fraction_at_accrual_end(self):
        spec, n1, n2 = self.hf_reference()
        curves = calendar_curves(spec, n1, n2, [1.25])
        assert curves.info_frac[0] == pytest.approx(0.36, abs=0.01)

    def test_terminal_values(self):
        spec, n1, n2 = self.hf_reference()
        curves = calendar_curves(spec, n1, n2, [4.0, 5.0])
        assert_allclose(curves.info_frac, 1.0, atol=1e-12)
        assert_allclose(curves.n_frac, 1.0)
        assert_allclose(curves.followup_frac, 1.0, atol=1e-12)

    def test_curves_monotone(self):
        spec, n1, n2 = self.hf_reference()
        taus = np.linspace(0, 4.0, 81)
        curves = calendar_curves(spec, n1, n2, taus)
        for series in (curves.info_frac, curves.n_frac, curves.followup_frac):
            assert (np.diff(series) >= -1e-12).all()

    def test_ms_half_information_time(self):
        spec = ms_design("obf", phi=3.0)
        tau = calendar_time_for_information(spec, 110, 110, 0.5)
        assert tau == pytest.approx(0.84, abs=0.01)
        curves = calendar_curves(spec, 110, 110, [tau])
        assert curves.n_frac[0] * 220 == pytest.approx(122, abs=2)

    def test_fraction_one_is_study_end(self):
        spec = ms_design()
        tau = calendar_time_for_information(spec, 86, 86, 1.0)
        assert tau == pytest.approx(spec.exposure.study_end, abs=1e-6)

    def test_self_consistency(self):
        spec, n1, n2 = self.hf_reference()
        tau = calendar_time_for_information(spec, n1, n2, 0.5)
        curves = calendar_curves(spec, n1, n2, [tau])
        assert abs(curves.info_frac[0] - 0.5) < 1e-5

    def test_unreachable_fraction(self):
        spec = ms_design()
        with pytest.raises(ValueError, match="saturates"):
            calendar_time_for_information(spec, 86, 86, 0.6, i_max=1e9)

    def test_bad_fraction(self):
        with pytest.raises(ValueError):
            calendar_time_for_information(ms_design(), 86, 86, 0.0)

    def test_csv_output(self):
        import io

        spec = ms_design()
        curves = calendar_curves(spec, 86, 86, [0.0, 1.0, 2.0])
        buf = io.StringIO()
        curves.write_csv(buf)
        lines = buf.getvalue().strip().splitlines()
        assert lines[0] == "tau,info_frac,n_frac,followup_frac"
        assert len(lines) == 4
