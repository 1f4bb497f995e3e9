import numpy as np
import pytest

from gsnb import (
    AccrualCapped,
    AccrualToEnd,
    DesignSpec,
    PatientRateModel,
    TrialData,
    obrien_fleming_type,
    pocock_type,
)


@pytest.fixture
def rng():
    return np.random.default_rng(2024_08)


def make_nb_data(rng, n1=50, n2=50, mu1=4.2, mu2=8.4, phi=2.0, t_range=(0.2, 1.5)):
    """Random two-arm dataset with per-patient exposures."""
    t1 = rng.uniform(*t_range, n1)
    t2 = rng.uniform(*t_range, n2)
    lam1 = PatientRateModel(mu1, phi).sample_rates(rng, n1)
    lam2 = PatientRateModel(mu2, phi).sample_rates(rng, n2)
    return TrialData.from_arm_arrays(t1, rng.poisson(lam1 * t1), t2, rng.poisson(lam2 * t2))


def ms_design(spending="pocock", fractions=(0.5, 1.0), phi=2.0, theta_star=0.5, power=0.8):
    """Design used by the lesion-count style scenarios (half-year follow-up)."""
    f = pocock_type(0.025) if spending == "pocock" else obrien_fleming_type(0.025)
    return DesignSpec(
        alpha=0.025,
        delta=1.0,
        fractions=fractions,
        spending=f,
        exposure=AccrualCapped(1.5, 0.5),
        power=power,
        theta_star=theta_star,
        mu2=8.4,
        phi=phi,
    )


def hf_design(spending="obf", fractions=(0.5, 1.0), phi=2.0, theta_star=0.7, power=0.8):
    """Design used by the hospitalization style scenarios (staggered, 4-year study)."""
    f = pocock_type(0.025) if spending == "pocock" else obrien_fleming_type(0.025)
    return DesignSpec(
        alpha=0.025,
        delta=1.0,
        fractions=fractions,
        spending=f,
        exposure=AccrualToEnd(1.25, 4.0),
        power=power,
        theta_star=theta_star,
        mu2=0.125,
        phi=phi,
    )
