"""Brightness-budget calculators checked against independent oracles.

The mode-parameter Purcell factor and the unit conversions are compared
with 50-digit mpmath evaluations; the reference operating point is
rebuilt from exact rationals.
"""

from fractions import Fraction

import mpmath
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spsim import cavity
from spsim.errors import DomainError

# Exact SI defining constants (2019 redefinition), independent of the
# scipy.constants values used by the implementation.
H_PLANCK = 6.62607015e-34
C_LIGHT = 299792458.0
E_CHARGE = 1.602176634e-19


def mp_purcell(wavelength, index, quality, volume):
    with mpmath.workdps(50):
        out = (
            (mpmath.mpf(3) / (4 * mpmath.pi**2))
            * (mpmath.mpf(wavelength) / mpmath.mpf(index)) ** 3
            * (mpmath.mpf(quality) / mpmath.mpf(volume))
        )
        return float(out)


@pytest.mark.parametrize(
    "wavelength, index, quality, volume",
    [
        (9.3e-7, 3.32, 1501.0, 2.1e-20),
        (1.55e-6, 3.48, 12000.0, 8.0e-19),
        (7.8e-7, 2.0, 350.0, 4.4e-21),
    ],
)
def test_purcell_from_mode_matches_mpmath(wavelength, index, quality, volume):
    want = mp_purcell(wavelength, index, quality, volume)
    got = cavity.purcell_from_mode(wavelength, index, quality, volume)
    assert got == pytest.approx(want, rel=1e-12)


@given(
    wavelength=st.floats(1e-7, 1e-5),
    index=st.floats(1.0, 5.0),
    quality=st.floats(10.0, 1e6),
    volume=st.floats(1e-21, 1e-17),
)
def test_purcell_from_mode_property(wavelength, index, quality, volume):
    want = mp_purcell(wavelength, index, quality, volume)
    got = cavity.purcell_from_mode(wavelength, index, quality, volume)
    assert got == pytest.approx(want, rel=1e-12)


def test_purcell_from_lifetimes_reference():
    want = Fraction(800, 184)  # = 100/23
    got = cavity.purcell_from_lifetimes(800e-12, 184e-12)
    assert got == pytest.approx(float(want), rel=1e-13)


def test_eta_out_reference_roots():
    assert cavity.eta_out_from_reflectance(0.4096, "high") == pytest.approx(
        0.82, abs=1e-12
    )
    assert cavity.eta_out_from_reflectance(0.4096, "low") == pytest.approx(
        0.18, abs=1e-12
    )


@given(st.floats(0.0, 1.0))
def test_eta_out_round_trips_through_reflectance(eta):
    r = cavity.reflectance_from_eta_out(eta)
    branch = "high" if eta >= 0.5 else "low"
    assert cavity.eta_out_from_reflectance(r, branch) == pytest.approx(eta, abs=1e-12)


@given(st.floats(0.0, 1.0))
def test_eta_out_roots_are_complementary(r_min):
    high = cavity.eta_out_from_reflectance(r_min, "high")
    low = cavity.eta_out_from_reflectance(r_min, "low")
    assert high + low == pytest.approx(1.0, abs=1e-15)
    assert high >= 0.5 >= low


def test_eta_out_from_rates():
    assert cavity.eta_out_from_rates(8.2e11, 1.0e12) == pytest.approx(0.82, rel=1e-15)
    assert cavity.eta_out_from_rates(0.0, 1.0e12) == 0.0
    with pytest.raises(DomainError):
        cavity.eta_out_from_rates(2.0, 1.0)
    with pytest.raises(DomainError):
        cavity.eta_out_from_rates(1.0, 0.0)


def test_quality_factor():
    assert cavity.quality_factor(2.0, 0.001) == pytest.approx(2000.0, rel=1e-15)
    with pytest.raises(DomainError):
        cavity.quality_factor(1.0, 1.5)  # fwhm wider than the line center
    with pytest.raises(DomainError):
        cavity.quality_factor(0.0, 0.1)


def test_energy_wavelength_uses_si_constants():
    hc_over_e = H_PLANCK * C_LIGHT / E_CHARGE
    assert cavity.energy_ev_from_wavelength(9.3e-7) == pytest.approx(
        hc_over_e / 9.3e-7, rel=1e-12
    )
    assert cavity.wavelength_from_energy_ev(1.0) == pytest.approx(
        hc_over_e, rel=1e-12
    )


@given(st.floats(0.01, 100.0))
def test_energy_wavelength_round_trip(energy_ev):
    back = cavity.energy_ev_from_wavelength(cavity.wavelength_from_energy_ev(energy_ev))
    assert back == pytest.approx(energy_ev, rel=1e-14)


def test_beta_from_purcell():
    assert cavity.beta_from_purcell(0.0) == 0.0
    assert cavity.beta_from_purcell(1.0) == 0.5
    got = cavity.beta_from_purcell(float(Fraction(100, 23)))
    assert got == pytest.approx(float(Fraction(100, 123)), rel=1e-14)


def test_brightness_is_plain_product():
    assert cavity.brightness(0.5, 0.5, 0.5) == 0.125
    assert cavity.brightness(0.8130, 0.82, 0.59) == pytest.approx(0.3933, abs=1e-4)


@pytest.mark.parametrize(
    "call",
    [
        lambda: cavity.purcell_from_mode(-1.0, 3.0, 100.0, 1e-20),
        lambda: cavity.purcell_from_lifetimes(0.0, 1e-10),
        lambda: cavity.beta_from_purcell(-0.1),
        lambda: cavity.brightness(1.2, 0.5, 0.5),
        lambda: cavity.brightness(0.5, -0.1, 0.5),
        lambda: cavity.eta_out_from_reflectance(1.5, "high"),
        lambda: cavity.eta_out_from_reflectance(0.5, "middle"),
        lambda: cavity.reflectance_from_eta_out(2.0),
        lambda: cavity.energy_ev_from_wavelength(0.0),
        lambda: cavity.wavelength_from_energy_ev(-1.0),
    ],
)
def test_domain_errors(call):
    with pytest.raises(DomainError):
        call()


def reference_specs(**cavity_overrides):
    base = dict(
        center_energy=1.3332,
        linewidth_fwhm=1.3332 / 1501.0,
        wavelength_vacuum=9.3e-7,
        refractive_index=3.32,
        r_min=0.4096,
    )
    base.update(cavity_overrides)
    cav = cavity.CavitySpec(**base)
    emi = cavity.EmitterSpec(
        lifetime_cavity=184e-12, lifetime_bulk=800e-12, quantum_yield=0.59
    )
    return cav, emi


def test_brightness_budget_reference_chain():
    cav, emi = reference_specs()
    budget = cavity.brightness_budget(cav, emi, branch="high")
    assert budget.purcell == pytest.approx(float(Fraction(100, 23)), rel=1e-13)
    assert budget.beta == pytest.approx(float(Fraction(100, 123)), rel=1e-13)
    assert budget.eta_out == pytest.approx(0.82, abs=1e-12)
    assert budget.quality == pytest.approx(1501.0, rel=1e-12)
    want_b = float(Fraction(100, 123)) * 0.82 * 0.59
    assert budget.brightness == pytest.approx(want_b, rel=1e-13)
    assert budget.brightness == pytest.approx(0.3933, abs=1e-4)


def test_brightness_budget_rate_route_matches_reflectance_route():
    cav_r, emi = reference_specs()
    cav_k, _ = reference_specs(r_min=None, kappa_top=8.2e11, kappa_total=1.0e12)
    from_r = cavity.brightness_budget(cav_r, emi, branch="high")
    from_k = cavity.brightness_budget(cav_k, emi)
    assert from_k.eta_out == pytest.approx(from_r.eta_out, abs=1e-12)
    assert from_k.brightness == pytest.approx(from_r.brightness, rel=1e-12)


def test_brightness_budget_requires_branch_for_reflectance():
    cav, emi = reference_specs()
    with pytest.raises(DomainError, match="branch"):
        cavity.brightness_budget(cav, emi)


def test_brightness_budget_requires_some_eta_route():
    cav, emi = reference_specs(r_min=None)
    with pytest.raises(DomainError):
        cavity.brightness_budget(cav, emi, branch="high")


def test_cavity_spec_validation():
    good, _ = reference_specs()
    good.validate()
    with pytest.raises(DomainError):
        reference_specs(linewidth_fwhm=2.0)[0].validate()
    with pytest.raises(DomainError):
        reference_specs(refractive_index=0.5)[0].validate()
    with pytest.raises(DomainError):
        reference_specs(kappa_top=1.0)[0].validate()  # kappa_total missing
    with pytest.raises(DomainError):
        reference_specs(kappa_top=2.0, kappa_total=1.0)[0].validate()
    with pytest.raises(DomainError):
        reference_specs(mode_volume=-1.0)[0].validate()


def test_emitter_spec_validation():
    with pytest.raises(DomainError):
        cavity.EmitterSpec(2e-10, 1e-10, 0.5).validate()  # cavity slower than bulk
    with pytest.raises(DomainError):
        cavity.EmitterSpec(1e-10, 2e-10, 1.5).validate()


def test_budget_self_check_rejects_tampering():
    cav, emi = reference_specs()
    good = cavity.brightness_budget(cav, emi, branch="high")
    import dataclasses

    bad = dataclasses.replace(good, brightness=0.5)
    with pytest.raises(DomainError):
        bad.validate()
    bad = dataclasses.replace(good, beta=0.5)
    with pytest.raises(DomainError):
        bad.validate()
