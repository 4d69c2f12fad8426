"""Photon-budget calculators for a cavity-coupled quantum-dot emitter.

Closed-form relations between the measurable cavity/emitter quantities and
the source brightness:

    Q      = E / dE            (equivalently lambda / d_lambda)
    eta_out: R_min = (1 - 2 eta_out)^2, two roots
    F_p    = tau_bulk / tau_cavity
    F_p    = (3 / 4 pi^2) (lambda / n)^3 (Q / V)
    beta   = F_p / (F_p + 1)
    b      = beta * eta_out * q_qd

Everything here is a pure function of its arguments; the dataclasses only
bundle validated parameters for the budget builder and the CLI.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from scipy.constants import c as _C_LIGHT
from scipy.constants import e as _E_CHARGE
from scipy.constants import h as _H_PLANCK

from .errors import DomainError

__all__ = [
    "CavitySpec",
    "EmitterSpec",
    "BrightnessBudget",
    "quality_factor",
    "eta_out_from_reflectance",
    "eta_out_from_rates",
    "reflectance_from_eta_out",
    "purcell_from_lifetimes",
    "purcell_from_mode",
    "beta_from_purcell",
    "brightness",
    "brightness_budget",
    "energy_ev_from_wavelength",
    "wavelength_from_energy_ev",
]


def energy_ev_from_wavelength(wavelength_m: float) -> float:
    """Photon energy in eV for a vacuum wavelength in metres."""
    if wavelength_m <= 0.0:
        raise DomainError(f"wavelength must be positive, got {wavelength_m}")
    return _H_PLANCK * _C_LIGHT / (wavelength_m * _E_CHARGE)


def wavelength_from_energy_ev(energy_ev: float) -> float:
    """Vacuum wavelength in metres for a photon energy in eV."""
    if energy_ev <= 0.0:
        raise DomainError(f"energy must be positive, got {energy_ev}")
    return _H_PLANCK * _C_LIGHT / (energy_ev * _E_CHARGE)


def quality_factor(center: float, fwhm: float) -> float:
    """Resonator quality factor from a line center and its FWHM.

    Parameters
    ----------
    center, fwhm : float
        Line center and full width at half maximum, both in the same
        unit.  Energy (eV) and wavelength (m) inputs give the same
        ratio, so either domain may be used directly.

    Returns
    -------
    float
        ``center / fwhm``.
    """
    if center <= 0.0 or fwhm <= 0.0:
        raise DomainError(f"center and fwhm must be positive, got ({center}, {fwhm})")
    if fwhm >= center:
        raise DomainError(f"fwhm {fwhm} must be smaller than center {center}")
    return center / fwhm


def eta_out_from_reflectance(r_min: float, branch: str) -> float:
    """Top-mirror extraction efficiency from the reflection-dip minimum.

    Solves ``R_min = (1 - 2 eta_out)^2``.  The equation has two roots;
    ``branch`` selects which physical regime applies:

    * ``"low"``  -> ``(1 - sqrt(R_min)) / 2``  (under-coupled, eta <= 0.5)
    * ``"high"`` -> ``(1 + sqrt(R_min)) / 2``  (over-coupled, eta >= 0.5)

    The caller must know the coupling regime; it cannot be inferred from
    the dip depth alone.
    """
    if not 0.0 <= r_min <= 1.0:
        raise DomainError(f"r_min must lie in [0, 1], got {r_min}")
    root = math.sqrt(r_min)
    if branch == "low":
        return (1.0 - root) / 2.0
    if branch == "high":
        return (1.0 + root) / 2.0
    raise DomainError(f"branch must be 'low' or 'high', got {branch!r}")


def reflectance_from_eta_out(eta_out: float) -> float:
    """Forward evaluation of the reflection-dip minimum ``(1 - 2 eta)^2``."""
    if not 0.0 <= eta_out <= 1.0:
        raise DomainError(f"eta_out must lie in [0, 1], got {eta_out}")
    return (1.0 - 2.0 * eta_out) ** 2


def eta_out_from_rates(kappa_top: float, kappa_total: float) -> float:
    """Extraction efficiency as the escape-rate ratio ``kappa_top / kappa_total``."""
    if kappa_total <= 0.0:
        raise DomainError(f"kappa_total must be positive, got {kappa_total}")
    if not 0.0 <= kappa_top <= kappa_total:
        raise DomainError(
            f"kappa_top must lie in [0, kappa_total], got ({kappa_top}, {kappa_total})"
        )
    return kappa_top / kappa_total


def purcell_from_lifetimes(tau_bulk: float, tau_cavity: float) -> float:
    """Purcell factor from the lifetime shortening ``tau_bulk / tau_cavity``."""
    if tau_bulk <= 0.0 or tau_cavity <= 0.0:
        raise DomainError(f"lifetimes must be positive, got ({tau_bulk}, {tau_cavity})")
    return tau_bulk / tau_cavity


def purcell_from_mode(
    wavelength: float, index: float, quality: float, mode_volume: float
) -> float:
    """Purcell factor from cavity mode parameters.

    Evaluates ``(3 / 4 pi^2) * (wavelength / index)^3 * (quality / mode_volume)``
    with the vacuum wavelength in metres and the mode volume in m^3.
    """
    if min(wavelength, index, quality, mode_volume) <= 0.0:
        raise DomainError(
            "all mode parameters must be positive, got "
            f"({wavelength}, {index}, {quality}, {mode_volume})"
        )
    return (3.0 / (4.0 * math.pi**2)) * (wavelength / index) ** 3 * (quality / mode_volume)


def beta_from_purcell(purcell: float) -> float:
    """Fraction of emission funneled into the cavity mode, ``F_p / (F_p + 1)``."""
    if purcell < 0.0:
        raise DomainError(f"purcell must be non-negative, got {purcell}")
    return purcell / (purcell + 1.0)


def brightness(beta: float, eta_out: float, q_qd: float) -> float:
    """First-lens source brightness, the product ``beta * eta_out * q_qd``."""
    for name, value in (("beta", beta), ("eta_out", eta_out), ("q_qd", q_qd)):
        if not 0.0 <= value <= 1.0:
            raise DomainError(f"{name} must lie in [0, 1], got {value}")
    return beta * eta_out * q_qd


@dataclass(frozen=True)
class CavitySpec:
    """Measured cavity parameters.

    ``kappa_top``/``kappa_total`` and ``r_min`` are alternative routes to
    the extraction efficiency; ``mode_volume`` enables the mode-parameter
    route to the Purcell factor.  Unused optional entries stay ``None``.
    """

    center_energy: float          # eV
    linewidth_fwhm: float         # eV
    wavelength_vacuum: float      # m
    refractive_index: float
    kappa_top: float | None = None      # 1/s
    kappa_total: float | None = None    # 1/s
    r_min: float | None = None
    mode_volume: float | None = None    # m^3

    def validate(self) -> None:
        if self.center_energy <= 0.0:
            raise DomainError(f"center_energy must be positive, got {self.center_energy}")
        if not 0.0 < self.linewidth_fwhm < self.center_energy:
            raise DomainError(
                f"linewidth_fwhm must lie in (0, center_energy), got {self.linewidth_fwhm}"
            )
        if self.wavelength_vacuum <= 0.0:
            raise DomainError(
                f"wavelength_vacuum must be positive, got {self.wavelength_vacuum}"
            )
        if self.refractive_index < 1.0:
            raise DomainError(
                f"refractive_index must be >= 1, got {self.refractive_index}"
            )
        if self.r_min is not None and not 0.0 <= self.r_min <= 1.0:
            raise DomainError(f"r_min must lie in [0, 1], got {self.r_min}")
        if (self.kappa_top is None) != (self.kappa_total is None):
            raise DomainError("kappa_top and kappa_total must be given together")
        if self.kappa_total is not None:
            if not 0.0 <= self.kappa_top <= self.kappa_total:
                raise DomainError(
                    "need 0 <= kappa_top <= kappa_total, got "
                    f"({self.kappa_top}, {self.kappa_total})"
                )
        if self.mode_volume is not None and self.mode_volume <= 0.0:
            raise DomainError(f"mode_volume must be positive, got {self.mode_volume}")

    @property
    def quality(self) -> float:
        return quality_factor(self.center_energy, self.linewidth_fwhm)


@dataclass(frozen=True)
class EmitterSpec:
    """Emitter lifetimes and intrinsic quantum yield."""

    lifetime_cavity: float        # s
    lifetime_bulk: float          # s
    quantum_yield: float          # bright-state duty factor q in [0, 1]

    def validate(self) -> None:
        if not 0.0 < self.lifetime_cavity <= self.lifetime_bulk:
            raise DomainError(
                "need 0 < lifetime_cavity <= lifetime_bulk, got "
                f"({self.lifetime_cavity}, {self.lifetime_bulk})"
            )
        if not 0.0 <= self.quantum_yield <= 1.0:
            raise DomainError(
                f"quantum_yield must lie in [0, 1], got {self.quantum_yield}"
            )


@dataclass(frozen=True)
class BrightnessBudget:
    """Brightness decomposition ``brightness = beta * eta_out * q_qd``."""

    beta: float
    eta_out: float
    q_qd: float
    purcell: float
    quality: float
    brightness: float

    def validate(self) -> None:
        for name in ("beta", "eta_out", "q_qd", "brightness"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise DomainError(f"{name} must lie in [0, 1], got {value}")
        if self.purcell < 0.0 or self.quality <= 0.0:
            raise DomainError("purcell must be >= 0 and quality > 0")
        product = self.beta * self.eta_out * self.q_qd
        if abs(product - self.brightness) > 1e-12 * max(abs(product), 1e-300):
            raise DomainError("brightness does not equal beta * eta_out * q_qd")
        expected_beta = self.purcell / (self.purcell + 1.0)
        if abs(expected_beta - self.beta) > 1e-12 * max(abs(expected_beta), 1e-300):
            raise DomainError("beta does not equal purcell / (purcell + 1)")


def brightness_budget(
    cavity: CavitySpec, emitter: EmitterSpec, branch: str | None = None
) -> BrightnessBudget:
    """Assemble the full brightness budget from validated specs.

    The extraction efficiency comes from the escape rates when both are
    given, otherwise from ``r_min`` (which requires an explicit
    ``branch``).  The Purcell factor comes from the lifetime ratio; the
    mode-parameter route is used only when ``mode_volume`` is given and
    serves as a cross-check there, not a replacement.
    """
    cavity.validate()
    emitter.validate()
    if cavity.kappa_total is not None:
        eta = eta_out_from_rates(cavity.kappa_top, cavity.kappa_total)
    elif cavity.r_min is not None:
        if branch is None:
            raise DomainError(
                "r_min admits two roots; pass branch='low' or branch='high'"
            )
        eta = eta_out_from_reflectance(cavity.r_min, branch)
    else:
        raise DomainError("need either both kappas or r_min to fix eta_out")
    purcell = purcell_from_lifetimes(emitter.lifetime_bulk, emitter.lifetime_cavity)
    beta = beta_from_purcell(purcell)
    quality = cavity.quality
    b = brightness(beta, eta, emitter.quantum_yield)
    budget = BrightnessBudget(
        beta=beta,
        eta_out=eta,
        q_qd=emitter.quantum_yield,
        purcell=purcell,
        quality=quality,
        brightness=b,
    )
    budget.validate()
    return budget
