"""Reference parameter sets used by the figure-reproduction experiments.

Each factory returns fresh immutable parameter records; keyword arguments
override individual values.  Where a source value is ambiguous the choice
made here is recorded in the decisions ledger kept with the project notes.
"""

from __future__ import annotations

import numpy as np

from .models import (
    BecParams,
    CavityParams,
    MechanicalParams,
    chi_for_rate,
)

TWO_PI = 2 * np.pi


def optomech_pair(temperature=0.4, detuning_ratio=0.05, mass=5e-12, gamma=10.0):
    """Photon-subtraction set: 10 MHz mirror in a 1 mm, F = 1e4 cavity
    pumped with 20 mW at omega_c / 2 pi = 4e14 Hz; detuning in units of
    omega_m."""
    omega_m = TWO_PI * 10e6
    mech = MechanicalParams(omega_m=omega_m, mass=mass, gamma=gamma, temperature=temperature)
    cav = CavityParams(length=1e-3, pump_power=20e-3, finesse=1e4,
                       omega_c=TWO_PI * 4e14, detuning=detuning_ratio * omega_m)
    return mech, cav


def spectra_set(detuning_over_kappa=0.5, zeta=0.0, omega_b_ratio=1.0, temperature=300.0):
    """Noise-spectrum set: 25 mm cavity, 15 ng mirror at 275 kHz, Q = 1e5,
    kappa / 2 pi = 5 MHz, 4 mW at 1064 nm."""
    omega_m = TWO_PI * 275e3
    mech = MechanicalParams.from_quality(omega_m, 15e-12, 1e5, temperature)
    kappa = TWO_PI * 5e6
    cav = CavityParams(length=25e-3, pump_power=4e-3, pump_wavelength=1064e-9,
                       kappa_override=kappa, detuning=detuning_over_kappa * kappa)
    bec = BecParams(omega_b=omega_b_ratio * omega_m, zeta=zeta)
    return mech, cav, bec


def spectra_reference_zeta(mech, cav, factor=0.7):
    """``factor * chi * sqrt(hbar / m w_m)``, the atomic rate of the spectra figure."""
    return factor * cav.chi_coefficient * mech.length_unit


def hybrid_set(detuning_ratio=2.0, temperature=10e-6, rate=100.0, zeta=None,
               omega_b_ratio=1.0, pump_power=50e-3):
    """Hybrid entanglement set: 3 MHz mirror (m = 50 ng, Q = 3e4) in a
    1 mm, F = 1e4 cavity pumped with 50 mW at 1064 nm; symmetric
    single-photon couplings ``G = zeta = rate``."""
    omega_m = TWO_PI * 3e6
    mech = MechanicalParams.from_quality(omega_m, 50e-12, 3e4, temperature)
    cav = CavityParams(length=1e-3, pump_power=pump_power, pump_wavelength=1064e-9,
                       finesse=1e4, detuning=detuning_ratio * omega_m,
                       chi=chi_for_rate(rate, mech))
    bec = BecParams(omega_b=omega_b_ratio * omega_m, zeta=rate if zeta is None else zeta)
    return mech, cav, bec


def control_set(detuning_ratio=2.7, **kw):
    """Time-resolved control set: the hybrid set at Delta = 2.7 omega_m."""
    return hybrid_set(detuning_ratio=detuning_ratio, **kw)
