"""Physical constants shared across the package.

Energies are expressed as frequencies (E/h) in GHz, times in microseconds,
flux in units of the flux quantum and temperatures in kelvin.
"""

#: Boltzmann constant over Planck constant, GHz per kelvin.
KB_OVER_H_GHZ_PER_K = 20.836619

#: Resistance quantum h/e^2 in ohm.
R_K_OHM = 25812.807

#: Default aluminium superconducting gap Delta/h in GHz.
DELTA_AL_GHZ = 44.0
