"""Physical constants (exact 2019 SI values where defined)."""

PLANCK_H = 6.62607015e-34          # J s
BOLTZMANN_K = 1.380649e-23         # J / K
ELEMENTARY_CHARGE = 1.602176634e-19  # C
FLUX_QUANTUM = PLANCK_H / (2.0 * ELEMENTARY_CHARGE)  # Wb, ~2.067834e-15
