"""Physical constants and default coupling parameters, in MHz / Gauss units.

Energies are frequencies (MHz, not angular), magnetic fields are Gauss and
times are microseconds everywhere in this package.
"""

# Bohr magneton over Planck constant, MHz per Gauss.
BOHR_MAGNETON_MHZ_PER_GAUSS = 1.39962449

# Isotropic electron g factor of the defect ground state.
G_ELECTRON = 2.0028

# Electron gyromagnetic ratio implied by the default g factor, MHz/G.
GAMMA_ELECTRON_MHZ_PER_GAUSS = G_ELECTRON * BOHR_MAGNETON_MHZ_PER_GAUSS

# Nuclear gyromagnetic ratios, MHz/G.
GAMMA_C13_MHZ_PER_GAUSS = 1.0705e-3
GAMMA_N14_MHZ_PER_GAUSS = 3.077e-4

# Ground-state zero-field splitting, MHz.
D_GS_MHZ = 2880.0

# First-shell 13C hyperfine defaults, MHz.  The axial value matches the
# ~130 MHz scalar coupling seen in low-field spectra; the perpendicular
# value and the principal-axis tilt are calibrated so that at the reference
# field (140 G, 26 deg from the symmetry axis) the two lowest levels are
# split by exactly 28 MHz by the electron-Zeeman/hyperfine cross terms and
# the transitions from them to level 3 have equal strength.
A_C13_PARALLEL_MHZ = 130.0
A_C13_PERPENDICULAR_MHZ = 230.59067483981184
A_C13_AXIS_POLAR_DEG = 167.60637472941022

# On-site 14N defaults, MHz: scalar hyperfine and axial quadrupole coupling.
A_N14_MHZ = 2.0
P_N14_MHZ = 5.0
