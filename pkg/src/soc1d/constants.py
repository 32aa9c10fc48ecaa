"""Physical constants in the meV / nm / T / K unit system used throughout."""

HBAR2_OVER_ME = 76.1996  # hbar^2 / m_e  [meV nm^2]
MU_B = 0.0578838  # Bohr magneton  [meV / T]
K_B = 0.0861733  # Boltzmann constant  [meV / K]
