"""Numerical tolerances pinned in one place.

Every threshold used by the toolkit is a named constant here so that test
suites and reports can reference the exact values in force.
"""

# A singular value counts as nonzero when it exceeds this fraction of the
# largest singular value.
SINGULAR_VALUE_RTOL = 1e-10

# Eigenvalue-modulus slack for the antistability test |lambda| >= 1.
EIG_MODULUS_TOL = 1e-9

# Relative SVD threshold for complex rank tests (PBH, transmission rank).
RANK_RTOL = 1e-9

# Relative tolerance for the minimal-polynomial dependence test and for
# coefficient-wise polynomial comparison.
MINPOLY_RTOL = 1e-9

# Spectral-radius slack: Schur means radius < 1 - SCHUR_TOL.
SCHUR_TOL = 1e-9

# A strict matrix inequality is accepted when its smallest slack eigenvalue
# exceeds this margin.
MARGIN_MIN = 1e-7

# A non-strict matrix inequality may dip this far below zero before the
# certificate is rejected.
PSD_TOL = 1e-7

# Box bound on every scalar decision variable of a feasibility program.
BOX_BOUND = 1e6

# Riccati fixed-point iteration: convergence threshold and budget.
RICCATI_TOL = 1e-10
RICCATI_MAX_ITER = 10_000

# Eigenvalue separation below which a Sylvester equation is declared singular.
SPECTRA_GAP_TOL = 1e-8
