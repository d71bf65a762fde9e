"""Numerical tolerances used across the package.

Every equality check in the solvers and verifiers reads its tolerance from
``TOLERANCES`` so one table documents the whole numeric policy. The CLI
``--tol NAME=VALUE`` flag overrides entries by name.
"""

TOLERANCES = {
    # Price iteration drops a user when a/p - g falls below -demand_guard.
    "demand_guard": 1e-12,
    # Relative tolerance for market clearing (sum of demands == supply).
    "clearing": 1e-8,
    # Relative tolerance for p1*g_l1 == p2*g_l2 at a fractional equilibrium.
    "indifference": 1e-9,
    # Bisection width on the split fraction of the undecided user.
    "epsilon": 1e-12,
    # Default tolerance for check_kkt.
    "kkt": 1e-7,
    # Price agreement between the removal iteration and the bisection oracle.
    "price": 1e-9,
    # Relative agreement between the equilibrium and the SYSTEM optimum.
    "allocation": 1e-6,
}

# Users whose positions produce alpha values closer than this are treated as tied.
ALPHA_TIE_RTOL = 1e-12

# Hard cap on the exhaustive stability oracle (2^I partitions above 12 users).
ORACLE_MAX_USERS = 20
ORACLE_FULL_SCAN_MAX_USERS = 12

# Significant digits written to JSON/CSV outputs.
OUTPUT_DIGITS = 12
