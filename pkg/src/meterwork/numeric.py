"""Single numeric-tolerance policy shared by every validating constructor and check.

Internal units are hbar = k_B = 1 throughout the package.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class NumericPolicy:
    """Tolerances used by structural invariants.

    All comparisons are absolute (max-entry or scalar) unless noted.
    """

    hermitian_tol: float = 1e-12      # max |M - M^dag| entry
    unitary_tol: float = 1e-10        # max |M^dag M - I| entry
    projector_tol: float = 1e-10      # max |M^2 - M| entry
    psd_tol: float = 1e-10            # eigenvalue floor: lambda >= -psd_tol
    trace_tol: float = 1e-12          # |tr(rho) - trace_weight|
    norm_tol: float = 1e-12           # | ||ket|| - 1 |
    preservation_tol: float = 1e-10   # norm/trace drift allowed in evolve
    imag_tol: float = 1e-10           # imaginary residue of expectation values
    completeness_tol: float = 1e-10   # max |sum of projectors - I| entry
    coherence_tol: float = 1e-10      # off-sector coherence allowed at event reading
    support_tol: float = 1e-10        # support containment for relative entropy
    marginal_tol: float = 1e-12       # marginal-invariance checks in the scheme
    outcome_floor: float = 1e-14      # probability below which an outcome counts as absent
    max_dim: int = 4096               # desk-scale total dimension budget


DEFAULT_POLICY = NumericPolicy()
