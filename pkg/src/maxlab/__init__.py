"""Numerical laboratory for damped quasilinear Maxwell systems in a box with PEC walls.

Modules
    materials      constitutive laws, differentiated tensors, Newton inversion
    grid           yee and collocated grids, mimetic operators, norms
    frame          boundary frames and normal-derivative recovery
    initial_data   admissible initial fields and compatibility checks
    dynamics       media on a grid, time-derivative recursion, commutators
    solver         Stormer-Verlet stepping, runs, the auxiliary linear system
    diagnostics    energy hierarchy, divergence residuals, energy identities
    helmholtz      vector potentials, Helmholtz decomposition, curl-div ratios
    decay          decay fits and fitted inequality constants
    config, scenarios, io, plotting, cli, verify   the experiment runner
"""

__version__ = "0.1.0"
