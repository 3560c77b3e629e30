from ls_engine.identities import check_alternative_ls, check_two_potential
from ls_engine.quadrature import QuadratureGrid, build_grid
from ls_engine.solver import (
    LSolution,
    Partitioning,
    TMatrixElement,
    extract_amplitudes_lp,
    extract_amplitudes_mm,
    lp_amplitudes,
    lp_tmatrix_elements,
    mm_amplitudes,
    ordinary_amplitudes,
    ordinary_tmatrix,
    solve_ls,
    state_coefficients,
)

__all__ = [
    "LSolution",
    "Partitioning",
    "QuadratureGrid",
    "TMatrixElement",
    "build_grid",
    "check_alternative_ls",
    "check_two_potential",
    "extract_amplitudes_lp",
    "extract_amplitudes_mm",
    "lp_amplitudes",
    "lp_tmatrix_elements",
    "mm_amplitudes",
    "ordinary_amplitudes",
    "ordinary_tmatrix",
    "solve_ls",
    "state_coefficients",
]
