"""Low-rank solvers for ``A X + X A^T + B B^T = 0``.

The main entry points are :func:`kadi_run` (ADI merged into one extended
Krylov basis), :func:`adi_run` (classic low-rank ADI) and
:func:`~lyapkit.testlab.kpik_solve` (extended Krylov Galerkin projection).
"""

from lyapkit.adi import adi_run
from lyapkit.errors import (BreakdownError, EigFailure, LyapkitError, MaxIterReached,
                            MaxSpaceReached, NoStableShift, NotSPD, RankDeficientLS,
                            SingularMatrix, SingularProjectedSystem)
from lyapkit.kadi import ContainmentMonitor, kadi_run
from lyapkit.linops import SparseOperator, as_operator
from lyapkit.report import HistoryRow, SolveReport
from lyapkit.shifts import ReplayShifts
from lyapkit.shiftsolve import solve_family
from lyapkit.testlab import (gen_convdiff3d, gen_laplacian2d, kpik_solve, kron_lyap_solve,
                             transform_chol_e, transform_diag_e)
from lyapkit.xkrylov import ExtendedKrylovBasis

__version__ = '0.1.0'

__all__ = ['adi_run', 'kadi_run', 'kpik_solve', 'solve_family', 'kron_lyap_solve',
           'gen_laplacian2d', 'gen_convdiff3d', 'transform_diag_e', 'transform_chol_e',
           'ExtendedKrylovBasis', 'SparseOperator', 'as_operator', 'ReplayShifts',
           'ContainmentMonitor', 'HistoryRow', 'SolveReport', 'LyapkitError', 'SingularMatrix',
           'SingularProjectedSystem', 'RankDeficientLS', 'EigFailure', 'BreakdownError',
           'NoStableShift', 'NotSPD', 'MaxSpaceReached', 'MaxIterReached']
