"""Shifted linear systems ``(A + p I) S = W`` on one shared extended Krylov basis.

Both projected solvers take right-hand-side coefficients with respect to the
basis and zero-pad them to the current projected dimension, so the same code
serves a fixed right-hand side (``E_1 gamma``) and the moving ADI residual
factor.
"""

from dataclasses import dataclass, field

import numpy as np

from lyapkit.errors import MaxSpaceReached
from lyapkit.linops import as_operator, dense_lstsq_cx, dense_solve_cx
from lyapkit.xkrylov import ExtendedKrylovBasis


def _as_shift(p):
    p = complex(p)
    return p.real if p.imag == 0.0 else p


def pad_rows(X, rows):
    X = np.asarray(X)
    if X.shape[0] > rows:
        raise ValueError(f'coefficients have {X.shape[0]} rows, space has {rows}')
    if X.shape[0] == rows:
        return X
    out = np.zeros((rows, X.shape[1]), dtype=X.dtype)
    out[:X.shape[0]] = X
    return out


def galerkin_coeffs(basis, p, rhs):
    """Galerkin coefficients ``(T + p I) Y = [rhs; 0]`` and the residual norm.

    The residual norm ``||T_tail Y||_F`` equals the norm of the full residual
    ``(A + p I) V Y - V [rhs; 0]`` without touching n-vectors.
    """
    p = _as_shift(p)
    k = basis.dim
    M = basis.T + p * np.eye(k)
    Y = dense_solve_cx(M, pad_rows(rhs, k))
    return Y, float(np.linalg.norm(basis.T_tail @ Y))


def mr_coeffs(basis, p, rhs):
    """Minimal-residual coefficients on the ``(k + 2q) x k`` projected matrix.

    Returns ``(Y, resnorm)`` where ``resnorm = ||Q2^H [rhs; 0]||_F`` and
    ``Q2`` spans the orthogonal complement of the range of the shifted
    upper-Hessenberg-like projection.
    """
    p = _as_shift(p)
    k = basis.dim
    M = basis.T_under.astype(np.result_type(basis.T_under, p), copy=True)
    M[:k] += p * np.eye(k)
    r = pad_rows(rhs, M.shape[0])
    Y, Q2 = dense_lstsq_cx(M, r)
    return Y, float(np.linalg.norm(Q2.conj().T @ r))


def projected_solve(basis, p, rhs, variant='galerkin'):
    if variant == 'galerkin':
        return galerkin_coeffs(basis, p, rhs)
    if variant in ('minres', 'mr'):
        return mr_coeffs(basis, p, rhs)
    raise ValueError(f'unknown projection variant {variant!r}')


@dataclass
class ShiftFamilyState:
    shifts: list
    beta: float
    Y: dict = field(default_factory=dict)
    resnorms: dict = field(default_factory=dict)
    converged: dict = field(default_factory=dict)  # index -> m at entry
    basis: ExtendedKrylovBasis = None

    @property
    def pending(self):
        return [j for j in range(len(self.shifts)) if j not in self.converged]

    def status(self):
        return {j: ('converged' if j in self.converged else 'pending')
                for j in range(len(self.shifts))}


def solve_family(op, W, shifts, eps, m_max=100, variant='galerkin'):
    """Solve ``(A + p_j I) S_j = W`` for all shifts on one extended Krylov basis.

    Parameters
    ----------
    op
        Stable operator (or a sparse matrix, wrapped automatically).
    W
        ``n x q`` real right-hand side.
    shifts
        Shifts with negative real part, all known up front.
    eps
        Relative residual bound, ``||R_j||_F / ||W||_F < eps``.
    m_max
        Largest admissible number of basis steps.
    variant
        ``'galerkin'`` or ``'minres'``.

    Returns
    -------
    S
        List of ``n x q`` solutions ``V Y_j`` in the order of `shifts`.
    state
        :class:`ShiftFamilyState` with residual norms and the step at which
        each system entered the converged set.

    Raises
    ------
    MaxSpaceReached
        If some system is still pending after `m_max` steps; the exception
        carries the state (``err.report``) with per-shift status.
    """
    op = as_operator(op)
    W = np.asarray(W, dtype=float)
    if W.ndim == 1:
        W = W[:, None]
    shifts = [_as_shift(p) for p in shifts]
    for p in shifts:
        if complex(p).real >= 0:
            raise ValueError(f'shift {p} is not in the open left half plane')
    state = ShiftFamilyState(shifts=shifts, beta=float(np.linalg.norm(W)))
    if not shifts:
        return [], state

    basis = ExtendedKrylovBasis(op, W)
    state.basis = basis
    rhs = basis.gamma
    while True:
        for j in state.pending:
            Y, res = projected_solve(basis, shifts[j], rhs, variant)
            state.Y[j] = Y
            state.resnorms[j] = res
            if res / state.beta < eps:
                state.converged[j] = basis.m
        if not state.pending:
            break
        if basis.m >= m_max or not basis.can_expand:
            raise MaxSpaceReached(
                f'{len(state.pending)} of {len(shifts)} shifted systems not '
                f'converged after m={basis.m}', report=state, status=state.status())
        basis.expand()

    k = basis.dim
    V = basis.V
    S = [V @ pad_rows(state.Y[j], k) for j in range(len(shifts))]
    return S, state
