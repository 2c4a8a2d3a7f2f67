"""Classic low-rank ADI with explicit shifted sparse solves.

Complex shifts are consumed in conjugate pairs with the real-arithmetic
update, so the factor ``Z`` and the residual factor ``W`` stay real.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from lyapkit.errors import MaxIterReached
from lyapkit.linops import as_operator, economy_qr
from lyapkit.report import HistoryRow, SolveReport
from lyapkit.shifts import ShiftContext, initial_shift, make_strategy
from lyapkit.xkrylov import ExtendedKrylovBasis


@dataclass
class AdiState:
    W: np.ndarray
    nu: float
    j: int = 0
    blocks: list = field(default_factory=list)
    history: list = field(default_factory=list)

    @classmethod
    def start(cls, B):
        B = np.asarray(B, dtype=float)
        if B.ndim == 1:
            B = B[:, None]
        return cls(W=B.copy(), nu=float(np.linalg.norm(B.T @ B)))

    @property
    def Z(self):
        if not self.blocks:
            return np.zeros((self.W.shape[0], 0))
        return np.hstack(self.blocks)

    def resnorm(self):
        return float(np.linalg.norm(self.W.T @ self.W))


def adi_step_real(state, op, p):
    """One real-shift step: solve ``(A + p I) S = W``, ``W <- W - 2 p S``."""
    p = float(np.real(p))
    if not p < 0:
        raise ValueError(f'real shift must be negative, got {p}')
    S = op.shifted_solve(p, state.W)
    state.W = state.W - 2.0 * p * S
    state.blocks.append(np.sqrt(-2.0 * p) * S)
    state.j += 1
    state.history.append((state.j, state.resnorm(), p))
    return state


def adi_step_complex_pair(state, op, p):
    """Consume ``p`` and ``conj(p)`` with one complex solve, all updates real."""
    p = complex(p)
    if p.imag == 0.0 or not p.real < 0:
        raise ValueError(f'need Re(p) < 0 and Im(p) != 0, got {p}')
    S = op.shifted_solve(p, state.W)
    beta = p.real / p.imag
    Sr, Si = S.real, S.imag
    state.W = state.W - 4.0 * p.real * (Sr + beta * Si)
    scale = np.sqrt(-2.0 * p.real)
    state.blocks.append(scale * np.sqrt(2.0) * (Sr + beta * Si))
    state.blocks.append(scale * np.sqrt(2.0 * (beta ** 2 + 1.0)) * Si)
    state.j += 2
    state.history.append((state.j, state.resnorm(), p))
    return state


def adi_shift_context(op, state, steps=4):
    """Projection of ``A`` and ``W`` onto the span of the newest factor columns."""
    Zr = np.hstack(state.blocks[-steps:])
    U, _, deficient = economy_qr(Zr)
    if deficient.size:
        keep = np.setdiff1d(np.arange(U.shape[1]), deficient)
        U = U[:, keep]
    T = U.T @ op.apply(U)
    return ShiftContext(T, U.T @ state.W)


def adi_run(A, B, shift_strategy='hamiltonian', eps=1e-8, j_max=100, context_steps=4):
    """Low-rank ADI for ``A X + X A^T + B B^T = 0``.

    Parameters
    ----------
    A
        Stable sparse matrix or :class:`~lyapkit.linops.StableOperator`.
    B
        ``n x q`` right-hand side factor.
    shift_strategy
        Strategy name or instance (e.g. :class:`~lyapkit.shifts.ReplayShifts`).
    eps
        Stop when ``||W^T W||_F < eps ||B^T B||_F``.
    j_max
        Maximum number of shift applications (a complex pair counts twice).
    context_steps
        Number of newest ADI blocks spanning the projection used by online
        strategies.

    Returns
    -------
    Z, report
        Real low-rank factor with ``Z Z^T ~ X`` and a :class:`SolveReport`.
    """
    t0 = time.perf_counter()
    op = as_operator(A)
    strategy = make_strategy(shift_strategy)
    state = AdiState.start(B)
    report = SolveReport(method='lradi', nu=state.nu)

    def done():
        return state.resnorm() < eps * state.nu

    p = None
    while not done() and state.j < j_max:
        if p is None:
            if strategy.needs_context:
                p = initial_shift(ExtendedKrylovBasis(op, state.W))
            else:
                p = strategy.propose(None)
        else:
            p = strategy.propose(adi_shift_context(op, state, context_steps)
                                 if strategy.needs_context else None)
        if p.is_pair:
            adi_step_complex_pair(state, op, p.p)
            report.shifts += [p.p, np.conj(p.p)]
        else:
            adi_step_real(state, op, p.p)
            report.shifts.append(p.p)
        j, res, shift = state.history[-1]
        report.history.append(HistoryRow(j=j, m=0, space_dim=j * state.W.shape[1],
                                         resnorm_abs=res, resnorm_rel=res / state.nu,
                                         shift=complex(shift)))

    report.wall_time = time.perf_counter() - t0
    report.n_factorizations = getattr(getattr(op, '_shifted', None), 'n_factorizations', 0)
    if done():
        report.status = 'converged'
        return state.Z, report
    report.status = 'max_iter'
    if j_max == 0:
        return state.Z, report
    raise MaxIterReached(f'LR-ADI did not converge in {j_max} shift applications',
                         Z=state.Z, report=report, status=report.status)
