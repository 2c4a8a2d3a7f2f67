"""Low-rank ADI run implicitly on one growing extended Krylov basis.

Every shifted solve ``(A + p_j I) S_j = W_{j-1}`` is replaced by a projected
solve on the current basis.  Because ``W_j = V Upsilon_j`` stays inside the
basis, the ADI residual factor lives in projected coordinates for the whole
run; n-vectors are touched only when the basis grows and when the factor
``Z`` is assembled at the end.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from lyapkit.errors import MaxIterReached, MaxSpaceReached
from lyapkit.linops import as_operator
from lyapkit.report import HistoryRow, SolveReport
from lyapkit.shiftsolve import pad_rows, projected_solve
from lyapkit.shifts import ShiftContext, make_strategy
from lyapkit.xkrylov import ExtendedKrylovBasis


class FixedInnerTol:
    """Constant inner tolerance: `value`, or ``factor * eps_out``."""

    def __init__(self, value=None, factor=0.1):
        self.value = value
        self.factor = factor

    def __call__(self, resnorm_prev, eps_out, nu):
        return self.value if self.value is not None else self.factor * eps_out

    def __repr__(self):
        return f'fixed:{self.value}' if self.value is not None else f'fixed:{self.factor}*eps_out'


class RelaxedInnerTol:
    """Inner tolerance that loosens as the outer residual drops.

    ``min(eps_max, eps_out * nu / max(||Upsilon^T Upsilon||_F, eps_out * nu))``
    """

    def __init__(self, eps_max=1e-2):
        self.eps_max = eps_max

    def __call__(self, resnorm_prev, eps_out, nu):
        floor = eps_out * nu
        return min(self.eps_max, floor / max(resnorm_prev, floor))

    def __repr__(self):
        return 'relaxed'


def make_inner_tol(spec):
    """Parse ``'relaxed'``, ``'fixed'`` or ``'fixed:<value>'``; pass objects through."""
    if spec is None:
        return FixedInnerTol()
    if callable(spec):
        return spec
    if spec == 'relaxed':
        return RelaxedInnerTol()
    if spec == 'fixed':
        return FixedInnerTol()
    if isinstance(spec, str) and spec.startswith('fixed:'):
        value = float(spec.split(':', 1)[1])
        if not value > 0:
            raise ValueError(f'inner tolerance must be positive, got {value}')
        return FixedInnerTol(value)
    raise ValueError(f'unknown inner tolerance {spec!r}')


@dataclass
class KadiState:
    """Projected ADI state.

    ``stack`` holds ``(m_j, Y_j, Re p_j)`` for every consumed shift, already
    realified for complex pairs.  ``last_step`` keeps the raw (possibly
    complex) coefficients of the latest accepted solve for diagnostics.
    """
    basis: ExtendedKrylovBasis
    Upsilon: np.ndarray
    nu: float
    variant: str = 'galerkin'
    j: int = 0
    stack: list = field(default_factory=list)
    shifts: list = field(default_factory=list)
    history: list = field(default_factory=list)
    inner_tol: float = None
    last_step: tuple = None

    @property
    def q(self):
        return self.basis.q


def _padded_upsilon(state):
    return pad_rows(state.Upsilon, state.basis.dim)


def inner_accept_real(state, p, Y):
    """Accept a real-shift solve: ``Upsilon <- [Upsilon; 0] - 2 p Y``."""
    p = float(np.real(p))
    Y = np.real(Y)
    m = state.basis.m
    state.Upsilon = pad_rows(state.Upsilon, Y.shape[0]) - 2.0 * p * Y
    state.stack.append((m, Y, p))
    state.shifts.append(p)
    state.j += 1
    state.last_step = (p, Y)
    return state


def inner_accept_complex_pair(state, p, Y):
    """Accept ``p`` and its conjugate from one complex projected solve."""
    p = complex(p)
    beta = p.real / p.imag
    Yr, Yi = Y.real, Y.imag
    m = state.basis.m
    U = pad_rows(state.Upsilon, Y.shape[0])
    state.Upsilon = U - 4.0 * p.real * (Yr + beta * Yi)
    state.stack.append((m, np.sqrt(2.0) * (Yr + beta * Yi), p.real))
    state.stack.append((m, np.sqrt(2.0 * (beta ** 2 + 1.0)) * Yi, p.real))
    state.shifts += [p, p.conjugate()]
    state.j += 2
    state.last_step = (p, Y)
    return state


def try_next_shift_without_expand(state, p, eps_inn):
    """Solve for `p` on the current basis; accept if ``||R||_F <= eps_inn``."""
    Y, res = projected_solve(state.basis, p, _padded_upsilon(state), state.variant)
    return res <= eps_inn, Y, res


def lyap_resnorm(state):
    return float(np.linalg.norm(state.Upsilon.T @ state.Upsilon))


def _coefficients(state):
    k = 2 * state.q * max(m for m, _, _ in state.stack)
    Ybig = np.hstack([pad_rows(Y, k) for _, Y, _ in state.stack])
    re = np.repeat([r for _, _, r in state.stack], state.q)
    return k, Ybig, re


def assemble_Z(state):
    """``Z = V [Y_1; 0, ..., Y_j] (sqrt(-2 diag(Re p)) kron I_q)``, real."""
    if not state.stack:
        return np.zeros((state.basis.n, 0))
    k, Ybig, re = _coefficients(state)
    return state.basis.V[:, :k] @ (Ybig * np.sqrt(-2.0 * re))


def assemble_X(state):
    """``-2 V (Y (diag(Re p) kron I) Y^T) V^T`` as a dense matrix (small n only)."""
    if not state.stack:
        return np.zeros((state.basis.n, state.basis.n))
    k, Ybig, re = _coefficients(state)
    V = state.basis.V[:, :k]
    return -2.0 * V @ ((Ybig * re) @ Ybig.T) @ V.T


class ContainmentMonitor:
    """Replays the ADI updates on explicit n-vectors and checks containment.

    Pass an instance as ``callback`` to :func:`kadi_run`.  After every accepted
    step it updates ``W`` from the full-size solution ``S = V Y`` and records
    ``||(I - V V^T) W||_F / ||W||_F`` together with the gap between
    ``||W^T W||_F`` and ``||Upsilon^T Upsilon||_F``.
    """

    def __init__(self, B):
        B = np.asarray(B, dtype=float)
        self.W = B[:, None] if B.ndim == 1 else B.copy()
        self.containment = []
        self.identity_gap = []

    def __call__(self, state):
        p, Y = state.last_step
        S = state.basis.V[:, :Y.shape[0]] @ Y
        p = complex(p)
        if p.imag == 0.0:
            self.W = self.W - 2.0 * p.real * S.real
        else:
            beta = p.real / p.imag
            self.W = self.W - 4.0 * p.real * (S.real + beta * S.imag)
        V = state.basis.V
        nw = np.linalg.norm(self.W)
        out = self.W - V @ (V.T @ self.W)
        self.containment.append(np.linalg.norm(out) / nw if nw else 0.0)
        wtw = np.linalg.norm(self.W.T @ self.W)
        self.identity_gap.append(abs(wtw - lyap_resnorm(state)) / max(wtw, np.finfo(float).tiny))


def kadi_run(op, B, shift_strategy='hamiltonian', variant='galerkin', eps_out=1e-8,
             inner_tol=None, m_max=100, j_max=100, callback=None):
    """Solve ``A X + X A^T + B B^T = 0`` with ADI merged into the Krylov basis.

    Parameters
    ----------
    op
        Stable operator or sparse matrix.
    B
        ``n x q`` real factor.
    shift_strategy
        ``'hamiltonian'``, ``'resmin'``, ``'ritz'`` or a strategy instance.
    variant
        ``'galerkin'`` or ``'minres'`` projected solves.
    eps_out
        Stop when ``||Upsilon^T Upsilon||_F <= eps_out ||B^T B||_F``.
    inner_tol
        Inner tolerance schedule (see :func:`make_inner_tol`), compared
        against the absolute projected residual norm.
    m_max, j_max
        Caps on basis steps and on shift applications.
    callback
        Called with the :class:`KadiState` after every accepted step.

    Returns
    -------
    Z, report
    """
    t0 = time.perf_counter()
    op = as_operator(op)
    strategy = make_strategy(shift_strategy)
    schedule = make_inner_tol(inner_tol)
    B = np.asarray(B, dtype=float)
    if B.ndim == 1:
        B = B[:, None]
    nu = float(np.linalg.norm(B.T @ B))
    method = 'kadi-g' if variant == 'galerkin' else 'kadi-mr'
    report = SolveReport(method=method, nu=nu)

    def finish(state, status):
        report.status = status
        report.shifts = list(state.shifts) if state else []
        report.wall_time = time.perf_counter() - t0
        return (assemble_Z(state) if state else np.zeros((B.shape[0], 0))), report

    if j_max <= 0:
        return finish(None, 'max_iter')

    basis = ExtendedKrylovBasis(op, B)
    state = KadiState(basis=basis, Upsilon=basis.gamma.copy(), nu=nu, variant=variant)
    if lyap_resnorm(state) <= nu * eps_out:
        return finish(state, 'converged')

    def propose():
        if not strategy.needs_context:
            return strategy.propose(None)
        return strategy.propose(ShiftContext(basis.T, _padded_upsilon(state),
                                             tuple(state.shifts)))

    def record(eps_inn):
        res = lyap_resnorm(state)
        shift = state.shifts[-2] if len(state.shifts) >= 2 and \
            complex(state.shifts[-1]).imag != 0 else state.shifts[-1]
        report.history.append(HistoryRow(j=state.j, m=basis.m, space_dim=basis.dim,
                                         resnorm_abs=res, resnorm_rel=res / nu,
                                         shift=complex(shift), eps_inn=eps_inn))

    prop = propose()
    eps_inn = schedule(lyap_resnorm(state), eps_out, nu)
    while True:
        accept, Y, res = try_next_shift_without_expand(state, prop.p, eps_inn)
        while accept:
            if prop.is_pair:
                inner_accept_complex_pair(state, prop.p, Y)
            else:
                inner_accept_real(state, prop.p, Y)
            state.inner_tol = eps_inn
            record(eps_inn)
            if callback is not None:
                callback(state)
            if lyap_resnorm(state) <= nu * eps_out:
                return finish(state, 'converged')
            if state.j >= j_max:
                Z, rep = finish(state, 'max_iter')
                raise MaxIterReached(f'no convergence after {state.j} shift applications',
                                     Z=Z, report=rep, status='max_iter')
            prop = propose()
            eps_inn = schedule(lyap_resnorm(state), eps_out, nu)
            accept, Y, res = try_next_shift_without_expand(state, prop.p, eps_inn)
        if basis.m >= m_max or not basis.can_expand:
            Z, rep = finish(state, 'max_space')
            raise MaxSpaceReached(f'basis limit reached at m={basis.m} '
                                  f'(projected residual {res:.3e} > {eps_inn:.3e})',
                                  Z=Z, report=rep, status='max_space')
        basis.expand()
