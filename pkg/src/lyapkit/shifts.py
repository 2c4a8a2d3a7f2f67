"""Online ADI shift strategies computed from projected data.

Every strategy looks only at a :class:`ShiftContext`: a small projected
matrix ``T`` and the projected residual factor ``Upsilon``.  For the merged
solver these come for free from the extended Krylov basis; the classic ADI
loop builds them from a small orthonormal block (see :mod:`lyapkit.adi`).
"""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from lyapkit.errors import NoStableShift, SingularProjectedSystem
from lyapkit.linops import dense_eig, dense_solve_cx

# relative size below which an imaginary part is treated as rounding noise
IMAG_SNAP = 1e-8
TIE_TOL = 1e-12
RESMIN_BUDGET = 100


@dataclass
class ShiftContext:
    T: np.ndarray
    Upsilon: np.ndarray
    previous: tuple = ()


@dataclass(frozen=True)
class ShiftProposal:
    p: complex
    is_pair: bool

    def __post_init__(self):
        if complex(self.p).real >= 0:
            raise NoStableShift(f'proposed shift {self.p} is not stable')


def _snap(lam):
    lam = complex(lam)
    if abs(lam.imag) <= IMAG_SNAP * abs(lam):
        return complex(lam.real, 0.0)
    return lam


def proposal(lam):
    lam = _snap(lam)
    if lam.imag == 0.0:
        return ShiftProposal(lam.real, False)
    # conjugate pairs are always represented by the member with Im > 0
    return ShiftProposal(complex(lam.real, abs(lam.imag)), True)


def _reflected_ritz(T):
    w, _ = dense_eig(T)
    w = np.array([complex(-abs(x.real), -x.imag) for x in w])
    w = w[w.real < 0]
    if w.size == 0:
        raise NoStableShift('projected matrix has only purely imaginary Ritz values')
    warnings.warn('no stable eigenvalue available; using reflected Ritz values',
                  RuntimeWarning, stacklevel=3)
    return w


def hamiltonian_shift(ctx):
    """Residual-Hamiltonian shift.

    Builds ``H = [[T^T, 0], [U U^T, -T]]`` and returns the stable eigenvalue
    whose unit eigenvector ``[s; t]`` has the largest ``||t||_2``.  Ties are
    broken by smaller ``|Im|``, then by more negative real part.
    """
    T = np.asarray(ctx.T, dtype=float)
    U = np.asarray(ctx.Upsilon, dtype=float)
    k = T.shape[0]
    H = np.block([[T.T, np.zeros((k, k))], [U @ U.T, -T]])
    w, v = dense_eig(H)
    stable = np.flatnonzero(w.real < 0)
    if stable.size == 0:
        return proposal(max(_reflected_ritz(T), key=lambda x: abs(x.real)))
    tn = np.linalg.norm(v[k:, stable], axis=0)
    top = tn.max()
    cands = [stable[i] for i in np.flatnonzero(tn >= top - TIE_TOL * max(top, 1.0))]
    best = min(cands, key=lambda i: (abs(_snap(w[i]).imag), w[i].real, -w[i].imag))
    return proposal(w[best])


def resmin_objective(T, U, theta, xi):
    """``||U - 2 theta (T + (theta + i xi) I)^{-1} U||_F^2``; ``inf`` off-domain."""
    if not theta < 0:
        return np.inf
    p = complex(theta, xi)
    k = T.shape[0]
    try:
        S = dense_solve_cx(T + p * np.eye(k), U.astype(complex))
    except SingularProjectedSystem:
        return np.inf
    return float(np.linalg.norm(U - 2.0 * theta * S) ** 2)


def resmin_shift(ctx, start=None):
    """Residual-norm-minimizing shift on projected data.

    Nelder-Mead on ``(theta, xi)`` started at the Hamiltonian proposal (or
    `start`), with a budget of ``RESMIN_BUDGET`` objective evaluations.
    Never returns a point worse than its starting point.
    """
    T = np.asarray(ctx.T, dtype=float)
    U = np.asarray(ctx.Upsilon, dtype=float)
    if start is None:
        start = hamiltonian_shift(ctx)
    p0 = complex(start.p)
    x0 = np.array([p0.real, p0.imag])
    f0 = resmin_objective(T, U, *x0)
    if f0 == 0.0:
        return start
    step = 0.1 * abs(p0)
    simplex = np.array([x0, x0 + [0.1 * x0[0], 0.0], x0 + [0.0, step]])
    res = minimize(lambda x: resmin_objective(T, U, x[0], x[1]), x0,
                   method='Nelder-Mead',
                   options={'maxfev': RESMIN_BUDGET, 'initial_simplex': simplex,
                            'xatol': 1e-10, 'fatol': 0.0})
    theta, xi = res.x
    if not theta < 0:
        return start
    cand = proposal(complex(theta, xi))
    fc = resmin_objective(T, U, complex(cand.p).real, complex(cand.p).imag)
    return cand if fc <= f0 else start


def stable_ritz_cycle(T):
    """Stable Ritz values, one per conjugate pair, by descending ``|Re|``."""
    w, _ = dense_eig(np.asarray(T, dtype=float))
    vals = {}
    for lam in w:
        if lam.real < 0:
            lam = _snap(lam)
            lam = complex(lam.real, abs(lam.imag))
            vals[(round(lam.real, 12), round(lam.imag, 12))] = lam
    if not vals:
        raise NoStableShift('no stable Ritz value')
    return sorted(vals.values(), key=lambda x: (-abs(x.real), abs(x.imag)))


def ritz_cycle_shift(ctx, cursor):
    cycle = stable_ritz_cycle(ctx.T)
    return proposal(cycle[cursor % len(cycle)])


def initial_shift(basis):
    """First shift from the ``m = 1`` basis: Hamiltonian rule on ``(T_1, E_1 gamma)``."""
    return hamiltonian_shift(ShiftContext(basis.T, basis.rhs0()))


class HamiltonianShifts:
    name = 'hamiltonian'
    needs_context = True

    def propose(self, ctx):
        return hamiltonian_shift(ctx)


class ResminShifts:
    name = 'resmin'
    needs_context = True

    def propose(self, ctx):
        return resmin_shift(ctx)


class RitzCycleShifts:
    name = 'ritz'
    needs_context = True

    def __init__(self):
        self.cursor = 0

    def propose(self, ctx):
        prop = ritz_cycle_shift(ctx, self.cursor)
        self.cursor += 1
        return prop


class ReplayShifts:
    """Replays a recorded shift sequence, cycling when it runs out.

    The sequence is the flat list of consumed shifts, so a complex value is
    followed by its conjugate; the conjugate is skipped on replay because
    proposals for complex shifts already stand for the whole pair.
    """
    name = 'replay'
    needs_context = False

    def __init__(self, shifts):
        self._props = []
        seq = [complex(p) for p in shifts]
        i = 0
        while i < len(seq):
            prop = proposal(seq[i])
            self._props.append(prop)
            i += 2 if prop.is_pair else 1
        if not self._props:
            raise NoStableShift('empty replay sequence')
        self.cursor = 0

    def propose(self, ctx=None):
        prop = self._props[self.cursor % len(self._props)]
        self.cursor += 1
        return prop


STRATEGIES = {'hamiltonian': HamiltonianShifts, 'resmin': ResminShifts,
              'ritz': RitzCycleShifts}


def make_strategy(name):
    if not isinstance(name, str):
        return name
    try:
        return STRATEGIES[name]()
    except KeyError:
        raise ValueError(f'unknown shift strategy {name!r}; '
                         f'choose from {sorted(STRATEGIES)}') from None
