"""Block extended Krylov basis ``span{B, A^-1 B, A B, A^-2 B, ...}``.

The basis is built eagerly one block ahead: a basis at step ``m`` owns
``m + 1`` orthonormal blocks of width ``2q``.  The first ``m`` form ``V``;
the last one (``V_next``) is what makes the tail of the Arnoldi relation

    A V = V T + V_next T_tail

available without further work.  All projected quantities are read off a
single matrix ``G = V_all^T A V_all`` that grows by one block row and one
block column per step.
"""

import numpy as np

from lyapkit.errors import BreakdownError
from lyapkit.linops import RANK_TOL, dense_eig, economy_qr


class ExtendedKrylovBasis:
    """Orthonormal basis of the block extended Krylov space of ``(A, B)``.

    Attributes
    ----------
    op
        The :class:`~lyapkit.linops.StableOperator` generating the space.
    q
        Block width (number of columns of ``B``).
    m
        Current step count; ``V`` has ``2 q m`` columns.
    gamma
        ``2q x q`` coefficients with ``B = V[:, :2q] @ gamma``.
    """

    def __init__(self, op, B):
        B = np.asarray(B, dtype=float)
        if B.ndim == 1:
            B = B[:, None]
        n, q = B.shape
        if n != op.n:
            raise ValueError(f'B has {n} rows, operator has dimension {op.n}')
        if 2 * q > n:
            raise ValueError(f'need 2q <= n, got q={q}, n={n}')
        self.op = op
        self.n = n
        self.q = q
        self.m = 0
        self._V = np.empty((n, 0))
        self._AV = np.empty((n, 0))
        self._G = np.empty((0, 0))

        U = np.hstack([B, op.inv_apply(B)])
        Q, R, deficient = economy_qr(U)
        if deficient.size:
            raise BreakdownError('initial block [B, A^-1 B] is rank deficient '
                                 f'(columns {deficient.tolist()})')
        self.gamma = R[:, :q].copy()
        self._theta = R[:, q:].copy()
        self._append_block(Q)
        self.m = 1
        self._grow_next()

    # -- projected quantities -------------------------------------------------
    @property
    def dim(self):
        return 2 * self.q * self.m

    @property
    def V(self):
        return self._V[:, :self.dim]

    @property
    def V_next(self):
        return self._V[:, self.dim:]

    @property
    def T(self):
        return self._G[:self.dim, :self.dim]

    @property
    def T_tail(self):
        return self._G[self.dim:, :self.dim]

    @property
    def T_under(self):
        return self._G[:, :self.dim]

    @property
    def full_space(self):
        return self._V.shape[1] == self.dim

    @property
    def can_expand(self):
        return not self.full_space

    def rhs0(self):
        """``E_1 gamma`` padded to the current projected dimension."""
        out = np.zeros((self.dim, self.q))
        out[:2 * self.q] = self.gamma
        return out

    # -- construction ---------------------------------------------------------
    def _append_block(self, Q):
        AQ = self.op.apply(Q)
        k = self._V.shape[1]
        w = Q.shape[1]
        G = np.zeros((k + w, k + w))
        G[:k, :k] = self._G
        G[:k, k:] = self._V.T @ AQ
        G[k:, :k] = Q.T @ self._AV
        G[k:, k:] = Q.T @ AQ
        self._V = np.hstack([self._V, Q])
        self._AV = np.hstack([self._AV, AQ])
        self._G = G

    def _grow_next(self):
        width = 2 * self.q
        have = self._V.shape[1]
        if have == self.n:
            return
        if have + width > self.n:
            raise BreakdownError(f'cannot add a block of width {width}: only '
                                 f'{self.n - have} directions left in R^{self.n}')
        q = self.q
        last = self._V[:, have - width:]
        U = np.hstack([self._AV[:, have - width:have - width + q],
                       self.op.inv_apply(last[:, q:])])
        ref = np.linalg.norm(U)
        for _ in range(2):
            U = U - self._V @ (self._V.T @ U)
        Q, _, deficient = economy_qr(U, rank_tol=RANK_TOL, ref_norm=ref)
        if deficient.size:
            raise BreakdownError(f'basis block {have // width + 1} is rank '
                                 'deficient after reorthogonalization')
        self._append_block(Q)

    def expand(self):
        """Advance from ``m`` to ``m + 1`` (one new block of ``2q`` columns)."""
        if not self.can_expand:
            raise BreakdownError('basis already spans the whole space')
        self.m += 1
        self._grow_next()
        return self

    def ritz_values(self):
        """Eigenvalues of ``T`` and a mask flagging the stable ones."""
        w, _ = dense_eig(self.T)
        return w, w.real < 0

    def arnoldi_residual(self, shift=0.0):
        """``||(A + s I) V - V (T + s I) - V_next T_tail||_F`` (diagnostic)."""
        V = self.V
        AV = self._AV[:, :self.dim] + shift * V
        TT = self.T + shift * np.eye(self.dim)
        R = AV - V @ TT - self.V_next @ self.T_tail
        return np.linalg.norm(R)


def basis_init(op, B):
    return ExtendedKrylovBasis(op, B)


def basis_expand(basis):
    return basis.expand()


def ritz_values(basis):
    return basis.ritz_values()
