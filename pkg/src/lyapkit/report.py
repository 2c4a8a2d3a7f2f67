from dataclasses import dataclass, field


@dataclass
class HistoryRow:
    """One completed ADI step (a complex pair counts as one row).

    ``j`` is the shift counter after the step, so a pair advances it by 2.
    ``shift`` is ``None`` for methods without shifts.
    """
    j: int
    m: int
    space_dim: int
    resnorm_abs: float
    resnorm_rel: float
    shift: complex = None
    eps_inn: float = None


@dataclass
class SolveReport:
    method: str
    status: str = 'running'
    history: list = field(default_factory=list)
    shifts: list = field(default_factory=list)
    nu: float = 0.0
    wall_time: float = 0.0
    n_factorizations: int = 0

    @property
    def iterations(self):
        return self.history[-1].j if self.history else 0

    @property
    def space_dim(self):
        return self.history[-1].space_dim if self.history else 0

    @property
    def final_residual(self):
        # an empty factor leaves the residual B B^T, relative size 1
        return self.history[-1].resnorm_rel if self.history else 1.0

    @property
    def converged(self):
        return self.status == 'converged'
