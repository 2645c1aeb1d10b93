"""Damped fixed-point solver for the vector Dyson equation.

Solves ``-1/m_j = z - a_j + S_j[m]`` for the unique solution with positive
definite imaginary parts.  The fixed-point map ``m -> -(z - a + S[m])^{-1}``
sends the Herglotz cone into itself, and so does every convex combination
with the previous iterate, so damping never leaves the admissible set.

Internally everything runs on batches: a leading axis of independent
spectral parameters is iterated together, each element with its own damping
and its own stopping decision.  An element that has converged is frozen, so
the result for one parameter does not depend on what else shares its batch.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .errors import ContractError, ConvergenceError, DimensionError, PositivityError, SingularityError
from .model import HermitianDysonData
from .superop import SelfEnergyOperator, dagger

__all__ = [
    "EtaSchedule",
    "SolverOptions",
    "MdeSolution",
    "DysonProblem",
    "fixed_point_step",
    "residual",
    "solve_at",
    "solve_continuation",
    "solve_batch",
    "continuation_batch",
    "eta_ladder",
    "auto_init",
]


@dataclass(frozen=True)
class EtaSchedule:
    start: float = 8.0
    ratio: float = 0.7
    floor: float = 1e-5

    def __post_init__(self):
        if not 0 < self.ratio < 1:
            raise ContractError("eta schedule ratio must lie in (0, 1)")
        if self.start <= 0 or self.floor <= 0:
            raise ContractError("eta schedule start and floor must be positive")


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-10
    max_iter: int = 50_000
    damping_init: float = 0.5
    damping_adapt: bool = True
    eta_schedule: EtaSchedule = field(default_factory=EtaSchedule)
    # Tolerance on the intermediate rungs of a continuation ladder; the
    # requested targets are always solved to ``tol``.
    ladder_tol: float = 1e-7
    init: Optional[np.ndarray] = None

    def __post_init__(self):
        if not self.tol > 0:
            raise ContractError("tol must be positive")
        if not 0 < self.damping_init <= 1:
            raise ContractError("damping_init must lie in (0, 1]")
        if self.max_iter < 1:
            raise ContractError("max_iter must be positive")

    def to_dict(self) -> dict:
        return {
            "tol": self.tol,
            "max_iter": self.max_iter,
            "damping_init": self.damping_init,
            "damping_adapt": self.damping_adapt,
            "eta_start": self.eta_schedule.start,
            "eta_ratio": self.eta_schedule.ratio,
            "eta_floor": self.eta_schedule.floor,
            "ladder_tol": self.ladder_tol,
            "init": "auto" if self.init is None else "given",
        }


@dataclass
class MdeSolution:
    z: complex
    m: np.ndarray
    residual: float
    iterations: int
    converged: bool
    min_im_eig: float

    def to_dict(self) -> dict:
        return {
            "z": [self.z.real, self.z.imag],
            "m": np.stack([self.m.real, self.m.imag], axis=-1).tolist(),
            "residual": self.residual,
            "iterations": self.iterations,
            "converged": self.converged,
            "min_im_eig": self.min_im_eig,
        }


class DysonProblem:
    """The Dyson equation for one data set, reduced where the profile allows.

    With a flat variance profile ``S_j[m]`` does not depend on ``j``, so
    ``m_j`` depends on ``j`` only through ``a_j``.  Components with identical
    ``a_j`` are then merged and carried once with a multiplicity.
    """

    def __init__(self, data: HermitianDysonData):
        self.data = data
        self.S = SelfEnergyOperator(data)
        self.K = data.K
        self.N = data.N
        if self.S.flat:
            flat_a = data.a.reshape(self.N, -1)
            uniq, index, counts = np.unique(flat_a, axis=0, return_inverse=True, return_counts=True)
            self.a = uniq.reshape(-1, self.K, self.K)
            self.index = np.asarray(index).reshape(-1)
            self.counts = counts.astype(float)
        else:
            self.a = data.a
            self.index = np.arange(self.N)
            self.counts = np.ones(self.N)
        self.n = self.a.shape[0]
        self.eye = np.eye(self.K, dtype=complex)

    def self_energy(self, m: np.ndarray) -> np.ndarray:
        """``S`` on reduced block vectors of shape (..., n, K, K)."""
        if self.S.flat:
            total = np.einsum("u,...uab->...ab", self.counts, m)
            comp = self.S.apply_flat_sum(total)
            return np.broadcast_to(comp[..., None, :, :], m.shape)
        return self.S(m)

    def expand(self, m: np.ndarray) -> np.ndarray:
        return m[..., self.index, :, :]

    def reduce(self, m: np.ndarray) -> np.ndarray:
        """Pick one representative per reduced component from a full block vector."""
        if not self.S.flat:
            return m
        first = np.zeros(self.n, dtype=int)
        first[self.index[::-1]] = np.arange(self.N)[::-1]
        return m[..., first, :, :]

    def _resolvent_arg(self, m, z, shift):
        B = z[:, None, None, None] * self.eye - self.a + self.self_energy(m)
        if shift is not None:
            B = B + shift[:, None, :, :]
        return B

    def residual(self, m: np.ndarray, z: np.ndarray, shift: Optional[np.ndarray] = None) -> np.ndarray:
        """Spectral-norm residual ``max_j |1 + (z - a_j + S_j[m]) m_j|`` per batch element."""
        B = self._resolvent_arg(m, z, shift)
        return np.linalg.norm(self.eye + B @ m, 2, axis=(-2, -1)).max(axis=-1)

    def evaluate(self, m: np.ndarray, z: np.ndarray, shift: Optional[np.ndarray] = None):
        """Frobenius residual and fixed-point image of a batch of iterates.

        ``m`` has shape (B, n, K, K) and ``z`` shape (B,).  The optional
        Hermitian ``shift`` of shape (B, K, K) is added to ``z - a_j`` in
        every component; this is how one base problem serves a whole family
        of Hermitized shifts ``zeta``.
        """
        B = self._resolvent_arg(m, z, shift)
        d = self.eye + B @ m
        res = np.sqrt((d.real ** 2 + d.imag ** 2).sum(axis=(-2, -1)).max(axis=-1))
        try:
            mhat = -np.linalg.inv(B)
        except np.linalg.LinAlgError:
            raise SingularityError("z - a_j + S_j[m] is singular") from None
        return res, mhat


def auto_init(problem: DysonProblem, z: np.ndarray) -> np.ndarray:
    """``i/(1 + |z|)`` times the identity in every component."""
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    scal = 1j / (1 + np.abs(z))
    return scal[:, None, None, None] * np.broadcast_to(problem.eye, (len(z), problem.n, problem.K, problem.K))


@dataclass
class BatchResult:
    m: np.ndarray
    residual: np.ndarray
    iterations: np.ndarray
    converged: np.ndarray


def _take(shift, idx):
    return None if shift is None else shift[idx]


def solve_batch(
    problem: DysonProblem,
    z: np.ndarray,
    m0: np.ndarray,
    opts: SolverOptions,
    tol: Optional[float] = None,
    active: Optional[np.ndarray] = None,
    shift: Optional[np.ndarray] = None,
) -> BatchResult:
    """Iterate a batch of independent problems until each meets ``tol``.

    Every damped step is taken; the damping is halved whenever the residual
    grew and reset to its initial value after every 50 steps.  Iteration
    stops on the Frobenius residual, an upper bound for the spectral one,
    and the returned residual is the spectral one.
    """
    tol = opts.tol if tol is None else tol
    z = np.asarray(z, dtype=complex)
    if np.any(z.imag <= 0):
        raise ContractError("spectral parameters must have positive imaginary part")
    m = np.array(m0, dtype=complex)
    nb = len(z)
    res = np.full(nb, np.inf)
    mhat = np.zeros_like(m)
    iters = np.zeros(nb, dtype=int)
    live = np.ones(nb, dtype=bool) if active is None else np.array(active, dtype=bool)
    considered = live.copy()
    if live.any():
        res[live], mhat[live] = problem.evaluate(m[live], z[live], _take(shift, live))
    theta = np.full(nb, float(opts.damping_init))
    accepted = np.zeros(nb, dtype=int)
    live &= ~(res <= tol)
    for _ in range(opts.max_iter):
        if not live.any():
            break
        idx = np.flatnonzero(live)
        th = theta[idx][:, None, None, None]
        cand = (1 - th) * m[idx] + th * mhat[idx]
        rc, hc = problem.evaluate(cand, z[idx], _take(shift, idx))
        iters[idx] += 1
        if opts.damping_adapt:
            worse = idx[rc > res[idx]]
            theta[worse] *= 0.5
        m[idx], mhat[idx], res[idx] = cand, hc, rc
        accepted[idx] += 1
        reset = idx[accepted[idx] % 50 == 0]
        theta[reset] = opts.damping_init
        live[idx[rc <= tol]] = False
    if considered.any():
        res[considered] = problem.residual(m[considered], z[considered], _take(shift, considered))
    conv = considered & (res <= tol)
    return BatchResult(m, res, iters, conv)


def _min_im_eig(m: np.ndarray) -> np.ndarray:
    im = (m - dagger(m)) / 2j
    im = (im + dagger(im)) / 2
    return np.linalg.eigvalsh(im).min(axis=(-1, -2))


def _check_data_shape(data: HermitianDysonData, m: np.ndarray):
    if m.shape[-3:] != (data.N, data.K, data.K):
        raise DimensionError(f"m has shape {m.shape}, expected {(data.N, data.K, data.K)}")


def residual(data: HermitianDysonData, m: np.ndarray, z: complex) -> float:
    """``max_j |1 + (z - a_j + S_j[m]) m_j|`` in spectral norm."""
    m = np.asarray(m, dtype=complex)
    _check_data_shape(data, m)
    S = SelfEnergyOperator(data)
    B = complex(z) * np.eye(data.K) - data.a + S(m)
    return float(np.linalg.norm(np.eye(data.K) + B @ m, 2, axis=(-2, -1)).max())


def fixed_point_step(data: HermitianDysonData, m: np.ndarray, z: complex, damping: float = 1.0) -> np.ndarray:
    """One damped step ``(1 - theta) m + theta * (-(z - a + S[m])^{-1})``."""
    m = np.asarray(m, dtype=complex)
    _check_data_shape(data, m)
    S = SelfEnergyOperator(data)
    B = complex(z) * np.eye(data.K) - data.a + S(m)
    try:
        mhat = -np.linalg.inv(B)
    except np.linalg.LinAlgError:
        raise SingularityError("z - a_j + S_j[m] is singular") from None
    return (1 - damping) * m + damping * mhat


def _finish(problem: DysonProblem, z: complex, br: BatchResult, k: int = 0) -> MdeSolution:
    m = problem.expand(br.m[k])
    mie = float(_min_im_eig(br.m[k]).min())
    conv = bool(br.converged[k])
    if conv and not mie > 0:
        raise PositivityError(f"converged solution at z={z} lost positivity (min Im eig {mie:.3e})")
    return MdeSolution(complex(z), m, float(br.residual[k]), int(br.iterations[k]), conv, mie)


def solve_at(data: HermitianDysonData, z: complex, opts: SolverOptions = SolverOptions()) -> MdeSolution:
    """Solve at a single spectral parameter ``z`` with ``Im z > 0``.

    A run that exhausts ``max_iter`` returns a solution with
    ``converged=False``; it never raises for that reason.
    """
    z = complex(z)
    if z.imag <= 0:
        raise ContractError(f"Im z must be positive, got z = {z}")
    problem = DysonProblem(data)
    zs = np.array([z])
    if opts.init is None:
        m0 = auto_init(problem, zs)
    else:
        init = np.asarray(opts.init, dtype=complex)
        _check_data_shape(data, init)
        m0 = problem.reduce(init)[None]
    br = solve_batch(problem, zs, m0, opts)
    return _finish(problem, z, br)


def eta_ladder(eta_targets: Sequence[float], schedule: EtaSchedule) -> list:
    """Geometric descent from the schedule start through every target.

    Returns ``(eta, target_index_or_None)`` pairs.
    """
    targets = [float(t) for t in eta_targets]
    if not targets:
        return []
    if any(t <= 0 for t in targets) or any(b >= a for a, b in zip(targets, targets[1:])):
        raise ContractError("eta targets must be positive and strictly decreasing")
    eta = max(schedule.start, targets[0])
    ladder = []
    for k, target in enumerate(targets):
        while eta > target:
            ladder.append((eta, None))
            eta *= schedule.ratio
        ladder.append((target, k))
        eta = target * schedule.ratio
    return ladder


def continuation_batch(
    problem: DysonProblem,
    E: np.ndarray,
    eta_targets: Sequence[float],
    opts: SolverOptions,
    m0: Optional[np.ndarray] = None,
    shift: Optional[np.ndarray] = None,
):
    """Warm-started descent in ``eta`` for a batch of real parts ``E``.

    Returns a list with one :class:`BatchResult` per target.  An element
    that fails on some rung is frozen there and reported as not converged
    for every later target; ``failed_eta`` holds the rung where that
    happened (NaN when it never failed).
    """
    E = np.asarray(E, dtype=float)
    ladder = eta_ladder(eta_targets, opts.eta_schedule)
    m = auto_init(problem, E + 1j * ladder[0][0]) if m0 is None else np.array(m0, dtype=complex)
    alive = np.ones(len(E), dtype=bool)
    failed_eta = np.full(len(E), np.nan)
    iters = np.zeros(len(E), dtype=int)
    out = []
    for eta, k in ladder:
        tol = opts.tol if k is not None else max(opts.tol, opts.ladder_tol)
        br = solve_batch(problem, E + 1j * eta, m, opts, tol=tol, active=alive, shift=shift)
        iters += br.iterations
        newly = alive & ~br.converged
        failed_eta[newly] = eta
        alive &= br.converged
        m = br.m
        if k is not None:
            out.append(BatchResult(m.copy(), br.residual.copy(), iters.copy(), alive.copy()))
    return out, failed_eta


def solve_continuation(
    data: HermitianDysonData,
    E: float,
    eta_targets: Sequence[float],
    opts: SolverOptions = SolverOptions(),
) -> List[MdeSolution]:
    """Solve at ``E + i*eta`` for each target, descending from the schedule start.

    Raises :class:`ConvergenceError` if some rung fails; ``partial`` then
    holds the solutions for the targets reached and the message names the
    rung where convergence was lost.
    """
    problem = DysonProblem(data)
    results, failed_eta = continuation_batch(problem, np.array([float(E)]), eta_targets, opts)
    sols = []
    for eta, br in zip(eta_targets, results):
        if not br.converged[0]:
            last = sols[-1].z.imag if sols else None
            err = ConvergenceError(
                f"continuation at E={E} failed at eta={failed_eta[0]:.3e}; "
                f"last converged target eta={last}",
                partial=sols,
            )
            err.failed_eta = float(failed_eta[0])
            err.last_converged_eta = last
            raise err
        sols.append(_finish(problem, complex(E, eta), br))
    return sols
