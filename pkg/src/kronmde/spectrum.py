"""Self-consistent density of states, support estimates and pseudospectra.

Support classification uses the growth of ``max_j |Im m_j(E + i eta)| / eta``
as ``eta`` decreases.  Writing ``m_j`` as the Stieltjes transform of the
matrix measure ``v_j``::

    Im m_j(E + i eta) / eta = int v_j(dt) / ((t - E)^2 + eta^2)

which increases as ``eta`` decreases and stays below ``1/d^2`` when ``E`` is
at distance ``d`` from the support.  Inside the support it grows like
``1/eta``.  A point is IN when the value at the ``eta`` floor reaches a
threshold.  Because the value is monotone in ``eta``, a point that crosses
the threshold on an earlier rung of the descent is already decided and is
not iterated further.

Limits of the scheme: isolated point masses are only resolved to
``1/sqrt(threshold)``, and support pieces narrower than the scan step can
be missed.  The noise-free case ``S = 0`` is handled exactly from the
eigenvalues of ``a_j``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import ContractError, DimensionError
from .mde import DysonProblem, EtaSchedule, SolverOptions, auto_init, eta_ladder, solve_at, solve_batch
from .model import HermitianDysonData, KroneckerModel, hermitize
from .superop import dagger, norm_self_energy_max

__all__ = [
    "IN",
    "OUT",
    "UNKNOWN",
    "SKIPPED",
    "ScanOptions",
    "DosCurve",
    "SupportEstimate",
    "ZetaGrid",
    "PseudospectrumGrid",
    "rho_at",
    "dos_curve",
    "support_bracket",
    "estimate_support",
    "dist0_selfconsistent",
    "pseudospectrum",
    "pseudospectrum_row",
    "example_oracle",
    "example_oracle_value",
    "example_oracle_boundary_distance",
    "check_tilde_inclusion",
    "zeta_shift",
]

OUT, IN, UNKNOWN, SKIPPED = 0, 1, 2, 3
SCAN_SCHEDULE = EtaSchedule(start=8.0, ratio=0.3)
STATUS_NAMES = {OUT: "out", IN: "in", UNKNOWN: "unknown", SKIPPED: "skipped"}


@dataclass(frozen=True)
class ScanOptions:
    """Parameters of the support classification.

    ``scan_step`` and ``scan_max`` only matter for distance scans; ``None``
    means "derive from epsilon" (step ``epsilon/4``, max ``2*epsilon``) in
    pseudospectrum runs and "0.01 up to the support bracket" otherwise.
    The default solver descends in eta faster than the plain solver default;
    the descent stays well inside the basin of the Herglotz solution.
    """

    eta_floor: float = 1e-5
    in_threshold: float = 50.0
    scan_step: Optional[float] = None
    scan_max: Optional[float] = None
    solver: SolverOptions = field(default_factory=lambda: SolverOptions(eta_schedule=SCAN_SCHEDULE))

    def to_dict(self) -> dict:
        return {
            "eta_floor": self.eta_floor,
            "in_threshold": self.in_threshold,
            "scan_step": self.scan_step,
            "scan_max": self.scan_max,
            "solver": self.solver.to_dict(),
        }


def _im_part(m: np.ndarray) -> np.ndarray:
    im = (m - dagger(m)) / 2j
    return (im + dagger(im)) / 2


def _max_im_norm(m: np.ndarray) -> np.ndarray:
    """``max_j |Im m_j|`` (spectral norm) over the component axis."""
    w = np.linalg.eigvalsh(_im_part(m))
    return np.abs(w).max(axis=(-1, -2))


def _rho_from(problem: DysonProblem, m: np.ndarray) -> np.ndarray:
    tr = np.trace(_im_part(m), axis1=-2, axis2=-1).real
    return (tr @ problem.counts) / (problem.N * problem.K * math.pi)


# --------------------------------------------------------------------------
# Density of states


@dataclass
class DosCurve:
    E_grid: np.ndarray
    eta: float
    rho: np.ndarray
    max_im_over_eta: np.ndarray
    dist_certificates: np.ndarray
    converged: np.ndarray

    def cdf(self) -> np.ndarray:
        """Trapezoid cumulative integral of ``rho`` normalized to end at 1."""
        rho = np.where(np.isfinite(self.rho), self.rho, 0.0)
        inc = np.concatenate([[0.0], np.cumsum(np.diff(self.E_grid) * (rho[1:] + rho[:-1]) / 2)])
        return inc / inc[-1] if inc[-1] > 0 else inc


def rho_at(data: HermitianDysonData, z: complex, opts: SolverOptions = SolverOptions()) -> float:
    """``(1/(N K pi)) sum_j Tr Im m_j(z)``."""
    sol = solve_at(data, z, opts)
    if not sol.converged:
        from .errors import ConvergenceError

        raise ConvergenceError(f"no convergence at z = {z} (residual {sol.residual:.2e})", partial=sol)
    tr = np.trace(_im_part(sol.m), axis1=-2, axis2=-1).real.sum()
    return float(tr / (data.N * data.K * math.pi))


def _descend(problem, E, eta_floor, opts, shift=None, exit_threshold=None, prune=None):
    """Batched descent in eta with optional early exit.

    Returns ``(status, value, m, rung_eta)`` where ``value`` is
    ``max_j |Im m_j| / eta`` on the last rung an element reached.  When
    ``exit_threshold`` is given an element leaves the descent as soon as its
    value reaches it.  ``prune`` is called after every rung with the current
    status array and may mark further elements SKIPPED.
    """
    E = np.asarray(E, dtype=float)
    n = len(E)
    ladder = eta_ladder([eta_floor], opts.eta_schedule)
    m = auto_init(problem, E + 1j * ladder[0][0])
    status = np.full(n, -1)
    value = np.full(n, np.nan)
    rung = np.full(n, np.nan)
    alive = np.ones(n, dtype=bool)
    for eta, k in ladder:
        if not alive.any():
            break
        tol = opts.tol if k is not None else max(opts.tol, opts.ladder_tol)
        br = solve_batch(problem, E + 1j * eta, m, opts, tol=tol, active=alive, shift=shift)
        m = br.m
        failed = alive & ~br.converged
        status[failed] = UNKNOWN
        rung[failed] = eta
        alive &= br.converged
        idx = np.flatnonzero(alive)
        if idx.size:
            value[idx] = _max_im_norm(m[idx]) / eta
            rung[idx] = eta
        if exit_threshold is not None:
            done = alive & (value >= exit_threshold)
            status[done] = IN
            alive &= ~done
        if prune is not None:
            prune(status)
            alive &= status == -1
    return status, value, m, rung


def dos_curve(
    data: HermitianDysonData, E_grid: Sequence[float], eta: float, opts: SolverOptions = SolverOptions()
) -> DosCurve:
    """``rho(E + i eta)`` on a grid, each point by its own descent in eta.

    Points that fail to converge get ``rho = NaN``.
    """
    E = np.asarray(E_grid, dtype=float)
    problem = DysonProblem(data)
    status, value, m, _ = _descend(problem, E, eta, opts)
    ok = status != UNKNOWN
    rho = np.where(ok, _rho_from(problem, m), np.nan)
    with np.errstate(divide="ignore", invalid="ignore"):
        cert = np.where(rho > 0, np.sqrt(eta / (math.pi * rho)), np.inf)
    return DosCurve(E, float(eta), rho, np.where(ok, value, np.nan), cert, ok)


# --------------------------------------------------------------------------
# Support


@dataclass
class SupportEstimate:
    intervals: List[Tuple[float, float]]
    eta_floor: float
    bracket: Tuple[float, float]
    E_grid: np.ndarray = None
    status: np.ndarray = None
    value: np.ndarray = None
    certificates: np.ndarray = None

    def contains(self, x: float) -> bool:
        return any(lo <= x <= hi for lo, hi in self.intervals)

    def distance(self, x: float) -> float:
        if not self.intervals:
            return math.inf
        return min(0.0 if lo <= x <= hi else min(abs(x - lo), abs(x - hi)) for lo, hi in self.intervals)


def support_bracket(data: HermitianDysonData) -> Tuple[float, float]:
    """``spec A + [-2 |S|^(1/2), 2 |S|^(1/2)]`` as one enclosing interval."""
    if not data.a_is_hermitian:
        raise ContractError("support bracket needs Hermitian a_j")
    eig = np.linalg.eigvalsh(data.a)
    r = 2.0 * math.sqrt(norm_self_energy_max(data))
    return float(eig.min() - r), float(eig.max() + r)


def _merge(E: np.ndarray, inside: np.ndarray, h: float) -> List[Tuple[float, float]]:
    intervals = []
    start = None
    for k in range(len(E)):
        if inside[k] and start is None:
            start = k
        if start is not None and (not inside[k] or k == len(E) - 1):
            end = k if inside[k] else k - 1
            lo, hi = E[start] - h, E[end] + h
            if intervals and lo <= intervals[-1][1]:
                intervals[-1] = (intervals[-1][0], hi)
            else:
                intervals.append((float(lo), float(hi)))
            start = None
    return intervals


def estimate_support(
    data: HermitianDysonData,
    E_grid: Sequence[float],
    eta_floor: float = 1e-5,
    in_threshold: float = 50.0,
    opts: SolverOptions = SolverOptions(),
) -> SupportEstimate:
    """Classify grid points as IN/OUT of the support and merge them into intervals.

    Points outside the support bracket are OUT without solving.  Points
    where the solver fails are UNKNOWN and treated as IN.  Each run of IN
    points is widened by one grid step on both sides (clipped to the
    bracket).
    """
    E = np.sort(np.asarray(E_grid, dtype=float))
    if E.size == 0:
        raise ContractError("empty energy grid")
    lo, hi = support_bracket(data)
    h = float(np.min(np.diff(E))) if E.size > 1 else 0.0
    status = np.full(E.size, OUT)
    value = np.zeros(E.size)
    inb = (E >= lo) & (E <= hi)
    if inb.any():
        problem = DysonProblem(data)
        st, val, m, rung = _descend(problem, E[inb], eta_floor, opts, exit_threshold=in_threshold)
        st = np.where(st == -1, np.where(val >= in_threshold, IN, OUT), st)
        status[inb] = st
        value[inb] = val
        rho = _rho_from(problem, m)
        with np.errstate(divide="ignore", invalid="ignore"):
            cert_in = np.where((rho > 0) & (st != UNKNOWN), np.sqrt(rung / (math.pi * rho)), np.inf)
    cert = np.full(E.size, np.inf)
    if inb.any():
        cert[inb] = cert_in
    inside = (status == IN) | (status == UNKNOWN)
    intervals = [(max(a, lo), min(b, hi)) for a, b in _merge(E, inside, h)]
    return SupportEstimate(intervals, float(eta_floor), (lo, hi), E, status, value, cert)


# --------------------------------------------------------------------------
# Pseudospectrum


def zeta_shift(zetas: np.ndarray, L: int) -> np.ndarray:
    """``[[0, zeta], [conj(zeta), 0]] (x) 1_L`` for each zeta; shape (B, 2L, 2L)."""
    zetas = np.asarray(zetas, dtype=complex).reshape(-1)
    out = np.zeros((len(zetas), 2 * L, 2 * L), dtype=complex)
    eye = np.eye(L)
    out[:, :L, L:] = zetas[:, None, None] * eye
    out[:, L:, :L] = np.conj(zetas)[:, None, None] * eye
    return out


def _noise_free(model: KroneckerModel) -> bool:
    return norm_self_energy_max(hermitize(model, 0.0)) == 0.0


def _exact_dist0(model: KroneckerModel, zetas: np.ndarray) -> np.ndarray:
    # S = 0: supp rho^zeta is the set of eigenvalues of a_j^zeta, i.e. the
    # singular values of a~_j - zeta and their negatives.
    a = model.expectation.a_tilde
    L = model.L
    out = np.empty(len(zetas))
    for k, zeta in enumerate(zetas):
        sv = np.linalg.svd(a - zeta * np.eye(L), compute_uv=False)
        out[k] = sv.min()
    return out


def _exact_tilde_value(model: KroneckerModel, zetas: np.ndarray, eta: float) -> np.ndarray:
    a = model.expectation.a_tilde
    L = model.L
    out = np.empty(len(zetas))
    for k, zeta in enumerate(zetas):
        sv = np.linalg.svd(a - zeta * np.eye(L), compute_uv=False)
        out[k] = (1.0 / (sv ** 2 + eta ** 2)).max()
    return out


def _scan_resolution(opts: ScanOptions, epsilon: Optional[float], fallback_max: float):
    if opts.scan_step is not None:
        h = opts.scan_step
    elif epsilon is not None:
        h = epsilon / 4
    else:
        h = 0.01
    if opts.scan_max is not None:
        top = opts.scan_max
    elif epsilon is not None:
        top = 2 * epsilon
    else:
        top = fallback_max
    n = int(math.floor(top / h + 1e-9)) + 1
    return h, n


def _dist0_batch(model, zetas, opts: ScanOptions, epsilon=None, tilde_epsilon=None, fallback_max=None):
    """dist0, status flags and the E = 0 growth value for a batch of zetas."""
    zetas = np.asarray(zetas, dtype=complex).reshape(-1)
    nz = len(zetas)
    if fallback_max is None:
        fallback_max = 1.0
    h, ne = _scan_resolution(opts, epsilon, fallback_max)
    if _noise_free(model):
        d = _exact_dist0(model, zetas)
        return d, np.zeros(nz, dtype=bool), _exact_tilde_value(model, zetas, opts.eta_floor), h
    base = hermitize(model, 0.0)
    problem = DysonProblem(base)
    Es = np.arange(ne) * h
    E = np.tile(Es, nz)
    owner = np.repeat(np.arange(nz), ne)
    shift = zeta_shift(zetas, model.L)[owner]
    thr = opts.in_threshold
    exit_thr = np.full(E.size, thr)
    if tilde_epsilon is not None:
        exit_thr[Es.size * np.arange(nz)] = max(thr, 1.0 / tilde_epsilon)

    def prune(status):
        st = status.reshape(nz, ne)
        hit = (st == IN) | (st == UNKNOWN)
        first = np.where(hit.any(axis=1), hit.argmax(axis=1), ne)
        later = np.arange(ne)[None, :] > first[:, None]
        # the E = 0 point is kept alive for the imaginary-axis criterion
        later[:, 0] = False
        st[later & (st == -1)] = SKIPPED

    status, value, _, _ = _descend(
        problem, E, opts.eta_floor, opts.solver, shift=shift, exit_threshold=exit_thr, prune=prune
    )
    status = np.where(status == -1, np.where(value >= thr, IN, OUT), status)
    st = status.reshape(nz, ne)
    hit = (st == IN) | (st == UNKNOWN)
    found = hit.any(axis=1)
    first = hit.argmax(axis=1)
    dist0 = np.where(found, np.maximum(first * h - h, 0.0), math.inf)
    dist0[found & (first == 0)] = 0.0
    unknown = np.array([st[k, : first[k] + 1].tolist().count(UNKNOWN) > 0 if found[k] else (st[k] == UNKNOWN).any()
                        for k in range(nz)])
    tilde_value = value.reshape(nz, ne)[:, 0]
    return dist0, unknown, tilde_value, h


def dist0_selfconsistent(model: KroneckerModel, zeta: complex, opts: ScanOptions = ScanOptions()) -> float:
    """Estimate ``dist(0, supp rho^zeta)`` by scanning ``E >= 0``.

    ``rho^zeta`` is symmetric about 0, so only nonnegative energies are
    scanned.  The result is the first IN energy minus one scan step (0 if
    ``E = 0`` is IN); ``inf`` if nothing up to ``scan_max`` is IN.  By
    default the scan runs up to the upper end of the support bracket.
    """
    top = support_bracket(hermitize(model, zeta))[1] if opts.scan_max is None else None
    d, _, _, _ = _dist0_batch(model, [zeta], opts, fallback_max=top)
    return float(d[0])


@dataclass(frozen=True)
class ZetaGrid:
    re_min: float
    re_max: float
    re_count: int
    im_min: float
    im_max: float
    im_count: int

    def __post_init__(self):
        if self.re_count < 1 or self.im_count < 1:
            raise ContractError("zeta grid must be non-empty")

    @classmethod
    def parse(cls, text: str) -> "ZetaGrid":
        """Parse ``"re_min:re_max:count,im_min:im_max:count"``."""
        try:
            re_part, im_part = text.replace(" ", "").split(",")
            r = re_part.split(":")
            i = im_part.split(":")
            return cls(float(r[0]), float(r[1]), int(r[2]), float(i[0]), float(i[1]), int(i[2]))
        except (ValueError, IndexError):
            raise ContractError(f"cannot parse grid spec {text!r}") from None

    @property
    def re(self) -> np.ndarray:
        return np.linspace(self.re_min, self.re_max, self.re_count)

    @property
    def im(self) -> np.ndarray:
        return np.linspace(self.im_min, self.im_max, self.im_count)

    @property
    def step(self) -> float:
        steps = []
        if self.re_count > 1:
            steps.append((self.re_max - self.re_min) / (self.re_count - 1))
        if self.im_count > 1:
            steps.append((self.im_max - self.im_min) / (self.im_count - 1))
        return max(steps) if steps else 0.0

    def points(self) -> np.ndarray:
        """Complex grid of shape (im_count, re_count)."""
        return self.re[None, :] + 1j * self.im[:, None]

    def to_dict(self) -> dict:
        return {
            "re": [self.re_min, self.re_max, self.re_count],
            "im": [self.im_min, self.im_max, self.im_count],
        }


@dataclass
class PseudospectrumGrid:
    grid: ZetaGrid
    epsilon: float
    tilde_epsilon: float
    dist0: np.ndarray
    member: np.ndarray
    member_tilde: np.ndarray
    unknown: np.ndarray
    tilde_value: np.ndarray
    scan_step: float
    options: ScanOptions

    @property
    def zeta(self) -> np.ndarray:
        return self.grid.points()

    def rows(self):
        """CSV rows ``(re, im, dist0, member, member_tilde)`` in row-major order."""
        Z = self.zeta
        for i in range(Z.shape[0]):
            for j in range(Z.shape[1]):
                yield (Z[i, j].real, Z[i, j].imag, self.dist0[i, j], bool(self.member[i, j]),
                       bool(self.member_tilde[i, j]))


def pseudospectrum_row(model: KroneckerModel, zetas, epsilon: float, tilde_epsilon: float, opts: ScanOptions):
    """One work item: dist0, unknown flags and E = 0 values for a row of zetas."""
    d, unk, tv, h = _dist0_batch(model, zetas, opts, epsilon=epsilon, tilde_epsilon=tilde_epsilon)
    return d, unk, tv


def pseudospectrum(
    model: KroneckerModel,
    grid: ZetaGrid,
    epsilon: float,
    opts: ScanOptions = ScanOptions(),
    tilde_epsilon: Optional[float] = None,
    mapper=map,
) -> PseudospectrumGrid:
    """Self-consistent epsilon-pseudospectrum on a rectangular zeta grid.

    ``member`` is ``dist0 <= epsilon``; ``member_tilde`` tests the growth of
    ``max_j |Im m_j(i eta)| / eta`` at the eta floor against
    ``1/tilde_epsilon`` (default ``epsilon``).  Grid rows are independent
    work items; ``mapper`` may be a parallel ``map`` with ordered results.
    UNKNOWN points count as members.
    """
    if not epsilon > 0:
        raise ContractError("epsilon must be positive")
    tilde_epsilon = epsilon if tilde_epsilon is None else tilde_epsilon
    Z = grid.points()
    jobs = [(model, Z[i], epsilon, tilde_epsilon, opts) for i in range(Z.shape[0])]
    results = list(mapper(_row_job, jobs))
    dist0 = np.array([r[0] for r in results])
    unknown = np.array([r[1] for r in results])
    tv = np.array([r[2] for r in results])
    member = (dist0 <= epsilon) | unknown
    member_tilde = tv >= 1.0 / tilde_epsilon
    h, _ = _scan_resolution(opts, epsilon, 1.0)
    return PseudospectrumGrid(grid, epsilon, tilde_epsilon, dist0, member, member_tilde, unknown, tv, h, opts)


def _row_job(args):
    return pseudospectrum_row(*args)


# --------------------------------------------------------------------------
# Closed-form set for deterministic diagonal plus i.i.d. noise


def example_oracle_value(points, zeta) -> np.ndarray:
    """``sum_i 1/|zeta_i - zeta|^2`` (``inf`` at a pole), vectorized over ``zeta``."""
    pts = np.asarray(points, dtype=complex).reshape(-1)
    z = np.asarray(zeta, dtype=complex)
    d2 = np.abs(z[..., None] - pts) ** 2
    with np.errstate(divide="ignore"):
        return np.sum(1.0 / d2, axis=-1)


def example_oracle(points, L: Optional[int], zeta) -> np.ndarray:
    """Membership in ``{zeta : sum_i 1/|zeta_i - zeta|^2 >= L}``; poles count as inside."""
    pts = np.asarray(points, dtype=complex).reshape(-1)
    L = len(pts) if L is None else L
    out = example_oracle_value(pts, zeta) >= L
    return out if np.ndim(out) else bool(out)


@dataclass
class InclusionReport:
    epsilon: float
    sqrt_epsilon: float
    interior_violations: list
    boundary_violations: list
    grid: Optional[PseudospectrumGrid] = None

    @property
    def ok(self) -> bool:
        return not self.interior_violations

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "sqrt_epsilon": self.sqrt_epsilon,
            "interior_violations": [[z.real, z.imag] for z in self.interior_violations],
            "boundary_violations": [[z.real, z.imag] for z in self.boundary_violations],
        }


def _boundary_band(mask: np.ndarray) -> np.ndarray:
    """Points whose 8-neighbourhood contains both values of ``mask``."""
    p = np.pad(mask, 1, mode="edge")
    any_t = np.zeros_like(mask)
    any_f = np.zeros_like(mask)
    ny, nx = mask.shape
    for di in (0, 1, 2):
        for dj in (0, 1, 2):
            sl = p[di:di + ny, dj:dj + nx]
            any_t |= sl
            any_f |= ~sl
    return any_t & any_f


def check_tilde_inclusion(
    model: KroneckerModel, grid: ZetaGrid, epsilon: float, opts: ScanOptions = ScanOptions(), mapper=map
) -> InclusionReport:
    """Points of the imaginary-axis set at ``epsilon`` outside the pseudospectrum at ``sqrt(epsilon)``.

    Violations within one grid step of the boundary of either mask are
    reported separately from interior ones.
    """
    ps = pseudospectrum(model, grid, math.sqrt(epsilon), opts, tilde_epsilon=epsilon, mapper=mapper)
    bad = ps.member_tilde & ~ps.member
    band = _boundary_band(ps.member) | _boundary_band(ps.member_tilde)
    Z = ps.zeta
    interior = [complex(z) for z in Z[bad & ~band]]
    boundary = [complex(z) for z in Z[bad & band]]
    return InclusionReport(epsilon, math.sqrt(epsilon), interior, boundary, ps)


def example_oracle_boundary_distance(points, L: Optional[int], zeta, resolution: float = 2e-3) -> np.ndarray:
    """Approximate distance from each ``zeta`` to the boundary of the closed-form set.

    The boundary is traced as the sign changes of ``sum_i 1/|zeta_i - z|^2 - L``
    on a mesh of spacing ``resolution`` covering the query points plus a
    margin; the error is at most about ``resolution``.
    """
    from scipy.spatial import cKDTree

    pts = np.asarray(points, dtype=complex).reshape(-1)
    L = len(pts) if L is None else L
    z = np.asarray(zeta, dtype=complex)
    flat = z.reshape(-1)
    # the set lies within distance sqrt(len(pts)/L) of the points
    reach = math.sqrt(len(pts) / L) + resolution
    lo_re = min(flat.real.min(), pts.real.min() - reach) - 2 * resolution
    hi_re = max(flat.real.max(), pts.real.max() + reach) + 2 * resolution
    lo_im = min(flat.imag.min(), pts.imag.min() - reach) - 2 * resolution
    hi_im = max(flat.imag.max(), pts.imag.max() + reach) + 2 * resolution
    xs = np.arange(lo_re, hi_re + resolution, resolution)
    ys = np.arange(lo_im, hi_im + resolution, resolution)
    mesh = xs[None, :] + 1j * ys[:, None]
    inside = example_oracle_value(pts, mesh) >= L
    edge = np.zeros_like(inside)
    edge[:, :-1] |= inside[:, :-1] != inside[:, 1:]
    edge[:-1, :] |= inside[:-1, :] != inside[1:, :]
    bpts = mesh[edge]
    if bpts.size == 0:
        return np.full(z.shape, math.inf)
    tree = cKDTree(np.column_stack([bpts.real, bpts.imag]))
    dist, _ = tree.query(np.column_stack([flat.real, flat.imag]))
    return dist.reshape(z.shape)
