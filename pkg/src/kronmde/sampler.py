"""Finite-N sampling of Kronecker random matrices and empirical checks.

Every random family draws from its own counter-based Philox stream keyed
by ``(seed, family, trial)``, so a matrix depends only on those three
numbers and not on the order in which trials are run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from .errors import ContractError, ConvergenceError, DimensionError, ModelValidationError
from .model import KroneckerModel, hermitian_dyson_data, validate
from .spectrum import (
    DosCurve,
    PseudospectrumGrid,
    ScanOptions,
    dist0_selfconsistent,
    example_oracle_boundary_distance,
    example_oracle_value,
)

__all__ = [
    "DISTRIBUTIONS",
    "SampleConfig",
    "EsdHistogram",
    "HERMITIAN_CAP",
    "GENERAL_CAP",
    "sample_model",
    "sample_eigenvalues",
    "eig_hermitian",
    "eig_general",
    "esd_histogram",
    "OracleSet",
    "GridSet",
    "TrialContainment",
    "ContainmentReport",
    "containment_report",
    "GapReport",
    "hermitized_gap_check",
    "smallest_singular_value",
    "global_law_distance",
    "kolmogorov_distance",
]

DISTRIBUTIONS = ("ComplexGaussian", "RealGaussian", "Rademacher")

# desk-scale limits on N for dense eigensolves; SampleConfig.allow_large lifts them
HERMITIAN_CAP, GENERAL_CAP = 4000, 2000

# family ids in the stream key; Hermitian families first, then i.i.d. ones
_HERM, _IID = 0, 1


@dataclass(frozen=True)
class SampleConfig:
    seed: int = 0
    distribution: str = "ComplexGaussian"
    trials: int = 1
    allow_large: bool = False

    def __post_init__(self):
        if self.distribution not in DISTRIBUTIONS:
            raise ContractError(f"unknown distribution {self.distribution!r}; choose from {DISTRIBUTIONS}")
        if int(self.trials) < 1:
            raise ContractError("trials must be at least 1")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ContractError("seed must be a 64-bit unsigned integer")

    def to_dict(self) -> dict:
        return {
            "seed": int(self.seed),
            "distribution": self.distribution,
            "trials": int(self.trials),
            "allow_large": bool(self.allow_large),
        }


def _check_cap(model: KroneckerModel, cfg: SampleConfig, cap: int):
    if model.N > cap and not cfg.allow_large:
        raise ContractError(f"N = {model.N} exceeds the desk-scale cap {cap}; set allow_large to override")


def _rng(seed: int, kind: int, family: int, trial: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(kind, family, trial))
    return np.random.Generator(np.random.Philox(ss))


def _unit_entries(rng, shape, distribution: str, real: bool = False) -> np.ndarray:
    """Centered unit-variance entries; ``real`` forces a real law."""
    if distribution == "Rademacher":
        return rng.integers(0, 2, size=shape).astype(float) * 2 - 1
    if distribution == "RealGaussian" or real:
        return rng.standard_normal(shape)
    g = rng.standard_normal(shape + (2,))
    return (g[..., 0] + 1j * g[..., 1]) / math.sqrt(2)


def _family_std(model: KroneckerModel, hermitian: bool, k: int) -> np.ndarray:
    v = model.variances
    if v.is_flat:
        return np.full((v.N, v.N), math.sqrt(v.scale / v.N))
    arr = v.s_array() if hermitian else v.t_array()
    return np.sqrt(np.asarray(arr[k]))


def _hermitian_family(model, cfg, k, trial) -> np.ndarray:
    N = model.N
    rng = _rng(cfg.seed, _HERM, k, trial)
    z = _unit_entries(rng, (N, N), cfg.distribution)
    diag = _unit_entries(rng, (N,), cfg.distribution, real=True)
    upper = np.triu(z, 1)
    x = upper + np.conj(upper.T)
    x[np.diag_indices(N)] = diag
    return x * _family_std(model, True, k)


def _iid_family(model, cfg, k, trial) -> np.ndarray:
    N = model.N
    rng = _rng(cfg.seed, _IID, k, trial)
    return _unit_entries(rng, (N, N), cfg.distribution) * _family_std(model, False, k)


def _add_kron(X: np.ndarray, S: np.ndarray, Y: np.ndarray, N: int):
    # X += kron(S, Y) touching only the nonzero blocks of S
    for p, q in zip(*np.nonzero(S)):
        X[p * N:(p + 1) * N, q * N:(q + 1) * N] += S[p, q] * Y


def sample_model(model: KroneckerModel, cfg: SampleConfig, trial_index: int = 0) -> np.ndarray:
    """Draw one ``LN x LN`` realization of the model.

    Families whose structure matrices vanish are skipped, so adding a zero
    family does not change the other families' draws.
    """
    report = validate(model)
    if not report.ok:
        raise ModelValidationError(report)
    L, N = model.L, model.N
    st = model.structure
    X = np.zeros((L * N, L * N), dtype=complex)
    for k in range(model.ell):
        if np.any(st.alpha_tilde[k]):
            _add_kron(X, st.alpha_tilde[k], _hermitian_family(model, cfg, k, trial_index), N)
        if np.any(st.beta_tilde[k]) or np.any(st.gamma_tilde[k]):
            Y = _iid_family(model, cfg, k, trial_index)
            _add_kron(X, st.beta_tilde[k], Y, N)
            _add_kron(X, st.gamma_tilde[k], np.conj(Y.T), N)
    a = model.expectation.a_tilde
    for p in range(L):
        for q in range(L):
            X[p * N + np.arange(N), q * N + np.arange(N)] += a[:, p, q]
    return X


def eig_hermitian(H: np.ndarray, check: bool = False) -> np.ndarray:
    """Ascending eigenvalues of a Hermitian matrix.

    With ``check=True`` a few eigenpairs are recomputed and their residual
    ``|Hv - lambda v|`` is compared against ``1e-8 |H|``.
    """
    H = np.asarray(H)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {H.shape}")
    scale = max(np.linalg.norm(H), 1e-300)
    if np.linalg.norm(H - np.conj(H.T)) > 1e-10 * scale:
        raise ContractError("matrix is not Hermitian")
    if not check:
        return np.linalg.eigvalsh(H)
    w, v = np.linalg.eigh(H)
    idx = np.linspace(0, len(w) - 1, min(len(w), 8)).astype(int)
    res = np.linalg.norm(H @ v[:, idx] - v[:, idx] * w[idx], axis=0).max()
    if res > 1e-8 * np.linalg.norm(H, 2):
        raise ConvergenceError(f"eigenpair residual {res:.2e} too large", partial=w)
    return w


def eig_general(X: np.ndarray, check: bool = False, seed: int = 0) -> np.ndarray:
    """Eigenvalues of a general square matrix (LAPACK ``geev``).

    With ``check=True`` a sample of eigenvalues is verified by inverse
    iteration: the residual ``|Xv - lambda v|`` must be below ``1e-6 |X|``.
    """
    X = np.asarray(X)
    if X.ndim != 2 or X.shape[0] != X.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {X.shape}")
    try:
        w = np.linalg.eigvals(X)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError(f"eigenvalue iteration failed: {exc}", partial=None) from None
    if check and len(w):
        rng = np.random.default_rng(seed)
        nX = max(np.linalg.norm(X, 2), 1e-300)
        n = X.shape[0]
        for k in rng.choice(len(w), size=min(len(w), 5), replace=False):
            lam = w[k]
            A = X - (lam + 1e-10 * nX) * np.eye(n)
            v = rng.standard_normal(n) + 0j
            for _ in range(3):
                v = np.linalg.lstsq(A, v, rcond=None)[0]
                v /= np.linalg.norm(v)
            res = np.linalg.norm(X @ v - lam * v)
            if res > 1e-6 * nX:
                raise ConvergenceError(f"eigenpair residual {res:.2e} too large", partial=w)
    return w


def sample_eigenvalues(model: KroneckerModel, cfg: SampleConfig, trial_index: int = 0) -> np.ndarray:
    """Eigenvalues of one sample; real and ascending for Hermitian models."""
    if model.is_hermitian:
        _check_cap(model, cfg, HERMITIAN_CAP)
        X = sample_model(model, cfg, trial_index)
        return eig_hermitian((X + np.conj(X.T)) / 2)
    _check_cap(model, cfg, GENERAL_CAP)
    return eig_general(sample_model(model, cfg, trial_index))


@dataclass
class EsdHistogram:
    edges: np.ndarray
    counts: np.ndarray
    total: int

    @property
    def weights(self) -> np.ndarray:
        return self.counts / self.total

    def rows(self):
        for e, w in zip(self.edges[:-1], self.weights):
            yield (float(e), float(w))


def esd_histogram(eigs: np.ndarray, edges) -> EsdHistogram:
    """Histogram with weight ``1/(NL)`` per eigenvalue; the outermost bins absorb outliers."""
    eigs = np.asarray(eigs, dtype=float)
    edges = np.asarray(edges, dtype=float)
    clipped = np.clip(eigs, edges[0], edges[-1])
    counts, _ = np.histogram(clipped, bins=edges)
    return EsdHistogram(edges, counts, len(eigs))


# --------------------------------------------------------------------------
# Containment


@dataclass(frozen=True)
class OracleSet:
    """Closed-form set ``sum_i 1/|zeta_i - zeta|^2 >= L`` dilated by ``epsilon``."""

    points: tuple
    L: Optional[int] = None
    resolution: float = 1e-3

    def distance(self, zeta: np.ndarray) -> np.ndarray:
        pts = np.asarray(self.points, dtype=complex)
        L = len(pts) if self.L is None else self.L
        zeta = np.asarray(zeta, dtype=complex)
        inside = example_oracle_value(pts, zeta) >= L
        out = np.zeros(zeta.shape)
        if (~inside).any():
            out[~inside] = example_oracle_boundary_distance(pts, L, zeta[~inside], self.resolution)
        return out

    def to_dict(self) -> dict:
        return {"kind": "oracle", "points": [[complex(p).real, complex(p).imag] for p in self.points],
                "L": self.L}


@dataclass
class GridSet:
    """Membership looked up on the nearest cell of a computed pseudospectrum grid."""

    grid: PseudospectrumGrid

    def distance(self, zeta: np.ndarray):
        g = self.grid.grid
        zeta = np.asarray(zeta, dtype=complex)
        re, im = g.re, g.im
        j = np.abs(zeta.real[:, None] - re[None, :]).argmin(axis=1)
        i = np.abs(zeta.imag[:, None] - im[None, :]).argmin(axis=1)
        inside = self.grid.member[i, j]
        Z = self.grid.zeta[self.grid.member]
        out = np.zeros(zeta.shape)
        if (~inside).any() and Z.size:
            out[~inside] = np.abs(zeta[~inside][:, None] - Z[None, :]).min(axis=1)
        elif (~inside).any():
            out[~inside] = math.inf
        return out

    def outside_grid(self, zeta: np.ndarray) -> np.ndarray:
        g = self.grid.grid
        h = g.step / 2
        return ((zeta.real < g.re_min - h) | (zeta.real > g.re_max + h)
                | (zeta.imag < g.im_min - h) | (zeta.imag > g.im_max + h))

    def to_dict(self) -> dict:
        return {"kind": "grid", "grid": self.grid.grid.to_dict(), "epsilon": self.grid.epsilon}


@dataclass
class TrialContainment:
    trial: int
    count: int
    outside: int
    max_distance: float
    outliers: list
    extrapolated: int = 0

    def to_dict(self) -> dict:
        return {
            "trial": self.trial,
            "eigenvalues": self.count,
            "outside": self.outside,
            "max_distance": self.max_distance,
            "outliers": [[z.real, z.imag] for z in self.outliers],
            "extrapolated": self.extrapolated,
        }


@dataclass
class ContainmentReport:
    epsilon: float
    config: SampleConfig
    trials: List[TrialContainment]
    membership: dict

    @property
    def total_outside(self) -> int:
        return sum(t.outside for t in self.trials)

    @property
    def outlier_rate(self) -> float:
        n = sum(t.count for t in self.trials)
        return self.total_outside / n if n else 0.0

    @property
    def ok(self) -> bool:
        return self.total_outside == 0

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "sample": self.config.to_dict(),
            "membership": self.membership,
            "total_outside": self.total_outside,
            "outlier_rate": self.outlier_rate,
            "trials": [t.to_dict() for t in self.trials],
        }


def _containment_trial(args):
    model, cfg, trial, epsilon, membership, dilate = args
    w = eig_general(sample_model(model, cfg, trial))
    d = membership.distance(w)
    limit = epsilon if dilate else 0.0
    bad = d > limit
    extrap = int(membership.outside_grid(w).sum()) if isinstance(membership, GridSet) else 0
    out = w[bad]
    order = np.argsort(-d[bad])
    return TrialContainment(
        trial, len(w), int(bad.sum()), float(d.max()) if len(d) else 0.0,
        [complex(z) for z in out[order][:20]], extrap,
    )


def containment_report(
    model: KroneckerModel,
    cfg: SampleConfig,
    epsilon: float,
    membership,
    mapper=map,
) -> ContainmentReport:
    """Count sampled eigenvalues outside a membership set.

    ``membership`` is an :class:`OracleSet`, whose distance is measured to
    the undilated closed-form set and compared with ``epsilon``, or a
    :class:`GridSet` (or a :class:`PseudospectrumGrid`) already computed at
    ``epsilon``, where an eigenvalue is outside when its nearest cell is not
    a member.  Eigenvalues beyond the grid use the nearest cell and are
    counted in ``extrapolated``.
    """
    _check_cap(model, cfg, GENERAL_CAP)
    if isinstance(membership, PseudospectrumGrid):
        membership = GridSet(membership)
    dilate = isinstance(membership, OracleSet)
    jobs = [(model, cfg, t, epsilon, membership, dilate) for t in range(cfg.trials)]
    trials = list(mapper(_containment_trial, jobs))
    return ContainmentReport(float(epsilon), cfg, trials, membership.to_dict())


# --------------------------------------------------------------------------
# Hermitized gap


def smallest_singular_value(X: np.ndarray, zeta: complex) -> float:
    """``dist(0, spec H^zeta)``, i.e. the smallest singular value of ``X - zeta``."""
    n = X.shape[0]
    return float(np.linalg.svd(X - zeta * np.eye(n), compute_uv=False)[-1])


@dataclass
class GapReport:
    zeta: complex
    epsilon: float
    selfconsistent: float
    empirical: list
    slack: float

    @property
    def outside(self) -> bool:
        return self.selfconsistent > self.epsilon

    @property
    def ok(self) -> bool:
        if not self.outside:
            return True
        return min(self.empirical) >= self.selfconsistent - self.slack

    def to_dict(self) -> dict:
        return {
            "zeta": [self.zeta.real, self.zeta.imag],
            "epsilon": self.epsilon,
            "selfconsistent_dist0": self.selfconsistent,
            "empirical_dist0": self.empirical,
            "slack": self.slack,
            "outside": self.outside,
            "ok": self.ok,
        }


def hermitized_gap_check(
    model: KroneckerModel,
    cfg: SampleConfig,
    zeta: complex,
    epsilon: float,
    slack: float = 0.1,
    opts: ScanOptions = ScanOptions(),
) -> GapReport:
    """Compare ``dist(0, spec H^zeta)`` of samples with the self-consistent value.

    For ``zeta`` outside the pseudospectrum at ``epsilon`` every sample must
    satisfy ``empirical >= selfconsistent - slack``.
    """
    zeta = complex(zeta)
    _check_cap(model, cfg, GENERAL_CAP)
    d0 = dist0_selfconsistent(model, zeta, opts)
    emp = [smallest_singular_value(sample_model(model, cfg, t), zeta) for t in range(cfg.trials)]
    return GapReport(zeta, float(epsilon), float(d0), emp, float(slack))


# --------------------------------------------------------------------------
# Global law


def kolmogorov_distance(eigs: np.ndarray, grid: np.ndarray, cdf: np.ndarray) -> float:
    """``sup_x |F_emp(x) - F(x)|`` with ``F`` piecewise linear on ``grid``.

    The supremum is attained at an eigenvalue (from either side) or at a grid
    node, so only those points are evaluated.
    """
    eigs = np.sort(np.asarray(eigs, dtype=float))
    n = len(eigs)
    F_at_eigs = np.interp(eigs, grid, cdf, left=0.0, right=1.0)
    upper = np.arange(1, n + 1) / n
    lower = np.arange(n) / n
    d = max(np.abs(upper - F_at_eigs).max(), np.abs(lower - F_at_eigs).max())
    emp_grid = np.searchsorted(eigs, grid, side="right") / n
    return float(max(d, np.abs(emp_grid - cdf).max()))


def global_law_distance(model: KroneckerModel, cfg: SampleConfig, dos: DosCurve, trial_index: int = 0) -> float:
    """Kolmogorov distance between one sample's spectral CDF and the DOS CDF."""
    if not model.is_hermitian:
        raise ContractError("global law check needs a Hermitian model")
    eigs = sample_eigenvalues(model, cfg, trial_index)
    return kolmogorov_distance(eigs, dos.E_grid, dos.cdf())
