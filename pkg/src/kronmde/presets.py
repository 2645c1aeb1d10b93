"""Built-in models used by the acceptance suite and the ``preset`` command."""

from __future__ import annotations

import numpy as np

from .errors import ContractError
from .model import Kappa, KroneckerModel, VarianceProfile, make_model

__all__ = ["PRESETS", "FIG1_POINTS", "preset", "wigner", "ginibre", "example_model", "two_band", "deterministic"]

FIG1_POINTS = {
    "fig1a": (0.97, -0.97),
    "fig1b": (1.0, -1.0),
    "fig1c": (1.03, -1.03),
    "fig1d": (0.0, 1.4, -1.4, 0.8 + 1.26j, -0.8 + 1.26j),
}


def wigner(N: int = 1000) -> KroneckerModel:
    """Flat Wigner matrix with entry variance ``1/N``; semicircle on [-2, 2]."""
    return make_model(1, N, alpha_tilde=[[[1.0]]], variances=VarianceProfile.flat(N, 1), name="wigner")


def ginibre(N: int = 1000) -> KroneckerModel:
    """I.i.d. matrix with entry variance ``1/N``; circular law on the unit disk."""
    return make_model(1, N, beta_tilde=[[[1.0]]], variances=VarianceProfile.flat(N, 1), name="ginibre")


def example_model(points, N: int = 1000, name: str = "") -> KroneckerModel:
    """``diag(points) (x) 1 + W`` with ``W`` i.i.d. of entry variance ``1/(N L)``.

    ``W`` is written as ``sum_{p,q} E_pq (x) Y_pq`` with ``L^2`` independent
    i.i.d. blocks, so ``ell = L^2``.
    """
    points = np.asarray(points, dtype=complex)
    L = len(points)
    beta = np.zeros((L * L, L, L), dtype=complex)
    for p in range(L):
        for q in range(L):
            beta[p * L + q, p, q] = 1.0
    return make_model(
        L,
        N,
        beta_tilde=beta,
        variances=VarianceProfile.flat(N, L * L, scale=1.0 / L),
        a_tilde=np.diag(points),
        name=name,
    )


def two_band(N: int = 1000, shift: float = 3.0) -> KroneckerModel:
    """Flat Wigner noise on top of ``a_i = +shift`` (first half) and ``-shift``."""
    a = np.where(np.arange(N) < N // 2, shift, -shift).astype(complex).reshape(N, 1, 1)
    return make_model(1, N, alpha_tilde=[[[1.0]]], variances=VarianceProfile.flat(N, 1), a_tilde=a, name="two-band")


def deterministic(points, N: int = 4) -> KroneckerModel:
    """Noise-free model ``diag(points) (x) 1`` (all variances zero)."""
    points = np.asarray(points, dtype=complex)
    L = len(points)
    return make_model(
        L, N, beta_tilde=np.zeros((1, L, L)), variances=VarianceProfile.flat(N, 1, scale=0.0),
        a_tilde=np.diag(points), name="deterministic",
    )


PRESETS = ("wigner", "ginibre", "fig1a", "fig1b", "fig1c", "fig1d", "two-band")


def preset(name: str, N: int = 1000) -> KroneckerModel:
    if name == "wigner":
        return wigner(N)
    if name == "ginibre":
        return ginibre(N)
    if name in FIG1_POINTS:
        return example_model(FIG1_POINTS[name], N, name=name)
    if name == "two-band":
        return two_band(N)
    raise ContractError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
