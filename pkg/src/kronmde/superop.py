"""Self-energy operator, stability operator and the symmetrized F-operator.

Block vectors are plain complex arrays of shape ``(..., N, K, K)``; leading
axes are batch axes and are carried through every linear map here.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ContractError, ConvergenceError, DimensionError, PositivityError, SingularityError
from .model import HermitianDysonData

__all__ = [
    "SelfEnergyOperator",
    "StabilityDiagnostics",
    "apply_self_energy",
    "hs_inner",
    "hs_norm",
    "norm_self_energy_max",
    "norm_self_energy_hs",
    "check_self_adjoint",
    "materialize_self_energy",
    "materialize_stability_operator",
    "apply_stability_operator",
    "linv_norm_hs",
    "f_operator_analysis",
    "verify_decomposition",
    "identity_block_vector",
    "random_block_vector",
]

DENSE_LIMIT = 4096
EIG_FLOOR = 1e-14


def dagger(x: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(x, -1, -2))


def hs_inner(r: np.ndarray, t: np.ndarray) -> complex:
    """Normalized trace pairing ``(1/NK) sum_i Tr(r_i^* t_i)``."""
    N, K = r.shape[-3], r.shape[-1]
    return np.sum(np.conj(r) * t) / (N * K)


def hs_norm(r: np.ndarray) -> float:
    N, K = r.shape[-3], r.shape[-1]
    return float(np.sqrt(np.sum(np.abs(r) ** 2) / (N * K)))


def identity_block_vector(N: int, K: int) -> np.ndarray:
    return np.broadcast_to(np.eye(K, dtype=complex), (N, K, K)).copy()


def random_block_vector(rng: np.random.Generator, N: int, K: int, psd: bool = False) -> np.ndarray:
    g = rng.standard_normal((N, K, K)) + 1j * rng.standard_normal((N, K, K))
    if psd:
        return g @ dagger(g)
    return g


def _kron_left_right(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Matrix of ``x -> A x B`` on row-major vectorized K x K matrices."""
    return np.kron(A, B.T)


class SelfEnergyOperator:
    """The positivity preserving map ``S`` acting on block vectors.

    Component ``i`` of ``S[r]`` is::

        sum_k sum_mu s^mu_ik alpha_mu r_k alpha_mu
            + sum_nu (t^nu_ik beta_nu r_k beta_nu^* + t^nu_ki beta_nu^* r_k beta_nu)

    For flat variance profiles every component equals the same map applied
    to ``(scale/N) sum_k r_k``, which costs one block sum.
    """

    def __init__(self, data: HermitianDysonData):
        self.data = data
        self.N = data.N
        self.K = data.K
        self.flat = data.variances.is_flat
        self.scale = data.variances.scale
        K2 = self.K * self.K
        # x -> A x B on row-major vectorized blocks is x_vec @ kron(A, B^T)^T
        self._alpha_ops = [_kron_left_right(a, a).T for a in data.alpha if np.any(a)]
        self._beta_ops = [
            (_kron_left_right(b, b.conj().T).T, _kron_left_right(b.conj().T, b).T)
            for b in data.beta if np.any(b)
        ]
        self._alpha_idx = [mu for mu in range(data.ell) if np.any(data.alpha[mu])]
        self._beta_idx = [nu for nu in range(data.ell) if np.any(data.beta[nu])]
        total = np.zeros((K2, K2), dtype=complex)
        for op in self._alpha_ops:
            total += op
        for op1, op2 in self._beta_ops:
            total += op1 + op2
        self._structure_op = total
        if not self.flat:
            s = data.variances.s_array()
            t = data.variances.t_array()
            self._s = [np.ascontiguousarray(s[mu]) for mu in self._alpha_idx]
            self._t = [np.ascontiguousarray(t[nu]) for nu in self._beta_idx]
            self._tT = [np.ascontiguousarray(x.T) for x in self._t]

    def structure_map(self, x: np.ndarray) -> np.ndarray:
        """``sum_mu alpha x alpha + sum_nu (beta x beta^* + beta^* x beta)`` on (..., K, K)."""
        K = self.K
        vec = x.reshape(x.shape[:-2] + (K * K,))
        return (vec @ self._structure_op).reshape(x.shape)

    def apply_flat_sum(self, total: np.ndarray) -> np.ndarray:
        """Flat-profile component from an already formed block sum ``sum_k r_k``."""
        return self.structure_map(total * (self.scale / self.N))

    def __call__(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=complex)
        if r.shape[-3:] != (self.N, self.K, self.K):
            raise DimensionError(
                f"block vector has shape {r.shape[-3:]}, expected {(self.N, self.K, self.K)}"
            )
        if self.flat:
            comp = self.apply_flat_sum(r.sum(axis=-3))
            return np.broadcast_to(comp[..., None, :, :], r.shape).copy()
        K2 = self.K * self.K
        vec = r.reshape(r.shape[:-2] + (K2,))
        out = np.zeros_like(vec)
        for s, op in zip(self._s, self._alpha_ops):
            out += (s @ vec) @ op
        for t, tT, (op1, op2) in zip(self._t, self._tT, self._beta_ops):
            out += (t @ vec) @ op1
            out += (tT @ vec) @ op2
        return out.reshape(r.shape)


def apply_self_energy(data: HermitianDysonData, r: np.ndarray) -> np.ndarray:
    return SelfEnergyOperator(data)(r)


def norm_self_energy_max(data: HermitianDysonData) -> float:
    """``max_i |S_i[1]|``.

    For a positivity preserving map this is the operator norm induced by
    the max-over-blocks spectral norm (Russo-Dye), so no iteration is needed.
    """
    S = SelfEnergyOperator(data)
    if S.flat:
        comp = S.apply_flat_sum(data.N * np.eye(data.K, dtype=complex))
        return float(np.linalg.norm(comp, 2))
    out = S(identity_block_vector(data.N, data.K))
    return float(np.linalg.norm(out, 2, axis=(1, 2)).max())


def norm_self_energy_hs(data: HermitianDysonData, tol: float = 1e-12, max_iter: int = 10_000) -> float:
    """Norm of ``S`` induced by the normalized Hilbert-Schmidt norm.

    ``S`` is self-adjoint and positivity preserving, so its norm is the
    Perron eigenvalue, found by power iteration from the identity.
    """
    S = SelfEnergyOperator(data)
    r = identity_block_vector(data.N, data.K)
    lam = 0.0
    for _ in range(max_iter):
        y = S(r)
        n = hs_norm(y)
        if n == 0.0:
            return 0.0
        r = y / n
        if abs(n - lam) <= tol * n:
            return n
        lam = n
    return lam


def check_self_adjoint(
    data: HermitianDysonData, trials: int = 10, tol: float = 1e-12, seed: int = 0
) -> bool:
    """Probe ``<R, S[T]> == <S[R], T>`` on random block vectors."""
    if trials < 1:
        raise ContractError("trials must be at least 1")
    S = SelfEnergyOperator(data)
    rng = np.random.default_rng(seed)
    for _ in range(trials):
        R = random_block_vector(rng, data.N, data.K)
        T = random_block_vector(rng, data.N, data.K)
        lhs = hs_inner(R, S(T))
        rhs = hs_inner(S(R), T)
        if abs(lhs - rhs) > tol * hs_norm(R) * hs_norm(T):
            return False
    return True


# --------------------------------------------------------------------------
# Dense matrices in the row-major entry basis of (N, K, K)


def _check_dense(data: HermitianDysonData, limit: int) -> int:
    n = data.N * data.K * data.K
    if n > limit:
        raise DimensionError(
            f"dense operator would be {n}x{n}, above the limit of {limit} (N*K^2)"
        )
    return n


def materialize_self_energy(data: HermitianDysonData, limit: int = DENSE_LIMIT) -> np.ndarray:
    """Dense matrix of ``S`` in the entry basis of block vectors."""
    _check_dense(data, limit)
    K2 = data.K * data.K
    s = data.variances.s_array()
    t = data.variances.t_array()
    out = np.zeros((data.N * K2, data.N * K2), dtype=complex)
    for mu in range(data.ell):
        al, be = data.alpha[mu], data.beta[mu]
        if np.any(al):
            out += np.kron(s[mu], _kron_left_right(al, al))
        if np.any(be):
            bd = be.conj().T
            out += np.kron(t[mu], _kron_left_right(be, bd))
            out += np.kron(t[mu].T, _kron_left_right(bd, be))
    return out


def materialize_stability_operator(
    data: HermitianDysonData, m: np.ndarray, limit: int = DENSE_LIMIT
) -> np.ndarray:
    """Dense matrix of ``r -> r - m S[r] m`` (componentwise)."""
    n = _check_dense(data, limit)
    m = np.asarray(m, dtype=complex)
    if m.shape != (data.N, data.K, data.K):
        raise DimensionError(f"m has shape {m.shape}, expected {(data.N, data.K, data.K)}")
    K2 = data.K * data.K
    Smat = materialize_self_energy(data, limit)
    out = np.eye(n, dtype=complex)
    for i in range(data.N):
        rows = slice(i * K2, (i + 1) * K2)
        out[rows] -= _kron_left_right(m[i], m[i]) @ Smat[rows]
    return out


def apply_stability_operator(data: HermitianDysonData, m: np.ndarray, r: np.ndarray) -> np.ndarray:
    return r - m @ SelfEnergyOperator(data)(r) @ m


def linv_norm_hs(data: HermitianDysonData, m: np.ndarray, limit: int = DENSE_LIMIT) -> float:
    """Norm of the inverse stability operator in the Hilbert-Schmidt norm."""
    Lmat = materialize_stability_operator(data, m, limit)
    smin = np.linalg.svd(Lmat, compute_uv=False)[-1]
    if smin < 1e-14:
        raise SingularityError(
            f"stability operator is singular (sigma_min = {smin:.3e}); "
            "the spectral parameter is at a spectral edge"
        )
    return float(1.0 / smin)


# --------------------------------------------------------------------------
# Symmetrization and the F-operator


@dataclass
class StabilityDiagnostics:
    norm_S_max: float
    norm_S_hs: float
    norm_Linv_hs: float
    norm_F: float
    gap_F: float
    gap_identity_rhs: float
    gap_identity_residual: float
    power_iterations: int
    F: np.ndarray
    W: np.ndarray
    U: np.ndarray
    T: np.ndarray
    sqrt_im_m: np.ndarray


def _herm_funcs(h: np.ndarray, *funcs):
    """Apply scalar functions to the eigenvalues of Hermitian blocks."""
    w, v = np.linalg.eigh(h)
    vd = dagger(v)
    return [(v * f(w)[..., None, :]) @ vd for f in funcs]


def _symmetrizers(m: np.ndarray):
    im_m = (m - dagger(m)) / 2j
    re_m = (m + dagger(m)) / 2
    im_m = (im_m + dagger(im_m)) / 2
    w = np.linalg.eigvalsh(im_m)
    if w.min() <= 1e-13:
        raise PositivityError(
            f"Im m is not positive definite (min eigenvalue {w.min():.3e})"
        )
    floor = lambda x: np.maximum(x, EIG_FLOOR)
    sq, sq_inv = _herm_funcs(im_m, lambda x: np.sqrt(floor(x)), lambda x: 1 / np.sqrt(floor(x)))
    h = sq_inv @ re_m @ sq_inv
    h = (h + dagger(h)) / 2
    K = m.shape[-1]
    T = h - 1j * np.eye(K)
    U, W, W_inv = _herm_funcs(
        h,
        lambda x: (x - 1j) / np.sqrt(x * x + 1),
        lambda x: (x * x + 1) ** 0.25,
        lambda x: (x * x + 1) ** -0.25,
    )
    return im_m, sq, sq_inv, T, U, W, W_inv


def _conj_by(R: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """``C_R[Q] = R Q R`` blockwise."""
    return R @ Q @ R


def f_operator_analysis(
    data: HermitianDysonData,
    m: np.ndarray,
    z: complex,
    tol: float = 1e-10,
    max_iter: int = 10_000,
    dense_limit: int = DENSE_LIMIT,
) -> StabilityDiagnostics:
    """Perron eigenmatrix of ``F = C_W C_sqrt(Im m) S C_sqrt(Im m) C_W`` and gap checks.

    ``norm_Linv_hs`` is NaN when the dense stability operator would exceed
    ``dense_limit``.
    """
    m = np.asarray(m, dtype=complex)
    im_m, sq, _, T, U, W, W_inv = _symmetrizers(m)
    S = SelfEnergyOperator(data)

    def F_op(R):
        inner = _conj_by(sq, _conj_by(W, R))
        return _conj_by(W, _conj_by(sq, S(inner)))

    N, K = data.N, data.K
    F = identity_block_vector(N, K)
    F /= hs_norm(F)
    lam = 0.0
    it = 0
    converged = False
    for it in range(1, max_iter + 1):
        y = F_op(F)
        y = (y + dagger(y)) / 2
        n = hs_norm(y)
        if n == 0.0:
            lam = 0.0
            converged = True
            break
        F = y / n
        if abs(n - lam) <= tol:
            lam = n
            converged = True
            break
        lam = n
    if not converged:
        raise ConvergenceError(
            f"power iteration for F did not converge in {max_iter} iterations", partial=F
        )
    eta = complex(z).imag
    num = hs_inner(F, _conj_by(W, im_m)).real
    W_inv2 = W_inv @ W_inv
    den = hs_inner(F, W_inv2).real
    rhs = eta * num / den
    gap = 1.0 - lam
    resid = abs(gap - rhs) / max(abs(gap), 1e-300)
    try:
        linv = linv_norm_hs(data, m, dense_limit)
    except DimensionError:
        linv = float("nan")
    return StabilityDiagnostics(
        norm_S_max=norm_self_energy_max(data),
        norm_S_hs=norm_self_energy_hs(data),
        norm_Linv_hs=linv,
        norm_F=lam,
        gap_F=gap,
        gap_identity_rhs=float(rhs),
        gap_identity_residual=float(resid),
        power_iterations=it,
        F=F,
        W=W,
        U=U,
        T=T,
        sqrt_im_m=sq,
    )


def verify_decomposition(
    data: HermitianDysonData,
    m: np.ndarray,
    z: complex,
    trials: int = 5,
    tol: float = 1e-8,
    seed: int = 0,
) -> bool:
    """Check ``L = C_sqrtIm C_W C_U* (C_U - F) C_W^-1 C_sqrtIm^-1`` on random inputs."""
    m = np.asarray(m, dtype=complex)
    _, sq, sq_inv, _, U, W, W_inv = _symmetrizers(m)
    S = SelfEnergyOperator(data)
    Ud = dagger(U)
    rng = np.random.default_rng(seed)
    for _ in range(trials):
        R = random_block_vector(rng, data.N, data.K)
        lhs = R - m @ S(R) @ m
        Q = _conj_by(W_inv, _conj_by(sq_inv, R))
        FQ = _conj_by(W, _conj_by(sq, S(_conj_by(sq, _conj_by(W, Q)))))
        rhs = _conj_by(sq, _conj_by(W, _conj_by(Ud, _conj_by(U, Q) - FQ)))
        err = hs_norm(lhs - rhs) / max(hs_norm(lhs), 1e-300)
        if not err <= tol:
            return False
    return True
