"""Kronecker random matrix models and their Hermitization.

A Kronecker random matrix of size ``L*N`` has the form::

    X = sum_mu alpha~_mu (x) X_mu
      + sum_nu (beta~_nu (x) Y_nu + gamma~_nu (x) Y_nu^*)
      + sum_i a~_i (x) E_ii

with deterministic ``L x L`` structure matrices, Hermitian ``N x N`` random
matrices ``X_mu`` with entry variances ``s^mu_ij`` and non-Hermitian ``Y_nu``
with entry variances ``t^nu_ij``.  Tensor ordering is ``C^L (x) C^N`` so that
row ``p*N + i`` belongs to structure index ``p`` and inner index ``i``.

The Dyson equation works on N-vectors of ``K x K`` blocks.  For a general
(non-Hermitian) model these come from Girko's Hermitization with ``K = 2L``;
for a Hermitian model the equation may be posed directly with ``K = L``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from .errors import ContractError, DimensionError

__all__ = [
    "Kappa",
    "StructureSet",
    "VarianceProfile",
    "ExpectationDiagonal",
    "KroneckerModel",
    "HermitianDysonData",
    "Violation",
    "ValidationReport",
    "validate",
    "hermitize",
    "hermitian_dyson_data",
    "assemble_hermitized_sample",
    "model_to_dict",
    "model_from_dict",
    "dumps_model",
    "loads_model",
    "load_model",
    "save_model",
    "model_hash",
    "make_model",
]

HERMITIAN_ATOL = 1e-12


def _as_matrix_stack(x, count: Optional[int], dim: int, name: str) -> np.ndarray:
    try:
        arr = np.array(x, dtype=complex)
    except (ValueError, TypeError) as exc:
        raise DimensionError(f"{name}: ragged or non-numeric array ({exc})") from None
    if arr.ndim != 3 or arr.shape[1:] != (dim, dim):
        raise DimensionError(
            f"{name}: expected a stack of {dim}x{dim} matrices, got shape {arr.shape}"
        )
    if count is not None and arr.shape[0] != count:
        raise DimensionError(f"{name}: expected {count} matrices, got {arr.shape[0]}")
    arr.setflags(write=False)
    return arr


def _spectral_norms(stack: np.ndarray) -> np.ndarray:
    if stack.shape[0] == 0:
        return np.zeros(0)
    return np.linalg.norm(stack, ord=2, axis=(1, 2))


@dataclass(frozen=True)
class Kappa:
    """Admissibility bounds recorded on a model (validation metadata only)."""

    k1: float = 10.0
    k2: float = 10.0
    k3: float = 10.0


@dataclass(frozen=True)
class StructureSet:
    """The deterministic ``L x L`` structure matrices of a Kronecker model."""

    L: int
    ell: int
    alpha_tilde: np.ndarray
    beta_tilde: np.ndarray
    gamma_tilde: np.ndarray

    def __post_init__(self):
        if int(self.L) < 1 or int(self.ell) < 1:
            raise DimensionError(f"L and ell must be positive, got L={self.L}, ell={self.ell}")
        object.__setattr__(self, "L", int(self.L))
        object.__setattr__(self, "ell", int(self.ell))
        for name in ("alpha_tilde", "beta_tilde", "gamma_tilde"):
            object.__setattr__(
                self, name, _as_matrix_stack(getattr(self, name), self.ell, self.L, name)
            )


@dataclass(frozen=True)
class VarianceProfile:
    """Entry variances ``s^mu_ij`` (Hermitian families) and ``t^nu_ij``.

    Three representations are supported:

    ``flat``
        ``s^mu_ij = t^nu_ij = scale / N`` for every family and index pair.
    ``banded``
        ``scale / N`` when the periodic distance ``min(|i-j|, N-|i-j|)`` is at
        most ``width``, zero otherwise.
    ``explicit``
        Arrays ``s`` and ``t`` of shape ``(ell, N, N)``.

    The dense arrays are only built when :meth:`s_array` or :meth:`t_array`
    is called, so flat profiles stay O(1) in memory.
    """

    kind: str
    N: int
    ell: int
    scale: float = 1.0
    width: int = 0
    s: Optional[np.ndarray] = None
    t: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in ("flat", "banded", "explicit"):
            raise DimensionError(f"unknown variance profile kind {self.kind!r}")
        if int(self.N) < 1 or int(self.ell) < 1:
            raise DimensionError(f"N and ell must be positive, got N={self.N}, ell={self.ell}")
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "ell", int(self.ell))
        object.__setattr__(self, "scale", float(self.scale))
        object.__setattr__(self, "width", int(self.width))
        if self.kind == "explicit":
            for name in ("s", "t"):
                val = getattr(self, name)
                if val is None:
                    raise DimensionError(f"explicit variance profile needs array {name!r}")
                try:
                    arr = np.array(val, dtype=float)
                except (ValueError, TypeError) as exc:
                    raise DimensionError(f"variances.{name}: ragged array ({exc})") from None
                if arr.shape != (self.ell, self.N, self.N):
                    raise DimensionError(
                        f"variances.{name}: expected shape {(self.ell, self.N, self.N)}, "
                        f"got {arr.shape}"
                    )
                arr.setflags(write=False)
                object.__setattr__(self, name, arr)
        elif self.width < 0:
            raise DimensionError("banded width must be nonnegative")

    @classmethod
    def flat(cls, N: int, ell: int, scale: float = 1.0) -> "VarianceProfile":
        return cls("flat", N, ell, scale=scale)

    @classmethod
    def banded(cls, N: int, ell: int, width: int, scale: float = 1.0) -> "VarianceProfile":
        return cls("banded", N, ell, scale=scale, width=width)

    @classmethod
    def explicit(cls, s, t) -> "VarianceProfile":
        s = np.asarray(s, dtype=float)
        if s.ndim != 3:
            raise DimensionError(f"variances.s: expected 3 dimensions, got shape {s.shape}")
        return cls("explicit", s.shape[1], s.shape[0], s=s, t=t)

    @property
    def is_flat(self) -> bool:
        return self.kind == "flat"

    @cached_property
    def _band_mask(self) -> np.ndarray:
        idx = np.arange(self.N)
        d = np.abs(idx[:, None] - idx[None, :])
        return np.minimum(d, self.N - d) <= self.width

    def s_array(self) -> np.ndarray:
        """Dense ``(ell, N, N)`` array of Hermitian-family variances."""
        if self.kind == "explicit":
            return self.s
        return self._dense

    def t_array(self) -> np.ndarray:
        """Dense ``(ell, N, N)`` array of non-Hermitian-family variances."""
        if self.kind == "explicit":
            return self.t
        return self._dense

    @cached_property
    def _dense(self) -> np.ndarray:
        if self.kind == "flat":
            one = np.full((self.N, self.N), self.scale / self.N)
        else:
            one = np.where(self._band_mask, self.scale / self.N, 0.0)
        arr = np.broadcast_to(one, (self.ell, self.N, self.N))
        return arr

    def to_dict(self) -> dict:
        if self.kind == "flat":
            return {"kind": "flat", "scale": self.scale}
        if self.kind == "banded":
            return {"kind": "banded", "width": self.width, "scale": self.scale}
        return {"kind": "explicit", "s": self.s.tolist(), "t": self.t.tolist()}

    @classmethod
    def from_dict(cls, d: dict, N: int, ell: int) -> "VarianceProfile":
        if not isinstance(d, dict) or "kind" not in d:
            raise DimensionError("variances: expected an object with a 'kind' field")
        kind = d["kind"]
        if kind == "flat":
            return cls.flat(N, ell, d.get("scale", 1.0))
        if kind == "banded":
            return cls.banded(N, ell, d["width"], d.get("scale", 1.0))
        if kind == "explicit":
            prof = cls("explicit", N, ell, s=d.get("s"), t=d.get("t"))
            return prof
        raise DimensionError(f"variances.kind: unknown kind {kind!r}")


@dataclass(frozen=True)
class ExpectationDiagonal:
    """The deterministic diagonal ``a~_1, ..., a~_N`` of ``E X``."""

    a_tilde: np.ndarray

    def __post_init__(self):
        arr = np.array(self.a_tilde, dtype=complex) if not isinstance(
            self.a_tilde, np.ndarray) else self.a_tilde.astype(complex)
        if arr.ndim != 3 or arr.shape[1] != arr.shape[2]:
            raise DimensionError(f"a_tilde: expected a stack of square matrices, got {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "a_tilde", arr)

    @property
    def N(self) -> int:
        return self.a_tilde.shape[0]


@dataclass(frozen=True)
class KroneckerModel:
    structure: StructureSet
    variances: VarianceProfile
    expectation: ExpectationDiagonal
    kappa: Kappa = field(default_factory=Kappa)
    name: str = ""

    def __post_init__(self):
        if self.variances.N != self.expectation.N:
            raise DimensionError(
                f"variances.N = {self.variances.N} but a_tilde has {self.expectation.N} entries"
            )
        if self.variances.ell != self.structure.ell:
            raise DimensionError(
                f"variances have ell = {self.variances.ell}, structure has ell = {self.structure.ell}"
            )
        if self.expectation.a_tilde.shape[1] != self.structure.L:
            raise DimensionError(
                f"a_tilde blocks are {self.expectation.a_tilde.shape[1]}x"
                f"{self.expectation.a_tilde.shape[1]}, expected L = {self.structure.L}"
            )

    @property
    def L(self) -> int:
        return self.structure.L

    @property
    def N(self) -> int:
        return self.variances.N

    @property
    def ell(self) -> int:
        return self.structure.ell

    @property
    def is_hermitian(self) -> bool:
        """True when ``X = X^*`` for every realization."""
        st = self.structure
        herm = lambda x: np.allclose(x, np.conj(np.swapaxes(x, -1, -2)), rtol=0, atol=HERMITIAN_ATOL)
        gamma_ok = np.allclose(
            st.gamma_tilde, np.conj(np.swapaxes(st.beta_tilde, -1, -2)), rtol=0, atol=HERMITIAN_ATOL
        )
        return bool(herm(st.alpha_tilde) and gamma_ok and herm(self.expectation.a_tilde))


@dataclass(frozen=True)
class HermitianDysonData:
    """Data ``(a, alpha, beta, variances)`` of the vector Dyson equation.

    ``a`` has shape ``(N, K, K)``, ``alpha`` and ``beta`` shape ``(ell, K, K)``.
    Each ``alpha_mu`` must be Hermitian and each ``a_j`` must have negative
    semidefinite imaginary part.
    """

    a: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    variances: VarianceProfile

    def __post_init__(self):
        a = np.asarray(self.a, dtype=complex)
        if a.ndim != 3 or a.shape[1] != a.shape[2]:
            raise DimensionError(f"a: expected (N, K, K), got {a.shape}")
        N, K = a.shape[0], a.shape[1]
        alpha = _as_matrix_stack(self.alpha, None, K, "alpha")
        beta = _as_matrix_stack(self.beta, alpha.shape[0], K, "beta")
        if self.variances.N != N or self.variances.ell != alpha.shape[0]:
            raise DimensionError(
                f"variance profile is (ell={self.variances.ell}, N={self.variances.N}), "
                f"data is (ell={alpha.shape[0]}, N={N})"
            )
        if not np.allclose(alpha, np.conj(np.swapaxes(alpha, 1, 2)), rtol=0, atol=HERMITIAN_ATOL):
            raise ContractError("every alpha_mu must be Hermitian")
        im_a = (a - np.conj(np.swapaxes(a, 1, 2))) / 2j
        if N and np.linalg.eigvalsh(im_a).max() > HERMITIAN_ATOL * max(1.0, np.abs(a).max()):
            raise ContractError("every a_j must have negative semidefinite imaginary part")
        a.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)

    @property
    def N(self) -> int:
        return self.a.shape[0]

    @property
    def K(self) -> int:
        return self.a.shape[1]

    @property
    def ell(self) -> int:
        return self.alpha.shape[0]

    @property
    def a_is_hermitian(self) -> bool:
        return bool(np.allclose(self.a, np.conj(np.swapaxes(self.a, 1, 2)), rtol=0, atol=HERMITIAN_ATOL))


# --------------------------------------------------------------------------
# Validation


@dataclass(frozen=True)
class Violation:
    kind: str
    message: str
    index: tuple = ()


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.ok

    def __str__(self):
        if self.ok:
            return "model is admissible"
        return "\n".join(f"[{v.kind}] {v.message}" for v in self.violations)


def _check_variances(arr, name, kappa1, N, out, symmetric):
    bound = kappa1 / N
    for mu in range(arr.shape[0]):
        a = arr[mu]
        neg = np.argwhere(a < 0)
        if neg.size:
            i, j = neg[0]
            out.append(Violation(
                "variance_negative",
                f"{name} is negative at ({i + 1},{j + 1},mu={mu + 1})",
                (int(i), int(j), mu),
            ))
        big = np.argwhere(a > bound * (1 + 1e-12))
        if big.size:
            i, j = big[0]
            out.append(Violation(
                "variance_bound",
                f"{name} exceeds kappa1/N at ({i + 1},{j + 1},mu={mu + 1}): "
                f"{a[i, j]:.6g} > {bound:.6g}",
                (int(i), int(j), mu),
            ))
        if symmetric:
            asym = np.argwhere(np.abs(a - a.T) > 1e-15 * max(1.0, np.abs(a).max()))
            if asym.size:
                i, j = asym[0]
                if i > j:
                    i, j = j, i
                out.append(Violation(
                    "symmetry",
                    f"{name} is not symmetric at ({i + 1},{j + 1},mu={mu + 1})",
                    (int(i), int(j), mu),
                ))


def validate(model: KroneckerModel) -> ValidationReport:
    """List every violated admissibility bound of ``model``.

    Shape problems never reach this function: they are rejected with
    :class:`~kronmde.errors.DimensionError` when the model is constructed.
    """
    out = []
    k = model.kappa
    st = model.structure
    for name, stack in (("alpha_tilde", st.alpha_tilde), ("beta_tilde", st.beta_tilde)):
        norms = _spectral_norms(stack)
        for mu in np.flatnonzero(norms > k.k2 * (1 + 1e-12)):
            out.append(Violation(
                "structure_bound",
                f"|{name}[{mu + 1}]| = {norms[mu]:.6g} exceeds kappa2 = {k.k2:g}",
                (int(mu),),
            ))
    a_norms = _spectral_norms(model.expectation.a_tilde)
    for i in np.flatnonzero(a_norms > k.k3 * (1 + 1e-12)):
        out.append(Violation(
            "expectation_bound",
            f"|a_tilde[{i + 1}]| = {a_norms[i]:.6g} exceeds kappa3 = {k.k3:g}",
            (int(i),),
        ))
    var = model.variances
    if var.kind == "explicit":
        _check_variances(var.s_array(), "s", k.k1, var.N, out, symmetric=True)
        _check_variances(var.t_array(), "t", k.k1, var.N, out, symmetric=False)
    else:
        if var.scale < 0:
            out.append(Violation("variance_negative", f"variance scale {var.scale:g} is negative", (0, 0, 0)))
        elif var.scale > k.k1 * (1 + 1e-12):
            out.append(Violation(
                "variance_bound",
                f"s exceeds kappa1/N at (1,1,mu=1): scale {var.scale:g} > kappa1 = {k.k1:g}",
                (0, 0, 0),
            ))
    return ValidationReport(out)


# --------------------------------------------------------------------------
# Hermitization


def _dagger(x: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(x, -1, -2))


def _upper(block: np.ndarray) -> np.ndarray:
    """Embed ``block`` (..., L, L) as the (1,2) block of a (..., 2L, 2L) array."""
    L = block.shape[-1]
    out = np.zeros(block.shape[:-2] + (2 * L, 2 * L), dtype=complex)
    out[..., :L, L:] = block
    return out


def hermitize(model: KroneckerModel, zeta: complex) -> HermitianDysonData:
    """Dyson data of the Hermitized matrix ``H^zeta`` (``K = 2L``)."""
    st = model.structure
    L = st.L
    alpha = _upper(st.alpha_tilde)
    alpha[..., L:, :L] = _dagger(st.alpha_tilde)
    beta = _upper(st.beta_tilde + _dagger(st.gamma_tilde))
    shifted = model.expectation.a_tilde - complex(zeta) * np.eye(L)
    a = _upper(shifted)
    a[..., L:, :L] = _dagger(shifted)
    return HermitianDysonData(a=a, alpha=alpha, beta=beta, variances=model.variances)


def hermitian_dyson_data(model: KroneckerModel) -> HermitianDysonData:
    """Dyson data posed directly on a Hermitian model (``K = L``)."""
    if not model.is_hermitian:
        raise ContractError(
            "model is not Hermitian (needs alpha~ Hermitian, gamma~ = beta~^*, a~ Hermitian)"
        )
    st = model.structure
    return HermitianDysonData(
        a=model.expectation.a_tilde,
        alpha=st.alpha_tilde,
        beta=st.beta_tilde,
        variances=model.variances,
    )


def assemble_hermitized_sample(X: np.ndarray, zeta: complex) -> np.ndarray:
    """Return ``[[0, X - zeta], [X^* - conj(zeta), 0]]``."""
    X = np.asarray(X, dtype=complex)
    if X.ndim != 2 or X.shape[0] != X.shape[1]:
        raise DimensionError(f"X must be square, got shape {X.shape}")
    n = X.shape[0]
    shifted = X - complex(zeta) * np.eye(n)
    H = np.zeros((2 * n, 2 * n), dtype=complex)
    H[:n, n:] = shifted
    H[n:, :n] = shifted.conj().T
    return H


# --------------------------------------------------------------------------
# Serialization


def _encode_stack(stack: np.ndarray) -> list:
    return np.stack([stack.real, stack.imag], axis=-1).tolist()


def _decode_stack(obj, name: str) -> np.ndarray:
    try:
        arr = np.array(obj, dtype=float)
    except (ValueError, TypeError) as exc:
        raise DimensionError(f"{name}: ragged or non-numeric array ({exc})") from None
    if arr.ndim != 4 or arr.shape[-1] != 2:
        raise DimensionError(
            f"{name}: expected an array of matrices of [re, im] pairs, got shape {arr.shape}"
        )
    return arr[..., 0] + 1j * arr[..., 1]


_REQUIRED = ("L", "N", "ell", "alpha_tilde", "beta_tilde", "gamma_tilde", "variances", "a_tilde")


def model_to_dict(model: KroneckerModel) -> dict:
    st = model.structure
    d = {
        "L": st.L,
        "N": model.N,
        "ell": st.ell,
        "alpha_tilde": _encode_stack(st.alpha_tilde),
        "beta_tilde": _encode_stack(st.beta_tilde),
        "gamma_tilde": _encode_stack(st.gamma_tilde),
        "variances": model.variances.to_dict(),
        "a_tilde": _encode_stack(model.expectation.a_tilde),
        "kappa": {"k1": model.kappa.k1, "k2": model.kappa.k2, "k3": model.kappa.k3},
    }
    if model.name:
        d["name"] = model.name
    return d


def model_from_dict(d: dict) -> KroneckerModel:
    if not isinstance(d, dict):
        raise DimensionError("model document must be a JSON object")
    for key in _REQUIRED:
        if key not in d:
            raise DimensionError(f"model document is missing field {key!r}")
    try:
        L, N, ell = int(d["L"]), int(d["N"]), int(d["ell"])
    except (TypeError, ValueError):
        raise DimensionError("fields 'L', 'N', 'ell' must be integers") from None
    structure = StructureSet(
        L=L,
        ell=ell,
        alpha_tilde=_decode_stack(d["alpha_tilde"], "alpha_tilde"),
        beta_tilde=_decode_stack(d["beta_tilde"], "beta_tilde"),
        gamma_tilde=_decode_stack(d["gamma_tilde"], "gamma_tilde"),
    )
    variances = VarianceProfile.from_dict(d["variances"], N, ell)
    a_tilde = _decode_stack(d["a_tilde"], "a_tilde")
    if a_tilde.shape[0] != N:
        raise DimensionError(f"a_tilde: expected {N} matrices, got {a_tilde.shape[0]}")
    kd = d.get("kappa", {})
    kappa = Kappa(float(kd.get("k1", 10.0)), float(kd.get("k2", 10.0)), float(kd.get("k3", 10.0)))
    return KroneckerModel(structure, variances, ExpectationDiagonal(a_tilde), kappa, d.get("name", ""))


def dumps_model(model: KroneckerModel) -> str:
    return json.dumps(model_to_dict(model), sort_keys=True)


def loads_model(text: str) -> KroneckerModel:
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DimensionError(f"model file is not valid JSON: {exc}") from None
    return model_from_dict(d)


def save_model(model: KroneckerModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_model(model))
        fh.write("\n")


def load_model(path) -> KroneckerModel:
    with open(path, encoding="utf-8") as fh:
        return loads_model(fh.read())


def model_hash(model: KroneckerModel) -> str:
    """SHA-256 of the canonical JSON form."""
    return hashlib.sha256(dumps_model(model).encode()).hexdigest()


def make_model(
    L: int,
    N: int,
    alpha_tilde: Sequence = (),
    beta_tilde: Sequence = (),
    gamma_tilde: Sequence = (),
    variances: Optional[VarianceProfile] = None,
    a_tilde=None,
    kappa: Kappa = Kappa(),
    name: str = "",
) -> KroneckerModel:
    """Convenience constructor; missing families are filled with zeros."""
    stacks = []
    for label, x in (("alpha_tilde", alpha_tilde), ("beta_tilde", beta_tilde), ("gamma_tilde", gamma_tilde)):
        try:
            stacks.append(np.asarray(x, dtype=complex).reshape(-1, L, L))
        except ValueError as exc:
            raise DimensionError(f"{label}: expected {L}x{L} matrices ({exc})") from None
    ell = max(1, max(s.shape[0] for s in stacks))
    padded = []
    for s in stacks:
        if s.shape[0] == 0:
            s = np.zeros((ell, L, L), dtype=complex)
        elif s.shape[0] != ell:
            raise DimensionError("alpha/beta/gamma families must have equal length")
        padded.append(s)
    if variances is None:
        variances = VarianceProfile.flat(N, ell)
    if a_tilde is None:
        a_tilde = np.zeros((N, L, L), dtype=complex)
    else:
        a_tilde = np.asarray(a_tilde, dtype=complex)
        if a_tilde.ndim == 2:
            a_tilde = np.broadcast_to(a_tilde, (N, L, L))
    return KroneckerModel(
        StructureSet(L, ell, *padded),
        variances,
        ExpectationDiagonal(np.array(a_tilde)),
        kappa,
        name,
    )
