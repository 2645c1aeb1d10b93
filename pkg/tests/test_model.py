import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kronmde.errors import ContractError, DimensionError
from kronmde.model import (
    Kappa,
    VarianceProfile,
    assemble_hermitized_sample,
    dumps_model,
    hermitian_dyson_data,
    hermitize,
    loads_model,
    make_model,
    model_hash,
    validate,
)
from kronmde.presets import PRESETS, ginibre, preset, wigner


def explicit_model(s, t=None, kappa=Kappa()):
    s = np.asarray(s, dtype=float)
    t = np.zeros_like(s) if t is None else t
    N = s.shape[1]
    return make_model(1, N, alpha_tilde=[[[1.0]]], variances=VarianceProfile.explicit(s, t), kappa=kappa)


def test_flat_iid_model_is_admissible():
    assert validate(ginibre(50)).ok


def test_variance_bound_violation_names_index():
    s = np.full((1, 4, 4), 0.1)
    s[0, 0, 1] = s[0, 1, 0] = 2.0
    rep = validate(explicit_model(s, kappa=Kappa(k1=1.0)))
    assert not rep.ok
    msgs = [v.message for v in rep.violations if v.kind == "variance_bound"]
    assert msgs and "(1,2,mu=1)" in msgs[0]


def test_symmetry_violation():
    s = np.full((1, 4, 4), 0.1)
    s[0, 0, 1] = 0.2
    rep = validate(explicit_model(s))
    kinds = {v.kind: v for v in rep.violations}
    assert "symmetry" in kinds and kinds["symmetry"].index == (0, 1, 0)


def test_structure_and_expectation_bounds():
    m = make_model(1, 3, alpha_tilde=[[[20.0]]], a_tilde=np.full((3, 1, 1), 50.0))
    kinds = {v.kind for v in validate(m).violations}
    assert kinds == {"expectation_bound", "structure_bound"}


def test_ragged_input_is_dimension_error():
    with pytest.raises(DimensionError):
        make_model(2, 3, alpha_tilde=[[[1.0, 0.0], [0.0]]])
    with pytest.raises(DimensionError):
        make_model(2, 3, alpha_tilde=np.zeros((1, 3, 3)))


def test_hermitize_zero_case():
    m = make_model(2, 3, beta_tilde=np.zeros((1, 2, 2)))
    d = hermitize(m, 0)
    assert d.K == 4 and np.all(d.a == 0)


def test_hermitize_alpha_block():
    d = hermitize(make_model(1, 2, alpha_tilde=[[[1.0]]]), 0.3)
    np.testing.assert_array_equal(d.alpha[0], [[0, 1], [1, 0]])


def test_hermitize_beta_and_shift():
    d = hermitize(make_model(1, 2, beta_tilde=[[[1.0]]]), 2.0)
    np.testing.assert_array_equal(d.beta[0], [[0, 1], [0, 0]])
    np.testing.assert_array_equal(d.a[0], [[0, -2], [-2, 0]])


def test_hermitize_gamma_enters_beta():
    g = np.array([[[0.0, 1j], [0.0, 0.0]]])
    b = np.array([[[1.0, 0.0], [2.0, 0.0]]])
    d = hermitize(make_model(2, 2, beta_tilde=b, gamma_tilde=g), 0)
    np.testing.assert_allclose(d.beta[0][:2, 2:], b[0] + g[0].conj().T)
    assert np.all(d.beta[0][2:, :] == 0) and np.all(d.beta[0][:, :2] == 0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.complex_numbers(max_magnitude=3, allow_nan=False, allow_infinity=False))
def test_hermitize_outputs_hermitian(seed, zeta):
    rng = np.random.default_rng(seed)
    L, N = 2, 3
    c = lambda *s: rng.standard_normal(s) + 1j * rng.standard_normal(s)
    m = make_model(L, N, alpha_tilde=c(1, L, L) + c(1, L, L).conj(), beta_tilde=c(1, L, L),
                   gamma_tilde=c(1, L, L), a_tilde=c(N, L, L))
    d = hermitize(m, zeta)
    assert np.array_equal(d.a, np.conj(np.swapaxes(d.a, 1, 2)))
    assert np.array_equal(d.alpha, np.conj(np.swapaxes(d.alpha, 1, 2)))


def test_hermitian_data_requires_hermitian_model():
    with pytest.raises(ContractError):
        hermitian_dyson_data(ginibre(4))
    d = hermitian_dyson_data(wigner(4))
    assert d.K == 1


def test_assemble_hermitized_sample_examples():
    assert np.all(assemble_hermitized_sample(np.zeros((2, 2)), 0) == 0)
    H = assemble_hermitized_sample(np.array([[1.0]]), 0)
    np.testing.assert_allclose(np.linalg.eigvalsh(H), [-1, 1])
    H = assemble_hermitized_sample(np.array([[1.0]]), 1)
    assert np.all(H == 0)
    with pytest.raises(DimensionError):
        assemble_hermitized_sample(np.zeros((2, 3)), 0)


def test_hermitized_sample_chiral_and_eigenvalue_link(rng):
    for _ in range(10):
        X = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
        lam = np.linalg.eigvals(X)
        H = assemble_hermitized_sample(X, lam[0])
        assert np.linalg.norm(H - H.conj().T) == 0
        w = np.linalg.eigvalsh(H)
        np.testing.assert_allclose(np.sort(w), np.sort(-w), atol=1e-10)
        assert np.abs(w).min() < 1e-10
        assert abs(np.linalg.det(X - lam[0] * np.eye(4))) < 1e-10
        zeta = lam[0] + 0.5
        assert np.abs(np.linalg.eigvalsh(assemble_hermitized_sample(X, zeta))).min() > 1e-6


@pytest.mark.parametrize("name", PRESETS)
def test_serialization_round_trip(name):
    m = preset(name, 8)
    text = dumps_model(m)
    m2 = loads_model(text)
    assert dumps_model(m2) == text
    assert model_hash(m2) == model_hash(m)


def test_explicit_profile_round_trip(rng):
    s = rng.uniform(0, 0.1, (2, 3, 3))
    s = (s + np.swapaxes(s, 1, 2)) / 2
    t = rng.uniform(0, 0.1, (2, 3, 3))
    m = make_model(1, 3, alpha_tilde=np.ones((2, 1, 1)), variances=VarianceProfile.explicit(s, t),
                   a_tilde=rng.standard_normal((3, 1, 1)) + 0.5j)
    m2 = loads_model(dumps_model(m))
    assert np.array_equal(m2.variances.s, m.variances.s)
    assert np.array_equal(m2.expectation.a_tilde, m.expectation.a_tilde)


def test_missing_field_names_it():
    with pytest.raises(DimensionError, match="'N'"):
        loads_model('{"L": 1}')


def test_flat_profile_is_lazy():
    v = VarianceProfile.flat(10 ** 6, 3)
    assert v.is_flat and "_dense" not in v.__dict__


def test_preset_names_survive_construction():
    from kronmde.presets import PRESETS, preset

    for name in PRESETS:
        assert preset(name, 4).name == name
