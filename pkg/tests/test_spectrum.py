import math

import numpy as np
import pytest

from conftest import scalar_data, zero_noise_model
from kronmde.errors import ContractError
from kronmde.model import HermitianDysonData, VarianceProfile, hermitian_dyson_data, hermitize
from kronmde.presets import FIG1_POINTS, deterministic, example_model, ginibre, preset, two_band, wigner
from kronmde.spectrum import (
    IN,
    OUT,
    ScanOptions,
    ZetaGrid,
    check_tilde_inclusion,
    dist0_selfconsistent,
    dos_curve,
    estimate_support,
    example_oracle,
    example_oracle_boundary_distance,
    example_oracle_value,
    pseudospectrum,
    rho_at,
    support_bracket,
)


def free_data(a, N=2):
    a = np.asarray(a, dtype=complex)
    K = a.shape[-1]
    a = np.broadcast_to(a, (N, K, K))
    return HermitianDysonData(a=a, alpha=np.zeros((1, K, K)), beta=np.zeros((1, K, K)),
                              variances=VarianceProfile.flat(N, 1, 0.0))


def m_semicircle(z):
    r = np.sqrt(z * z - 4 + 0j)
    m = (-z + r) / 2
    return m if m.imag > 0 else (-z - r) / 2


WIGNER = hermitian_dyson_data(wigner(4))


@pytest.mark.parametrize("z", [0.3 + 0.1j, -1.0 + 1e-3j, 2.0 + 0.5j])
def test_rho_point_mass(z):
    assert rho_at(free_data([[0.0]]), z) == pytest.approx(z.imag / (z.real ** 2 + z.imag ** 2) / math.pi, abs=1e-9)


def test_rho_semicircle():
    assert rho_at(WIGNER, 1e-4j) == pytest.approx(1 / math.pi, abs=1e-3)
    assert rho_at(WIGNER, 3 + 1e-4j) <= 3.2e-5


def test_support_bracket_examples():
    assert support_bracket(WIGNER) == pytest.approx((-2.0, 2.0))
    assert support_bracket(free_data(np.diag([1.0, -1.0]))) == pytest.approx((-1.0, 1.0))
    assert support_bracket(hermitian_dyson_data(two_band(6, shift=5.0))) == pytest.approx((-7.0, 7.0))
    d = HermitianDysonData(a=np.full((2, 1, 1), -0.5j), alpha=[[[1.0]]], beta=[[[0.0]]],
                           variances=VarianceProfile.flat(2, 1))
    with pytest.raises(ContractError):
        support_bracket(d)


def test_support_of_point_mass():
    h = 0.05
    E = np.arange(-20, 21) * h
    est = estimate_support(free_data([[0.0]]), E, eta_floor=1e-4)
    assert len(est.intervals) == 1
    lo, hi = est.intervals[0]
    assert lo <= 0 <= hi and lo >= -h and hi <= h


def test_support_of_semicircle():
    E = np.round(np.arange(-300, 301) * 0.01, 12)
    est = estimate_support(WIGNER, E, eta_floor=1e-4, in_threshold=10)
    assert len(est.intervals) == 1
    lo, hi = est.intervals[0]
    assert abs(lo + 2) <= 0.02 and abs(hi - 2) <= 0.02
    lo_b, hi_b = est.bracket
    assert lo_b <= lo and hi <= hi_b
    k = int(np.argmin(np.abs(E - 2.5)))
    assert est.status[k] == OUT


def test_growth_value_outside_semicircle():
    # outside the support Im m / eta tends to m'(E) = int rho(t) / (t - E)^2 dt
    E = 2.5
    deriv = (-1 + E / math.sqrt(E * E - 4)) / 2
    curve = dos_curve(WIGNER, np.array([E]), 1e-4)
    assert curve.max_im_over_eta[0] == pytest.approx(deriv, rel=1e-3)
    assert curve.max_im_over_eta[0] < 10


def test_support_two_band():
    d = hermitian_dyson_data(two_band(8))
    E = np.arange(-600, 601) * 0.01
    est = estimate_support(d, E, eta_floor=1e-5)
    assert len(est.intervals) == 2
    (a, b), (c, e) = est.intervals
    assert b < -0.5 and c > 0.5
    assert est.contains(3.0) and not est.contains(0.0)
    assert est.distance(0.0) > 0.5


def test_dist0_examples():
    g = ginibre(4)
    assert dist0_selfconsistent(g, 0.0) == 0.0
    assert dist0_selfconsistent(g, 2.0) >= 0.5
    assert dist0_selfconsistent(zero_noise_model(np.zeros((1, 1)), 3), 1.0) == pytest.approx(1.0)


def test_dist0_deterministic_pattern():
    m = deterministic([1.0, -1.0 + 0.5j])
    for zeta in (0.2, 1.5j, -1 + 0.4j):
        assert dist0_selfconsistent(m, zeta) == pytest.approx(min(abs(zeta - 1), abs(zeta + 1 - 0.5j)))


def test_pseudospectrum_example_model():
    m = example_model([1.0, -1.0], 4)
    ps = pseudospectrum(m, ZetaGrid(0, 3, 2, 0, 0, 1), 0.05)
    assert ps.member[0, 0] and not ps.member[0, 1]
    assert np.array_equal(ps.member, ps.dist0 <= 0.05)


def test_pseudospectrum_noise_free():
    pts = [0.5, -0.5j]
    m = deterministic(pts)
    grid = ZetaGrid(-1, 1, 9, -1, 1, 9)
    ps = pseudospectrum(m, grid, 0.3)
    Z = grid.points()
    d = np.minimum(abs(Z - 0.5), abs(Z + 0.5j))
    np.testing.assert_allclose(ps.dist0, d, atol=1e-12)
    assert np.array_equal(ps.member, d <= 0.3)


def test_example_oracle_examples():
    assert example_oracle([0.97, -0.97], 2, 0)
    assert example_oracle_value([0.97, -0.97], 0) == pytest.approx(2 / 0.9409)
    assert not example_oracle([1.03, -1.03], 2, 0)
    assert example_oracle_value([1.03, -1.03], 0) == pytest.approx(2 / 1.0609)
    assert not example_oracle(FIG1_POINTS["fig1d"], 5, 10)
    assert example_oracle([1.0, -1.0], 2, 1.0)
    assert example_oracle([1.0, -1.0], 2, 0.0)  # equality counts as inside


def test_oracle_boundary_distance_disk():
    z = np.array([0.0, 0.5, 1.5, 2j])
    d = example_oracle_boundary_distance([0.0], 1, z)
    np.testing.assert_allclose(d, [1.0, 0.5, 0.5, 1.0], atol=3e-3)


def test_zeta_grid_parse():
    g = ZetaGrid.parse("-2:2:5, -1:1:3")
    assert g.points().shape == (3, 5)
    assert g.step == pytest.approx(1.0)
    with pytest.raises(ContractError):
        ZetaGrid.parse("1:2")


def test_tilde_inclusion_noise_free():
    rep = check_tilde_inclusion(deterministic([0.5, -0.5]), ZetaGrid(-1, 1, 11, -0.5, 0.5, 5), 0.04)
    assert rep.ok and not rep.boundary_violations


def test_tilde_inclusion_example_model():
    rep = check_tilde_inclusion(example_model([1.0, -1.0], 4), ZetaGrid(-2, 2, 21, -2, 2, 21), 0.09)
    assert rep.ok


def test_tilde_inclusion_iid():
    rep = check_tilde_inclusion(ginibre(4), ZetaGrid(-2, 2, 41, -2, 2, 41), 0.04)
    assert rep.ok


def test_dos_integrates_to_one():
    for d in (WIGNER, hermitian_dyson_data(two_band(6))):
        lo, hi = support_bracket(d)
        E = np.arange(lo - 5, hi + 5, 0.005)
        curve = dos_curve(d, E, 1e-2)
        total = float(np.sum(np.diff(E) * (curve.rho[1:] + curve.rho[:-1]) / 2))
        # Poisson tails beyond the window carry about 2 eta / (5 pi)
        assert total == pytest.approx(1.0, abs=1e-2)
        assert (curve.rho >= 0).all()


def test_dos_certificates():
    curve = dos_curve(WIGNER, np.array([0.0, 3.0]), 1e-3)
    assert curve.dist_certificates[0] <= math.sqrt(1e-3 / (math.pi * curve.rho[0])) + 1e-15
    assert curve.dist_certificates[1] > curve.dist_certificates[0]


def test_membership_monotone_and_symmetric():
    m = example_model([1.0, -1.0], 4)
    grid = ZetaGrid(-2, 2, 11, -1, 1, 11)
    small = pseudospectrum(m, grid, 0.02)
    big = pseudospectrum(m, grid, 0.1)
    assert not (small.member & ~big.member).any()
    # real structure and real points: masks symmetric under conjugation
    assert np.array_equal(small.member, small.member[::-1])
    assert np.array_equal(big.member, big.member[::-1])


def test_rows_layout():
    ps = pseudospectrum(deterministic([0.0]), ZetaGrid(-1, 1, 3, 0, 1, 2), 0.5)
    rows = list(ps.rows())
    assert len(rows) == 6
    assert rows[1][:2] == (0.0, 0.0) and rows[3][:2] == (-1.0, 1.0)


def test_mapper_does_not_change_results():
    m = example_model([1.0, -1.0], 4)
    grid = ZetaGrid(-1.5, 1.5, 7, -0.5, 0.5, 3)
    a = pseudospectrum(m, grid, 0.05)
    b = pseudospectrum(m, grid, 0.05, mapper=lambda f, xs: [f(x) for x in reversed(list(xs))][::-1])
    assert np.array_equal(a.dist0, b.dist0)
