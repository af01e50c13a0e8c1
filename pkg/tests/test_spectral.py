"""Spectral core: transforms, moving-frame calculus, mode classes."""

from __future__ import annotations

import numpy as np
import pytest

import mclab.spectral as sp


@pytest.fixture(scope="module")
def g() -> sp.GridSpec:
    return sp.GridSpec(nx=16, ny=32, nz=16, m=2)


@pytest.fixture(scope="module")
def rng() -> np.random.Generator:
    return np.random.default_rng(7)


def _random_scalar(g, rng, t_frame):
    data = rng.standard_normal(g.shape) + 1j * rng.standard_normal(g.shape)
    return sp.SpectralScalarField(g, data, t_frame=t_frame)


def _random_vector(g, rng, t_frame):
    data = rng.standard_normal((3, *g.shape)) + 1j * rng.standard_normal((3, *g.shape))
    return sp.SpectralVectorField(g, data, t_frame=t_frame)


def test_fft_round_trip_and_hermitian_defect(g, rng):
    phys = rng.standard_normal(g.shape)
    f = sp.fft_forward(g, phys, t_frame=0.3)
    back = sp.fft_inverse(f)
    assert np.max(np.abs(back - phys)) < 1e-13
    assert sp.hermitian_defect(f) < 1e-14


def test_transform_conventions(g):
    # mean value sits at (0,0,0) with no volume factor
    c = sp.fft_forward(g, np.full(g.shape, 2.5), 0.0)
    assert c.coeffs[0, 0, 0] == pytest.approx(2.5, abs=1e-14)
    assert np.abs(c.coeffs).sum() - abs(c.coeffs[0, 0, 0]) < 1e-12

    # cos X splits into half-weight conjugate pair at k = +-1
    X = 2 * np.pi * np.arange(g.nx) / g.nx
    e = sp.fft_forward(g, np.cos(X)[:, None, None] * np.ones((1, g.ny, g.nz)), 0.0)
    assert e.coeffs[g.index_of(1, 0, 0)] == pytest.approx(0.5, abs=1e-14)
    assert e.coeffs[g.index_of(-1, 0, 0)] == pytest.approx(0.5, abs=1e-14)


def test_div_grad_equals_laplace(g, rng):
    t = 0.7
    f = _random_scalar(g, rng, t)
    dv = sp.div_L(sp.grad_L(f, t), t)
    lp = sp.laplace_L(f, t)
    assert np.max(np.abs(dv.coeffs - lp.coeffs)) < 1e-12 * np.max(np.abs(lp.coeffs))


def test_inv_laplace_round_trip_mean_free(g, rng):
    t = 0.7
    f = _random_scalar(g, rng, t)
    f.coeffs[0, 0, 0] = 0.0
    inv = sp.inv_laplace_L(sp.laplace_L(f, t), t)
    assert np.max(np.abs(inv.coeffs - f.coeffs)) < 1e-12


def test_leray_projection(g, rng):
    t = 0.7
    v = _random_vector(g, rng, t)
    pv = sp.leray_project_moving(v, t)
    assert np.max(np.abs(sp.div_L(pv, t).coeffs)) < 1e-11
    ppv = sp.leray_project_moving(pv, t)
    assert np.max(np.abs(ppv.coeffs - pv.coeffs)) < 1e-12


def test_mode_class_partition(g):
    sigma = sp.RationalShearAngle(1, 2)
    masks = sp.mode_class_masks(g, sigma)
    tot = sum(m.astype(int) for m in masks.values())
    assert np.all(tot == 1)
    assert masks["zero"].sum() == g.ny * g.nz

    # sigma = 1/2: resonance q*k + p*l = 0 reads k + 2*l = 0
    kk, _, ll = np.meshgrid(g.k_int, g.j_int, g.l_int, indexing="ij")
    expect = (kk != 0) & (kk + 2 * ll == 0)
    assert np.array_equal(masks["homogeneous"], expect)


def test_project_modes_partitions_field(g, rng):
    sigma = sp.RationalShearAngle(1, 2)
    f = _random_scalar(g, rng, 0.4)
    parts = [sp.project_modes(f, cls, sigma) for cls in sp.MODE_CLASSES]
    total = sum(p.coeffs for p in parts)
    assert np.max(np.abs(total - f.coeffs)) == 0.0
    # projections are orthogonal: zero class has no k != 0 content
    zero = sp.project_modes(f, "zero", sigma)
    assert np.max(np.abs(zero.coeffs[1:, :, :])) == 0.0


def test_oscillation_is_unitary_and_invertible(g, rng):
    sigma = sp.RationalShearAngle(1, 2)
    f = _random_scalar(g, rng, 0.7)
    w = sp.apply_oscillation(f, 1.5, 2.0, sigma)
    assert np.max(np.abs(np.abs(w.coeffs) - np.abs(f.coeffs))) < 1e-12
    wb = sp.apply_oscillation(w, -1.5, 2.0, sigma)
    assert np.max(np.abs(wb.coeffs - f.coeffs)) < 1e-12


def test_good_unknowns_round_trip(g, rng):
    sigma = sp.RationalShearAngle(1, 2)
    pa = sp.PhysParams(nu=1e-3, alpha=10.0, sigma=sigma)
    t = 0.7
    u = _random_vector(g, rng, t)
    b = _random_vector(g, rng, t)
    wp, wm = sp.good_unknowns_forward(u, b, pa, t)
    u2, b2 = sp.good_unknowns_inverse(wp, wm, pa, t)
    assert np.max(np.abs(u2.coeffs - u.coeffs)) < 1e-12
    assert np.max(np.abs(b2.coeffs - b.coeffs)) < 1e-12
    # Elsasser combination under the hood: W+ + W- carries u twice at t = 0
    wp0, wm0 = sp.good_unknowns_forward(u, b, pa, 0.0)
    assert np.max(np.abs(wp0.coeffs + wm0.coeffs - 2 * u.coeffs)) < 1e-12


def test_sobolev_norm_single_mode(g):
    s = sp.SpectralScalarField.zeros(g, t_frame=0.0)
    s.coeffs[g.index_of(1, 2, 0)] = 1.0
    eta = 2 / g.m
    expect = np.sqrt((1 + 1 + eta**2) ** 2 / g.m)
    assert sp.sobolev_norm(s, 2) == pytest.approx(expect, rel=1e-13)
    # vector norm adds components in quadrature
    v = sp.SpectralVectorField.zeros(g, t_frame=0.0)
    v.coeffs[0][g.index_of(1, 2, 0)] = 1.0
    v.coeffs[1][g.index_of(1, 2, 0)] = 1.0
    assert sp.sobolev_norm_vec(v, 2) == pytest.approx(np.sqrt(2) * expect, rel=1e-13)


def test_dealias_mask_and_reverse_index(g, rng):
    dm = g.dealias_mask
    assert dm[0, 0, 0]
    # the 2/3 cut keeps |k| <= 5 of 16, |j| <= 10 of 32
    assert dm.sum() == 11 * 21 * 11
    assert not dm[g.index_of(5 + 1, 0, 0)]

    a = rng.standard_normal(g.shape)
    ar = a[g.reverse_index]
    assert np.array_equal(ar[g.reverse_index], a)
    assert ar[g.index_of(2, -3, 1)] == a[g.index_of(-2, 3, -1)]


def test_mode_index_classify():
    sigma = sp.RationalShearAngle(1, 2)
    assert sp.ModeIndex(0, 3, 1, m=2).classify(sigma) == "zero"
    assert sp.ModeIndex(2, 3, -1, m=2).classify(sigma) == "homogeneous"
    assert sp.ModeIndex(1, 3, 1, m=2).classify(sigma) == "nonhomogeneous"
    assert sp.ModeIndex(1, 3, 1, m=2).eta == pytest.approx(1.5)
    with pytest.raises(ValueError):
        sp.ModeIndex(1, 0, 0, m=0)


def test_rational_shear_angle_validation():
    s = sp.RationalShearAngle(2, 4)
    assert (s.q, s.p) == (1, 2)
    assert s.value == pytest.approx(0.5)
    assert s.sigma_k_plus_l(2, -1) == pytest.approx(0.0)
    with pytest.raises(ValueError):
        sp.RationalShearAngle(1, 0)


def test_phys_params_defaults_and_regime():
    sigma = sp.RationalShearAngle(1, 1)
    pa = sp.PhysParams(nu=1e-3, alpha=10.0, sigma=sigma)
    assert pa.delta0 == pytest.approx(1.0 / (100.0 * 10.0))
    assert sp.PhysParams(nu=1e-3, alpha=0.0, sigma=sigma).delta0 == 0.0
    assert pa.in_theorem_regime
    assert sp.theorem_regime_violations(pa) == []
    bad = sp.PhysParams(nu=0.5, alpha=1.0, sigma=sigma)
    assert not bad.in_theorem_regime
    assert len(sp.theorem_regime_violations(bad)) >= 1
    with pytest.raises(ValueError):
        sp.PhysParams(nu=-1.0, alpha=10.0, sigma=sigma)


def test_state_frame_consistency(g, rng):
    pa = sp.PhysParams(nu=1e-3, alpha=10.0, sigma=sp.RationalShearAngle(1, 2))
    u = _random_vector(g, rng, 0.0)
    b = _random_vector(g, rng, 0.5)
    with pytest.raises(ValueError):
        sp.MhdState(u, b, 0.5, pa)
    b2 = _random_vector(g, rng, 0.0)
    st = sp.MhdState(u, b2, 0.25, pa)
    assert st.t_frame == 0.0
    assert st.grid is g
