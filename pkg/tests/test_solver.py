"""Time stepper: closed-form per-mode trajectories, conservation checks,
remap exactness, convergence order, determinism."""

from __future__ import annotations

import math

import numpy as np
import pytest

import mclab.linear_modes as lm
import mclab.solver as sv
import mclab.storage as st
from mclab.spectral import (
    GridSpec,
    ModeIndex,
    PhysParams,
    RationalShearAngle,
    div_L,
    good_unknowns_forward,
    shear_laplacian,
)

SIG = RationalShearAngle(1, 1)

GRID2 = GridSpec(16, 32, 16, m=2)
PARAMS2 = PhysParams(nu=0.01, alpha=2.0, sigma=SIG)


def _cfg2(**kw):
    base = dict(
        grid=GRID2, params=PARAMS2, dt=0.0125, t_final=1.0, epsilon=0.5,
        seed=7, ic_band=3, diagnostics_every=0.25,
    )
    base.update(kw)
    return sv.SimConfig(**base)


@pytest.fixture(scope="module")
def traj2():
    return sv.run(_cfg2())


def test_linear_homogeneous_matches_closed_form():
    # sigma k + l = 0 mode: U2 damps like p0/p, B2 only diffuses
    grid = GridSpec(8, 8, 8, m=1)
    params = PhysParams(nu=1e-3, alpha=10.0, sigma=SIG)
    mode = ModeIndex(1, 0, -1)
    assert mode.classify(SIG) == "homogeneous"
    cfg = sv.SimConfig(
        grid=grid, params=params, dt=1e-3, t_final=10.0, epsilon=0.0,
        ic_kind="single_mode", ic_mode=(1, 0, -1),
        ic_amp_u=(0.0, 0.3, 0.0), ic_amp_b=(0.0, 0.7, 0.0),
        remap_policy="none", diagnostics_every=0.5, linear_only=True,
        snapshot_stride=1,
    )
    traj = sv.run(cfg)
    idx = grid.index_of(1, 0, -1)
    p0 = float(shear_laplacian(grid, 0.0)[idx])
    for t, state in traj.snapshots[1:]:
        pt = float(shear_laplacian(grid, t)[idx])
        decay = math.exp(-params.nu * lm.viscous_decay_integral(mode, t))
        u2 = state.u.coeffs[(1, *idx)]
        b2 = state.b.coeffs[(1, *idx)]
        assert abs(u2 - 0.3 * (p0 / pt) * decay) < 1e-8 * abs(u2)
        assert abs(b2 - 0.7 * decay) < 1e-8 * abs(b2)


def test_nonlinear_rhs_divergence_identity():
    # div_L of the projected tendency must equal d_X of the second component
    state = sv.step(sv.step(sv.initial_state(_cfg2()), 0.0125), 0.0125)
    du, db = sv.nonlinear_rhs(state)
    age = state.t_frame
    for dv, comp in ((du, state.u), (db, state.b)):
        target = 1j * GRID2.k3 * comp.coeffs[1]
        d = div_L(dv, age).coeffs
        defect = float(np.max(np.abs(d - target))) / (float(np.max(np.abs(d))) + 1e-300)
        assert defect < 1e-11


def test_run_hygiene(traj2):
    assert float(np.max(traj2.div_defect)) < 1e-11
    assert float(np.max(traj2.herm_defect)) < 1e-11
    assert len(traj2.remap_events) == 2
    assert all(dropped == 0.0 for _, dropped in traj2.remap_events)


def test_energy_balance(traj2):
    # nu = 0: total energy is conserved by the nonlinearity and the coupling
    cfg0 = _cfg2(params=PhysParams(nu=0.0, alpha=2.0, sigma=SIG), diagnostics_every=0.125)
    traj0 = sv.run(cfg0)
    res0 = sv.energy_balance_residual(traj0)
    assert float(np.sum(np.abs(res0))) < 1e-6 * traj0.energy[0]
    # nu > 0: dissipation accounted by the quadrature of nu ||grad_L z||^2
    res = sv.energy_balance_residual(traj2)
    assert float(np.sum(np.abs(res))) < 1e-6 * traj2.energy[0]


def test_fourth_order_convergence():
    def final_z(dtv):
        cfg = _cfg2(dt=dtv, t_final=0.5, seed=11, diagnostics_every=0.5,
                    remap_policy="none")
        state = sv.run(cfg).final_state
        return np.stack([state.u.coeffs + state.b.coeffs, state.u.coeffs - state.b.coeffs])

    zref = final_z(0.5 / 512)
    ea = float(np.sqrt(np.sum(np.abs(final_z(0.05) - zref) ** 2)))
    eb = float(np.sqrt(np.sum(np.abs(final_z(0.025) - zref) ** 2)))
    assert 13.0 < ea / eb < 19.0


def test_remap_matches_unremapped_run(traj2):
    cfg_n = _cfg2(diagnostics_every=0.5, remap_policy="none", linear_only=True)
    cfg_r = _cfg2(diagnostics_every=0.5, linear_only=True)
    sr = sv.run(cfg_r).final_state
    sn_re = sv.remap_shear_frame(sv.run(cfg_n).final_state)
    # both end recentred: remapping resets the frame age, not the clock
    assert sr.t_frame == sn_re.t_frame == 0.0
    assert sr.t == sn_re.t == 1.0
    scale = float(np.max(np.abs(sr.u.coeffs)))
    diff = max(
        float(np.max(np.abs(sr.u.coeffs - sn_re.u.coeffs))),
        float(np.max(np.abs(sr.b.coeffs - sn_re.b.coeffs))),
    )
    assert diff < 1e-10 * scale


def test_remap_is_exact_relabelling():
    cfg = _cfg2(t_final=0.5, diagnostics_every=0.5, remap_policy="none")
    aged = sv.run(cfg).final_state  # t_frame 0.5, sigma m t_frame = 1
    rm = sv.remap_shear_frame(aged)
    assert rm.t_frame == 0.0
    assert rm.t == aged.t
    back, _ = sv._remap_coeffs(rm.u.coeffs, GRID2, -1)
    assert np.array_equal(back, aged.u.coeffs)


def test_remap_rejects_non_lattice_age():
    state = sv.step(sv.initial_state(_cfg2()), 0.1)  # sigma m t_frame = 0.2
    with pytest.raises(ValueError):
        sv.remap_shear_frame(state)


def test_bitwise_determinism(traj2):
    again = sv.run(_cfg2())
    assert np.array_equal(traj2.energy, again.energy)
    assert np.array_equal(traj2.final_state.u.coeffs, again.final_state.u.coeffs)


def test_nonhomogeneous_mode_matches_f2_ode():
    grid = GridSpec(8, 8, 8, m=1)
    params = PhysParams(nu=1e-3, alpha=3.0, sigma=SIG)
    mode = ModeIndex(1, 0, 0)
    assert mode.classify(SIG) == "nonhomogeneous"
    u2, b2 = 0.4 + 0.0j, 0.1 + 0.0j
    cfg = sv.SimConfig(
        grid=grid, params=params, dt=5e-4, t_final=8.0, epsilon=0.0,
        ic_kind="single_mode", ic_mode=(1, 0, 0),
        ic_amp_u=(0.0, u2, 0.0), ic_amp_b=(0.0, b2, 0.0),
        remap_policy="none", diagnostics_every=8.0, linear_only=True,
        snapshot_stride=1,
    )
    tF, stF = sv.run(cfg).snapshots[-1]
    idx = grid.index_of(1, 0, 0)
    pT = float(shear_laplacian(grid, tF)[idx])
    p0 = float(shear_laplacian(grid, 0.0)[idx])
    wp, wm = good_unknowns_forward(stF.u, stF.b, params, tF)
    sol = lm.integrate_nonhomogeneous_f2(
        mode, params, (-p0 * (u2 + b2), -p0 * (u2 - b2)), tF, n_eval=5
    )
    f2p_ode, f2m_ode = sol.amplitudes[-1]
    assert abs(-pT * wp.coeffs[(1, *idx)] - f2p_ode) < 1e-6 * abs(f2p_ode)
    assert abs(-pT * wm.coeffs[(1, *idx)] - f2m_ode) < 1e-6 * abs(f2m_ode)


def test_config_validation():
    with pytest.raises(ValueError, match="whole number of steps"):
        _cfg2(dt=0.3)
    with pytest.raises(ValueError, match="diagnostic"):
        _cfg2(diagnostics_every=0.3)
    with pytest.raises(ValueError):
        _cfg2(epsilon=-1.0)
    with pytest.raises(ValueError):
        _cfg2(ic_kind="bogus")
    with pytest.raises(ValueError, match="single_mode"):
        _cfg2(ic_kind="single_mode")
    with pytest.raises(ValueError, match="file"):
        _cfg2(ic_kind="file")


def test_file_initial_state(tmp_path):
    cfg = _cfg2(t_final=0.5, diagnostics_every=0.5)
    final = sv.run(cfg).final_state  # remapped at 0.5, so t_frame = 0
    path = tmp_path / "ic.bin"
    st.write_states(path, [final])

    cfg_file = _cfg2(ic_kind="file", ic_path=str(path), t_final=0.25)
    state0 = sv.initial_state(cfg_file)
    assert state0.t == 0.0 and state0.t_frame == 0.0
    assert np.array_equal(state0.u.coeffs, final.u.coeffs)

    other = _cfg2(grid=GridSpec(8, 16, 8, m=2), ic_band=2, ic_kind="file", ic_path=str(path))
    with pytest.raises(ValueError, match="grid"):
        sv.initial_state(other)

    aged = sv.run(_cfg2(t_final=0.5, diagnostics_every=0.5, remap_policy="none")).final_state
    st.write_states(tmp_path / "aged.bin", [aged])
    with pytest.raises(ValueError, match="remap"):
        sv.initial_state(_cfg2(ic_kind="file", ic_path=str(tmp_path / "aged.bin")))


def test_zero_viscosity_magnetic_exchange(traj2):
    # coupling moves energy between u and b but keeps components positive
    assert np.all(traj2.energy_u > 0) and np.all(traj2.energy_b > 0)
    assert traj2.times[0] == 0.0 and traj2.times[-1] == 1.0
