import time

import numpy as np
import pytest

from kpotential.domain import VoxelSet
from kpotential.equilibrium import ball_closed_form
from kpotential.errors import IndefiniteForm
from kpotential.voxel import (
    VoxelBox,
    equilibrium_constancy,
    export_field,
    load_field,
    pcg,
    read_mask,
    residual_check,
    solve_voxel_equilibrium,
    solve_voxel_potential,
    surface_cells,
    voxel_capacity,
    voxel_poincare_estimate,
    write_mask,
)

A_EXACT = ball_closed_form(1.0, 1.0, 0.4)[0]


@pytest.fixture(scope="module")
def ball16():
    return VoxelSet.ball(1.0, 1 / 16)


@pytest.fixture(scope="module")
def eq16(ball16):
    return solve_voxel_equilibrium(ball16, 1.0, 0.4)


@pytest.fixture(scope="module")
def timed32():
    t0 = time.perf_counter()
    mask = VoxelSet.ball(1.0, 1 / 32)
    eq = solve_voxel_equilibrium(mask, 1.0, 0.4)
    return mask, eq, time.perf_counter() - t0


def test_ball_h32_within_5_percent(timed32):
    _, eq, elapsed = timed32
    assert abs(eq.A - A_EXACT) / A_EXACT <= 0.05
    assert elapsed < 60.0


def test_refinement_improves(eq16, timed32):
    e16 = abs(eq16.A - A_EXACT)
    e32 = abs(timed32[1].A - A_EXACT)
    assert e32 < e16


def test_constancy_h32(timed32):
    mask, eq, _ = timed32
    assert equilibrium_constancy(eq, mask, 0.4) < 0.02


def test_total_charge_and_split(eq16):
    assert eq16.q == pytest.approx(1.0, abs=1e-6)
    assert eq16.surface_charge + eq16.interior_charge == pytest.approx(1.0, abs=1e-6)
    # totals carry the CG tolerance; interior cells hold the negative screening charge
    assert eq16.interior_charge < 0 < eq16.surface_charge


def test_k0_interior_empty(ball16):
    eq = solve_voxel_equilibrium(ball16, 1.0, 0.0)
    assert abs(eq.interior_charge) <= 1e-6
    assert eq.A == pytest.approx(1.0 / eq.capacity, rel=1e-12)


def test_zero_charge(ball16):
    eq = solve_voxel_equilibrium(ball16, 0.0, 0.4)
    assert eq.A == 0.0 and not eq.charges.any()
    f = solve_voxel_potential(ball16, np.zeros(ball16.occupancy.shape), 0.3)
    assert not f.values.any() and f.far_coefficient == 0.0


def test_unit_surface_layer(ball16):
    surf = surface_cells(ball16)
    charges = np.where(surf, 1.0 / surf.sum(), 0.0)
    f = solve_voxel_potential(ball16, charges, 0.0)
    assert f.value_near([0.0, 0.0, 0.0]) == pytest.approx(1.0, rel=0.05)
    assert f.far_coefficient == pytest.approx(1.0, rel=1e-12)


def test_forward_solve_residual(ball16):
    rng = np.random.default_rng(3)
    charges = np.where(ball16.occupancy, rng.random(ball16.occupancy.shape), 0.0)
    f = solve_voxel_potential(ball16, charges, 0.3, tol=1e-10)
    assert residual_check(f, charges, 0.3) < 1e-6
    inside = f.on_mask()[ball16.occupancy]
    # flux identity for the discrete problem
    h3 = ball16.spacing**3
    assert f.far_coefficient == pytest.approx(charges.sum() + 0.09 * h3 * inside.sum(), rel=1e-6)


def test_mirror_symmetry(eq16):
    c = eq16.charges
    for axis in range(3):
        assert np.allclose(c, np.flip(c, axis=axis), atol=1e-8 * np.abs(c).max())


def test_operator_symmetric():
    mask = VoxelSet.ball(0.5, 0.125)
    box = VoxelBox(mask)
    rng = np.random.default_rng(5)
    u, v = rng.normal(size=(2,) + box.shape)
    a = np.vdot(u, box.apply(v, 0.3))
    b = np.vdot(v, box.apply(u, 0.3))
    assert abs(a - b) <= 1e-10 * max(abs(a), 1.0)


def test_translation_equivariance():
    a = VoxelSet.ball(0.5, 0.0625)
    occ = np.pad(a.occupancy, ((3, 0), (0, 5), (2, 2)))
    b = VoxelSet(0.0625, occ)
    ea = solve_voxel_equilibrium(a, 1.0, 0.3)
    eb = solve_voxel_equilibrium(b, 1.0, 0.3)
    assert eb.A == pytest.approx(ea.A, rel=1e-10)
    assert np.allclose(eb.charges[3:, :-5, 2:-2], ea.charges, atol=1e-10)


def test_indefinite_for_large_k(ball16):
    with pytest.raises(IndefiniteForm):
        solve_voxel_equilibrium(ball16, 1.0, 0.6)


def test_capacity_close_to_radius(ball16):
    assert voxel_capacity(ball16) == pytest.approx(1.0, rel=0.05)


def test_poincare_surrogate():
    est = voxel_poincare_estimate(VoxelSet.ball(1.0, 1 / 16))
    assert est == pytest.approx(np.sqrt(np.pi) / 4.0, rel=0.01)


def test_surface_cells():
    occ = np.zeros((5, 5, 5), dtype=bool)
    occ[1:4, 1:4, 1:4] = True
    s = surface_cells(occ)
    assert s.sum() == 26 and not s[2, 2, 2]


def test_pcg_solves_spd():
    rng = np.random.default_rng(1)
    M = rng.normal(size=(20, 20))
    A = M @ M.T + 20 * np.eye(20)
    b = rng.normal(size=20)
    x, info = pcg(lambda v: A @ v, b, lambda r: r, tol=1e-12)
    assert np.allclose(A @ x, b, atol=1e-9)
    with pytest.raises(IndefiniteForm):
        pcg(lambda v: -v, b, lambda r: r)


def test_mask_roundtrip(tmp_path, ball16):
    p = tmp_path / "m.txt"
    write_mask(ball16, p)
    back = read_mask(p)
    assert back.spacing == ball16.spacing
    assert np.array_equal(back.occupancy, ball16.occupancy)


def test_field_export(tmp_path, eq16):
    path = tmp_path / "u.bin"
    sidecar = export_field(eq16.field, path)
    assert sidecar.name == "u.bin.txt"
    values, meta = load_field(path)
    assert np.array_equal(values, eq16.field.values)
    assert float(meta["far_coefficient"]) == pytest.approx(eq16.field.far_coefficient)


def test_charges_must_be_on_mask(ball16):
    bad = np.zeros(ball16.occupancy.shape)
    bad[0, 0, 0] = 1.0
    with pytest.raises(ValueError):
        solve_voxel_potential(ball16, bad, 0.0)
