import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kpotential.domain import (
    Ball,
    ChargeDistribution,
    ModelParams,
    NestedShells,
    RadialGrid,
    RadialGridSpec,
    Scenario,
    SurfaceSphere,
    VolumeShell,
    VoxelGridSpec,
    VoxelSet,
    load_scenario,
    scenario_from_dict,
    validate,
)
from kpotential.errors import ScenarioError


def test_valid_ball_scenario():
    sc = Scenario(Ball(1.0), ModelParams(k=0.4), RadialGridSpec(10.0, 2000))
    assert validate(sc) == []


def test_k_above_upper_bound_is_reported():
    msgs = validate(Scenario(Ball(1.0), ModelParams(k=0.5)))
    assert msgs == ["k exceeds upper bound sqrt(C/|E|) ~ 0.4886"]


def test_k_between_poincare_and_upper_bound():
    # 0.4431 < 0.46 < 0.4886
    msgs = validate(Scenario(Ball(1.0), ModelParams(k=0.46)))
    assert len(msgs) == 1 and "Poincare" in msgs[0]


def test_reversed_shell():
    assert validate(VolumeShell(0.5, 0.4, 1.0)) == ["shell bounds reversed"]


def test_zero_thickness_shell_rejected():
    msgs = validate(VolumeShell(0.5, 0.5, 1.0))
    assert msgs and "zero-thickness" in msgs[0]


def test_nested_shells_must_increase():
    assert validate(NestedShells(0.5, ((0.6, 0.7), (0.8, 0.9)))) == []
    assert validate(NestedShells(0.5, ((0.6, 0.85), (0.8, 0.9))))
    assert validate(NestedShells(0.5, ((0.7, 0.6),)))


def test_nonpositive_radius_and_delta():
    assert validate(Ball(0.0))
    assert any("delta" in m for m in validate(Scenario(Ball(1.0), ModelParams(delta=0.0))))


def test_r_max_must_exceed_support():
    sc = Scenario(Ball(1.0), ModelParams(), RadialGridSpec(1.0, 100))
    assert any("r_max" in m for m in validate(sc))


def test_charge_outside_conductor():
    sc = Scenario(Ball(1.0), charges=ChargeDistribution((SurfaceSphere(1.5, 1.0),)))
    assert any("not on the conductor" in m for m in validate(sc))


def test_unknown_report_name():
    sc = Scenario(Ball(1.0), requested_outputs=("capacity", "plots"))
    assert validate(sc) == ["requested_outputs: unknown report 'plots'"]


def test_voxel_needs_voxel_grid():
    sc = Scenario(VoxelSet.ball(0.5, 0.25), grid=RadialGridSpec())
    assert validate(sc)
    assert validate(Scenario(VoxelSet.ball(0.5, 0.25), grid=VoxelGridSpec(0.25))) == []


def test_empty_voxel_set_invalid():
    assert validate(VoxelSet(0.1, np.zeros((3, 3, 3), dtype=bool)))


@settings(max_examples=200, deadline=None)
@given(
    q=st.floats(-10, 10, allow_nan=False),
    a=st.floats(0.0, 0.9),
    width=st.floats(0.05, 1.0),
    frac=st.floats(0.01, 0.99),
)
def test_split_shell_preserves_total(q, a, width, frac):
    b = a + width
    d = ChargeDistribution((VolumeShell(a, b, q), SurfaceSphere(b, 0.5)))
    s = d.split_shell(0, a + frac * width)
    assert math.isclose(s.total(), d.total(), rel_tol=1e-12, abs_tol=1e-12)
    assert len(s.components) == 3


@settings(max_examples=100, deadline=None)
@given(k=st.floats(0.0, 1.0), r=st.floats(0.1, 3.0), delta=st.floats(-1.0, 1.0))
def test_validate_is_idempotent(k, r, delta):
    sc = Scenario(Ball(r), ModelParams(k=k, delta=delta), RadialGridSpec(10.0 * r, 200))
    first = validate(sc)
    assert validate(sc) == first
    assert sc == Scenario(Ball(r), ModelParams(k=k, delta=delta), RadialGridSpec(10.0 * r, 200))


def test_total_is_algebraic_sum():
    d = ChargeDistribution((VolumeShell(0, 1, -2.0), SurfaceSphere(1, 3.0)))
    assert d.total() == 1.0


def test_grid_has_nodes_on_breakpoints():
    g = NestedShells(0.5, ((0.6, 0.7),))
    grid = RadialGrid.build(g, 7.0, 500)
    for x in (0.5, 0.6, 0.7):
        assert grid.index_of(x) is not None
    assert grid.node_radii[0] == 0.0
    assert np.all(np.diff(grid.node_radii) > 0)
    inside = grid.conductor_flag
    mids = grid.midpoints
    assert np.array_equal(inside, (mids < 0.5) | ((mids > 0.6) & (mids < 0.7)))


def test_scenario_file_roundtrip(tmp_path):
    path = tmp_path / "s.yaml"
    path.write_text(
        "geometry: {shape: ball, radius: 1.0}\n"
        "params: {k: 0.4, q: 1.0}\n"
        "grid: {r_max: 12, node_count: 800}\n"
        "requested_outputs: [equilibrium]\n"
    )
    sc = load_scenario(path)
    assert sc.geometry == Ball(1.0)
    assert sc.params.k == 0.4
    assert sc.params.delta == 1.45e-8
    assert sc.grid == RadialGridSpec(12.0, 800)
    assert validate(sc) == []


def test_scenario_unknown_key_is_error():
    with pytest.raises(ScenarioError, match="unknown key"):
        scenario_from_dict({"geometry": {"shape": "ball", "radius": 1}, "parms": {}})
    with pytest.raises(ScenarioError, match="unknown key"):
        scenario_from_dict({"geometry": {"shape": "ball", "radius": 1, "colour": 2}})


def test_scenario_charges_and_nested():
    sc = scenario_from_dict(
        {
            "geometry": {"shape": "nested", "inner_radius": 0.5, "shell_faces": [[0.6, 0.7]]},
            "charges": [{"type": "shell", "a": 0.0, "b": 0.5, "charge": 1.0},
                        {"type": "sphere", "radius": 0.7, "charge": -0.5}],
        }
    )
    assert isinstance(sc.geometry, NestedShells)
    assert sc.charges.total() == 0.5
    assert validate(sc) == []
