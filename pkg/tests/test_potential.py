import json
import math

import numpy as np
import pytest

from errors import ConfigError
from potential import (
    Channel,
    Delta,
    PartitionKind,
    Potential,
    Segment,
    branch_momentum,
    load_potential,
    partition,
    potential_from_dict,
    potential_to_dict,
    pure_step,
    random_potential,
    theta,
)


def test_pointwise_values(barrier, step):
    assert barrier(-0.5) == 0.0
    assert barrier(0.5) == 2.0
    assert barrier(3.0) == 1.0
    assert step(-1e-9) == 0.0
    # collapsed support takes v0 at the point itself
    assert step(0.0) == 1.0
    np.testing.assert_array_equal(barrier(np.array([-1.0, 0.25, 7.0])), [0.0, 2.0, 1.0])


def test_pieces_split_at_deltas(layered):
    pieces = layered.pieces()
    assert [(s.lo, s.hi) for s in pieces] == [(-0.6, -0.2), (-0.2, 0.0), (0.0, 0.5), (0.5, 0.9)]
    assert layered.breakpoints([0.3]) == [-0.6, -0.2, 0.0, 0.3, 0.5, 0.9]


@pytest.mark.parametrize(
    "kwargs",
    [
        {"v0": -1.0},
        {"v0": 1.0, "a": 0.5, "b": 1.0, "segments": (Segment(0.5, 1.0, 0.0),)},
        {"v0": 1.0, "a": -1.0, "b": 1.0, "segments": (Segment(-1.0, 0.2, 0.0), Segment(0.3, 1.0, 0.0))},
        {"v0": 1.0, "a": -1.0, "b": 1.0, "segments": (Segment(-1.0, 0.5, 0.0),)},
        {"v0": 1.0, "deltas": (Delta(2.0, 0.1),)},
        {"v0": 1.0, "a": 0.0, "b": 0.0, "segments": (Segment(0.0, 1.0, 0.0),)},
    ],
)
def test_invalid_potentials_rejected(kwargs):
    with pytest.raises(ConfigError):
        Potential(**kwargs)


def test_branch_momentum_open_channel():
    bm = branch_momentum(2.0, 1.0)
    assert bm.channel is Channel.TWO_OPEN
    assert bm.q == pytest.approx(math.sqrt(2.0))
    assert bm.q.imag == 0.0
    flipped = branch_momentum(-2.0, 1.0)
    assert flipped.q == pytest.approx(-math.sqrt(2.0))
    assert bm.flipped().p == -2.0


def test_branch_momentum_evanescent_and_threshold():
    bm = branch_momentum(1.0, 1.0)
    assert bm.channel is Channel.EVANESCENT
    assert bm.q == pytest.approx(1j)
    assert branch_momentum(-1.0, 1.0).q == pytest.approx(1j)
    assert branch_momentum(math.sqrt(2.0), 1.0).channel is Channel.THRESHOLD
    with pytest.raises(ConfigError):
        branch_momentum(math.sqrt(2.0), 1.0).require_off_threshold("test")
    with pytest.raises(ConfigError):
        bm.require_open("test")


def test_branch_momentum_identity_over_random_labels(rng):
    labels = rng.uniform(-5.0, 5.0, 10_000)
    shifts = rng.uniform(0.0, 3.0, 10_000)
    for p, v0 in zip(labels, shifts):
        bm = branch_momentum(float(p), float(v0))
        if bm.channel is Channel.THRESHOLD:
            assert bm.q == 0
            continue
        assert abs(bm.q ** 2 + bm.p0 ** 2 - p * p) <= 1e-12 * (p * p + bm.p0 ** 2)
        if bm.is_open:
            assert bm.q.imag == 0.0
            assert math.copysign(1.0, bm.q.real) == math.copysign(1.0, p)
        else:
            assert bm.q.real == 0.0
            assert bm.q.imag > 0.0


def test_branch_momentum_rejects_zero():
    with pytest.raises(ConfigError):
        branch_momentum(0.0, 1.0)


def test_free_potential_is_always_open():
    bm = branch_momentum(0.01, 0.0)
    assert bm.channel is Channel.TWO_OPEN
    assert bm.q == pytest.approx(0.01)


def test_partitions(barrier):
    assert partition(barrier, PartitionKind.LEFT)(0.5) == 2.0
    assert partition(barrier, PartitionKind.RIGHT)(0.5) == 1.0
    assert partition(barrier, PartitionKind.RIGHT)(4.0) == 0.0
    assert partition(barrier, PartitionKind.STEP)(0.5) == 1.0
    assert partition(barrier, PartitionKind.STEP)(-0.5) == 0.0
    assert partition(barrier, "in").projector == -1
    assert partition(barrier, "out").projector == +1
    assert not partition(barrier, "in").is_local


def test_partitions_reconstruct_potential(layered, rng):
    x = rng.uniform(-3.0, 3.0, 500)
    v = layered(x)
    np.testing.assert_allclose(partition(layered, PartitionKind.LEFT).value(x), v, atol=1e-15)
    np.testing.assert_allclose(partition(layered, PartitionKind.RIGHT).value(x) + layered.v0, v, atol=1e-15)
    np.testing.assert_allclose(partition(layered, PartitionKind.STEP).value(x) + layered.v0 * theta(x), v, atol=1e-15)
    # the in/out splits keep V as their local part
    np.testing.assert_allclose(partition(layered, PartitionKind.IN).value(x), v, atol=1e-15)


def test_dict_round_trip(layered):
    assert potential_from_dict(potential_to_dict(layered)) == layered


def test_load_sample_files(potentials_dir):
    fig = load_potential(potentials_dir / "step_delta.json")
    assert fig.v0 == 1.0
    assert fig.deltas[0].strength == 0.01
    assert load_potential(potentials_dir / "pure_step.json") == pure_step(1.0)
    well = load_potential(potentials_dir / "well_on_step.json")
    assert well.a < 0.0 < well.b


def test_malformed_json_reports_position(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{\n  "v0": 1.0,\n  "a": \n}\n', encoding="utf-8")
    with pytest.raises(ConfigError, match="line 4"):
        load_potential(path)


def test_missing_field(tmp_path):
    path = tmp_path / "nov0.json"
    path.write_text(json.dumps({"a": 0.0}), encoding="utf-8")
    with pytest.raises(ConfigError, match="v0"):
        load_potential(path)


def test_random_potentials_are_valid(rng):
    for _ in range(20):
        pot = random_potential(rng)
        assert pot.a < 0.0 < pot.b
        assert pot.segments[0].lo == pot.a
        assert pot.segments[-1].hi == pot.b
        assert all(pot.a <= d.x0 <= pot.b for d in pot.deltas)
