import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from polytraj import geometry
from polytraj.errors import ProblemParseError
from polytraj.problem import (
    DerivativeBound,
    GeneratorConfig,
    Proportions,
    decel_impossible_axes,
    from_json,
    generate,
    problem_to_dict,
    to_json,
)


def test_generation_is_deterministic():
    cfg = GeneratorConfig(dim=3, n_polytopes=4, degree=6, seed=2024)
    a, b = generate(cfg), generate(cfg)
    assert a == b
    assert to_json(a) == to_json(b)


def test_different_seeds_differ():
    a = generate(GeneratorConfig(seed=1))
    b = generate(GeneratorConfig(seed=2))
    assert a != b


def test_generated_problem_shape():
    p = generate(GeneratorConfig(dim=3, n_polytopes=5, degree=7, seed=3))
    assert p.dim == 3 and p.n_polytopes == 5 and p.degree == 7
    assert np.array_equal(p.start_velocity, np.zeros(3))
    assert np.array_equal(p.end_velocity, np.zeros(3))
    free = generate(GeneratorConfig(seed=3, start_at_rest=False, end_at_rest=False))
    assert free.start_velocity is None and free.end_velocity is None


def test_decel_fraction_matches_probability():
    hits = 0
    for seed in range(1000):
        p = generate(GeneratorConfig(seed=seed, n_polytopes=2, decel_impossible_prob=0.4))
        hits += bool(decel_impossible_axes(p))
    assert 0.35 <= hits / 1000 <= 0.45


def test_decel_probability_extremes():
    for seed in range(20):
        assert decel_impossible_axes(generate(GeneratorConfig(seed=seed, decel_impossible_prob=1.0))) == [0]
        assert decel_impossible_axes(generate(GeneratorConfig(seed=seed, decel_impossible_prob=0.0))) == []


@pytest.mark.parametrize("kwargs", [
    {"dim": 4}, {"n_polytopes": 0}, {"degree": 1}, {"decel_impossible_prob": 1.5},
    {"velocity_bound_range": (0.0, 1.0)}, {"points_per_polytope": 2},
])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        GeneratorConfig(**kwargs)


# -- proportions / bounds ----------------------------------------------------

def test_proportions_invariants():
    assert len(Proportions([0.25, 0.75])) == 2
    for bad in ([0.5, 0.6], [1.0, 0.0], [np.inf, 1.0]):
        with pytest.raises(ValueError):
            Proportions(bad)


def test_box_bound():
    b = DerivativeBound.box([1.0, 2.0], [0.5, -0.1])
    assert b.rows == 4
    assert np.array_equal(b.offset, [1.0, 2.0, 0.5, -0.1])
    with pytest.raises(ValueError):
        DerivativeBound([[1.0, 0.0]], [1.0, 2.0])


# -- JSON --------------------------------------------------------------------

def test_round_trip_of_generated_problem():
    p = generate(GeneratorConfig(dim=3, n_polytopes=3, seed=9, start_at_rest=False))
    q = from_json(to_json(p))
    assert q == p
    assert q.start_velocity is None


def test_missing_polytopes_named_in_error():
    doc = problem_to_dict(generate(GeneratorConfig(seed=1)))
    del doc["polytopes"]
    with pytest.raises(ProblemParseError, match="polytopes"):
        from_json(json.dumps(doc))


@pytest.mark.parametrize("mutate, field", [
    (lambda d: d.update(dim="two"), "dim"),
    (lambda d: d["polytopes"][0].update(h=[1.0]), "polytopes[0].h"),
    (lambda d: d.update(start=[0.0]), "start"),
    (lambda d: d["velocity_bounds"][0].update(relation="maybe"), "relation"),
    (lambda d: d.update(version=99), "version"),
])
def test_schema_violations_name_field(mutate, field):
    doc = problem_to_dict(generate(GeneratorConfig(seed=1)))
    mutate(doc)
    with pytest.raises(ProblemParseError, match=field.replace("[", r"\[").replace("]", r"\]")):
        from_json(json.dumps(doc))


def test_invalid_json_is_a_parse_error():
    with pytest.raises(ProblemParseError):
        from_json("{not json")


def test_non_normalized_rows_renormalized_on_load():
    doc = problem_to_dict(generate(GeneratorConfig(seed=4)))
    H = np.array(doc["polytopes"][0]["H"])
    h = np.array(doc["polytopes"][0]["h"])
    doc["polytopes"][0]["H"] = (3.0 * H).tolist()
    doc["polytopes"][0]["h"] = (3.0 * h).tolist()
    p = from_json(json.dumps(doc))
    assert np.allclose(np.linalg.norm(p.polytopes[0].normals, axis=1), 1.0, atol=1e-9)
    assert np.allclose(p.polytopes[0].offsets, h, atol=1e-12)


def test_flat_row_major_matrix_accepted():
    doc = problem_to_dict(generate(GeneratorConfig(seed=4)))
    doc["polytopes"][1]["H"] = np.ravel(doc["polytopes"][1]["H"]).tolist()
    assert from_json(json.dumps(doc)) == generate(GeneratorConfig(seed=4))


# -- properties --------------------------------------------------------------

@settings(max_examples=40)
@given(st.integers(0, 2**63 - 1), st.sampled_from([2, 3]), st.integers(1, 6), st.integers(2, 12))
def test_generator_validity(seed, dim, npol, degree):
    p = generate(GeneratorConfig(dim=dim, n_polytopes=npol, degree=degree, seed=seed))
    for j in range(npol - 1):
        assert geometry.intersection_point(p.polytopes[j : j + 2], 1e-9) is not None
    assert geometry.contains(p.polytopes[0], p.start, 1e-9)
    assert geometry.contains(p.polytopes[-1], p.end, 1e-9)
    assert from_json(to_json(p)) == p
