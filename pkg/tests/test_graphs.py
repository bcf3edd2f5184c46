import numpy as np
import pytest
from hypothesis import given, strategies as st

from xfpt.graphs import (
    BetheSpec,
    CometSpec,
    HeadGraph,
    InvalidModelError,
    LeakyLoopSpec,
    build_bethe,
    build_clique_head,
    build_comet,
    build_leaky_loop,
    comet_bfs_distance,
    validate,
)


def test_clique_degrees_count_tail_edge():
    head = build_clique_head(4, 0, 3)
    assert [head.degree(v) for v in range(4)] == [3, 3, 3, 4]
    assert head.loops == ()


def test_two_clique_exit_splits_evenly():
    head = build_clique_head(2, 0, 1)
    probs, tail = head.step_distribution(0)
    assert probs.tolist() == [0.0, 1.0] and tail == 0.0
    probs, tail = head.step_distribution(1)
    assert probs.tolist() == [0.5, 0.0] and tail == 0.5


@pytest.mark.parametrize("args", [(1, 0, 0), (0, 0, 0), (3, 0, 3), (3, -1, 1)])
def test_clique_rejects_bad_arguments(args):
    with pytest.raises(ValueError):
        build_clique_head(*args)


def test_leaky_loop_d50_parameters():
    spec = build_leaky_loop(0.5, 0.9, 50)
    comet = spec.to_comet()
    assert comet.tail_hops == 49
    assert comet.d_head == 1
    assert comet.distance == 50


def test_leaky_loop_degenerate_is_valid():
    spec = build_leaky_loop(0.0, 1.0, 1)
    assert spec.to_comet().tail_hops == 0
    assert validate(spec.to_comet()) == []


@pytest.mark.parametrize("s, mu, d", [(1.0, 0.9, 5), (-0.1, 0.9, 5), (0.5, 0.0, 5), (0.5, 1.1, 5), (0.5, 0.9, 0)])
def test_leaky_loop_rejects(s, mu, d):
    with pytest.raises(InvalidModelError):
        build_leaky_loop(s, mu, d)


def test_validate_reports_instead_of_raising():
    head = build_clique_head(4, 0, 3)
    assert validate(CometSpec(head, 3, 0.9)) == []
    problems = validate(CometSpec(head, 3, 1.2))
    assert len(problems) == 1 and "survival probability" in problems[0]
    problems = validate(BetheSpec(2, 4))
    assert len(problems) == 1 and "coordination number below 3" in problems[0]
    with pytest.raises(InvalidModelError):
        build_bethe(2, 4)


def test_validate_catches_unreachable_exit_and_isolated_nodes():
    head = HeadGraph(node_count=4, edges=frozenset({(0, 1), (2, 3)}), start=0, exit=3)
    problems = validate(CometSpec(head, 2, 1.0))
    assert any("not reachable" in p for p in problems)
    isolated = HeadGraph(node_count=3, edges=frozenset({(0, 1)}), start=0, exit=1)
    assert any("no incident edge" in p for p in validate(CometSpec(isolated, 1, 1.0)))


@given(m=st.integers(2, 7), data=st.data())
def test_step_distributions_sum_to_one(m, data):
    start = data.draw(st.integers(0, m - 1))
    exit_ = data.draw(st.integers(0, m - 1))
    head = build_clique_head(m, start, exit_)
    for v in range(m):
        probs, tail = head.step_distribution(v)
        assert abs(probs.sum() + tail - 1.0) <= 1e-15
        assert (probs >= 0).all() and tail >= 0


def test_leaky_loop_matches_hand_built_self_loop():
    s = 0.37
    auto = build_leaky_loop(s, 0.8, 6).to_comet()
    manual = build_comet(
        HeadGraph(node_count=1, edges=frozenset(), start=0, exit=0, loops=((0, s),)), 5, 0.8
    )
    assert np.array_equal(auto.head.step_matrix()[0], manual.head.step_matrix()[0])
    assert np.array_equal(auto.head.step_matrix()[1], manual.head.step_matrix()[1])
    assert auto == manual


@given(m=st.integers(2, 6), L=st.integers(0, 12), data=st.data())
def test_bfs_distance_is_head_plus_tail(m, L, data):
    start = data.draw(st.integers(0, m - 1))
    exit_ = data.draw(st.integers(0, m - 1))
    spec = build_comet(build_clique_head(m, start, exit_), L, 0.9)
    assert comet_bfs_distance(spec) == spec.d_head + L == spec.distance


def test_path_head_distance():
    # path 0-1-2-3, exit at the far end: three head moves plus the entry hop
    head = HeadGraph(node_count=4, edges=frozenset({(0, 1), (1, 2), (2, 3)}), start=0, exit=3)
    spec = build_comet(head, 2, 1.0)
    assert spec.d_head == 4
    assert comet_bfs_distance(spec) == 6


def test_specs_are_immutable():
    spec = build_leaky_loop(0.5, 0.9, 3)
    with pytest.raises(AttributeError):
        spec.stay = 0.1
    assert validate(LeakyLoopSpec(0.5, 0.9, 3)) == []
