import numpy as np
import pytest
from hypothesis import given, strategies as st

from hybridobs.decomposition import (
    PlantModel,
    SensorGraph,
    build_decomposition,
    check_decomposition,
    find_hop_depths,
    is_alpha_detectable,
    multihop_output,
    neighbor_projection,
    observability_matrix,
    observable_subspace,
    unobservable_subspace,
)
from hybridobs.errors import ConsistencyError, InputError
from hybridobs.generators import random_instance
from hybridobs.numerics import image_basis, kernel_basis, subspace_distance

from conftest import A_RING, coord_basis

E = np.eye(4)
RING_EDGES = frozenset({(0, 1), (1, 2), (2, 3), (3, 0)})


def ring_plant():
    return PlantModel(A_RING, tuple(E[i:i + 1] for i in range(4)))


def ring_graph():
    return SensorGraph(4, RING_EDGES)


def brute_observable(C, A):
    return image_basis(observability_matrix(C, A).T)


class TestModels:
    def test_plant_shapes(self):
        with pytest.raises(InputError):
            PlantModel(np.zeros((2, 3)), ())
        with pytest.raises(InputError):
            PlantModel(np.eye(2), (np.ones((1, 3)),))
        with pytest.raises(InputError):
            PlantModel(np.eye(2), (np.ones((3, 2)),))

    def test_vector_output_is_a_row(self):
        plant = PlantModel(np.eye(3), ([1.0, 0.0, 0.0],))
        assert plant.outputs[0].shape == (1, 3)

    def test_self_loops_rejected(self):
        with pytest.raises(InputError):
            SensorGraph(2, frozenset({(1, 1)}))

    def test_unknown_agent_rejected(self):
        with pytest.raises(InputError):
            SensorGraph(2, frozenset({(0, 2)}))

    def test_in_neighbors_ascending(self):
        g = SensorGraph(4, frozenset({(3, 0), (1, 0), (2, 0)}))
        assert g.in_neighbors(0) == [1, 2, 3]


class TestMultihop:
    def test_isolated_agent_keeps_its_row_space(self):
        plant = ring_plant()
        C = multihop_output(plant, SensorGraph(4), 2, 3)
        assert subspace_distance(image_basis(C.T), coord_basis(4, [2])) < 1e-12

    def test_ring_agent3_one_hop(self):
        C = multihop_output(ring_plant(), ring_graph(), 2, 1)
        assert np.array_equal(C, np.vstack([E[2], E[1]]))

    def test_complete_graph_one_hop(self):
        edges = frozenset((j, i) for i in range(4) for j in range(4) if i != j)
        C = multihop_output(ring_plant(), SensorGraph(4, edges), 0, 1)
        assert subspace_distance(image_basis(C.T), np.eye(4)) < 1e-12

    def test_errors(self):
        with pytest.raises(InputError):
            multihop_output(ring_plant(), ring_graph(), 7, 0)
        with pytest.raises(InputError):
            multihop_output(ring_plant(), ring_graph(), 0, -1)


class TestObservability:
    def test_full_output(self):
        assert observable_subspace(np.eye(4), A_RING).shape == (4, 4)

    def test_first_coordinate_sees_first_oscillator(self):
        O = observable_subspace(E[:1], A_RING)
        assert subspace_distance(O, coord_basis(4, [0, 1])) < 1e-12
        assert subspace_distance(O, brute_observable(E[:1], A_RING)) < 1e-12

    def test_zero_output(self):
        assert observable_subspace(np.zeros((1, 4)), A_RING).shape == (4, 0)
        assert unobservable_subspace(np.zeros((1, 4)), A_RING).shape == (4, 4)

    def test_dimension_mismatch(self):
        with pytest.raises(InputError):
            observable_subspace(np.ones((1, 3)), A_RING)

    def test_detectability_witness(self):
        ok, witness = is_alpha_detectable(E[:1], A_RING, 1.0)
        assert not ok
        assert abs(witness.real) < 1e-12 and abs(abs(witness.imag) - 2.0) < 1e-12

    def test_detectable_cases(self):
        assert is_alpha_detectable(np.eye(4), A_RING, 3.0) == (True, None)
        assert is_alpha_detectable(np.zeros((1, 3)), -2 * np.eye(3), 1.0)[0]

    def test_alpha_positive(self):
        with pytest.raises(InputError):
            is_alpha_detectable(np.eye(2), np.eye(2), 0.0)

    @given(st.integers(0, 10_000), st.integers(1, 8), st.integers(0, 3))
    def test_krylov_matches_brute_force(self, seed, n, m):
        rng = np.random.default_rng(seed)
        # block structure makes partial observability common
        k = int(rng.integers(0, n + 1))
        A = rng.standard_normal((n, n))
        A[k:, :k] = 0.0
        C = np.hstack([rng.standard_normal((m, k)), np.zeros((m, n - k))])
        Q = np.linalg.qr(rng.standard_normal((n, n)))[0]
        A, C = Q @ A @ Q.T, C @ Q.T
        O = observable_subspace(C, A)
        assert O.shape[1] == brute_observable(C, A).shape[1]
        assert subspace_distance(O, brute_observable(C, A)) < 1e-8


class TestHopDepths:
    def test_ring(self):
        # agents 2 and 4 receive from an agent measuring their own oscillator,
        # so they need a second hop; agents 1 and 3 finish after one
        res = find_hop_depths(ring_plant(), ring_graph(), 1.0)
        assert res.ok and res.depths == (1, 2, 1, 2)

    def test_ring_depths_against_brute_force(self):
        plant, graph = ring_plant(), ring_graph()
        res = find_hop_depths(plant, graph, 1.0)
        for i, ell in enumerate(res.depths):
            for rho in range(ell + 1):
                C = multihop_output(plant, graph, i, rho)
                unobs = kernel_basis(observability_matrix(C, A_RING))
                fast = unobs.shape[1] == 0 or np.all(
                    np.linalg.eigvals(unobs.T @ A_RING @ unobs).real <= -1.0)
                assert fast == (rho == ell)

    def test_stable_plant_needs_no_hops(self):
        plant = PlantModel(-2 * np.eye(3), (np.zeros((1, 3)), np.zeros((1, 3))))
        res = find_hop_depths(plant, SensorGraph(2, frozenset({(0, 1)})), 1.0)
        assert res.depths == (0, 0)

    def test_disconnected_pair_fails(self):
        plant = PlantModel(A_RING, (E[:1], E[2:3]))
        res = find_hop_depths(plant, SensorGraph(2), 1.0)
        assert not res.ok and res.failed_agents == [0, 1]
        assert abs(abs(res.witnesses[0].imag) - 2.0) < 1e-12
        assert abs(abs(res.witnesses[1].imag) - 1.0) < 1e-12

    def test_negative_cap(self):
        with pytest.raises(InputError):
            find_hop_depths(ring_plant(), ring_graph(), 1.0, max_hops=-1)

    @given(st.integers(0, 10_000))
    def test_detectability_is_monotone_in_hops(self, seed):
        inst = random_instance(seed)
        plant, graph = inst.plant, inst.graph
        for i in range(plant.p):
            flags = [is_alpha_detectable(multihop_output(plant, graph, i, r), plant.A, 1.0)[0]
                     for r in range(plant.p)]
            assert flags == sorted(flags)
            dims = [observable_subspace(multihop_output(plant, graph, i, r), plant.A).shape[1]
                    for r in range(plant.p)]
            assert dims == sorted(dims)


class TestBuild:
    def test_ring_agent_three(self):
        plant, graph = ring_plant(), ring_graph()
        d = build_decomposition(plant, graph, find_hop_depths(plant, graph, 1.0).depths)
        assert subspace_distance(d.W(2, 0), coord_basis(4, [2, 3])) < 1e-9
        assert subspace_distance(d.W(2, 1), coord_basis(4, [0, 1])) < 1e-9
        assert d.dim(2, 2) == 0

    def test_ring_dimensions(self):
        plant, graph = ring_plant(), ring_graph()
        d = build_decomposition(plant, graph, (1, 2, 1, 2))
        assert [[d.dim(i, r) for r in range(d.hop_depths[i] + 2)] for i in range(4)] == \
            [[2, 2, 0], [2, 0, 2, 0], [2, 2, 0], [2, 0, 2, 0]]
        assert d.max_hop == 3

    def test_full_output_single_agent(self):
        plant = PlantModel(A_RING, (np.eye(4),))
        d = build_decomposition(plant, SensorGraph(1), (0,))
        assert d.dim(0, 0) == 4 and d.dim(0, 1) == 0

    def test_blind_agent_learns_from_neighbour(self):
        plant = PlantModel(A_RING, (np.zeros((1, 4)), np.eye(4)))
        graph = SensorGraph(2, frozenset({(1, 0)}))
        res = find_hop_depths(plant, graph, 1.0)
        assert res.depths == (1, 0)
        d = build_decomposition(plant, graph, res.depths)
        assert d.dim(0, 0) == 0 and d.dim(0, 1) == 4

    def test_invalid_depths(self):
        with pytest.raises(InputError):
            build_decomposition(ring_plant(), ring_graph(), (1, None, 1, 1))
        with pytest.raises(InputError):
            build_decomposition(ring_plant(), ring_graph(), (1, 1))

    def test_consistency_check_names_the_failure(self):
        plant, graph = ring_plant(), ring_graph()
        d = build_decomposition(plant, graph, (1, 2, 1, 2))
        broken = type(d)(d.n, d.hop_depths,
                         ((d.W(0, 1), d.W(0, 0), d.W(0, 2)),) + d.innovation[1:],
                         d.multihop_outputs)
        with pytest.raises(ConsistencyError) as info:
            check_decomposition(broken, plant, graph)
        assert info.value.check == "containment"

    @given(st.integers(0, 10_000))
    def test_invariants_on_random_instances(self, seed):
        inst = random_instance(seed)
        plant, graph = inst.plant, inst.graph
        res = find_hop_depths(plant, graph, 1.0)
        assert res.ok
        d = build_decomposition(plant, graph, res.depths)
        for i in range(plant.p):
            Wi = d.stacked(i)
            assert Wi.shape == (plant.n, plant.n)
            assert np.linalg.norm(Wi.T @ Wi - np.eye(plant.n)) <= 1e-9
            for rho in range(1, d.hop_depths[i] + 1):
                Cbar = neighbor_projection(d, graph, i, rho)
                if d.dim(i, rho):
                    s = np.linalg.svd(Cbar, compute_uv=False)
                    assert s.size >= d.dim(i, rho) and s[d.dim(i, rho) - 1] > 1e-9
