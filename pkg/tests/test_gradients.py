"""Analytic BPTT gradients versus central finite differences.

The finite-difference oracle only uses the forward pass (itself verified
against the naive interpreter), so the two gradient routes are independent.
"""

import numpy as np

from evofolio.engine import CompiledNetwork

from conftest import build_random_genome

FD_STEP = 1e-5
REL_TOL = 1e-4
ABS_TOL = 1e-7
SMALL_GRAD = 1e-3


def fd_gradient(net, w, X, y):
    def loss(weights):
        preds = net.forward(weights, X)
        resid = preds[: y.shape[0]] - y
        return float(np.mean(resid * resid))

    grad = np.empty_like(w)
    for j in range(len(w)):
        wp = w.copy()
        wm = w.copy()
        wp[j] += FD_STEP
        wm[j] -= FD_STEP
        grad[j] = (loss(wp) - loss(wm)) / (2.0 * FD_STEP)
    return grad


def assert_gradients_match(analytic, numeric):
    for j, (a, n) in enumerate(zip(analytic, numeric)):
        if abs(a) < SMALL_GRAD:
            assert abs(a - n) < ABS_TOL, f"weight {j}: analytic {a} vs fd {n}"
        else:
            rel = abs(a - n) / max(abs(a), abs(n))
            assert rel < REL_TOL, f"weight {j}: analytic {a} vs fd {n} (rel {rel})"


def test_gradients_match_finite_differences_across_cell_kinds():
    rng = np.random.default_rng(2025)
    for trial in range(10):
        genome = build_random_genome(
            rng, n_hidden=int(rng.integers(4, 13)), n_recurrent=int(rng.integers(2, 8))
        )
        assert len(genome.nodes) <= 20
        X = rng.uniform(0.0, 1.0, size=(50, 7))
        y = rng.uniform(-0.1, 0.1, size=50)
        net = CompiledNetwork(genome)
        w = net.initial_weights.copy()
        _, analytic = net.loss_and_gradient(w, X, y)
        numeric = fd_gradient(net, w, X, y)
        assert_gradients_match(analytic, numeric)


def test_gradient_zero_for_dormant_weights():
    # weights feeding a node with no route to the output receive no gradient
    rng = np.random.default_rng(3)
    genome = build_random_genome(rng, n_hidden=3, n_recurrent=0)
    from evofolio.genome import EdgeGene, new_node

    nid = max(genome.nodes) + 1
    genome.nodes[nid] = new_node(nid, "hidden", "lstm", 0.5,
                                 weight_fn=lambda: rng.uniform(-0.5, 0.5))
    innovation = max(genome.edges) + 1
    genome.edges[innovation] = EdgeGene(innovation, 0, nid, 0.4)
    net = CompiledNetwork(genome)
    X = rng.uniform(0, 1, size=(20, 7))
    y = rng.uniform(-0.1, 0.1, size=20)
    _, grad = net.loss_and_gradient(net.initial_weights, X, y)
    dangling = net._edge_order.index(innovation)
    assert grad[dangling] == 0.0
