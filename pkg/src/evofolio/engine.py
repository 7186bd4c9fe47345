"""Flat-array compilation of genomes and JIT kernels for forward / BPTT passes.

Node genes are flattened into parallel arrays ordered by (depth, node_id); all
trainable scalars live in one weight vector so the optimizer, the gradient
rescaler, and finite-difference checks can treat the network uniformly.
"""

from __future__ import annotations

import numpy as np

from .genome import Genome, copy_genome, param_keys

try:
    from numba import njit

    NUMBA_ENABLED = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    NUMBA_ENABLED = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def wrap(func):
            return func

        return wrap


CODE_INPUT = 0
CODE_IDENTITY = 1  # output node: identity activation on input sum + bias
CODE_SIMPLE = 2
CODE_LSTM = 3
CODE_GRU = 4
CODE_MGU = 5

_CELL_CODE = {"simple": CODE_SIMPLE, "lstm": CODE_LSTM, "gru": CODE_GRU, "mgu": CODE_MGU}


@njit(cache=True, nogil=True)
def _sigmoid(x):
    # overflow-safe in both jitted and interpreted execution
    if x >= 0.0:
        return 1.0 / (1.0 + np.exp(-x))
    e = np.exp(x)
    return e / (1.0 + e)


@njit(cache=True, nogil=True)
def _forward_kernel(X, cell_code, param_off, in_slot,
                    ff_start, ff_src, ff_widx,
                    rec_start, rec_src, rec_widx, rec_skip,
                    w, act, xsum, g1, g2, g3, g4, cst):
    T = X.shape[0]
    n = cell_code.shape[0]
    for t in range(T):
        for i in range(n):
            code = cell_code[i]
            if code == CODE_INPUT:
                act[i, t] = X[t, in_slot[i]]
                continue
            s = 0.0
            for k in range(ff_start[i], ff_start[i + 1]):
                s += w[ff_widx[k]] * act[ff_src[k], t]
            for k in range(rec_start[i], rec_start[i + 1]):
                tt = t - rec_skip[k]
                if tt >= 0:
                    s += w[rec_widx[k]] * act[rec_src[k], tt]
            xsum[i, t] = s
            p = param_off[i]
            if code == CODE_IDENTITY:
                act[i, t] = s + w[p]
            elif code == CODE_SIMPLE:
                act[i, t] = np.tanh(s + w[p])
            elif code == CODE_LSTM:
                h_prev = act[i, t - 1] if t > 0 else 0.0
                c_prev = cst[i, t - 1] if t > 0 else 0.0
                ig = _sigmoid(w[p + 0] * s + w[p + 1] * h_prev + w[p + 2])
                fg = _sigmoid(w[p + 3] * s + w[p + 4] * h_prev + w[p + 5])
                og = _sigmoid(w[p + 6] * s + w[p + 7] * h_prev + w[p + 8])
                gg = np.tanh(w[p + 9] * s + w[p + 10] * h_prev + w[p + 11])
                c = fg * c_prev + ig * gg
                g1[i, t] = ig
                g2[i, t] = fg
                g3[i, t] = og
                g4[i, t] = gg
                cst[i, t] = c
                act[i, t] = og * np.tanh(c)
            elif code == CODE_GRU:
                h_prev = act[i, t - 1] if t > 0 else 0.0
                zg = _sigmoid(w[p + 0] * s + w[p + 1] * h_prev + w[p + 2])
                rg = _sigmoid(w[p + 3] * s + w[p + 4] * h_prev + w[p + 5])
                hc = np.tanh(w[p + 6] * s + w[p + 7] * (rg * h_prev) + w[p + 8])
                g1[i, t] = zg
                g2[i, t] = rg
                g3[i, t] = hc
                act[i, t] = (1.0 - zg) * h_prev + zg * hc
            else:  # CODE_MGU
                h_prev = act[i, t - 1] if t > 0 else 0.0
                fg = _sigmoid(w[p + 0] * s + w[p + 1] * h_prev + w[p + 2])
                hc = np.tanh(w[p + 3] * s + w[p + 4] * (fg * h_prev) + w[p + 5])
                g1[i, t] = fg
                g2[i, t] = hc
                act[i, t] = (1.0 - fg) * h_prev + fg * hc


@njit(cache=True, nogil=True)
def _backward_kernel(cell_code, param_off,
                     ff_start, ff_src, ff_widx,
                     rec_start, rec_src, rec_widx, rec_skip,
                     w, act, xsum, g1, g2, g3, g4, cst, da, grad):
    T = act.shape[1]
    n = cell_code.shape[0]
    dh_carry = np.zeros(n)
    dc_carry = np.zeros(n)
    for t in range(T - 1, -1, -1):
        for i in range(n - 1, -1, -1):
            code = cell_code[i]
            if code == CODE_INPUT:
                continue
            dh = da[i, t] + dh_carry[i]
            dh_carry[i] = 0.0
            s = xsum[i, t]
            p = param_off[i]
            dx = 0.0
            if code == CODE_IDENTITY:
                dx = dh
                grad[p] += dh
            elif code == CODE_SIMPLE:
                a = act[i, t]
                dx = dh * (1.0 - a * a)
                grad[p] += dx
            elif code == CODE_LSTM:
                h_prev = act[i, t - 1] if t > 0 else 0.0
                c_prev = cst[i, t - 1] if t > 0 else 0.0
                ig = g1[i, t]
                fg = g2[i, t]
                og = g3[i, t]
                gg = g4[i, t]
                c = cst[i, t]
                tc = np.tanh(c)
                do = dh * tc
                dc = dc_carry[i] + dh * og * (1.0 - tc * tc)
                di = dc * gg
                df = dc * c_prev
                dg = dc * ig
                dc_carry[i] = dc * fg
                dzi = di * ig * (1.0 - ig)
                dzf = df * fg * (1.0 - fg)
                dzo = do * og * (1.0 - og)
                dzg = dg * (1.0 - gg * gg)
                grad[p + 0] += dzi * s
                grad[p + 1] += dzi * h_prev
                grad[p + 2] += dzi
                grad[p + 3] += dzf * s
                grad[p + 4] += dzf * h_prev
                grad[p + 5] += dzf
                grad[p + 6] += dzo * s
                grad[p + 7] += dzo * h_prev
                grad[p + 8] += dzo
                grad[p + 9] += dzg * s
                grad[p + 10] += dzg * h_prev
                grad[p + 11] += dzg
                dx = dzi * w[p + 0] + dzf * w[p + 3] + dzo * w[p + 6] + dzg * w[p + 9]
                dh_carry[i] = dzi * w[p + 1] + dzf * w[p + 4] + dzo * w[p + 7] + dzg * w[p + 10]
            elif code == CODE_GRU:
                h_prev = act[i, t - 1] if t > 0 else 0.0
                zg = g1[i, t]
                rg = g2[i, t]
                hc = g3[i, t]
                dz = dh * (hc - h_prev)
                dhc = dh * zg
                dh_prev = dh * (1.0 - zg)
                dzhc = dhc * (1.0 - hc * hc)
                grad[p + 6] += dzhc * s
                grad[p + 7] += dzhc * (rg * h_prev)
                grad[p + 8] += dzhc
                dr = dzhc * w[p + 7] * h_prev
                dh_prev += dzhc * w[p + 7] * rg
                dzz = dz * zg * (1.0 - zg)
                dzr = dr * rg * (1.0 - rg)
                grad[p + 0] += dzz * s
                grad[p + 1] += dzz * h_prev
                grad[p + 2] += dzz
                grad[p + 3] += dzr * s
                grad[p + 4] += dzr * h_prev
                grad[p + 5] += dzr
                dh_prev += dzz * w[p + 1] + dzr * w[p + 4]
                dx = dzz * w[p + 0] + dzr * w[p + 3] + dzhc * w[p + 6]
                dh_carry[i] = dh_prev
            else:  # CODE_MGU
                h_prev = act[i, t - 1] if t > 0 else 0.0
                fg = g1[i, t]
                hc = g2[i, t]
                df = dh * (hc - h_prev)
                dhc = dh * fg
                dh_prev = dh * (1.0 - fg)
                dzhc = dhc * (1.0 - hc * hc)
                grad[p + 3] += dzhc * s
                grad[p + 4] += dzhc * (fg * h_prev)
                grad[p + 5] += dzhc
                df += dzhc * w[p + 4] * h_prev
                dh_prev += dzhc * w[p + 4] * fg
                dzf = df * fg * (1.0 - fg)
                grad[p + 0] += dzf * s
                grad[p + 1] += dzf * h_prev
                grad[p + 2] += dzf
                dh_prev += dzf * w[p + 1]
                dx = dzf * w[p + 0] + dzhc * w[p + 3]
                dh_carry[i] = dh_prev
            for k in range(ff_start[i], ff_start[i + 1]):
                grad[ff_widx[k]] += dx * act[ff_src[k], t]
                da[ff_src[k], t] += dx * w[ff_widx[k]]
            for k in range(rec_start[i], rec_start[i + 1]):
                tt = t - rec_skip[k]
                if tt >= 0:
                    grad[rec_widx[k]] += dx * act[rec_src[k], tt]
                    da[rec_src[k], tt] += dx * w[rec_widx[k]]


class CompiledNetwork:
    """A genome flattened to kernel-ready arrays plus weight-vector handles.

    The weight vector is laid out as [feed-forward edge weights by innovation,
    recurrent edge weights by innovation, node cell parameters in evaluation
    order].  Disabled genes and genes incident to disabled nodes are excluded:
    they are not evaluated and not trained.
    """

    def __init__(self, genome: Genome):
        nodes = sorted(
            (n for n in genome.nodes.values() if n.enabled),
            key=lambda n: (n.depth, n.node_id),
        )
        index = {n.node_id: i for i, n in enumerate(nodes)}
        n_nodes = len(nodes)

        self.cell_code = np.empty(n_nodes, dtype=np.int64)
        self.in_slot = np.full(n_nodes, -1, dtype=np.int64)
        self.eval_node_ids = [n.node_id for n in nodes]
        self.out_index = -1

        input_ids = [n.node_id for n in genome.input_nodes()]
        slot_of = {nid: k for k, nid in enumerate(input_ids)}
        for i, n in enumerate(nodes):
            if n.kind == "input":
                self.cell_code[i] = CODE_INPUT
                self.in_slot[i] = slot_of[n.node_id]
            elif n.kind == "output":
                self.cell_code[i] = CODE_IDENTITY
                self.out_index = i
            else:
                self.cell_code[i] = _CELL_CODE[n.cell]
        if self.out_index < 0:
            raise ValueError("genome has no enabled output node")

        def effective(e):
            return (
                e.enabled
                and genome.nodes[e.source].enabled
                and genome.nodes[e.target].enabled
            )

        ff = sorted(
            (e for e in genome.edges.values() if effective(e)),
            key=lambda e: e.innovation,
        )
        rec = sorted(
            (e for e in genome.recurrent_edges.values() if effective(e)),
            key=lambda e: e.innovation,
        )

        weights = [e.weight for e in ff] + [e.weight for e in rec]
        self._edge_order = [e.innovation for e in ff]
        self._rec_order = [e.innovation for e in rec]
        self._param_slots: list[tuple[int, str]] = []
        self.param_off = np.zeros(n_nodes, dtype=np.int64)
        off = len(weights)
        for i, n in enumerate(nodes):
            self.param_off[i] = off
            for key in param_keys(n.kind, n.cell):
                self._param_slots.append((n.node_id, key))
                weights.append(n.params[key])
                off += 1
        self.initial_weights = np.array(weights, dtype=np.float64)

        in_ff: list[list[tuple[int, int]]] = [[] for _ in range(n_nodes)]
        for j, e in enumerate(ff):
            in_ff[index[e.target]].append((index[e.source], j))
        in_rec: list[list[tuple[int, int, int]]] = [[] for _ in range(n_nodes)]
        for j, e in enumerate(rec):
            in_rec[index[e.target]].append((index[e.source], len(ff) + j, e.time_skip))

        self.ff_start = np.zeros(n_nodes + 1, dtype=np.int64)
        self.rec_start = np.zeros(n_nodes + 1, dtype=np.int64)
        ff_src, ff_widx = [], []
        rec_src, rec_widx, rec_skip = [], [], []
        for i in range(n_nodes):
            for src, widx in in_ff[i]:
                ff_src.append(src)
                ff_widx.append(widx)
            self.ff_start[i + 1] = len(ff_src)
            for src, widx, skip in in_rec[i]:
                rec_src.append(src)
                rec_widx.append(widx)
                rec_skip.append(skip)
            self.rec_start[i + 1] = len(rec_src)
        self.ff_src = np.array(ff_src, dtype=np.int64)
        self.ff_widx = np.array(ff_widx, dtype=np.int64)
        self.rec_src = np.array(rec_src, dtype=np.int64)
        self.rec_widx = np.array(rec_widx, dtype=np.int64)
        self.rec_skip = np.array(rec_skip, dtype=np.int64)
        self.n_nodes = n_nodes

    # -- execution ---------------------------------------------------------

    def _run_forward(self, weights: np.ndarray, X: np.ndarray):
        T = X.shape[0]
        n = self.n_nodes
        act = np.zeros((n, T))
        xsum = np.zeros((n, T))
        g1 = np.zeros((n, T))
        g2 = np.zeros((n, T))
        g3 = np.zeros((n, T))
        g4 = np.zeros((n, T))
        cst = np.zeros((n, T))
        _forward_kernel(
            X, self.cell_code, self.param_off, self.in_slot,
            self.ff_start, self.ff_src, self.ff_widx,
            self.rec_start, self.rec_src, self.rec_widx, self.rec_skip,
            weights, act, xsum, g1, g2, g3, g4, cst,
        )
        if not np.all(np.isfinite(act)):
            bad_t, bad_i = self._first_bad(act)
            raise ValueError(
                f"non-finite activation at node {self.eval_node_ids[bad_i]}, "
                f"timestep {bad_t}"
            )
        return act, xsum, g1, g2, g3, g4, cst

    def _first_bad(self, act: np.ndarray) -> tuple[int, int]:
        bad = np.argwhere(~np.isfinite(act.T))
        t, i = bad[0]
        return int(t), int(i)

    def forward(self, weights: np.ndarray, X: np.ndarray) -> np.ndarray:
        act, *_ = self._run_forward(weights, X)
        return act[self.out_index].copy()

    def loss_and_gradient(self, weights: np.ndarray, X: np.ndarray,
                          y: np.ndarray) -> tuple[float, np.ndarray]:
        """MSE over the first len(y) timesteps and its gradient in one unroll."""
        act, xsum, g1, g2, g3, g4, cst = self._run_forward(weights, X)
        m = y.shape[0]
        resid = act[self.out_index, :m] - y
        loss = float(np.mean(resid * resid))
        da = np.zeros_like(act)
        da[self.out_index, :m] = 2.0 * resid / m
        grad = np.zeros_like(weights)
        _backward_kernel(
            self.cell_code, self.param_off,
            self.ff_start, self.ff_src, self.ff_widx,
            self.rec_start, self.rec_src, self.rec_widx, self.rec_skip,
            weights, act, xsum, g1, g2, g3, g4, cst, da, grad,
        )
        return loss, grad

    # -- weight vector <-> genome -------------------------------------------

    def writeback(self, genome: Genome, weights: np.ndarray) -> Genome:
        """Return a copy of ``genome`` with the weight vector written back."""
        out = copy_genome(genome)
        n_ff = len(self._edge_order)
        n_rec = len(self._rec_order)
        for j, innovation in enumerate(self._edge_order):
            out.edges[innovation].weight = float(weights[j])
        for j, innovation in enumerate(self._rec_order):
            out.recurrent_edges[innovation].weight = float(weights[n_ff + j])
        for j, (node_id, key) in enumerate(self._param_slots):
            out.nodes[node_id].params[key] = float(weights[n_ff + n_rec + j])
        return out


def forward_pass(genome: Genome, inputs: np.ndarray) -> np.ndarray:
    """Run the genome over a T x n_inputs feature matrix; returns T predictions."""
    X = np.ascontiguousarray(inputs, dtype=np.float64)
    if not np.all(np.isfinite(X)):
        raise ValueError("forward_pass: inputs contain non-finite values")
    net = CompiledNetwork(genome)
    return net.forward(net.initial_weights, X)


def warmup_kernels() -> None:
    """Trigger JIT compilation once so later calls run at full speed."""
    from .genome import EdgeGene, Genome, new_node

    nodes = {i: new_node(i, "input", "simple", 0.0) for i in range(7)}
    nodes[7] = new_node(7, "output", "simple", 1.0)
    edges = {i: EdgeGene(i, i, 7, 0.1) for i in range(7)}
    genome = Genome(nodes=nodes, edges=edges)
    X = np.zeros((3, 7))
    net = CompiledNetwork(genome)
    net.loss_and_gradient(net.initial_weights, X, np.zeros(2))
