"""Built-in correctness suite: gradient checks against central finite
differences plus oracle equivalences for the cell machinery.

Everything here recomputes expectations from scratch (straight-line numpy,
no autograd) so a broken primitive cannot certify itself.
"""

from __future__ import annotations

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .cells import (ACTIVATIONS, Activation, AlphaTable, CellWeights, Genotype,
                    GenotypeCell, GRUCell, LSTMCell, MixedCell, derive_genotype,
                    preset_genotypes)
from .optim import SGD, Adam


def _fd_grad(fn, arrays: list[np.ndarray], which: int, eps: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar fn w.r.t. arrays[which]."""
    base = arrays[which]
    grad = np.zeros_like(base, dtype=np.float64)
    flat = base.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + eps
        up = fn(arrays)
        flat[i] = keep - eps
        down = fn(arrays)
        flat[i] = keep
        gflat[i] = (up - down) / (2 * eps)
    return grad


def _max_rel_err(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    denom = np.maximum(floor, np.maximum(np.abs(analytic), np.abs(numeric)))
    return float(np.max(np.abs(analytic - numeric) / denom))


def _grad_check(build_loss, arrays: list[np.ndarray], tol: float = 1e-4) -> float:
    """Compare tape gradients with finite differences for every input array."""
    tensors = [Tensor(a.copy(), requires_grad=True, dtype=np.float64) for a in arrays]
    loss = build_loss(tensors)
    ag.backward(loss)

    def scalar(vals):
        with ag.no_grad():
            ts = [Tensor(v, dtype=np.float64) for v in vals]
            return float(build_loss(ts).data)

    worst = 0.0
    for k, t in enumerate(tensors):
        fd = _fd_grad(scalar, [t.data.copy() for t in tensors], k)
        worst = max(worst, _max_rel_err(t.grad.astype(np.float64), fd))
    return worst


def _check_primitives(rng) -> list[tuple[str, bool, str]]:
    checks = []

    def run(name, build, shapes, tol=1e-4):
        arrays = [rng.standard_normal(s) for s in shapes]
        err = _grad_check(build, arrays, tol)
        checks.append((f"grad:{name}", err <= tol, f"max rel err {err:.2e}"))

    run("matmul", lambda ts: ag.reduce_sum(ag.matmul(ts[0], ts[1])), [(4, 5), (5, 3)])
    run("affine", lambda ts: ag.reduce_sum(ag.affine(ts[0], ts[1], ts[2])),
        [(4, 5), (5, 3), (3,)])
    for kind in ag.GATE_ACTS:
        run(f"gate_blend[{kind}]",
            lambda ts, kind=kind: ag.reduce_sum(ag.gate_blend(ts[0], ts[1], kind)[0]),
            [(3, 8), (3, 4)])
    run("add_mul", lambda ts: ag.reduce_sum(ag.mul(ag.add(ts[0], ts[1]), ts[0])),
        [(3, 4), (3, 4)])
    run("sigmoid", lambda ts: ag.reduce_sum(ag.sigmoid(ts[0])), [(4, 4)])
    run("tanh", lambda ts: ag.reduce_sum(ag.tanh(ts[0])), [(4, 4)])
    run("relu", lambda ts: ag.reduce_sum(ag.mul(ag.relu(ts[0]), ts[0])), [(4, 4)])
    run("softmax", lambda ts: ag.reduce_sum(ag.mul(ag.softmax(ts[0], axis=1), ts[1])),
        [(3, 6), (3, 6)])
    run("conv2d", lambda ts: ag.reduce_sum(
        ag.conv2d(ts[0], ts[1], ts[2], stride=1, padding=1)),
        [(2, 3, 5, 5), (4, 3, 3, 3), (4,)])
    labels = rng.integers(0, 5, size=6)
    run("cross_entropy", lambda ts: ag.cross_entropy(ts[0], labels), [(6, 5)])
    run("reshape_transpose", lambda ts: ag.reduce_sum(
        ag.mul(ag.transpose(ag.reshape(ts[0], (4, 6)), (1, 0)), ts[1])),
        [(2, 12), (6, 4)])
    run("narrow_concat_stack", lambda ts: ag.reduce_sum(
        ag.stack([ag.narrow(ag.concat([ts[0], ts[1]], axis=1), 1, 1, 3),
                  ag.narrow(ts[0], 1, 0, 3)], axis=0)),
        [(3, 4), (3, 2)])
    run("mean_pad", lambda ts: ag.reduce_mean(ag.pad_hw(ts[0], 1, 2)), [(2, 3, 4, 4)])
    return checks


def _oracle_genotype_forward(genotype, ws, bs, x, states, input_mode="current"):
    """Straight-line replay of the discrete cell, plain numpy."""
    def sig(v):
        return 1.0 / (1.0 + np.exp(-v))

    acts = {Activation.SIGMOID: sig, Activation.TANH: np.tanh,
            Activation.RELU: lambda v: np.maximum(v, 0), Activation.IDENTITY: lambda v: v}
    n = states[0].shape[1]
    xin = np.concatenate([x, states[0]], axis=1)
    z = xin @ ws[0] + bs[0]
    c = sig(z[:, :n])
    h0 = (1 - c) * states[0] + c * np.tanh(z[:, n:])
    hs = [h0]
    for pos, (pred, act) in enumerate(genotype.entries):
        i = pos + 1
        src = hs[pred] if input_mode == "current" else states[pred]
        z = src @ ws[i] + bs[i]
        c = sig(z[:, :n])
        h = (1 - c) * states[i] + c * acts[act](z[:, n:])
        hs.append(h)
    return np.mean(hs[1:], axis=0), hs


def _check_cells(rng) -> list[tuple[str, bool, str]]:
    checks = []
    genotype = preset_genotypes()["dws"]
    cell = GenotypeCell(genotype, 6, 5, rng, dtype=np.float64)
    x = rng.standard_normal((3, 6))
    state = cell.initial_state(3)
    with ag.no_grad():
        h1, s1 = cell.step(Tensor(x, dtype=np.float64), state)
        h2, _ = cell.step(Tensor(x, dtype=np.float64), s1)
    ws = [w.data for w in cell.weights.ws]
    bs = [b.data for b in cell.weights.bs]
    oh1, os1 = _oracle_genotype_forward(genotype, ws, bs, x, [s.data for s in state])
    oh2, _ = _oracle_genotype_forward(genotype, ws, bs, x, os1)
    err = max(np.abs(h1.data - oh1).max(), np.abs(h2.data - oh2).max())
    checks.append(("oracle:genotype_cell", err < 1e-10, f"max abs err {err:.2e}"))

    ok = True
    for trial in range(10):
        tables = [np.zeros((i, 4)) for i in range(1, 6)]
        for i, t in enumerate(tables, start=1):
            t[rng.integers(0, i), rng.integers(0, 4)] = 1e4
        alpha = AlphaTable.from_arrays(tables)
        mixed = MixedCell(4, 5, rng, num_vertices=5, dtype=np.float64, alpha=alpha)
        disc = GenotypeCell(derive_genotype(alpha), 4, 5, rng, dtype=np.float64,
                            weights=mixed.weights)
        xb = rng.standard_normal((2, 4))
        with ag.no_grad():
            hm, _ = mixed.step(Tensor(xb, dtype=np.float64), mixed.initial_state(2))
            hd, _ = disc.step(Tensor(xb, dtype=np.float64), disc.initial_state(2))
        ok = ok and np.abs(hm.data - hd.data).max() < 1e-4
    checks.append(("oracle:mixed_saturation", ok, "10 saturated tables"))

    ok = True
    for trial in range(200):
        tables = [rng.standard_normal((i, 4)) for i in range(1, 4)]
        got = derive_genotype([t.copy() for t in tables])
        expect = []
        for t in tables:
            best_j, best_f, best_v = 0, 0, -np.inf
            for j in range(t.shape[0]):
                for f in range(4):
                    if t[j, f] > best_v:
                        best_j, best_f, best_v = j, f, t[j, f]
            expect.append((best_j, ACTIVATIONS[best_f]))
        ok = ok and got.entries == tuple(expect)
    checks.append(("oracle:derive_genotype", ok, "200 random tables"))

    gru = GRUCell(4, 3, rng, dtype=np.float64)
    x = rng.standard_normal((2, 4))
    h = rng.standard_normal((2, 3))
    with ag.no_grad():
        got, _ = gru.step(Tensor(x, dtype=np.float64), [Tensor(h, dtype=np.float64)])
    xh = np.concatenate([x, h], axis=1)
    gates = 1.0 / (1.0 + np.exp(-(xh @ gru.w_gates.data + gru.b_gates.data)))
    z, r = gates[:, :3], gates[:, 3:]
    cand = np.tanh(np.concatenate([x, r * h], axis=1) @ gru.w_cand.data + gru.b_cand.data)
    expect = (1 - z) * h + z * cand
    err = np.abs(got.data - expect).max()
    checks.append(("oracle:gru", err < 1e-12, f"max abs err {err:.2e}"))

    lstm = LSTMCell(4, 3, rng, dtype=np.float64)
    c0 = rng.standard_normal((2, 3))
    with ag.no_grad():
        got, (_, c1) = lstm.step(Tensor(x, dtype=np.float64),
                                 [Tensor(h, dtype=np.float64), Tensor(c0, dtype=np.float64)])
    z = np.concatenate([x, h], axis=1) @ lstm.w.data + lstm.b.data
    sig = lambda v: 1.0 / (1.0 + np.exp(-v))
    i_g, f_g, g, o_g = sig(z[:, :3]), sig(z[:, 3:6]), np.tanh(z[:, 6:9]), sig(z[:, 9:])
    c_new = f_g * c0 + i_g * g
    err = max(np.abs(got.data - o_g * np.tanh(c_new)).max(), np.abs(c1.data - c_new).max())
    checks.append(("oracle:lstm", err < 1e-12, f"max abs err {err:.2e}"))
    return checks


def _check_optim(rng) -> list[tuple[str, bool, str]]:
    checks = []
    p = Tensor(np.array([1.0]), requires_grad=True)
    p.grad = np.array([2.0], dtype=np.float32)
    SGD([p], lr=0.1).step()
    checks.append(("optim:sgd", abs(float(p.data[0]) - 0.8) < 1e-6, f"p={float(p.data[0]):.4f}"))

    p = Tensor(np.array([0.5]), requires_grad=True)
    p.grad = np.array([3.0], dtype=np.float32)
    Adam([p], lr=0.01).step()
    # First bias-corrected step moves by ~lr against the gradient sign.
    moved = 0.5 - float(p.data[0])
    checks.append(("optim:adam_first_step", abs(moved - 0.01) < 1e-4, f"delta={moved:.5f}"))
    return checks


def run_all(verbose: bool = True) -> bool:
    rng = np.random.default_rng(7)
    checks = _check_primitives(rng) + _check_cells(rng) + _check_optim(rng)
    ok = True
    for name, passed, detail in checks:
        ok &= passed
        if verbose:
            print(f"{'PASS' if passed else 'FAIL'}  {name:<28} {detail}")
    if verbose:
        print(f"selftest: {'all checks passed' if ok else 'FAILURES PRESENT'}")
    return ok
