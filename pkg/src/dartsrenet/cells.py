"""RNN cell zoo.

Three families share one step protocol (``step(x_t, state) -> (h_t, state)``):

* :class:`GenotypeCell` — a discrete searched cell: an acyclic chain/DAG of
  vertices, each with exactly one predecessor and one activation.  Every
  vertex computes an update gate ``c`` and a candidate ``h~`` from a single
  affine map and blends them convexly with its own previous state.
* :class:`MixedCell` — the continuously relaxed search cell.  Every vertex
  keeps all candidate predecessors and all candidate activations, combined
  by a softmax over learnable architecture parameters, so the discrete
  design choice becomes differentiable.
* :class:`GRUCell` / :class:`LSTMCell` — textbook baselines.

:func:`derive_genotype` snaps a trained architecture-parameter table back
to a discrete :class:`Genotype`.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from . import autograd as ag
from .autograd import Tensor


class Activation(Enum):
    """Candidate activation set for searched cells."""

    SIGMOID = "Sigmoid"
    TANH = "Tanh"
    RELU = "ReLU"
    IDENTITY = "Identity"

    def apply(self, x: Tensor) -> Tensor:
        if self is Activation.SIGMOID:
            return ag.sigmoid(x)
        if self is Activation.TANH:
            return ag.tanh(x)
        if self is Activation.RELU:
            return ag.relu(x)
        return x  # identity: the zero-cost pass-through

    @classmethod
    def from_name(cls, name: str) -> "Activation":
        for member in cls:
            if member.value == name:
                return member
        raise ValueError(f"unknown activation {name!r}")


#: Fixed candidate ordering; argmax ties resolve to the lowest index.
ACTIVATIONS: tuple[Activation, ...] = (
    Activation.SIGMOID, Activation.TANH, Activation.RELU, Activation.IDENTITY,
)

NUM_VERTICES_DEFAULT = 8


def activation(x: Tensor, f: Activation) -> Tensor:
    """Elementwise activation with the matching backward rule."""
    return f.apply(x)


# --------------------------------------------------------------------------
# Genotype
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Genotype:
    """Discrete cell description: per non-input vertex, (predecessor, activation).

    Vertex 0 is the input vertex (activation fixed to Tanh); entry ``i-1``
    describes vertex ``i`` and must point at a predecessor ``j < i``, which
    makes the graph acyclic with exactly one ingoing edge per vertex.
    """

    entries: tuple[tuple[int, Activation], ...]

    def __post_init__(self):
        for pos, (pred, act) in enumerate(self.entries):
            vertex = pos + 1
            if not 0 <= pred < vertex:
                raise ValueError(f"vertex {vertex} has invalid predecessor {pred}")
            if not isinstance(act, Activation):
                raise TypeError(f"vertex {vertex} activation must be an Activation")

    @property
    def num_vertices(self) -> int:
        return len(self.entries)

    # -- text format --------------------------------------------------------

    def to_text(self) -> str:
        lines = [f"vertices={self.num_vertices}"]
        for pos, (pred, act) in enumerate(self.entries):
            lines.append(f"v{pos + 1} pred={pred} act={act.value}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Genotype":
        lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
        if not lines or not lines[0].startswith("vertices="):
            raise ValueError("genotype text must start with 'vertices=<n>'")
        n = int(lines[0].split("=", 1)[1])
        if len(lines) - 1 != n:
            raise ValueError(f"expected {n} vertex lines, found {len(lines) - 1}")
        entries = []
        for i, line in enumerate(lines[1:], start=1):
            fields = line.split()
            if len(fields) != 3 or fields[0] != f"v{i}":
                raise ValueError(f"malformed vertex line: {line!r}")
            pred = int(fields[1].removeprefix("pred="))
            act = Activation.from_name(fields[2].removeprefix("act="))
            entries.append((pred, act))
        return cls(tuple(entries))

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path) -> "Genotype":
        return cls.from_text(Path(path).read_text())

    # -- DOT export ----------------------------------------------------------

    def to_dot(self, name: str = "cell") -> str:
        lines = [f"digraph {name} {{", "  rankdir=LR;",
                 '  v0 [label="x_t,h_{t-1}"];']
        for pos in range(self.num_vertices):
            lines.append(f'  v{pos + 1} [label="v{pos + 1}"];')
        for pos, (pred, act) in enumerate(self.entries):
            lines.append(f'  v{pred} -> v{pos + 1} [label="{act.value}"];')
        lines.append("}")
        return "\n".join(lines) + "\n"


def preset_genotypes() -> dict[str, Genotype]:
    """The three shipped 8-vertex cell designs.

    ``dws`` is a pure chain (no Identity at all); ``sigmoid_weighting`` fans
    out of vertex 4 into mostly Identity vertices; ``vanilla`` is a deep
    chain ending in a two-way fan-out, with no Tanh anywhere.
    """
    S, T, R, I = (Activation.SIGMOID, Activation.TANH,
                  Activation.RELU, Activation.IDENTITY)
    del T  # none of the shipped designs selected Tanh
    vanilla = Genotype((
        (0, S), (1, S), (2, R), (3, S), (4, R), (5, I), (6, I), (6, R),
    ))
    sigmoid_weighting = Genotype((
        (0, R), (1, S), (2, I), (3, I), (4, I), (4, I), (4, I), (4, S),
    ))
    dws = Genotype((
        (0, R), (1, S), (2, R), (3, R), (4, R), (5, R), (6, R), (7, S),
    ))
    return {"vanilla": vanilla, "sigmoid_weighting": sigmoid_weighting, "dws": dws}


# --------------------------------------------------------------------------
# Weights
# --------------------------------------------------------------------------


# Init calibration for the convex-blend vertices.  Plain +-1/sqrt(fan)
# weights with zero biases make a stacked network a constant function at
# init (the sigma(0)=0.5 gate halves every vertex and the contractive
# activations shrink the rest, ~30x per cell, ~1e-8 end to end), so
# nothing can train at small step budgets.  The calibrated scheme keeps
# the same uniform family but opens the gates (bias +2) and scales each
# candidate half so one vertex preserves cross-sample signal roughly 1:1
# (relu crosses unit gain near 4x, identity near 2x; sigmoid saturates
# near 0.36 whatever the scale, tanh near 0.75 — both get the max-useful
# scale).  Values are measured, not derived; see the repo notes.
GATE_BIAS_INIT = 2.0
CANDIDATE_GAIN = {
    Activation.SIGMOID: 5.6,
    Activation.TANH: 5.6,
    Activation.RELU: 4.0,
    Activation.IDENTITY: 2.0,
}
MIXED_CANDIDATE_GAIN = 4.0  # mixed cells share one map across all four acts

INIT_SCHEMES = ("calibrated", "plain")


@dataclass
class CellWeights:
    """Per-vertex affine maps.

    Vertex 0 maps concat(x, h) of width input_dim+hidden_dim; every later
    vertex maps a hidden vector.  All maps produce 2*hidden_dim columns:
    the first half feeds the update gate, the second half the candidate.
    """

    input_dim: int
    hidden_dim: int
    ws: list[Tensor]
    bs: list[Tensor]

    @classmethod
    def init(cls, rng: np.random.Generator, input_dim: int, hidden_dim: int,
             num_vertices: int = NUM_VERTICES_DEFAULT, dtype=ag.DEFAULT_DTYPE,
             genotype: "Genotype | None" = None,
             scheme: str = "calibrated") -> "CellWeights":
        if scheme not in INIT_SCHEMES:
            raise ValueError(f"init scheme must be one of {INIT_SCHEMES}")
        n = hidden_dim
        ws, bs = [], []
        for i in range(num_vertices + 1):
            rows = input_dim + hidden_dim if i == 0 else hidden_dim
            w = ag.init_uniform(rng, (rows, 2 * hidden_dim), fan_in=rows, dtype=dtype)
            b = ag.zeros((2 * hidden_dim,), dtype=dtype, requires_grad=True)
            if scheme == "calibrated":
                if i == 0:
                    act = Activation.TANH
                elif genotype is not None:
                    act = genotype.entries[i - 1][1]
                else:
                    act = None
                gain = CANDIDATE_GAIN[act] if act is not None else MIXED_CANDIDATE_GAIN
                w.data[:, n:] *= gain
                b.data[:n] = GATE_BIAS_INIT
            ws.append(w)
            bs.append(b)
        return cls(input_dim, hidden_dim, ws, bs)

    def named_params(self) -> list[tuple[str, Tensor]]:
        out = []
        for i, (w, b) in enumerate(zip(self.ws, self.bs)):
            out.append((f"w{i}", w))
            out.append((f"b{i}", b))
        return out


_ACT_KIND = {Activation.SIGMOID: "sigmoid", Activation.TANH: "tanh",
             Activation.RELU: "relu", Activation.IDENTITY: "identity"}


def vertex_step(x_in: Tensor, h_prev: Tensor, w: Tensor, b: Tensor,
                f: Activation) -> tuple[Tensor, Tensor, Tensor]:
    """One cell vertex: gate, candidate, and the convex state blend.

    Returns ``(c, h_tilde, h_new)`` with ``c`` in (0,1) elementwise and
    ``h_new = (1 - c) * h_prev + c * h_tilde``.  Gradients flow through
    ``h_new``; the gate and candidate are returned for inspection.
    """
    z = ag.affine(x_in, w, b)
    h_new, c, h_tilde = ag.gate_blend(z, h_prev, _ACT_KIND[f])
    return Tensor(c), Tensor(h_tilde), h_new


# --------------------------------------------------------------------------
# Discrete genotype cell
# --------------------------------------------------------------------------


class GenotypeCell:
    """Forward pass of a discrete searched cell.

    ``input_mode`` selects what internal vertices read from their
    predecessor: the predecessor's output at the current step ("current",
    the default — the within-step chains the shipped designs describe) or
    at the previous step ("previous").  Either way each vertex blends with
    its *own* previous state, and the cell output is the mean over all
    non-input vertices.
    """

    def __init__(self, genotype: Genotype, input_dim: int, hidden_dim: int,
                 rng: np.random.Generator, dtype=ag.DEFAULT_DTYPE,
                 input_mode: str = "current", weights: CellWeights | None = None,
                 init_scheme: str = "calibrated"):
        if input_mode not in ("current", "previous"):
            raise ValueError(f"input_mode must be 'current' or 'previous', got {input_mode!r}")
        self.genotype = genotype
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        self.input_mode = input_mode
        self.weights = weights or CellWeights.init(
            rng, input_dim, hidden_dim, genotype.num_vertices, dtype,
            genotype=genotype, scheme=init_scheme)
        self.dtype = self.weights.ws[0].dtype

    @property
    def output_dim(self) -> int:
        return self.hidden_dim

    def initial_state(self, batch: int) -> list[Tensor]:
        return [ag.zeros((batch, self.hidden_dim), dtype=self.dtype)
                for _ in range(self.genotype.num_vertices + 1)]

    def named_params(self) -> list[tuple[str, Tensor]]:
        return self.weights.named_params()

    def step(self, x_t: Tensor, state: list[Tensor]) -> tuple[Tensor, list[Tensor]]:
        ws, bs = self.weights.ws, self.weights.bs
        x_in = ag.concat([x_t, state[0]], axis=1)
        _, _, h0 = vertex_step(x_in, state[0], ws[0], bs[0], Activation.TANH)
        hs = [h0]
        for pos, (pred, act) in enumerate(self.genotype.entries):
            i = pos + 1
            src = hs[pred] if self.input_mode == "current" else state[pred]
            _, _, h_i = vertex_step(src, state[i], ws[i], bs[i], act)
            hs.append(h_i)
        h_t = _mean_of(hs[1:])
        return h_t, hs


def _mean_of(tensors: list[Tensor]) -> Tensor:
    acc = tensors[0]
    for t in tensors[1:]:
        acc = ag.add(acc, t)
    return ag.mul(acc, 1.0 / len(tensors))


# --------------------------------------------------------------------------
# Architecture parameters and the relaxed cell
# --------------------------------------------------------------------------


class AlphaTable:
    """Learnable logits over (predecessor, activation) choices.

    Vertex ``i`` owns a dense (i, 4) table: one row per candidate
    predecessor, one column per candidate activation, in ``ACTIVATIONS``
    order.  Mixing normalizes each vertex's table jointly, so a single
    saturated entry reproduces a discrete cell exactly; within one
    predecessor row the relative activation weights are an ordinary
    softmax over that row.
    """

    def __init__(self, tables: list[Tensor]):
        for idx, t in enumerate(tables):
            expect = (idx + 1, len(ACTIVATIONS))
            if t.shape != expect:
                raise ValueError(f"alpha table {idx + 1} must have shape {expect}, got {t.shape}")
            if not np.all(np.isfinite(t.data)):
                raise ValueError("alpha tables must be finite")
        self.tables = tables

    @classmethod
    def init(cls, num_vertices: int, rng: np.random.Generator,
             scale: float = 1e-3, dtype=ag.DEFAULT_DTYPE) -> "AlphaTable":
        tables = [Tensor(rng.uniform(-scale, scale, size=(i, len(ACTIVATIONS))).astype(dtype),
                         requires_grad=True)
                  for i in range(1, num_vertices + 1)]
        return cls(tables)

    @classmethod
    def from_arrays(cls, arrays: list[np.ndarray], requires_grad: bool = True) -> "AlphaTable":
        return cls([Tensor(np.asarray(a), requires_grad=requires_grad) for a in arrays])

    @property
    def num_vertices(self) -> int:
        return len(self.tables)

    def values(self) -> list[np.ndarray]:
        return [t.data.copy() for t in self.tables]

    def named_params(self) -> list[tuple[str, Tensor]]:
        return [(f"alpha{i + 1}", t) for i, t in enumerate(self.tables)]

    def entropy(self) -> float:
        """Mean over vertices of the joint choice-distribution entropy."""
        total = 0.0
        for t in self.tables:
            a = t.data.astype(np.float64).reshape(-1)
            a = a - a.max()
            p = np.exp(a)
            p /= p.sum()
            nz = p > 0
            total += float(-(p[nz] * np.log(p[nz])).sum())
        return total / len(self.tables)


def derive_genotype(alpha: AlphaTable | list[np.ndarray]) -> Genotype:
    """Snap architecture parameters to a discrete cell.

    Per vertex: the winning predecessor is the row whose best activation
    logit is highest; the winning activation is that row's argmax.  Ties
    break to the lowest index, so derivation is deterministic.
    """
    arrays = alpha.values() if isinstance(alpha, AlphaTable) else [np.asarray(a) for a in alpha]
    entries = []
    for a in arrays:
        best_per_pred = a.max(axis=1)
        pred = int(np.argmax(best_per_pred))
        act = ACTIVATIONS[int(np.argmax(a[pred]))]
        entries.append((pred, act))
    return Genotype(tuple(entries))


class MixedCell:
    """Relaxed search cell: every vertex mixes all (predecessor, activation)
    branches with softmax weights from its :class:`AlphaTable` entry.

    Per branch the full vertex output is formed (gate blend included), so
    the mixture is a convex combination of complete candidate outputs and
    gradients reach every architecture parameter on every step.
    """

    def __init__(self, input_dim: int, hidden_dim: int, rng: np.random.Generator,
                 num_vertices: int = NUM_VERTICES_DEFAULT, dtype=ag.DEFAULT_DTYPE,
                 input_mode: str = "current", alpha: AlphaTable | None = None,
                 weights: CellWeights | None = None, init_scheme: str = "calibrated"):
        if input_mode not in ("current", "previous"):
            raise ValueError(f"input_mode must be 'current' or 'previous', got {input_mode!r}")
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        self.num_vertices = num_vertices
        self.input_mode = input_mode
        self.weights = weights or CellWeights.init(rng, input_dim, hidden_dim,
                                                   num_vertices, dtype, scheme=init_scheme)
        self.alpha = alpha or AlphaTable.init(num_vertices, rng, dtype=dtype)
        if self.alpha.num_vertices != num_vertices:
            raise ValueError("alpha table does not cover every vertex")
        self.dtype = self.weights.ws[0].dtype

    @property
    def output_dim(self) -> int:
        return self.hidden_dim

    def initial_state(self, batch: int) -> list[Tensor]:
        return [ag.zeros((batch, self.hidden_dim), dtype=self.dtype)
                for _ in range(self.num_vertices + 1)]

    def named_params(self) -> list[tuple[str, Tensor]]:
        return self.weights.named_params()

    def alpha_params(self) -> list[tuple[str, Tensor]]:
        return self.alpha.named_params()

    def step(self, x_t: Tensor, state: list[Tensor]) -> tuple[Tensor, list[Tensor]]:
        ws, bs = self.weights.ws, self.weights.bs
        n = self.hidden_dim
        n_act = len(ACTIVATIONS)
        x_in = ag.concat([x_t, state[0]], axis=1)
        _, _, h0 = vertex_step(x_in, state[0], ws[0], bs[0], Activation.TANH)
        hs = [h0]
        for i in range(1, self.num_vertices + 1):
            table = self.alpha.tables[i - 1]
            w_flat = ag.softmax(ag.reshape(table, (1, i * n_act)), axis=1)
            keep_acc = None  # sum_j mass_j * (1 - c_j)
            cand_acc = None  # sum_j c_j * (activation mixture for edge j)
            for j in range(i):
                src = hs[j] if self.input_mode == "current" else state[j]
                z = ag.affine(src, ws[i], bs[i])
                c = ag.sigmoid(ag.narrow(z, 1, 0, n))
                z_h = ag.narrow(z, 1, n, n)
                mix = None
                for k, act in enumerate(ACTIVATIONS):
                    w_jk = ag.narrow(w_flat, 1, j * n_act + k, 1)
                    term = ag.mul(w_jk, act.apply(z_h))
                    mix = term if mix is None else ag.add(mix, term)
                mass = ag.reduce_sum(ag.narrow(w_flat, 1, j * n_act, n_act), axis=1, keepdims=True)
                keep = ag.mul(mass, ag.sub(1.0, c))
                cand = ag.mul(c, mix)
                keep_acc = keep if keep_acc is None else ag.add(keep_acc, keep)
                cand_acc = cand if cand_acc is None else ag.add(cand_acc, cand)
            h_i = ag.add(ag.mul(keep_acc, state[i]), cand_acc)
            hs.append(h_i)
        h_t = _mean_of(hs[1:])
        return h_t, hs


# --------------------------------------------------------------------------
# Baseline cells
# --------------------------------------------------------------------------


class GRUCell:
    """Standard GRU: update/reset gates, candidate from the reset-scaled state."""

    def __init__(self, input_dim: int, hidden_dim: int, rng: np.random.Generator,
                 dtype=ag.DEFAULT_DTYPE):
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        rows = input_dim + hidden_dim
        self.w_gates = ag.init_uniform(rng, (rows, 2 * hidden_dim), fan_in=rows, dtype=dtype)
        self.b_gates = ag.zeros((2 * hidden_dim,), dtype=dtype, requires_grad=True)
        self.w_cand = ag.init_uniform(rng, (rows, hidden_dim), fan_in=rows, dtype=dtype)
        self.b_cand = ag.zeros((hidden_dim,), dtype=dtype, requires_grad=True)
        self.dtype = self.w_gates.dtype

    @property
    def output_dim(self) -> int:
        return self.hidden_dim

    def initial_state(self, batch: int) -> list[Tensor]:
        return [ag.zeros((batch, self.hidden_dim), dtype=self.dtype)]

    def named_params(self) -> list[tuple[str, Tensor]]:
        return [("wg", self.w_gates), ("bg", self.b_gates),
                ("wc", self.w_cand), ("bc", self.b_cand)]

    def step(self, x_t: Tensor, state: list[Tensor]) -> tuple[Tensor, list[Tensor]]:
        (h,) = state
        n = self.hidden_dim
        xh = ag.concat([x_t, h], axis=1)
        gates = ag.sigmoid(ag.affine(xh, self.w_gates, self.b_gates))
        z = ag.narrow(gates, 1, 0, n)
        r = ag.narrow(gates, 1, n, n)
        xrh = ag.concat([x_t, ag.mul(r, h)], axis=1)
        h_tilde = ag.tanh(ag.affine(xrh, self.w_cand, self.b_cand))
        h_new = ag.add(ag.mul(ag.sub(1.0, z), h), ag.mul(z, h_tilde))
        return h_new, [h_new]


class LSTMCell:
    """Standard LSTM with input/forget/output gates and a cell state."""

    def __init__(self, input_dim: int, hidden_dim: int, rng: np.random.Generator,
                 dtype=ag.DEFAULT_DTYPE):
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        rows = input_dim + hidden_dim
        self.w = ag.init_uniform(rng, (rows, 4 * hidden_dim), fan_in=rows, dtype=dtype)
        self.b = ag.zeros((4 * hidden_dim,), dtype=dtype, requires_grad=True)
        self.dtype = self.w.dtype

    @property
    def output_dim(self) -> int:
        return self.hidden_dim

    def initial_state(self, batch: int) -> list[Tensor]:
        return [ag.zeros((batch, self.hidden_dim), dtype=self.dtype) for _ in range(2)]

    def named_params(self) -> list[tuple[str, Tensor]]:
        return [("w", self.w), ("b", self.b)]

    def step(self, x_t: Tensor, state: list[Tensor]) -> tuple[Tensor, list[Tensor]]:
        h, c = state
        n = self.hidden_dim
        xh = ag.concat([x_t, h], axis=1)
        z = ag.affine(xh, self.w, self.b)
        i_g = ag.sigmoid(ag.narrow(z, 1, 0, n))
        f_g = ag.sigmoid(ag.narrow(z, 1, n, n))
        g = ag.tanh(ag.narrow(z, 1, 2 * n, n))
        o_g = ag.sigmoid(ag.narrow(z, 1, 3 * n, n))
        c_new = ag.add(ag.mul(f_g, c), ag.mul(i_g, g))
        h_new = ag.mul(o_g, ag.tanh(c_new))
        return h_new, [h_new, c_new]


def make_cell(kind: str, input_dim: int, hidden_dim: int, rng: np.random.Generator,
              dtype=ag.DEFAULT_DTYPE, genotype: Genotype | None = None,
              input_mode: str = "current", num_vertices: int = NUM_VERTICES_DEFAULT,
              init_scheme: str = "calibrated"):
    """Factory used by the ReNet layers; ``kind`` in {genotype, mixed, gru, lstm}."""
    if kind == "genotype":
        if genotype is None:
            raise ValueError("genotype cell requires a genotype")
        return GenotypeCell(genotype, input_dim, hidden_dim, rng, dtype, input_mode,
                            init_scheme=init_scheme)
    if kind == "mixed":
        return MixedCell(input_dim, hidden_dim, rng, num_vertices, dtype, input_mode,
                         init_scheme=init_scheme)
    if kind == "gru":
        return GRUCell(input_dim, hidden_dim, rng, dtype)
    if kind == "lstm":
        return LSTMCell(input_dim, hidden_dim, rng, dtype)
    raise ValueError(f"unknown cell kind {kind!r}")
