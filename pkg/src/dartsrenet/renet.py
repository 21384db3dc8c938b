"""ReNet layers: images as sequences of patches.

A layer tiles its input into non-overlapping flattened patches, then runs
two bidirectional RNN sweeps — first along rows (horizontal), then along
columns (vertical) — concatenating the forward and backward hidden states
at every grid position.  Stacking such layers replaces convolution+pooling.

Variants:

* ``vanilla`` — four independent cells (horizontal/vertical x fwd/bwd).
* ``sigmoid_weighting`` — each input patch is scaled by a learnable gate
  sigma(s) in (0,1), one scalar per grid position.
* ``directional_weight_sharing`` (``dws``) — forward and backward
  directions of each sweep share one cell's weights; the directions still
  differ because their hidden states evolve from opposite ends.
"""

from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .autograd import ShapeError, Tensor
from .cells import Genotype, make_cell

VARIANTS = ("vanilla", "sigmoid_weighting", "dws")

_SWEEP_HOOK = None


@contextmanager
def observe_sweep_starts(fn):
    """Install a hook called as fn(direction, state_arrays) when a sweep
    direction starts; used to assert the zero-state contract."""
    global _SWEEP_HOOK
    prev = _SWEEP_HOOK
    _SWEEP_HOOK = fn
    try:
        yield
    finally:
        _SWEEP_HOOK = prev


# --------------------------------------------------------------------------
# Patch extraction
# --------------------------------------------------------------------------


@dataclass
class PatchGrid:
    """H' x W' grid of flattened patch vectors, stored (N, H', W', patch_dim)."""

    values: Tensor
    grid_height: int
    grid_width: int
    patch_dim: int


def _window_pair(window) -> tuple[int, int]:
    if isinstance(window, int):
        return window, window
    wh, ww = window
    return int(wh), int(ww)


def extract_patches(x: Tensor, window) -> PatchGrid:
    """Tile x[N,C,H,W] into non-overlapping (wh x ww) patches.

    Inputs whose extent is not divisible by the window are zero-padded on
    the bottom/right first.  Patch vectors are flattened channel-major,
    then patch row, then patch column.
    """
    wh, ww = _window_pair(window)
    if wh < 1 or ww < 1:
        raise ShapeError("window must be >= 1 in both axes")
    if x.ndim != 4:
        raise ShapeError(f"extract_patches expects x[N,C,H,W], got {x.shape}")
    n, c, h, w = x.shape
    pad_h = (-h) % wh
    pad_w = (-w) % ww
    if pad_h or pad_w:
        x = ag.pad_hw(x, pad_h, pad_w)
        h, w = h + pad_h, w + pad_w
    gh, gw = h // wh, w // ww
    t = ag.reshape(x, (n, c, gh, wh, gw, ww))
    t = ag.transpose(t, (0, 2, 4, 1, 3, 5))
    values = ag.reshape(t, (n, gh, gw, c * wh * ww))
    return PatchGrid(values, gh, gw, c * wh * ww)


def reconstruct_patches(grid: PatchGrid, channels: int, window) -> Tensor:
    """Inverse of :func:`extract_patches` for divisible shapes."""
    wh, ww = _window_pair(window)
    n = grid.values.shape[0]
    t = ag.reshape(grid.values, (n, grid.grid_height, grid.grid_width, channels, wh, ww))
    t = ag.transpose(t, (0, 3, 1, 4, 2, 5))
    return ag.reshape(t, (n, channels, grid.grid_height * wh, grid.grid_width * ww))


def apply_sigmoid_weighting(grid: PatchGrid, sw: Tensor) -> PatchGrid:
    """Scale patch (i,j) by sigma(sw[i,j]); the gate stays in (0,1)."""
    if sw.shape != (grid.grid_height, grid.grid_width):
        raise ShapeError(f"sigmoid weights {sw.shape} do not match grid "
                         f"{(grid.grid_height, grid.grid_width)}")
    gate = ag.reshape(ag.sigmoid(sw), (1, grid.grid_height, grid.grid_width, 1))
    return PatchGrid(ag.mul(grid.values, gate), grid.grid_height,
                     grid.grid_width, grid.patch_dim)


# --------------------------------------------------------------------------
# Sweeps
# --------------------------------------------------------------------------


@dataclass
class FeatureMap:
    """Grid of concatenated [forward; backward] states, (N, H', W', 2*hidden)."""

    values: Tensor
    hidden_dim: int


def _run_direction(xs: list[Tensor], cell, reverse: bool, label: str) -> list[Tensor]:
    batch = xs[0].shape[0]
    state = cell.initial_state(batch)
    if _SWEEP_HOOK is not None:
        _SWEEP_HOOK(label, [s.data for s in state])
    order = range(len(xs) - 1, -1, -1) if reverse else range(len(xs))
    outs: list[Tensor | None] = [None] * len(xs)
    for t in order:
        h, state = cell.step(xs[t], state)
        outs[t] = h
    return outs  # type: ignore[return-value]


def horizontal_sweep(grid: PatchGrid, cell_f, cell_b) -> FeatureMap:
    """Bidirectional recurrence along each grid row, both from zero state.

    Rows are independent sequences, so they ride the batch axis; position
    (i,j) yields concat(h_forward[i,j], h_backward[i,j]).
    """
    if cell_f.input_dim != grid.patch_dim or cell_b.input_dim != grid.patch_dim:
        raise ShapeError(f"cell input dim {cell_f.input_dim} != patch dim {grid.patch_dim}")
    n = grid.values.shape[0]
    gh, gw, p = grid.grid_height, grid.grid_width, grid.patch_dim
    seq = ag.reshape(grid.values, (n * gh, gw, p))
    xs = [ag.reshape(ag.narrow(seq, 1, t, 1), (n * gh, p)) for t in range(gw)]
    f_outs = _run_direction(xs, cell_f, reverse=False, label="forward")
    b_outs = _run_direction(xs, cell_b, reverse=True, label="backward")
    fwd = ag.stack(f_outs, axis=1)
    bwd = ag.stack(b_outs, axis=1)
    both = ag.concat([fwd, bwd], axis=2)
    values = ag.reshape(both, (n, gh, gw, 2 * cell_f.output_dim))
    return FeatureMap(values, cell_f.output_dim)


def vertical_sweep(fmap: FeatureMap, cell_f, cell_b) -> FeatureMap:
    """Same recurrence down each column: transpose, sweep, transpose back."""
    v = fmap.values
    n, gh, gw, c = v.shape
    grid = PatchGrid(ag.transpose(v, (0, 2, 1, 3)), gw, gh, c)
    swept = horizontal_sweep(grid, cell_f, cell_b)
    return FeatureMap(ag.transpose(swept.values, (0, 2, 1, 3)), cell_f.output_dim)


# --------------------------------------------------------------------------
# Layer
# --------------------------------------------------------------------------


def share_directional_weights(layer: "ReNetLayer") -> None:
    """Bind each sweep's backward cell to its forward cell (same tensors).

    Gradients from both directions then accumulate into the shared weights,
    and parameter counts halve relative to the vanilla layer.
    """
    layer.cell_hb = layer.cell_hf
    layer.cell_vb = layer.cell_vf


class ReNetLayer:
    """One patch-then-sweep layer; output channels are 2*hidden_dim."""

    def __init__(self, in_channels: int, in_height: int, in_width: int, window,
                 hidden_dim: int, variant: str, cell_kind: str,
                 rng: np.random.Generator, dtype=ag.DEFAULT_DTYPE,
                 genotype: Genotype | None = None, input_mode: str = "current",
                 num_vertices: int = 8, shared_alpha=None,
                 init_scheme: str = "calibrated"):
        if variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {variant!r}")
        if hidden_dim < 1:
            raise ValueError("hidden_dim must be positive")
        wh, ww = _window_pair(window)
        self.window = (wh, ww)
        self.variant = variant
        self.hidden_dim = hidden_dim
        self.grid_height = -(-in_height // wh)
        self.grid_width = -(-in_width // ww)
        self.patch_dim = in_channels * wh * ww

        def build(input_dim):
            cell = make_cell(cell_kind, input_dim, hidden_dim, rng, dtype,
                             genotype=genotype, input_mode=input_mode,
                             num_vertices=num_vertices, init_scheme=init_scheme)
            if shared_alpha is not None and hasattr(cell, "alpha"):
                cell.alpha = shared_alpha
            return cell

        self.cell_hf = build(self.patch_dim)
        self.cell_hb = build(self.patch_dim)
        self.cell_vf = build(2 * hidden_dim)
        self.cell_vb = build(2 * hidden_dim)
        if variant == "dws":
            share_directional_weights(self)
        self.sw: Tensor | None = None
        if variant == "sigmoid_weighting":
            # Neutral start: sigma(0) = 0.5 for every patch gate.
            self.sw = ag.zeros((self.grid_height, self.grid_width),
                               dtype=dtype, requires_grad=True)

    @property
    def out_channels(self) -> int:
        return 2 * self.hidden_dim

    def forward(self, x: Tensor) -> Tensor:
        """x[N,C,H,W] -> feature map [N, 2*hidden, H', W']."""
        grid = extract_patches(x, self.window)
        if grid.grid_height != self.grid_height or grid.grid_width != self.grid_width:
            raise ShapeError(f"layer built for grid {(self.grid_height, self.grid_width)}, "
                             f"got {(grid.grid_height, grid.grid_width)}")
        if self.sw is not None:
            grid = apply_sigmoid_weighting(grid, self.sw)
        fmap = horizontal_sweep(grid, self.cell_hf, self.cell_hb)
        fmap = vertical_sweep(fmap, self.cell_vf, self.cell_vb)
        return ag.transpose(fmap.values, (0, 3, 1, 2))

    def named_params(self) -> list[tuple[str, Tensor]]:
        out = []
        seen: set[int] = set()
        for label, cell in (("h.f", self.cell_hf), ("h.b", self.cell_hb),
                            ("v.f", self.cell_vf), ("v.b", self.cell_vb)):
            if id(cell) in seen:
                continue  # dws: backward aliases forward
            seen.add(id(cell))
            for pname, t in cell.named_params():
                out.append((f"{label}.{pname}", t))
        if self.sw is not None:
            out.append(("sw", self.sw))
        return out
