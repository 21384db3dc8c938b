"""The fixed classification network: 3 conv layers, 3 ReNet layers, FC head.

The stem preserves the input resolution (3x3 kernels, stride 1, pad 1) so a
32x32 image with window-2 layers walks the 16 -> 8 -> 4 grid schedule; the
head flattens the last feature map, maps it through one hidden FC layer and
then to class logits.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .cells import NUM_VERTICES_DEFAULT, AlphaTable, Genotype, preset_genotypes
from .checkpoint import CheckpointError, load_tensors, save_tensors
from .renet import ReNetLayer


@dataclass
class ConvSpec:
    out_channels: int
    kernel: int = 3
    stride: int = 1
    padding: int = 1


@dataclass
class NetworkConfig:
    """Everything needed to build the classifier.

    ``cell_source`` is one of:
      - "preset:<name>"  shipped genotype (vanilla, sigmoid_weighting, dws)
      - "file:<path>"    genotype text file
      - "inline"         genotype passed via the ``genotype`` field
      - "gru" / "lstm"   baseline cells
      - "mixed"          relaxed search cell with shared architecture params
    """

    stem: list[ConvSpec] = field(default_factory=lambda: [ConvSpec(64), ConvSpec(64), ConvSpec(64)])
    hidden_dim: int = 256
    window: int = 2
    variant: str = "vanilla"
    cell_source: str = "preset:dws"
    head_dim: int = 1024
    num_classes: int = 10
    input_shape: tuple[int, int, int] = (3, 32, 32)
    input_mode: str = "current"
    num_vertices: int = NUM_VERTICES_DEFAULT
    genotype: Genotype | None = None
    init_scheme: str = "calibrated"  # "plain" = bare +-1/sqrt(fan) everywhere

    def __post_init__(self):
        if len(self.stem) != 3:
            raise ValueError("config requires exactly 3 conv specs")
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        if self.init_scheme not in ("calibrated", "plain"):
            raise ValueError(f"bad init_scheme {self.init_scheme!r}")

    def resolve_genotype(self) -> Genotype | None:
        src = self.cell_source
        if src.startswith("preset:"):
            name = src.split(":", 1)[1]
            presets = preset_genotypes()
            if name not in presets:
                raise ValueError(f"unknown preset {name!r}; have {sorted(presets)}")
            return presets[name]
        if src.startswith("file:"):
            return Genotype.load(src.split(":", 1)[1])
        if src == "inline":
            if self.genotype is None:
                raise ValueError("cell_source 'inline' needs the genotype field set")
            return self.genotype
        if src in ("gru", "lstm", "mixed"):
            return None
        raise ValueError(f"bad cell_source {src!r}")

    def cell_kind(self) -> str:
        if self.cell_source in ("gru", "lstm", "mixed"):
            return self.cell_source
        return "genotype"


class Network:
    def __init__(self, config: NetworkConfig, rng: np.random.Generator,
                 dtype=ag.DEFAULT_DTYPE):
        self.config = config
        self.dtype = dtype
        c, h, w = config.input_shape
        genotype = config.resolve_genotype()
        kind = config.cell_kind()

        self.alpha: AlphaTable | None = None
        if kind == "mixed":
            # One architecture-parameter table shared by every mixed cell:
            # the search finds a single cell design for the whole network.
            self.alpha = AlphaTable.init(config.num_vertices, rng, dtype=dtype)

        # relu-facing layers get the He-style sqrt(6) gain under the
        # calibrated scheme; the class projection stays small so untrained
        # predictions remain near-uniform.
        relu_gain = 2.449 if config.init_scheme == "calibrated" else 1.0
        out_gain = 0.3 if config.init_scheme == "calibrated" else 1.0

        self.conv_ws: list[Tensor] = []
        self.conv_bs: list[Tensor] = []
        self.conv_specs = list(config.stem)
        ch = c
        for spec in config.stem:
            fan_in = ch * spec.kernel * spec.kernel
            self.conv_ws.append(ag.init_uniform(
                rng, (spec.out_channels, ch, spec.kernel, spec.kernel), fan_in, dtype,
                gain=relu_gain))
            self.conv_bs.append(ag.zeros((spec.out_channels,), dtype=dtype, requires_grad=True))
            h = (h + 2 * spec.padding - spec.kernel) // spec.stride + 1
            w = (w + 2 * spec.padding - spec.kernel) // spec.stride + 1
            ch = spec.out_channels

        self.renet_layers: list[ReNetLayer] = []
        for _ in range(3):
            layer = ReNetLayer(ch, h, w, config.window, config.hidden_dim,
                               config.variant, kind, rng, dtype,
                               genotype=genotype, input_mode=config.input_mode,
                               num_vertices=config.num_vertices,
                               shared_alpha=self.alpha,
                               init_scheme=config.init_scheme)
            self.renet_layers.append(layer)
            h, w = layer.grid_height, layer.grid_width
            ch = layer.out_channels

        self.flat_dim = ch * h * w
        self.fc1_w = ag.init_uniform(rng, (self.flat_dim, config.head_dim), self.flat_dim,
                                     dtype, gain=relu_gain)
        self.fc1_b = ag.zeros((config.head_dim,), dtype=dtype, requires_grad=True)
        self.fc2_w = ag.init_uniform(rng, (config.head_dim, config.num_classes),
                                     config.head_dim, dtype, gain=out_gain)
        self.fc2_b = ag.zeros((config.num_classes,), dtype=dtype, requires_grad=True)

    # -- forward -------------------------------------------------------------

    def forward(self, x: Tensor) -> Tensor:
        """x[N,3,H,W] -> logits[N, num_classes]."""
        for w, b, spec in zip(self.conv_ws, self.conv_bs, self.conv_specs):
            x = ag.relu(ag.conv2d(x, w, b, stride=spec.stride, padding=spec.padding))
        for layer in self.renet_layers:
            x = layer.forward(x)
        n = x.shape[0]
        flat = ag.reshape(x, (n, self.flat_dim))
        hidden = ag.relu(ag.affine(flat, self.fc1_w, self.fc1_b))
        return ag.affine(hidden, self.fc2_w, self.fc2_b)

    # -- parameters ----------------------------------------------------------

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        """Model weights (architecture parameters excluded), shared tensors once."""
        out = []
        for i, (w, b) in enumerate(zip(self.conv_ws, self.conv_bs)):
            out.append((f"stem.conv{i}.w", w))
            out.append((f"stem.conv{i}.b", b))
        for k, layer in enumerate(self.renet_layers):
            for name, t in layer.named_params():
                out.append((f"renet{k}.{name}", t))
        out.extend([("head.fc1.w", self.fc1_w), ("head.fc1.b", self.fc1_b),
                    ("head.fc2.w", self.fc2_w), ("head.fc2.b", self.fc2_b)])
        return out

    def parameters(self) -> list[Tensor]:
        return [t for _, t in self.named_parameters()]

    def alpha_parameters(self) -> list[Tensor]:
        return [t for _, t in self.alpha.named_params()] if self.alpha else []

    def zero_grads(self) -> None:
        ag.zero_grads(self.parameters() + self.alpha_parameters())

    # -- checkpointing ---------------------------------------------------------

    def save(self, path) -> None:
        save_tensors(path, {name: t.data for name, t in self.named_parameters()})

    def load(self, path) -> None:
        loaded = load_tensors(path)
        own = dict(self.named_parameters())
        missing = sorted(set(own) - set(loaded))
        if missing:
            raise CheckpointError(f"checkpoint missing tensors: {missing[:5]}")
        for name, t in own.items():
            arr = loaded[name]
            if arr.shape != t.shape:
                raise CheckpointError(f"{name}: checkpoint shape {arr.shape} != model {t.shape}")
            t.data = arr.astype(t.dtype)


def build_network(config: NetworkConfig, seed: int = 0,
                  dtype=ag.DEFAULT_DTYPE) -> Network:
    return Network(config, np.random.default_rng(seed), dtype=dtype)


# --------------------------------------------------------------------------
# Parameter accounting
# --------------------------------------------------------------------------


@dataclass
class ParameterReport:
    sections: dict[str, int]
    total: int

    @property
    def total_millions(self) -> float:
        return self.total / 1e6

    def __str__(self) -> str:
        lines = [f"  {name:<18} {count:>12,}" for name, count in self.sections.items()]
        lines.append(f"  {'total':<18} {self.total:>12,}  ({self.total_millions:.2f} M)")
        return "\n".join(lines)


def count_parameters(model: Network) -> ParameterReport:
    """Exact counts per section; tensors shared across directions count once."""
    sections = {"stem": 0, "renet_rnn": 0, "sigmoid_weights": 0, "head": 0, "alpha": 0}
    seen: set[int] = set()
    for name, t in model.named_parameters():
        if id(t) in seen:
            continue
        seen.add(id(t))
        if name.startswith("stem."):
            sections["stem"] += t.size
        elif name.endswith(".sw"):
            sections["sigmoid_weights"] += t.size
        elif name.startswith("renet"):
            sections["renet_rnn"] += t.size
        else:
            sections["head"] += t.size
    for t in model.alpha_parameters():
        sections["alpha"] += t.size
    total = sum(sections.values())
    return ParameterReport(sections, total)


# --------------------------------------------------------------------------
# Inference
# --------------------------------------------------------------------------


def classify(model: Network, batch: Tensor) -> np.ndarray:
    """Logits for a batch, computed off-tape."""
    with ag.no_grad():
        return model.forward(batch).data


def evaluate(model: Network, images: np.ndarray, labels: np.ndarray,
             batch_size: int = 128) -> float:
    """Accuracy over a split: one deterministic pass, no augmentation."""
    if len(images) == 0:
        raise ValueError("cannot evaluate an empty split")
    correct = 0
    with ag.no_grad():
        for start in range(0, len(images), batch_size):
            xb = Tensor(images[start:start + batch_size].astype(model.dtype))
            logits = model.forward(xb).data
            pred = np.argmax(logits, axis=1)
            correct += int((pred == labels[start:start + batch_size]).sum())
    return correct / len(images)
