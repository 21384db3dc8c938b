"""ReNet layers step by step: patches, sweeps, variants, parameter counts.

Run:  python3 demos/03_renet_features.py
"""

import numpy as np

from dartsrenet import autograd as ag
from dartsrenet.autograd import Tensor
from dartsrenet.cells import preset_genotypes
from dartsrenet.network import ConvSpec, NetworkConfig, build_network, count_parameters
from dartsrenet.renet import ReNetLayer, extract_patches

rng = np.random.default_rng(0)

# --- an image becomes a grid of flattened patches -------------------------------

image = Tensor(rng.standard_normal((1, 3, 32, 32)).astype(np.float32))
grid = extract_patches(image, window=2)
print(f"32x32x3 image, window 2 -> {grid.grid_height}x{grid.grid_width} grid "
      f"of {grid.patch_dim}-dim patches")

# --- one layer: horizontal then vertical bidirectional sweeps --------------------

layer = ReNetLayer(in_channels=3, in_height=32, in_width=32, window=2, hidden_dim=16,
                   variant="vanilla", cell_kind="genotype", rng=rng,
                   genotype=preset_genotypes()["dws"])
with ag.no_grad():
    fmap = layer.forward(image)
print(f"layer output: {fmap.shape}  (channels = 2 x hidden: forward/backward halves)")

# --- stacking three layers walks the grid schedule -------------------------------

x = image
ch, hw = 3, 32
for k in range(3):
    layer = ReNetLayer(ch, hw, hw, 2, 16, "vanilla", "genotype", rng,
                       genotype=preset_genotypes()["dws"])
    with ag.no_grad():
        x = layer.forward(x)
    ch, hw = layer.out_channels, layer.grid_height
    print(f"after layer {k + 1}: {x.shape}")

# --- variants change parameter counts, not shapes --------------------------------

print("\nparameter accounting at the default width (hidden 256):")
for label, cell, variant in [("dws variant", "preset:dws", "dws"),
                             ("gru baseline", "gru", "vanilla"),
                             ("lstm baseline", "lstm", "vanilla"),
                             ("vanilla", "preset:dws", "vanilla"),
                             ("sigmoid weighting", "preset:dws", "sigmoid_weighting")]:
    config = NetworkConfig(cell_source=cell, variant=variant)
    report = count_parameters(build_network(config, seed=0))
    print(f"  {label:<18} total {report.total_millions:6.2f} M "
          f"(rnn {report.sections['renet_rnn'] / 1e6:5.2f} M, "
          f"gates {report.sections['sigmoid_weights']})")
print("\nordering: dws < gru < lstm < vanilla; dws rnn weights are half of vanilla's")
