"""The cell zoo: discrete genotypes, the relaxed search cell, derivation.

Shows the three shipped cell designs, their text/DOT serializations, and
the relaxation round trip: saturating the architecture parameters makes
the mixed cell agree with the derived discrete cell.

Run:  python3 demos/02_cell_zoo.py
"""

import numpy as np

from dartsrenet import autograd as ag
from dartsrenet.autograd import Tensor
from dartsrenet.cells import (AlphaTable, GenotypeCell, MixedCell,
                              derive_genotype, preset_genotypes)

rng = np.random.default_rng(7)

# --- the shipped designs ------------------------------------------------------

for name, genotype in preset_genotypes().items():
    acts = [act.value for _, act in genotype.entries]
    print(f"{name:>18}: {acts}")
print()
print("dws as a genotype file:")
print(preset_genotypes()["dws"].to_text())
print("dws as DOT (render with `dot -Tpng`):")
print(preset_genotypes()["dws"].to_dot())

# --- run a discrete cell over a short sequence ---------------------------------

cell = GenotypeCell(preset_genotypes()["vanilla"], input_dim=6, hidden_dim=8, rng=rng)
state = cell.initial_state(batch=2)
for t in range(4):
    x_t = Tensor(rng.standard_normal((2, 6)).astype(np.float32))
    h_t, state = cell.step(x_t, state)
print("vanilla cell output after 4 steps:", np.round(h_t.data[0], 3))

# --- relaxation round trip ------------------------------------------------------

tables = []
for i in range(1, 9):
    t = np.zeros((i, 4), dtype=np.float32)
    t[rng.integers(0, i), rng.integers(0, 4)] = 1e4  # one-hot saturation
    tables.append(t)
alpha = AlphaTable.from_arrays(tables)
derived = derive_genotype(alpha)
print("\nderived genotype from the saturated table:")
print(derived.to_text())

mixed = MixedCell(6, 8, rng, alpha=alpha)
discrete = GenotypeCell(derived, 6, 8, rng, weights=mixed.weights)
x = Tensor(rng.standard_normal((2, 6)).astype(np.float32))
with ag.no_grad():
    h_mixed, _ = mixed.step(x, mixed.initial_state(2))
    h_disc, _ = discrete.step(x, discrete.initial_state(2))
print("max |mixed - discrete| under saturation:",
      float(np.abs(h_mixed.data - h_disc.data).max()))

# --- architecture-parameter entropy shrinks as choices sharpen -------------------

uniform = AlphaTable.from_arrays([np.zeros((i, 4)) for i in range(1, 9)])
print(f"\nchoice entropy, uniform logits:   {uniform.entropy():.3f} nats")
print(f"choice entropy, saturated logits: {alpha.entropy():.3f} nats")
