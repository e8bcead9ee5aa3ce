# %% [markdown]
# # The four networks and their gradients
#
# All variants share three convolution blocks and a two-layer head. The
# `e` variants append the RR features after flattening; the `f` variants
# start with a 2-D convolution over the window and its spectrum.

# %%
import numpy as np

from hybridecg.nn import VARIANTS, Network, build_model, shape_chain
from hybridecg.nn import gradcheck

for variant in VARIANTS:
    net = Network(build_model(variant))
    print(f"{variant:6s} {net.n_params():6d} parameters")

for kind, shape in shape_chain(build_model("CNNef")):
    print(f"  {kind:14s} {shape}")

# %% [markdown]
# ## Finite differences
#
# Every layer's backward pass is compared against central differences in
# float64 on small shapes, then each variant is checked end to end.

# %%
results = gradcheck.full_suite()
for r in results[:8]:
    print(r.line())
print(sum(r.passed for r in results), "of", len(results), "passed")

# %% [markdown]
# A deliberately wrong backward pass is caught right away.

# %%
from hybridecg.nn.layers import Dense

original = Dense.backward


def off_by_two_percent(self, dout):
    dx = original(self, dout)
    self.grads["weight"] = self.grads["weight"] * 1.02
    return dx


Dense.backward = off_by_two_percent
print([r.line() for r in gradcheck.layer_suite() if not r.passed])
Dense.backward = original
