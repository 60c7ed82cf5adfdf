"""
The two feature transforms
--------------------------

FAdaIN hands a generator activation the per-channel moments of a style
feature.  FADE normalizes the activation over the batch and modulates it
element-wise with maps convolved from a content feature.

"""

import numpy as np

from tsit.tensor import Tensor, no_grad
from tsit.transforms import FADE, fadain

rng = np.random.default_rng(0)
z = Tensor(rng.standard_normal((2, 4, 8, 8)).astype(np.float32))
style = Tensor((rng.standard_normal((2, 4, 8, 8)) * 3 + 5).astype(np.float32))

# %% FAdaIN: the output carries the style feature's instance moments
out = fadain(z, style).data
print("style mean/std  ", style.data.mean(axis=(2, 3))[0].round(3), style.data.std(axis=(2, 3))[0].round(3))
print("output mean/std ", out.mean(axis=(2, 3))[0].round(3), out.std(axis=(2, 3))[0].round(3))

# %% FADE: gamma/beta have the full activation shape, so modulation is per element
content = Tensor(rng.standard_normal((2, 3, 8, 8)).astype(np.float32))
fade = FADE(4, 3, seed=0)
with no_grad():
    gamma, beta = fade.modulation(content)
    y = fade(z, content)
print("gamma", gamma.shape, "beta", beta.shape, "output", y.shape)

# %% at inference the running statistics replace the batch statistics
fade.eval()
with no_grad():
    y_eval = fade(z, content)
print("train vs eval RMS difference", float(np.sqrt(np.mean((y.data - y_eval.data) ** 2))))
