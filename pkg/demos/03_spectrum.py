# %% [markdown]
# # Spectrum of a beat
#
# The frequency branch of the network sees |DFT| of each window. A
# window is 260 samples, which is not a power of two, so the transform
# uses Bluestein's chirp-z trick on top of a radix-2 FFT. The naive
# O(n^2) DFT is kept around as the oracle.

# %%
import numpy as np

from hybridecg.spectrum import dft_naive, fft_bluestein, fft_radix2, magnitude_spectrum, make_dual_input

rng = np.random.default_rng(0)
x = rng.standard_normal(64) + 1j * rng.standard_normal(64)
print("radix-2 vs naive:", np.abs(fft_radix2(x) - dft_naive(x)).max())

y = rng.standard_normal(260) + 1j * rng.standard_normal(260)
print("Bluestein vs naive at n=260:", np.abs(fft_bluestein(y) - dft_naive(y)).max())

# %% [markdown]
# A real window has a symmetric magnitude spectrum, and a circular time
# shift leaves it unchanged.

# %%
from hybridecg.synthetic import make_record
from hybridecg.beats import extract_beats

window = extract_beats(make_record("1", n_beats=50, seed=2)).windows[0].astype(np.float64)
spec = magnitude_spectrum(window)
print(np.allclose(spec[1:], spec[:0:-1]), np.allclose(magnitude_spectrum(np.roll(window, 40)), spec))
print("largest bins:", np.argsort(spec[:130])[::-1][:5])

# %% [markdown]
# The 2x260 input stacks the window on top of its spectrum.

# %%
dual = make_dual_input(window, spec)
print(dual.shape, dual[0, :3], dual[1, :3])
