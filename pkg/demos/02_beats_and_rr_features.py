# %% [markdown]
# # Beats, RR features and the split
#
# Each annotated beat becomes a 260-sample window centred on its R peak
# (90 samples before, 170 after). Four RR features describe its timing:
# the interval to the previous beat, to the next beat, the record mean,
# and the mean over the last ten beats.

# %%
import numpy as np

from hybridecg.beats import CLASS_NAMES, RR_NAMES, compute_rr_features, extract_beats, split_dataset
from hybridecg.synthetic import make_database

r_peaks = [100, 460, 820, 1250, 1610]
print(compute_rr_features(r_peaks, 3, 360))

# %% [markdown]
# Symbols map onto the five AAMI classes. The first nine beats of a record
# have no full ten-beat history and the last has no successor, so they
# are dropped.

# %%
records = make_database(n_records=4, n_beats=400, seed=3)
beats = extract_beats(records[0])
print(beats.windows.shape, beats.rr.shape)
print(dict(zip(RR_NAMES, beats.rr[0].round(3))))
print(dict(zip(CLASS_NAMES, beats.class_counts())))

# %% [markdown]
# ## Stratified 70/15/15 split
#
# Every class is divided separately so rare classes show up in all three
# partitions.

# %%
from hybridecg.beats import BeatSet

all_beats = BeatSet.concat([extract_beats(r) for r in records])
split = split_dataset(all_beats, seed=0)
for name in ("train", "validation", "test"):
    part = getattr(split, name)
    print(f"{name:10s} {len(part):5d}", part.class_counts())
