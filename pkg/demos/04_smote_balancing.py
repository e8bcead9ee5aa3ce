# %% [markdown]
# # Balancing the training set with SMOTE
#
# Normal beats dominate. Minority classes are topped up with synthetic
# points placed on segments between a real beat and one of its five
# nearest neighbours of the same class. Each point is the 260-sample
# window with the four RR features appended.
# Only the training partition is touched.

# %%
import numpy as np

from hybridecg.beats import BeatSet, CLASS_NAMES, extract_beats, split_dataset
from hybridecg.smote import balance_training_set, k_nearest_neighbors
from hybridecg.synthetic import make_database

beats = BeatSet.concat([extract_beats(r) for r in make_database(n_records=3, n_beats=400, seed=5)])
split = split_dataset(beats, seed=0)
print("before:", dict(zip(CLASS_NAMES, split.train.class_counts())))

balanced, results = balance_training_set(split, rng_seed=0)
print("after: ", dict(zip(CLASS_NAMES, balanced.train.class_counts())))
print("synthetic in validation/test:", balanced.validation.synthetic.sum() + balanced.test.synthetic.sum())

# %% [markdown]
# Every synthetic beat is `x + gap * (neighbour - x)` with `gap` in [0, 1).

# %%
cls, res = next(iter(results.items()))
members = split.train.subset(np.flatnonzero(split.train.labels == cls)).features().astype(np.float64)
x = members[res.base]
rebuilt = x + res.gap[:, None] * (members[res.neighbor] - x)
print(CLASS_NAMES[cls], "max residual:", np.abs(res.beats.features() - rebuilt).max())
print("neighbours of the first member:", k_nearest_neighbors(members, 0, 5))
