# %% [markdown]
# # Training a model and saving it
#
# Adam with cross-entropy, minibatches of 256, early stopping on the
# validation loss. Synthetic beats are easy to separate, so a couple of
# epochs are enough here; real recordings take longer.

# %%
import tempfile
from pathlib import Path

import numpy as np

from hybridecg.beats import BeatSet, extract_beats, split_dataset
from hybridecg.metrics import evaluate
from hybridecg.nn import TrainConfig, build_model, load_model, predict, save_model, train
from hybridecg.nn.serialize import dumps_model
from hybridecg.smote import balance_training_set
from hybridecg.synthetic import make_database

beats = BeatSet.concat([extract_beats(r) for r in make_database(n_records=3, n_beats=400, seed=8)])
split, _ = balance_training_set(split_dataset(beats, seed=0), rng_seed=0)
result = train(build_model("CNNef"), split, TrainConfig(max_epochs=3), progress=True)
print("best epoch:", result.best_epoch)

# %%
report = evaluate(predict(result.network, split.test), split.test.labels)
print(report.literal.table_row())

# %% [markdown]
# ## Model files
#
# An `.ecgm` file holds the architecture, the parameters as float32, a
# JSON metadata block and a SHA-256 checksum. Loading refuses a file
# whose checksum or version does not match.

# %%
path = Path(tempfile.mkdtemp()) / "CNNef.ecgm"
save_model(result.network, path, {"note": "demo"})
net, meta = load_model(path)
print(path.stat().st_size, "bytes", meta)
print("same predictions:", np.array_equal(predict(net, split.test), predict(result.network, split.test)))

# %% [markdown]
# The same seeds give the same bytes.

# %%
again = train(build_model("CNNef"), split, TrainConfig(max_epochs=3))
print(dumps_model(again.network) == dumps_model(result.network))
