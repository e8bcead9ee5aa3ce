# %% [markdown]
# # Reading WFDB records
#
# MIT-BIH records come as three files: a text header (`.hea`), packed
# samples in format 212 (`.dat`) and a binary annotation stream (`.atr`).
# There is no real database in this demo, so we write a synthetic record
# with the same layout and read it back.

# %%
import tempfile
from pathlib import Path

import numpy as np

from hybridecg.synthetic import make_record
from hybridecg.wfdb_io import (decode_format212, encode_format212, load_record, parse_annotations,
                               select_lead, verify_checksum, write_record)

workdir = Path(tempfile.mkdtemp())
write_record(make_record("900", n_beats=40, seed=1), workdir)
print(sorted(p.name for p in workdir.iterdir()))
print((workdir / "900.hea").read_text())

# %% [markdown]
# ## Format 212
#
# Two 12-bit two's-complement samples share three bytes. The low byte of
# the first sample comes first; the middle byte carries the two high
# nibbles.

# %%
adc = np.array([[1000, -1], [0, 2047]])
packed = encode_format212(adc)
print(packed.hex(" "))
print(decode_format212(packed, 2, 2))

# %% [markdown]
# ## The whole record
#
# `load_record` decodes the samples, checks the per-channel checksums and
# keeps only the beat annotations in `record.beats`. Rhythm changes and
# other non-beat events stay in `record.annotations`.

# %%
rec = load_record(workdir, "900")
print(rec.header.lead_names, rec.fs, rec.header.n_samples)
print("checksums ok:", verify_checksum(rec.adc, rec.header))
print("MLII is channel", select_lead(rec, "MLII"))
print(len(rec.annotations), "annotations,", len(rec.beats), "beats")
print(rec.annotations[0])

# %%
events = parse_annotations((workdir / "900.atr").read_bytes())
print([e.symbol for e in events[:12]])
