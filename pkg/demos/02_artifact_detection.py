"""Detect and repair a single-channel artifact with histogram outlier scores.

A 2 Hz square-pulse train is added to F3 in a fifth of the epochs. Each
(epoch, channel) entry gets 31 summary features, HBOS scores them, and an
entry is flagged only when it is an outlier while its neighbours are not.
Flagged entries are replaced by the mean of clean neighbours.

Run with ``python demos/02_artifact_detection.py``.
"""
# %%
import numpy as np

from hybrid_eeg import artifact as art
from hybrid_eeg.edf import ANALYSIS_CHANNELS, STANDARD_MONTAGE
from hybrid_eeg.preprocess import rereference, segment_epochs, select_wake_epochs
from hybrid_eeg.spectral import epoch_psds
from hybrid_eeg.synthetic import inject_square_artifact, synthetic_recording


def selected_epochs(rec):
    rec = rereference(rec, "average")
    es = segment_epochs(rec, 4.0)
    sel = select_wake_epochs(es, rec.annotations, epoch_psds(es.epochs, es.fs))
    return es.with_mask(sel.include_mask)


# %%
rec, truth = inject_square_artifact(synthetic_recording("normal", seed=0), "F3", fraction=0.2, seed=0)
es = selected_epochs(rec)
am = art.detect(es)
inc = es.include_mask
t, m = truth[inc], am.mask[inc]
print(f"injected entries {t.sum()}, flagged {m.sum()}, correct {(t & m).sum()}")
f3 = ANALYSIS_CHANNELS.index("F3")
print("flags per channel:", {c: int(n) for c, n in zip(ANALYSIS_CHANNELS, m.sum(axis=0)) if n})

# %% [markdown]
# A strong outlier stretches the histogram range, so with 19 channels some
# neighbour scores land close to the corroboration cut-off. A single fixture
# therefore has noisy recall; pooling over many fixtures gives the stable figure.

# %%
tp = fp = fn = 0
per_seed = []
for seed in range(20):
    rec_s, truth_s = inject_square_artifact(synthetic_recording("normal", seed=seed), "F3", 0.2, seed=seed)
    es_s = selected_epochs(rec_s)
    mask_s = art.detect(es_s).mask[es_s.include_mask]
    t_s = truth_s[es_s.include_mask]
    tp += (t_s & mask_s).sum()
    fp += (~t_s & mask_s).sum()
    fn += (t_s & ~mask_s).sum()
    per_seed.append((t_s & mask_s).sum() / t_s.sum())
print(f"pooled precision {tp / (tp + fp):.3f}, recall {tp / (tp + fn):.3f}; "
      f"per-fixture recall min {min(per_seed):.2f}, median {np.median(per_seed):.2f}")

# %% [markdown]
# Repair: each flagged entry becomes the mean of its unflagged neighbours.

# %%
fixed, remaining = art.repair_epochs(es, am)
e = int(np.flatnonzero(am.mask[:, f3])[0])
nb = [ANALYSIS_CHANNELS.index(c) for c in sorted(STANDARD_MONTAGE.neighbors("F3"))]
print(f"epoch {e}: F3 peak-to-peak {np.ptp(es.epochs[e, f3]):.1f} uV before, "
      f"{np.ptp(fixed.epochs[e, f3]):.1f} uV after; equals neighbour mean: "
      f"{np.array_equal(fixed.epochs[e, f3], es.epochs[e, nb].mean(axis=0))}")
print("unrepairable entries:", int(remaining.sum()), "| bad channels:", am.bad_channels or "none")
