# coding: utf-8

# # Skip-gram code embeddings
#
# Codes that co-occur within a patient's sequence should land near each
# other. We train with negative sampling and then check whether codes from
# the same therapeutic area are more similar than codes from different ones.

# In[1]:

import numpy as np

from raregan.embedder import SgnsConfig, cluster_separation, train_skipgram
from raregan.synthgen import CohortConfig, code_catalog, generate_cohort, marker_codes
from raregan.vocab import build_vocabulary

cfg = CohortConfig(n_patients=3000, seed=0)
cohort = generate_cohort(cfg)
vocab = build_vocabulary(cohort, 5)
emb = train_skipgram(cohort, vocab, SgnsConfig(dim=32, epochs=5, seed=0))
print("loss per epoch:", np.round(emb.loss_history, 3))


# In[2]:

_, groups = code_catalog(cfg)
groups = {c: g for c, g in groups.items() if c in vocab}
intra, inter = cluster_separation(emb, groups)
print(f"mean cosine within TA {intra:.3f}, across TAs {inter:.3f}")


# The planted markers are only ever inserted together, so they should be
# close to one another too.

# In[3]:

def cos(a, b):
    return a @ b / np.linalg.norm(a) / np.linalg.norm(b)

m = marker_codes(cfg)
print(np.round([[cos(emb.vector(a), emb.vector(b)) for b in m] for a in m], 2))


# Rare codes below the count threshold all share the zero vector.

# In[4]:

print(sorted(vocab.dropped)[:3], emb.center[emb.zero_index][:4])
