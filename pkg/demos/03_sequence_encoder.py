# coding: utf-8

# # LSTM patient encoder
#
# Each patient is embedded code by code, run through an LSTM, and max-pooled
# over the real (non-padded) steps. Age and gender are appended and every
# dimension is scaled to [-1, 1] using ranges from the training split.

# In[1]:

import numpy as np

from raregan.embedder import SgnsConfig, train_skipgram
from raregan.encoder import EncoderConfig, train_encoder
from raregan.synthgen import CohortConfig, generate_cohort, split_cohort
from raregan.vocab import build_vocabulary

cohort = generate_cohort(CohortConfig(n_patients=4000, prevalence=0.05, seed=0))
train, test = split_cohort(cohort, 0.8, seed=1)
vocab = build_vocabulary(cohort, 5)
emb = train_skipgram(cohort, vocab, SgnsConfig(dim=32, epochs=2, seed=0))


# The LSTM is fitted with a throwaway logistic head on the labeled records.
# Expect a plateau near the class-prior loss for a few epochs before the
# marker codes are picked up and the loss drops.

# In[2]:

enc = train_encoder(train, emb, EncoderConfig(hidden=32, epochs=10, seed=0))
print("encoder loss:", np.round(enc.loss_history, 3))


# In[3]:

enc.fit_scaler(train)
X_test = enc.features(test)
print(X_test.shape, X_test.min(), X_test.max())


# Padding never changes a patient's features: pooling ignores PAD steps.

# In[4]:

from raregan.encoder import encode

rec = test[0]
a = encode(rec, emb, enc.cell, enc.scaler, max_length=len(rec.codes))
b = encode(rec, emb, enc.cell, enc.scaler, max_length=60)
print(np.abs(a - b).max())
