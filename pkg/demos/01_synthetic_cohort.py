# coding: utf-8

# # A synthetic claims cohort
#
# Patients are sequences of Dx / Rx / Px codes drawn from a handful of
# therapeutic areas. A few marker codes are planted in the diseased
# patients, and most of the cohort carries no label at all.

# In[1]:

from collections import Counter

from raregan.synthgen import CohortConfig, generate_cohort, marker_codes, split_cohort
from raregan.vocab import build_vocabulary

cfg = CohortConfig(n_patients=3000, seed=0)
cohort = generate_cohort(cfg)
print(Counter(r.label for r in cohort))


# The label counts follow directly from the config.

# In[2]:

print(cfg.label_counts())


# One patient, first few codes:

# In[3]:

rec = cohort[0]
print(rec.patient_id, rec.label, rec.age, rec.gender)
print([f"{c.kind}:{c.identifier}" for c in rec.codes[:8]])


# How often does a marker code show up, per label?

# In[4]:

markers = set(marker_codes(cfg))
for label in ("positive", "negative", "unlabeled"):
    group = [r for r in cohort if r.label == label]
    hit = sum(any(c in markers for c in r.codes) for r in group)
    print(f"{label:10s} {hit / len(group):.2f}")


# # Train/test split and vocabulary

# In[5]:

train, test = split_cohort(cohort, 0.8, seed=1)
print(len(train), len(test), Counter(r.label for r in test))

vocab = build_vocabulary(cohort, min_count=5)
print(len(vocab), "codes kept,", len(vocab.dropped), "dropped as rare")
