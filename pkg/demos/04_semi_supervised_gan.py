# coding: utf-8

# # Semi-supervised GAN on a toy problem
#
# Two Gaussian blobs, a small labeled set and a large unlabeled pool. The
# discriminator has one output per class; "fake" is the implicit extra class
# with its logit pinned at zero.

# In[1]:

import numpy as np

from raregan.ssgan import GanTrainConfig, class_and_fake_probs, predict_scores, train_gan

rng = np.random.default_rng(0)
centers = np.array([[-0.4] * 4, [0.4] * 4])
y_lab = np.r_[np.zeros(20, int), np.ones(20, int)]
x_lab = np.clip(centers[y_lab] + rng.normal(0, 0.25, (40, 4)), -1, 1)
y_unl = rng.integers(0, 2, 2000)
x_unl = np.clip(centers[y_unl] + rng.normal(0, 0.25, (2000, 4)), -1, 1)


# With all logits at zero, both classes and "fake" get a third each.

# In[2]:

print(class_and_fake_probs(np.zeros(2)))


# In[3]:

cfg = GanTrainConfig(batch_size=64, epochs=5, widths=(32, 16, 8), noise_dim=16, seed=0)
model = train_gan(x_lab, y_lab, x_unl, cfg)
last = model.history[-1]
print({k: round(getattr(last, k), 3) for k in ("L_labeled", "L_unlabeled", "L_fake", "L_FM", "L_PT")})


# Scores on fresh points from each blob:

# In[4]:

x_new = np.clip(centers[[0, 1]].repeat(5, axis=0) + rng.normal(0, 0.25, (10, 4)), -1, 1)
print(np.round(predict_scores(model, x_new), 3))


# Generated samples live in the same [-1, 1] box as the real features.

# In[5]:

print(np.round(model.generate(3, rng), 2))
