# coding: utf-8

# # The whole pipeline, staged
#
# Each stage reads the previous stage's artifacts from one directory and
# refuses to run on artifacts produced under a different config. The same
# stages are available from the command line as `raregan <stage>`.

# In[1]:

import tempfile

from raregan import pipeline
from raregan.config import PipelineConfig

cfg = PipelineConfig.from_ini("""
[pipeline]
seed = 0
[cohort]
n_patients = 4000
prevalence = 0.05
[skipgram]
epochs = 2
[encoder]
epochs = 10
[gan]
epochs = 5
batch_size = 64
[baseline]
epochs = 10
""")
out = tempfile.mkdtemp()
ws = pipeline.Workspace(out, cfg)
results = pipeline.run_all(ws)
print(results)


# In[2]:

print(open(ws.path("metrics.csv")).read())


# Changing the seed changes the cohort, so downstream stages now refuse the
# old artifacts until gen-data is rerun.

# In[3]:

try:
    pipeline.build_vocab(pipeline.Workspace(out, cfg.with_seed(1)))
except pipeline.StalenessError as exc:
    print(exc)
