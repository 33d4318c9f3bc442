# coding: utf-8

# # Training the classifier on a synthetic corpus
#
# The corpus generator draws log-normal program sizes per class and grows
# chain, diamond and loop skeletons. Here a reduced corpus keeps the run
# short; the command line pipeline uses the full default sizes.

# In[1]:

import numpy as np

from cfgadv import CorpusSpec, generate_corpus
from cfgadv.classifier import TrainConfig, evaluate, train
from cfgadv.corpus import ClassProfile, split
from cfgadv.features import apply_normalizer, extract_many, fit_normalizer
from cfgadv.graph import Label


# In[2]:

spec = CorpusSpec(benign=ClassProfile(120, 20.0, 1.1, 0.3, 0.0),
                  malicious=ClassProfile(400, 60.0, 0.4, 0.5, 0.15), seed=7)
graphs = generate_corpus(spec)
for lab in Label:
    print(lab.text, np.mean([g.n_nodes for g in graphs if g.label is lab]))


# Features are computed once per graph; the normalizer is fit on the
# training split only.

# In[3]:

X = extract_many(graphs)
y = np.array([int(g.label) for g in graphs])
tr, te = split([g.label for g in graphs], 0.8, seed=7)
norm = fit_normalizer(X[tr])
Xtr, Xte = apply_normalizer(norm, X[tr]), apply_normalizer(norm, X[te])


# In[4]:

model, log = train(Xtr, y[tr], TrainConfig(epochs=150, seed=7))
print("final training loss", log.loss[-1])
m = evaluate(model, Xte, y[te])
print(f"accuracy {m.accuracy:.4f}  FNR {m.fnr:.4f}  FPR {m.fpr:.4f}")


# The model is plain numpy, so its input gradient is available directly.

# In[5]:

print(model.input_gradient(Xte[0], int(y[te][0]))[:5])
