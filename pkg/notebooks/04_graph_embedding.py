# coding: utf-8

# # Graph embedding and augmentation
#
# Instead of editing features, this attack edits the program: the original
# graph and a graph of the opposite class are placed behind a shared entry
# whose branch always reaches the original. Every original path survives,
# so the program still behaves as before.

# In[1]:

import numpy as np

from cfgadv import CorpusSpec, generate_corpus
from cfgadv.classifier import TrainConfig, train
from cfgadv.corpus import ClassProfile
from cfgadv.features import apply_normalizer, extract_features, extract_many, fit_normalizer
from cfgadv.gea import Strategy, check_splice, density_experiment, gea_attack, select_target, splice
from cfgadv.graph import Label, serialize_cfg


# ## One splice

# In[2]:

graphs = generate_corpus(CorpusSpec(ClassProfile(80, 20.0, 1.1, 0.3, 0.0),
                                    ClassProfile(240, 60.0, 0.4, 0.5, 0.15), seed=5))
mal = [g for g in graphs if g.label is Label.MALICIOUS]
ben = [g for g in graphs if g.label is Label.BENIGN]
s = splice(mal[1], ben[1])
print(serialize_cfg(s.combined)[:400])
print("violations:", check_splice(s, mal[1], ben[1]))


# ## Target size matters
#
# Larger benign targets pull the combined graph's features further toward
# the benign region.

# In[3]:

X = extract_many(graphs)
y = np.array([int(g.label) for g in graphs])
norm = fit_normalizer(X)
model, _ = train(apply_normalizer(norm, X), y, TrainConfig(epochs=120, seed=5))

for strategy in Strategy:
    target = select_target(ben, strategy)
    res = gea_attack(model, norm, mal[:60], target)
    print(f"{strategy.value:6s} target {target.name} ({target.n_nodes:3d} nodes): MR {100 * res.mr:.1f}%")


# ## Density at a fixed size
#
# Adding edges to the target while keeping its blocks fixed raises the
# density feature of every combined graph.

# In[4]:

levels = density_experiment(model, norm, mal[:30], select_target(ben, "median"), [0, 5, 10, 20], seed=5)
for lv in levels:
    print(lv.added_edges, f"{lv.result.mean_density:.4f}", f"{100 * lv.result.mr:.1f}%")
