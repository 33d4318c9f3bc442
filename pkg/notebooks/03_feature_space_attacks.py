# coding: utf-8

# # Feature-space attacks
#
# Six white-box attacks perturb a normalized feature vector until the
# classifier changes its decision. None of them produces a program, which
# is why every outcome carries `functionality_preserving=False`.

# In[1]:

import numpy as np

from cfgadv import CorpusSpec, generate_corpus
from cfgadv.attacks import DEFAULTS, Method, run_attack, run_attack_suite
from cfgadv.classifier import TrainConfig, train
from cfgadv.corpus import ClassProfile
from cfgadv.features import apply_normalizer, extract_many, fit_normalizer


# In[2]:

graphs = generate_corpus(CorpusSpec(ClassProfile(80, 20.0, 1.1, 0.3, 0.0),
                                    ClassProfile(240, 60.0, 0.4, 0.5, 0.15), seed=3))
X = extract_many(graphs)
y = np.array([int(g.label) for g in graphs])
norm = fit_normalizer(X)
Z = apply_normalizer(norm, X)
model, _ = train(Z, y, TrainConfig(epochs=120, seed=3))


# ## One sample, every method
#
# Take a malware sample the model gets right and compare how many
# features each attack touches.

# In[3]:

i = next(k for k in range(len(y)) if y[k] == 1 and model.predict(Z[k]) == 1)
for method in Method:
    out = run_attack(model, Z[i], DEFAULTS[method])
    print(f"{method.value:10s} success={out.success!s:5s} changed={out.features_changed:2d} "
          f"L2={np.linalg.norm(out.x_adv - out.x):.3f}")


# JSMA moves one feature at a time and stops as soon as the label flips,
# so it is the sparsest. The elastic-net attack trades L2 for L1 and lands
# between JSMA and the sign-gradient methods.

# ## The suite
#
# The suite attacks every correctly classified sample and reports the
# misclassification rate and the mean number of changed features.

# In[4]:

mal = np.flatnonzero(y == 1)[:40]
fast = [DEFAULTS[m].with_(max_iter=50) for m in (Method.PGD, Method.JSMA, Method.DEEPFOOL)]
res = run_attack_suite(model, Z[mal], y[mal], fast)
print(res.to_csv(timing=False))
