# coding: utf-8

# # Control flow graphs and their features
#
# A program is modeled as a directed graph of basic blocks with one entry.
# Blocks without successors are exits. This notebook builds a few small
# graphs, round-trips them through the text format and looks at the
# 23-entry feature vector the classifier consumes.

# In[1]:

import numpy as np

from cfgadv import make_cfg, parse_cfg, serialize_cfg, validate
from cfgadv.features import FEATURE_NAMES, betweenness, closeness, extract_features


# ## A diamond with a loop
#
# `b0` branches to `b1` and `b2`, both join at `b3`, and `b3` jumps back to
# `b1` before reaching the exit `b4`.

# In[2]:

g = make_cfg(["b0", "b1", "b2", "b3", "b4"],
             [("b0", "b1"), ("b0", "b2"), ("b1", "b3"), ("b2", "b3"), ("b3", "b1"), ("b3", "b4")],
             "b0", name="diamond")
print(serialize_cfg(g))
print("exits:", sorted(g.exits), "violations:", validate(g))


# The text format is line oriented and sorted, so parsing the output gives
# back the same graph.

# In[3]:

assert parse_cfg(serialize_cfg(g)) == g


# ## Node-level measures
#
# Betweenness counts shortest paths passing through a block, closeness is
# the harmonic variant (sum of inverse distances to reachable blocks).

# In[4]:

print(betweenness(g))
print(closeness(g))


# ## The feature vector
#
# Four groups (betweenness, closeness, degree, shortest-path length) are
# summarized by min, max, mean, median and std, followed by density and
# the edge and node counts.

# In[5]:

f = extract_features(g)
for name, value in zip(FEATURE_NAMES, f):
    print(f"{name:22s} {value:.4f}")


# A single-block program is the degenerate case: everything is zero except
# the node count.

# In[6]:

print(extract_features(make_cfg(["b0"], [], "b0")))
