# The two ways categorical features are searched.
#
# Frequency map: each value gets a code in [0, 1]; the most common value is
# 0, the rarest 1. Any point in between is rounded to the nearest code
# before the model sees it.
#
# Simplex sampling: a categorical is a probability vector over its values;
# the model is scored on sampled values and the results averaged.

import numpy as np

from pertinent.encoding import FmaFeature, FmaMap, SimplexEncoding, fma_decode, simplex_project, ssa_evaluate

# %% frequency codes for counts 11 / 6 / 1
fmap = FmaMap({"colour": FmaFeature("colour", ("red", "green", "blue"), (11, 6, 1))})
f = fmap["colour"]
print("codes:", dict(zip(f.values, f.codes.tolist())))
for x in (0.0, 0.2, 0.25, 0.26, 0.6, 0.75, 0.76, 1.0):
    print(f"  h({x:.2f}) = {fma_decode(x, fmap, 'colour')}")

# %% projecting onto the simplex
for v in ([2.0, 0.0], [0.6, 0.6, 0.0], [0.3, -0.4, 0.9, 0.1]):
    print(v, "->", np.round(simplex_project(np.array(v)), 4))

# %% expected scores under a half/half distribution
scores = {"red": [0.9, 0.1], "green": [0.2, 0.8], "blue": [0.5, 0.5]}
enc = SimplexEncoding((0,), (("red", "green", "blue"),), [np.array([0.5, 0.5, 0.0])])
rng = np.random.default_rng(0)
est = ssa_evaluate(lambda recs: [scores[r[0]] for r in recs], enc, ("red",), 5000, rng)
print("sampled expectation", np.round(est, 3), "exact", [0.55, 0.45])
