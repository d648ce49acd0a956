"""Noisy order-preserving encodings of a small salary-like column.

Walks through building an encoder on a partitioned domain, sampling
encodings, and checking how often the encoded order agrees with the true
order for two nearby values.
"""
import math

import numpy as np

from dpope import DiscreteDomain, Partition, Prior, build_encoding_model, encode_many
from dpope.opec import dldp_ratio, order_agreement_probability

rng = np.random.default_rng(2024)

# domain 1..100 split into ten equal intervals, encoded as 1..10
domain = DiscreteDomain(1, 100)
part = Partition.equi_length(domain, 10)
print("interval starts:", part.starts())

# each interval's central tendency is the weighted median under the prior
model = build_encoding_model(part, Prior.uniform(domain), epsilon=1.0)
print("tendencies:", model.tendencies)

# the probability of each encoding falls off with distance to the tendency
np.set_printoptions(precision=3, suppress=True)
print("Pr[encoding | x=45]:", model.probabilities(45))

# encode a column and see where the reports land
xs = rng.integers(1, 101, size=12)
print("values   :", xs)
print("encodings:", encode_many(model, xs, rng))

# the worst-case ratio of output probabilities never exceeds e^{eps |x - x'|}
print("dLDP ratio (<= 1):", round(dldp_ratio(model), 12))

# order agreement grows with the gap between two values
for x_hi, x_lo in [(46, 45), (55, 45), (75, 45)]:
    print(f"Pr[enc({x_hi}) >= enc({x_lo})] = {order_agreement_probability(model, x_hi, x_lo):.3f}")

# at eps = inf the encoder is just the partition map
exact = build_encoding_model(part, None, math.inf)
print("deterministic encodings:", encode_many(exact, xs, rng))
