"""Frequency, mean and range estimates from noisy reports.

With one encoding per domain value the encoder is a local-DP frequency
oracle. Here it is compared against k-ary randomized response at the same
per-record budget.
"""
import numpy as np

from dpope import DiscreteDomain, Partition, build_encoding_model, encode_many
from dpope.estimators import (build_channel_matrix, estimate_frequencies, estimate_mean,
                              estimate_range, krr_estimate, krr_perturb)
from dpope.harness.data import binned_gaussian_prior

rng = np.random.default_rng(11)
domain = DiscreteDomain(1, 50)
xs = binned_gaussian_prior(domain, 20, 6).sample(50000, rng)
truth = np.bincount(xs - 1, minlength=50)

for eps in (0.2, 1.0):
    model = build_encoding_model(Partition.identity(domain), None, eps)
    channel = build_channel_matrix(model)
    freq = estimate_frequencies(encode_many(model, xs, rng), channel)
    krr = krr_estimate(krr_perturb(xs, eps, domain, rng), eps, domain)

    print(f"eps={eps}")
    print(f"  per-bin abs error  ours {np.abs(freq.counts - truth).mean():8.1f}"
          f"   k-RR {np.abs(krr - truth).mean():8.1f}")
    print(f"  mean  true {xs.mean():.3f}  estimated {estimate_mean(freq):.3f}")
    print(f"  count in [15, 25]  true {truth[14:25].sum()}  estimated {estimate_range(freq, 15, 25):.0f}")
