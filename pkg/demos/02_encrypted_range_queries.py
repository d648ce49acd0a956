"""Range queries over an encrypted column.

The data owner encrypts a Zipf-distributed column, keeps a tiny state table
of token ranges per encoding, and asks the server for a few ranges. Missing
and extra records are scored against the plaintext.
"""
import numpy as np

from dpope import DiscreteDomain, encrypt_dataset, opeps_keygen
from dpope.harness.data import equi_depth_partition, zipf_prior
from dpope.rangeproto import (InProcessTransport, RangeClient, ServerStore, answer_workload,
                              client_state_for)

rng = np.random.default_rng(7)
domain = DiscreteDomain(1, 1000)
xs = zipf_prior(domain, 0.9).sample(20000, rng)

# equi-depth partition: each interval holds about the same number of records
part = equi_depth_partition(xs, 20, domain)

queries = [(1, 5), (10, 60), (100, 400), (2, 900)]
for eps in (0.1, 1.0, 10.0):
    scheme = opeps_keygen(f"demo-{eps}".encode(), part, None, eps)
    cts = encrypt_dataset(scheme, xs, rng)

    # the server only ever sees (token, sealed blob) pairs
    store = ServerStore.from_ciphertexts(cts)
    client = RangeClient(scheme, client_state_for(scheme, cts), InProcessTransport(store))

    for l in (0, 2):
        ms = answer_workload(client, queries, xs, neighbors=l)
        rm = np.mean([m.rho_M for m in ms])
        re = np.mean([m.rho_E for m in ms])
        print(f"eps={eps:<5} l={l}  mean missing {rm:6.2f}%   extra processed {re:6.2f}%")
