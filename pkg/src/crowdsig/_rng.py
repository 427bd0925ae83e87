"""Seed-derived random substreams.

Every stochastic routine in the library draws from a generator keyed by
(seed, stream tag, ...indices) so that results are reproducible bit-for-bit
and independent of how work is batched or scheduled.  Values generated from
one substream are consumed in a canonical order; chunked draws concatenate
to the same sequence as a single large draw.
"""

import numpy as np

# Stream tags. Distinct tags keep unrelated routines decorrelated even when
# the user passes the same seed everywhere.
EQUICORR_SIM = 11
FACTOR_SIM = 12
MC_PER_PERIOD = 101
MC_FIXED_GROUP = 102
MC_DISTRIBUTION = 103
BOOTSTRAP = 104


def substream(seed, *key):
    """Return a Generator for the substream identified by (seed, *key)."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, key)]))
