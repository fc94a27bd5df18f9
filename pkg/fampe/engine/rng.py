'''
Index-derived random streams.

Every noise draw of the attribution engines comes from a generator keyed by
``(seed, iteration, variant, channel)``.  A variant can therefore be
recomputed on its own, in any order or on any thread, and still be
bit-identical.
'''

import numpy as np

from fampe.engine.exceptions import ConfigError

def check_seed(seed):
    ''' Returns the seed as an int, or raises ConfigError if it is not >= 0.'''
    try: value = int(seed)
    except (TypeError, ValueError):
        raise ConfigError(''.join(('Seed <', str(seed), '> is not an integer.')))
    if value < 0 or (not isinstance(seed, str) and value != seed):
        raise ConfigError(''.join(('Seed must be an integer >= 0, got <', str(seed), '>.')))
    return value

def stream(seed, *indices):
    ''' Generator for the given seed and index path.

    Args:
        seed (int): base seed, >= 0.
        indices (int): the index path, e.g. iteration, variant, channel.

    Returns:
        numpy.random.Generator
    '''
    key = [check_seed(seed)]
    for index in indices:
        if index < 0:
            raise ConfigError(''.join(('Stream index must be >= 0, got <', str(index), '>.')))
        key.append(int(index))
    return np.random.default_rng(np.random.SeedSequence(key))

def variant_stream(seed, iteration, variant, channel):
    ''' Stream of the noise of one channel of one variant at one iteration.'''
    return stream(seed, iteration, variant, channel)
