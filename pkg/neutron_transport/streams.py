'''
Counter-based random streams keyed by (master seed, cycle index).
'''
import numpy as np

from numpy.random import Generator, Philox, SeedSequence


def cycle_seed_sequence(seed: int, cycle: int = 0) -> SeedSequence:
    return SeedSequence([int(seed), int(cycle)])


def generator_from(seed_sequence: SeedSequence) -> Generator:
    return Generator(Philox(seed_sequence))


def cycle_generator(seed: int, cycle: int = 0) -> Generator:
    '''
    Independent generator for one Monte Carlo cycle. Cycles can be simulated
    in any order or in parallel without changing their draws.
    '''
    return generator_from(cycle_seed_sequence(seed, cycle))


def spawn_seed(rng: Generator) -> int:
    '''
    Draws a master seed for a nested experiment from an existing stream.
    '''
    return int(rng.integers(0, np.iinfo(np.int64).max))


def as_seed_sequence(rng) -> SeedSequence:
    '''
    Root seed sequence for lineage-keyed sub-streams.
    '''
    if isinstance(rng, SeedSequence):
        return rng
    if isinstance(rng, Generator):
        return SeedSequence(int(rng.integers(0, np.iinfo(np.int64).max)))
    return SeedSequence(int(rng))


def model_seed(seed_sequence: SeedSequence) -> int:
    '''
    Integer seed for a Mesa model driven by the given sequence.
    '''
    return int(seed_sequence.generate_state(1, dtype=np.uint32)[0])


def particle_generator(seed: int, step: int, particle: int) -> Generator:
    '''
    Stream of one particle during one propagation step of the particle filter.
    '''
    return generator_from(SeedSequence([int(seed), int(step), int(particle)]))
