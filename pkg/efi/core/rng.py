"""
Seeded random streams.

One experiment seed fans out into independent, named Philox streams so that
latent noise, minibatch selection, data simulation, initialization and
baseline Monte Carlo never share draws.
"""

from typing import Dict, List

import numpy as np

STREAM_NAMES = ("init", "z_noise", "minibatch", "simulation", "baseline")


def make_generator(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def replicate_seeds(seed: int, count: int) -> List[int]:
    """Independent integer seeds for ``count`` replicates of one experiment."""
    children = np.random.SeedSequence(seed).spawn(count)
    return [int(child.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1)) for child in children]


class RngStreams:
    def __init__(self, seed: int):
        self.seed = int(seed)
        children = np.random.SeedSequence(self.seed).spawn(len(STREAM_NAMES))
        self._sequences: Dict[str, np.random.SeedSequence] = dict(zip(STREAM_NAMES, children))
        self._generators: Dict[str, np.random.Generator] = {
            name: np.random.Generator(np.random.Philox(seq))
            for name, seq in self._sequences.items()
        }

    def __getitem__(self, name: str) -> np.random.Generator:
        if name not in self._generators:
            raise KeyError(f"Unknown random stream '{name}'")
        return self._generators[name]

    @property
    def z_noise(self) -> np.random.Generator:
        return self._generators["z_noise"]

    @property
    def minibatch(self) -> np.random.Generator:
        return self._generators["minibatch"]

    @property
    def init(self) -> np.random.Generator:
        return self._generators["init"]

    @property
    def simulation(self) -> np.random.Generator:
        return self._generators["simulation"]

    @property
    def baseline(self) -> np.random.Generator:
        return self._generators["baseline"]

    def integer_seed(self, name: str) -> int:
        """A stable integer derived from one stream's seed sequence."""
        state = self._sequences[name].generate_state(1, dtype=np.uint64)[0]
        return int(state >> np.uint64(1))
