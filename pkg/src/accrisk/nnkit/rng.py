"""Seeded random streams built on the Philox counter-based bit generator."""

import numpy as np


class RngStream:
    """A reproducible stream; ``spawn`` derives independent child streams."""

    def __init__(self, seed: int = 0, _seq: np.random.SeedSequence | None = None):
        self.seed = int(seed)
        self._seq = _seq if _seq is not None else np.random.SeedSequence(self.seed)
        self.generator = np.random.Generator(np.random.Philox(self._seq))

    def spawn(self, n: int = 1) -> list["RngStream"]:
        return [RngStream(self.seed, s) for s in self._seq.spawn(n)]

    def child(self) -> "RngStream":
        return self.spawn(1)[0]

    # generator passthroughs used across the package
    def uniform(self, low=0.0, high=1.0, size=None):
        return self.generator.uniform(low, high, size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self.generator.normal(loc, scale, size)

    def random(self, size=None):
        return self.generator.random(size)

    def integers(self, low, high=None, size=None):
        return self.generator.integers(low, high, size)

    def permutation(self, n):
        return self.generator.permutation(n)

    def poisson(self, lam, size=None):
        return self.generator.poisson(lam, size)

    @property
    def state(self) -> dict:
        st = self.generator.bit_generator.state
        return {"bit_generator": st["bit_generator"],
                "state": {k: np.asarray(v).tolist() for k, v in st["state"].items()},
                "buffer": np.asarray(st["buffer"]).tolist(),
                "buffer_pos": int(st["buffer_pos"]),
                "has_uint32": int(st["has_uint32"]),
                "uinteger": int(st["uinteger"])}

    @state.setter
    def state(self, value: dict) -> None:
        st = {"bit_generator": value["bit_generator"],
              "state": {k: np.array(v, dtype=np.uint64) for k, v in value["state"].items()},
              "buffer": np.array(value["buffer"], dtype=np.uint64),
              "buffer_pos": value["buffer_pos"],
              "has_uint32": value["has_uint32"],
              "uinteger": value["uinteger"]}
        self.generator.bit_generator.state = st


def glorot_uniform(rng: RngStream, fan_in: int, fan_out: int, shape=None) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, shape or (fan_in, fan_out))
