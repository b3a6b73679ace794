"""Uniform random binary trees via critical branching-process engines.

The package provides:

* :mod:`gwtrees.bits` - buffered random bits with splittable lineage;
* :mod:`gwtrees.store` - slab-allocated trees, encodings, measures;
* :mod:`gwtrees.engines` - naive/iterative/parallel/hybrid generation and
  exact size-conditioned sampling;
* :mod:`gwtrees.replay` - first-task lifetime, schedule time, peak load;
* :mod:`gwtrees.exact` - enumeration oracle, closed forms, limit laws;
* :mod:`gwtrees.stats` - distances, chi-square, scaling fits;
* :mod:`gwtrees.cli` - the ``gwtrees`` command.
"""

from .bits import BitSource
from .engines import (GenOutcome, GenParams, EngineRuntime, generate,
                      sample_conditioned, sample_stream)
from .store import (NodeHandle, NodeStore, Tree, decode_bits, encode_bits,
                    height_nodes, left_spine, size, to_dot)

__all__ = [
    "BitSource", "EngineRuntime", "GenOutcome", "GenParams", "NodeHandle",
    "NodeStore", "Tree", "decode_bits", "encode_bits", "generate",
    "height_nodes", "left_spine", "sample_conditioned", "sample_stream",
    "size", "to_dot",
]

__version__ = "0.1.0"
