"""Annotation-noise engine: detect inconsistent labels, correct erroneous ones,
and review the results against an embedding datastore."""

from ._kernels import backend_name
from .datastore import (
    Datastore,
    EmbeddingRecord,
    ExampleMetadata,
    LabelSpace,
    RevisionFile,
    SplitSpec,
    SynthConfig,
    make_folds,
    read_datastore,
    read_revisions,
    synth_generate,
    write_datastore,
    write_revisions,
)
from .density import DensityModel, fit as fit_density
from .neighbor_index import NeighborIndex, NeighborList, build as build_index

__version__ = "0.1.0"
