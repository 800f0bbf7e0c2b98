"""Out-of-core second-order random walks over block-partitioned graphs."""
from .engine import Engine, EngineConfig, Metrics
from .graph_store import PartitionedGraph, build_custom, build_sequential, partition_sequential
from .loader_model import LoaderModel
from .transitions import FixedLength, GeometricCapped, Node2vecParams

__all__ = ["Engine", "EngineConfig", "Metrics", "PartitionedGraph", "build_custom",
           "build_sequential", "partition_sequential", "LoaderModel", "FixedLength",
           "GeometricCapped", "Node2vecParams"]
__version__ = "0.1.0"
