"""Cross-domain graph anomaly detection with test-time training.

A numpy library implementing a two-phase detector: supervised training on a
labeled source graph (cross-entropy plus a homophily-based self-supervised
objective), then label-free adaptation of a target-domain encoder at test
time on the self-supervised objective alone. Anomalies are ranked by the
negated neighborhood-affinity score (or by the frozen predictor head).
"""

from . import (diffkernel, evaluation, experiments, gnn, graphstore, losses,
               pipeline)
from .errors import (CheckpointError, ConfigError, DataError, GraphFormatError,
                     NumericalError, ShapeError, TtgadError)
from .graphstore import (AttributedGraph, GraphStats, SyntheticSpec, build_graph,
                         compute_stats, generate_synthetic, graphs_equal,
                         load_graph, rewire_to_homophily, save_graph)

__version__ = "0.1.0"
