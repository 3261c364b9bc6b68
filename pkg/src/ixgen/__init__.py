"""Generator toolkit for measurably diverse 3D highway interchanges.

Pipeline: parse topology corpus -> classify by labeled-digraph isomorphism
-> pairwise-sample geometric features -> lay out roads and fit ramp splines
by differential evolution -> export OpenDRIVE and SVG.
"""

from .corpus import parse_corpus, serialize_corpus, write_corpus
from .export import read_opendrive, write_opendrive, write_svg
from .geometry import (
    BezierCurve,
    BezierSpline,
    CurveMetrics,
    LayoutConfig,
    Point3,
    RoadLayout,
    layout_roads,
    metrics,
)
from .interchange import ConcreteInterchange
from .isomorphism import TopologyClass, classify, is_isomorphic
from .optimize import (
    DEConfig,
    FitResult,
    RampFitProblem,
    SynthesisConfig,
    differential_evolution,
    fit_ramp,
    synthesize_interchange,
)
from .sampling import (
    CoveringArray,
    FeatureDomains,
    InterchangeFeature,
    features_from_array,
    full_combination_count,
    generate_covering_array,
    verify_pairwise_coverage,
)
from .topology import (
    EdgeLabel,
    InterchangeRecord,
    LabeledDigraph,
    VertexKind,
    build_graph,
    degree_signature,
)

__version__ = "0.1.0"
