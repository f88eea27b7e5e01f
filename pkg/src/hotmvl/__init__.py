"""Hierarchical optimal transport for multi-view learning on unaligned views."""

from .data import (
    MultiViewDataset,
    Split,
    SplitSpec,
    SynthSpec,
    generate_synthetic,
    load_manifest,
    split_and_unalign,
    unalign,
    write_manifest,
)
from .eval import AblationReport, accuracy, cluster_recovery, export_plan_heatmap, run_ablation
from .ot import (
    CostMatrix,
    ProjectionSet,
    TransportPlan,
    brute_force_matching,
    pairwise_cost_with_diag_shift,
    sample_projections,
    sinkhorn,
    sliced_wasserstein,
    wasserstein_1d_sq,
)
from .train import Model, TrainConfig, TrainReport, predict, train_semisupervised, train_unsupervised

__version__ = "0.1.0"
