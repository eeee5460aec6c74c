"""Certified-robustness-guided attacks on graph convolutional networks."""

from ._crgraph import (
    Certificate,
    CapacityError,
    DataSplit,
    Error,
    GCNParams,
    Graph,
    ParameterError,
    TrainConfig,
    apply_perturbation,
    certified_size,
    certify_evasion,
    exact_smoothed_probs,
    forward,
    lower_bound_prob,
    minmax_poisoning,
    normalize_adjacency,
    pair_index,
    pgd_evasion,
    predict_all,
    project_budget,
    run_sweep,
    split_nodes,
    synth_sbm,
    train,
    worst_case_probability,
)

__all__ = [name for name in dir() if not name.startswith("_")]
