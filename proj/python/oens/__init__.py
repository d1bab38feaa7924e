"""Oracle-loss ensemble training: winner-take-gradient SGD plus classical,
coordinate-descent, and sequential-reweighting baselines over a small
deterministic C++ engine."""

from oens._core import (
    Dataset,
    Ensemble,
    OensError,
    __version__,
    assign_winners,
    evaluate,
    gen_ambiguous,
    gen_clustered_classes,
    gradcheck,
    load_csv,
    load_idx,
    make_dataset,
    oracle_loss,
    per_member_losses,
    train,
)

__all__ = [
    "Dataset",
    "Ensemble",
    "OensError",
    "__version__",
    "assign_winners",
    "evaluate",
    "gen_ambiguous",
    "gen_clustered_classes",
    "gradcheck",
    "load_csv",
    "load_idx",
    "make_dataset",
    "oracle_loss",
    "per_member_losses",
    "train",
]
