from .backbone import (
    BackboneModule,
    FrozenBackbone,
    load_backbone,
    save_backbone,
    task_loss,
    verify_frozen,
)
from .lit_module import Stage2Config, Stage2Module
from .transfer import (
    AGGREGATIONS,
    aggregate_contexts,
    cross_modal_transfer,
    evaluate_transfer,
    majority_rate,
    transfer_all,
)

__all__ = [
    "AGGREGATIONS",
    "BackboneModule",
    "FrozenBackbone",
    "Stage2Config",
    "Stage2Module",
    "aggregate_contexts",
    "cross_modal_transfer",
    "evaluate_transfer",
    "load_backbone",
    "majority_rate",
    "save_backbone",
    "task_loss",
    "transfer_all",
    "verify_frozen",
]
