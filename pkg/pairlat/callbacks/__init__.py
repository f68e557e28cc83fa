from .grad_norm import GradNormMonitor
from .loss_trace import TRACE_COLUMNS, LossTraceWriter

__all__ = ["GradNormMonitor", "LossTraceWriter", "TRACE_COLUMNS"]
