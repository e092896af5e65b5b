"""Transformer attention over per-input sampled stochastic-block-model supports.

The package is pure numpy: sampling runs in time linear in the number of
drawn edges, attention touches only sampled pairs, and the backward pass
(including the straight-through path into the sampler's parameters) is
written by hand and verified against finite differences.
"""

from .attention import (AttentionHead, HeadForwardTrace, head_backward, head_forward,
                        infer_sbm, init_head, masked_softmax_edges)
from .costing import CostReport, density_report, flops_attention, instrument_forward
from .duplicates import LabeledBatch, TaskConfig, duplicate_rate, generate_batch
from .encoder import (EncoderModel, EvalStats, ModelConfig, TrainMetrics, evaluate,
                      init_model, model_backward, model_forward, named_params,
                      train_loop, train_step)
from .errors import (ConsistencyError, CountersDisabledError, DomainError, InputError,
                     NonFiniteLossError, ShapeError)
from .gradcheck import GradcheckReport, check_edge_multiplier, check_model_gradients
from .numerics import FdReport, bce_loss, finite_diff_check, sigmoid, softmax_all
from .sampler import (AliasTable, EdgeMask, SampleCounter, SbmParams, add_self_loops,
                      mask_density, read_mask, sample_mask, with_exploration, write_mask)
from .theory import (AssumptionReport, SparsityPattern, build_patterns,
                     count_hamiltonian_cycles, hamiltonian_cycle_expectation,
                     monte_carlo_cycles, threshold_probability, verify_assumption1)

__version__ = "0.1.0"

__all__ = [
    "AliasTable", "AssumptionReport", "AttentionHead", "ConsistencyError",
    "CostReport", "CountersDisabledError", "DomainError", "EdgeMask",
    "EncoderModel", "EvalStats", "FdReport", "GradcheckReport",
    "HeadForwardTrace", "InputError", "LabeledBatch", "ModelConfig",
    "NonFiniteLossError", "SampleCounter", "SbmParams", "ShapeError",
    "SparsityPattern", "TaskConfig", "TrainMetrics", "add_self_loops",
    "bce_loss", "build_patterns", "check_edge_multiplier", "check_model_gradients",
    "count_hamiltonian_cycles", "density_report", "duplicate_rate", "evaluate",
    "finite_diff_check", "flops_attention", "generate_batch",
    "hamiltonian_cycle_expectation", "head_backward", "head_forward", "infer_sbm",
    "init_head", "init_model", "instrument_forward", "mask_density",
    "masked_softmax_edges", "model_backward", "model_forward", "monte_carlo_cycles",
    "named_params", "read_mask", "sample_mask", "sigmoid", "softmax_all",
    "threshold_probability", "train_loop", "train_step", "verify_assumption1",
    "with_exploration", "write_mask",
]
