"""faithgat: train attention-based graph networks, fine-tune them for faithful
(stable) attention interpretations, attack them by node injection, and measure
prediction/interpretation stability."""

from .backend import KERNEL_BACKEND
from .attack import AttackResult, AttackSpec, inject_attack
from .data import Dataset, SplitMask, generate_sbm, load_dataset
from .fgai import FgaiConfig, FgaiLossBreakdown, faithfulness_report, fgai_train, tvd_loss
from .graph import Graph, build_graph, edge_index_map
from .metrics import FidelityCurve, fidelity_curve, g_jsd, g_tvd, stability_report
from .model import (
    AttentionState,
    GradientBundle,
    ModelParams,
    TrainConfig,
    forward,
    forward_with_override,
    grad_wrt_override,
    init_params,
    load_params,
    loss_and_grad,
    micro_f1,
    save_params,
    train_vanilla,
)
from .projection import project_l1_ball, sample_l1_ball
from .topk import OverlapReport, TopKSet, top_k_indices, top_k_overlap, topk_surrogate_grad, topk_surrogate_loss

__version__ = "0.1.0"
