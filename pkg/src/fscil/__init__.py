"""Parameter-isolated few-shot class-incremental learning.

One frozen-body / fine-tuned-tail classifier per session, CutMix virtual
categories during base training, and per-sample entropy routing across
the stored session models at test time.
"""

from .config import ExperimentConfig, Flags, Paths, ProtocolSpec, TrainSettings
from .cutmix import (MaskSpec, VirtualSample, assign_virtual_labels, cutmix,
                     make_mask, make_virtual_samples)
from .data import (FDS_MAGIC, GaussianSpec, LabeledDataset, make_gaussian_dataset,
                   read_fds, write_fds)
from .harness import (EvalResult, SessionReport, evaluate, run_protocol,
                      split_protocol, write_report)
from .nn import DenseLayer, LayerStack, SgdConfig, load_stack, save_stack, split_freeze
from .prototypes import (ProbVector, PrototypeSet, compute_prototype, cosine_ce_loss,
                         cosine_logits, softmax)
from .routing import (SubBlockLayout, UncertaintyRecord, base_uncertainty, entropy,
                      make_layout, route, sub_entropies)
from .sessions import (SessionModel, SessionModelStore, load_store, save_store,
                       train_base, train_incremental)

__all__ = [
    "ExperimentConfig", "Flags", "Paths", "ProtocolSpec", "TrainSettings",
    "MaskSpec", "VirtualSample", "assign_virtual_labels", "cutmix", "make_mask",
    "make_virtual_samples",
    "FDS_MAGIC", "GaussianSpec", "LabeledDataset", "make_gaussian_dataset",
    "read_fds", "write_fds",
    "EvalResult", "SessionReport", "evaluate", "run_protocol", "split_protocol",
    "write_report",
    "DenseLayer", "LayerStack", "SgdConfig", "load_stack", "save_stack", "split_freeze",
    "ProbVector", "PrototypeSet", "compute_prototype", "cosine_ce_loss",
    "cosine_logits", "softmax",
    "SubBlockLayout", "UncertaintyRecord", "base_uncertainty", "entropy",
    "make_layout", "route", "sub_entropies",
    "SessionModel", "SessionModelStore", "load_store", "save_store",
    "train_base", "train_incremental",
]
