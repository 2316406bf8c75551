"""Tune preprocessing filters against full-reference video quality metrics."""

__version__ = "0.1.0"

from .filters import FilterChain, FilterSpec, Kernel, ParamSchema, apply_chain, apply_filter
from .frameio import VideoFrame, VideoSequence, extend_sequence, read_y4m, read_y4m_file, write_y4m, write_y4m_file
from .metrics import MetricAdapter, MetricScore, score_sequence
from .optimize import GAConfig, KernelTrainConfig, fd_gradient, ga_optimize, train_kernel
from .pipeline import EncoderAdapter, GainReport, RDPoint, TuningJob, run_compressed_eval, tune_preprocessing
from .subjective import PairwiseVotes, bt_fit, bt_rank
