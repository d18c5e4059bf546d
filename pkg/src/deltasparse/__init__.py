"""Sparse DeltaLSTM inference with column-balanced pruning, CBCSC storage and a cycle model."""
from .cbcsc import BankedWeights, CbcscMatrix, EncodingError, cbcsc_decode, cbcsc_encode, merge_banks, spmspv, split_banks
from .cbtd import AlphaSchedule, BalanceError, PruneConfig, cbtd_prune, iterative_prune, schedule_step, verify_balance
from .config import ConfigError, RunConfig
from .container import Container, ContainerError, read_container, write_container
from .delta import DeltaThreshold, SparseDeltaVector, delta_lstm_forward, delta_lstm_step, init_delta_state
from .lstm import LstmLayerParams, StackLayout, StackedWeights, lstm_forward, lstm_step, stack_weights
from .quant import ActivationLut, FixedPointFormat, FormatError, QuantConfig, QuantizedTensor, dequantize, lut_eval, quantize
from .sim import (AcceleratorConfig, SimTrace, balance_ratio, dram_energy, effective_throughput, op_saving,
                  peak_throughput, simulate_sequence, speedup_report)

__version__ = "0.1.0"
