"""Pipeline ring / sub-ring / multi-lane broadcast for block-distributed
accumulation tensors, with a serial oracle, deterministic network simulation,
and memory/performance models."""

from .accuracy import ErrorReport, VerifyResult, compare, l1_error, l2_error, verify
from .config import ExperimentConfig, config_from_dict, load_config
from .engine import (ExperimentReport, RingTopology, build_subrings,
                     lane_ring_id, run_experiment, run_measurement)
from .errors import (ConfigError, ContractViolation, DeadlockError, FitError,
                     RingAccError, TransportError, UndefinedNormError)
from .memory import (AllocationTracker, MemoryPlan, bytes_for_entries,
                     gsigma_total_bytes, gt_growth_ratio, make_plan, slice_bytes)
from .perf import (LinearFit, SweepPoint, effective_bandwidth, fit_linear,
                   message_counts, model_utilization, predict_elapsed, run_sweep)
from .tensor import (CombinedIndexSpace, ExperimentShape, GSigma, GtSlice,
                     Origin, PartitionPlan, accumulate_g4, generate_gsigma,
                     index_diff, make_partition, oracle_accumulate)
from .transport.sim import SimLinkConfig, simulate_ring_traffic

__version__ = "0.1.0"
