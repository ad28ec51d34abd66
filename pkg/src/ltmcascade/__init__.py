"""Linear threshold cascades on networks: exact dynamics, configuration-model
ensembles and the mean-field recursion that predicts them."""
from .dynamics import TrajectoryRecord, pltm_as_ltm, run, run_time_varying, simulate_batch
from .ensembles import (branching_root_expectation, sample_branching, sample_directed_cm,
                        sample_undirected_cm)
from .graph import Network, NetworkValidationError, build_network, neighbor_sum
from .ingest import AssignmentSpec, assign, parse_edge_list, write_results
from .meanfield import (MeanFieldMaps, build_maps, concentration_constants, fixed_points, iterate,
                        iterate_time_varying, local_indicators, varphi, varphi_derivative, varphi_second)
from .statistics import (NetworkStatistics, ThresholdCDF, ThresholdSchedule, UndirectedStatistics,
                         check_compatibility, extract, synthesize)

__version__ = "0.1.0"
