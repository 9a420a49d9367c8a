"""OTFS over-the-air computation: delay-Doppler transforms, channels, power control and ZP-SIC."""

from .aircomp_naive import (POLICIES, EmpiricalMse, MseBreakdown, PowerPolicy, SystemParams,
                            analytic_mse, arrange_frame, estimate_and_measure,
                            full_power_policy, optimal_power_given_eta, precode,
                            precoding_coefficients, single_device_policy, sort_devices,
                            theorem1_solve)
from .channel_model import (BlockChannelMatrix, ChannelEnsemble, MultipathChannel, PathTap,
                            build_channel_matrix, dump_ensemble, ensemble_from_gains,
                            load_ensemble, sample_channel, sample_ensemble)
from .grid_transforms import alpha, alpha_grid, dd_io_relation, isfft, sfft
from .sim_harness import (ConfigError, ExperimentConfig, MseReport, load_config,
                          oracle_theorem1, oracle_zeta, run_experiment, run_sweep, sweep_paths)
from .zp_sic import (RowEstimate, SicDesign, SicPlan, ZpLayout, estimate_row_clean,
                     estimate_row_sic, interference_sets, sic_design, sic_estimate_frame,
                     sic_plan, zeta_star, zp_arrange, zp_measure)

__version__ = "0.1.0"
