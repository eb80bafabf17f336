"""Unbiased smoothing in state-space models with coupled conditional particle filters."""
from .baselines import FixedLagConfig, fixed_lag_smoother, pf_smoother
from .cpf import CpfOptions, ParticleSystem, ccpf_sweep, cpf_sweep, particle_filter, pf_init
from .estimator import (EstimatorConfig, ReplicateSummary, UnbiasedReport, combine_h_km, cost_units,
                        meeting_time_survey, run_coupled_chains, run_replicates)
from .functionals import IDENTITY, TestFunction, component
from .kalman import LinearGaussianSpec, kalman_filter, rts_smoother
from .models import (Ar1Params, LotkaVolterraParams, generate_data, make_ar1, make_lotka_volterra,
                     make_unlikely)
from .ssm import ModelSpec, NoiseTable, ObservationRecord, Trajectory, noise_at, propagate

__version__ = "0.1.0"
