"""Riemann-invariant solver and lifespan experiments for u_tt = c(u_x)^2 u_xx."""
from .characteristics import (CharTrace, MultiTracer, Onset, RiccatiPrediction, SnapshotTap,
                              TraceError, onset_diagnostic, predict_pole, trace_with_riccati)
from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .initialdata import (ConditionReport, InitialData, Profile, classify_conditions,
                          riemann_initial)
from .lifespan import (FitError, FitResult, LifespanRecord, SweepOptions, fit_exponential,
                       fit_power, read_records, sweep, write_records)
from .solver import (RiemannField, SolverConfig, SolverError, StopInfo, extract_u, init_field,
                     run_reference, run_until_stop, step)
from .wavespeed import (DomainError, ValidationReport, WaveSpeed, WaveSpeedError, evaluate,
                        invert_G, make_wavespeed, validate_assumptions)

__version__ = "0.1.0"
