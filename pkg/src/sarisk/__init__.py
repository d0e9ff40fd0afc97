"""Recursive VaR/CVaR estimation with adaptive unconstrained importance sampling.

The package couples a stochastic-gradient quantile recursion with a
companion tail-mean recursion (both Cesaro-averaged), and accelerates them
with adaptive importance sampling: mean translation for Gaussian structural
noise, exponential tilting for normal-inverse-Gaussian noise, warmed up by a
moving confidence level.
"""
from .distributions import (EsscherDomain, EsscherDomainError, GaussianStd,
                            NigParams, bessel_k0, bessel_k1, esscher_domain,
                            gaussian_translation_weight, gaussian_W,
                            nig_cumulant, nig_cumulant_grad, nig_density,
                            sample_gaussian, sample_nig)
from .driver import ConfigError, RunConfig, parse_config, run_table
from .is_esscher import run_combined_esscher, run_phase1_esscher, run_two_phase_esscher
from .is_translation import run_combined, run_phase1, run_two_phase
from .loss_models import (BasketSpec, GbmSpec, GrowthBound, LossModel,
                          NigCallSpec, SparkSpreadSpec, basket_model,
                          bs_call_price, bs_put_price, build_model,
                          nig_call_model, short_put_model, spark_spread_model)
from .naive_estimator import NaiveReport, run_naive
from .oracle import analytic_put_var_cvar, empirical_quantile, grid_minimize_q, quadrature
from .sa_engine import (ConfidenceSchedule, NumericAbortError, RiskState,
                        StepSchedule, alpha_at, cesaro_update,
                        phase1_confidence_schedule, rm_update, step)

__version__ = "0.1.0"
