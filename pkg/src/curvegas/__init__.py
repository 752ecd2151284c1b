"""Dyson-type Brownian motion and Coulomb gases on smooth Jordan curves."""

__version__ = "0.1.0"

from ._backend import BACKEND
from .coulomb import (Configuration, InverseTemperature, discriminant, drift, energy,
                      grad_energy, log_density_unnormalized)
from .curves import ArcLengthCurve, CurveSpec, build_arclength_curve
from .errors import (ConfigError, CurvegasError, DegenerateConfiguration, DegeneratePath,
                     DomainViolation, InsufficientSmoothness, InvalidCurve, NonConvergence,
                     NonRegularCurve, OffCurvePath, OffCurvePoint, SelfIntersection,
                     StepFailure, StepTooLarge, SupportViolation)
from .fekete import (FeketeResult, extrapolate_capacity, flow_path, gradient_flow,
                     transfinite_diameter)
from .functionals import (CurveTestFunction, DiscretePath, hydro_residual, rate_I, rate_J,
                          tangential_derivative)
from .gibbs import GapBump, SampleBatch, mcmc_step, sample_stationary, stationarity_residual
from .sde import (SimulationConfig, TrajectoryRecord, quotient_map, simulate,
                  simulate_ensemble, step, transplant)
