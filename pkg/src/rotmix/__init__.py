"""Mixture estimation by regularized optimal transport."""

from .data_io import (ModelDocument, load_csv, load_model, sample_mixture, save_document,
                      save_model)
from .errors import (ClampWarning, DataError, DegenerateFitError, DomainError,
                     ModelFormatError, NonFiniteObjectiveError, RotmixError, SeedingError)
from .estimator import (Dataset, FitConfig, FitTrace, MixtureModel, evaluate, fit,
                        init_kmeanspp, init_random_points, m_step, objective, prune,
                        weight_update)
from .exponential_family import (FamilySpec, bernoulli, bregman_div, dual_bregman_data_div,
                                 exponential, gaussian_spherical, get_family, log_density,
                                 poisson, to_expectation, to_natural)
from .transport import (RegularizerSpec, bregman_projection_check, cost_matrix, estep,
                        estep_entropic, estep_hard, estep_quadratic, make_regularizer,
                        plan_entropy)

__version__ = "0.1.0"
