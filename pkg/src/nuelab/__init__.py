"""Hyperbolic-time numerics for nonuniformly expanding maps."""
__version__ = "0.1.0"

from .errors import (ConfigurationError, ContractViolation, DomainError, EmptyTowerError,
                     IllDefinedNeighborhood, NuelabError, ParseError, PoleInsideDisk,
                     SingularityError, UnderdeterminedFit)
from .maps import (MapSystem, check_forward_invariance, doubling, misiurewicz_a0, quadratic,
                   synthetic, tent, ternary, viana)
from .orbits import (OrbitTrace, calibrate_delta, estimate_lambda, nondegeneracy_scan,
                     orbit_trace)
from .hyperbolic import (Censored, HyperbolicParams, h1_censored, h2, hyperbolic_times,
                         pliss_times, separation_time, super_hyperbolic_times, theta_bound)
from .tails import TailHistogram, polynomial_decay_check, sample_tail
from .fitting import DecayFit, fit_curve, fit_decay
from .correlations import Observable, correlate, invariant_histogram
from .partition import (Cell, PartitionElement, base_cells, branch_domain, build_partition,
                        core_set, element_checks, forbidden_profile)
from .tower import (RenewalConfig, TowerElement, gcd_period, induce_tower, renewal_simulate,
                    tower_tail)
from .seqcalc import (Seq, convolve, gamma_eta, gen_series_coeffs, subadditive_threshold,
                      tail_sum)
