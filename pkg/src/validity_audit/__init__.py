"""Test-validity audits for interaction datasets.

Core numbers of the sample graph bound the rank a completion can be checked
against; Pareto tail fits turn that into coverage predictions and data
collection costs; ensembles of possible worlds show how much unobserved
entries can disagree while matching every observation.
"""

from .errors import (AuditError, ConvergenceError, DomainError, ParseError, PreconditionError,
                     RankDeficientError, SchemaError, TailFitError, ValidationError, WorldRejected)
from .graph import (CoreDecomposition, DegreeSequence, SampleGraph, group_core_cdf,
                    ingest_edge_list, ingest_movielens, is_k_connected, kcore_decompose,
                    project_ternary, write_edge_list)
from .risk import (RiskEstimate, ValidityVerdict, bregman_project, estimate_risk, hoeffding_bound,
                   is_isomeric, loss, markov_lower_bound, pythagorean_check, restricted_ranks,
                   true_risk, validity_verdict)
from .scaling import (CostReport, benchmark_cost, log10_scaling_bound, scaling_bound,
                      simulate_coverage_growth, simulate_first_success)
from .simulate import (BiasedSampler, GeneratorConfig, biased_sampler, generate_ba,
                       generate_pareto_bipartite, undirected_degrees)
from .tail import (Coverage, PowerLawFit, coverage_table, empirical_coverage, fit_pareto_tail,
                   survival, validity_coverage)
from .worlds import (ECDF, DisagreementStats, Factorization, World, WorldEnsemble, WorldGenerator,
                     WorldWeights, disagreement_stats, fit_base_factorization, generate_ensemble,
                     generate_world, load_ensemble, nae, orthonormal_subspace, rank_residual,
                     save_ensemble)

__version__ = "0.1.0"
