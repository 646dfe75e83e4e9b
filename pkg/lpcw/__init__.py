from .numerics import (LpcwError, OptimizerSpec, QuadratureSpec, SeededStream,
                       VariationalSolution)
from .rho_dist import (BaseMeasure, PExponent, Regime, RhoP, measure_by_name,
                       psi_bivariate, psi_p, sample_rho_p)
from .ghs import (AdditiveProcess, AdditiveProcessConfig, GhsDensity,
                  ghs_identity_check, product_identity_check, sample_u,
                  theta_mellin)
from .sphere_mc import (GibbsParams, GibbsSampler, McEstimate, SpinConfig,
                        clt_test, estimate_partition, magnetization_stats,
                        sample_sphere)
from .free_energy import (RateFunction, b_np, beta_c, classical_cw_free_energy,
                          legendre_rate, limiting_free_energy,
                          limiting_free_energy_p2,
                          limiting_free_energy_p_ge_2,
                          limiting_free_energy_p_in_1_2, optimal_t_star,
                          rate_function_rho1, super_linear_constant, tau)
from .oracle import (OracleReport, bnp_bruteforce, grid_oracle_2d,
                     partition_quadrature)
