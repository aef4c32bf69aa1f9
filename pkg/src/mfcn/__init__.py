"""Manifold filter-combine networks on sampled point clouds.

Modules: manifolds (analytic spectra, sampling, quadrature), graphs
(Laplacian constructions), spectral (eigensolvers and filters), network
(layer forward passes, scattering, error budgets), convergence (metric
harness and rate fits), io (file formats), cli (command line).
"""

__version__ = "0.1.0"

from .manifolds import (DensitySpec, EigenFunction, ManifoldSpec, PointCloud,
                        continuum_filter_value, equispaced_circle_cloud,
                        evaluate_Pn, manifold_eigenpair, quadrature,
                        sample_points, scale_factor)
from .graphs import (GraphLaplacian, KernelSpec, bandwidth_schedule,
                     build_dense_gaussian, build_epsilon, build_knn,
                     kernel_constant)
from .spectral import (EigenSystem, FilterSpec, apply_filter, eig_dense_sym,
                       eig_partial, graph_fourier, lipschitz_bound,
                       wavelet_bank)
from .network import (LayerSpec, NetworkSpec, composed_error_bound,
                      dlf_poly_filterbank, filter_error_bound, layer_forward,
                      lazy_walk_power, mcn_forward, network_forward,
                      scattering_moments, scattering_moments_approx,
                      weight_sums)
from .convergence import (ConvergenceReport, SpectralErrorSample, SweepConfig,
                          fit_rate, measure_alpha, measure_beta,
                          measure_filter_error, measure_gamma,
                          measure_network_error, run_sweep)
