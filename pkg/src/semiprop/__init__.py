"""Semiclassical propagators: Herman-Kluk, Van Vleck and stationary phase."""
from .flow import (BranchTrackingError, FlowIntegrationError, OmegaEstimate, SymplecticityError,
                   TrajectoryBatch, TrajectoryRecord, auxiliary_matrices, dump_trajectory_csv,
                   estimate_omega, hk_prefactor, integrate_batch, integrate_flow,
                   symplectic_residuals)
from .hamiltonians import HamiltonianModel, PhasePoint, builtin_model, check_gradients
from .herman_kluk import (HermanKlukPropagator, PhaseSpaceQuadrature, QuadratureCoverageWarning,
                          ThetaMultiplier, hk_kernel, hk_normalization, propagate_hk)
from .jets import Jet, JetMismatchError
from .reference import (BandError, KernelColumn, NyquistError, free_gaussian, free_kernel,
                        hyperbolic_kernel, kernel_column, mehler_kernel, split_step_propagate)
from .stationary_phase import (SpExpansion, SpParameters, oracle_quadrature, sp_expansion,
                               validate_parameters)
from .van_vleck import (ClassicalBranch, MaslovError, VanVleckPropagator, find_branches,
                        hessian_phi, maslov_index, vanvleck_kernel)
from .wavefunction import (BoundaryMassWarning, GridSpec, WaveFunction, gaussian_packet,
                           read_wavefunction, write_wavefunction)

__version__ = "0.1.0"
