"""Box propagation, propagation tightness, and desk-scale certified training."""

from .boxes import Box, affine_transform, relu_transform
from .certify import certify, certify_batch, logit_diff_upper
from .datasets import DatasetHandle, gen_lowrank, gen_toy2d, load_mnist
from .dln import (
    Dln,
    TightnessReport,
    collapse,
    finite_eps_tightness_oracle,
    global_tightness,
    is_propagation_invariant_2layer,
    layerwise_radius,
    local_tightness,
    non_invariance_witness,
    optimal_radius,
    synthesize_pi_signs,
)
from .init_scaling import (
    InitTightnessEstimate,
    depth_tightness_bound,
    init_tightness,
    mc_linear_init_tightness,
    mc_relu_tightness_factor,
    slack_growth,
)
from .nets import (
    Affine,
    Conv2d,
    Flatten,
    Gradients,
    PropagationTrace,
    Relu,
    ReluNet,
    backward_box,
    backward_point,
    build_cnn3,
    build_mlp,
    forward,
    ibp_forward,
    load_net,
    save_net,
)
from .numerics import ln_gamma, matmul, sample_gaussian_matrix, sample_haar_orthogonal
from .reconstruction import ReconstructionResult, mc_reconstruction, reconstruction_radii, theory_optimal_growth
from .rng import Rng
from .training import (
    TrainConfig,
    TrainReport,
    gradient_alignment_probe,
    loss_ce,
    loss_robust_ce,
    loss_sabr,
    pgd_attack,
    train,
)

__version__ = "0.1.0"
