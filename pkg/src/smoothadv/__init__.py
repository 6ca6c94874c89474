"""Smoothness-constrained adversarial perturbations and their forensics.

The package builds a pixel graph from an image, smooths signals with the
inverse of its regularized Laplacian, and uses that operator to craft
adversarial perturbations that are smooth exactly where the attacked
image is — plus the evaluation protocol and a magnification tool that
makes such perturbations visible.
"""

from .attacks import (
    ATTACK_KINDS,
    AdamState,
    AttackConfig,
    AttackResult,
    adam_step,
    attack_with_epsilon,
    clip_valid,
    cw_attack,
    fgsm,
    ifgsm,
    latent_gradient,
    latent_objective,
    make_attack,
    pgd2,
    scw_attack,
    write_trajectory,
)
from .data import (
    load_idx_dataset,
    load_png_dataset,
    read_idx_images,
    read_idx_labels,
    sample_photo,
    save_idx_dataset,
    save_png_dataset,
    synthetic_digits,
    write_idx_images,
    write_idx_labels,
)
from .errors import DegenerateGraphError, EmptyReportError, NumericalError, TrainingError
from .evaluation import (
    DEFENSE_BILATERAL,
    EvalReport,
    ImageOutcome,
    bilateral_defense,
    characteristic_grid,
    emit_report,
    evaluate_attack,
    merge_multi_epsilon,
    operating_characteristic,
    read_report_csv,
)
from .graph import (
    GraphConfig,
    RegularizedLaplacian,
    build_adjacency,
    degree_vector,
    feature_kernel,
    laplacian_for_image,
    normalized_adjacency,
    regularized_laplacian,
    smoothness_energy,
)
from .image import (
    as_features,
    from_features,
    l2_distortion,
    load_image,
    load_raw,
    save_image,
    save_raw,
    validate_image,
)
from .magnify import BilateralConfig, bilateral_filter, guided_bilateral, local_stats, magnify
from .nn import (
    ConvNet,
    LinearClassifier,
    TrainConfig,
    load_weights,
    loss_input_gradient,
    margin_loss,
    margin_loss_grad,
    predict,
    reference_cnn,
    save_weights,
    train_reference_cnn,
)
from .smoothing import (
    DIRECT_LIMIT,
    SmoothingOperator,
    build_smoothing_operator,
    cg_solve,
    smooth,
    smooth_adjoint,
    smooth_normalized,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
