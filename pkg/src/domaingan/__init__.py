"""Multi-domain image-to-image translation with a single condition-coded generator."""

from .conditional_norm import (
    CBIN,
    CBINParams,
    InstanceNorm,
    cbin_forward,
    concat_condition,
    instance_norm_forward,
    one_hot_encode,
)
from .networks import (
    DiscriminatorConfig,
    EncoderConfig,
    Generator,
    GeneratorConfig,
    LatentDistribution,
    LatentEncoder,
    MultiScaleDiscriminator,
    build_discriminator,
    build_encoder,
    build_generator,
    reparameterize,
)
from .objectives import (
    LossWeights,
    cycle_loss,
    kl_loss,
    latent_regression_loss,
    lsgan_d_loss,
    lsgan_g_loss,
    paired_recon_loss,
)
from .regimes import (
    ModelConfig,
    OptimizerConfig,
    RegimeConfig,
    TrainState,
    init_train_state,
    load_train_state,
    run_training,
    save_train_state,
)

__version__ = "0.1.0"
