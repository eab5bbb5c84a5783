"""SAR scatterer workbench: attributed-scattering-center imaging, adversarial
scatterer generation, and scatterer-robust classifier training."""

from .scattering import (
    ImagingConfig,
    RawScattererParams,
    ScattererParams,
    ScatteringType,
    WindowSpec,
    denormalize_params,
    eval_normalized_response,
    eval_raw_response,
    normalize_params,
    scattering_type_template,
)
from .imaging import (
    cartesian_grid,
    form_image,
    fuse,
    image_jacobian_fd,
    pixel_spacing,
    synthesize_frequency_data,
    taylor_window,
    xband_config,
)
from .attack import AttackConfig, AttackResult, run_attack
from .dataset import DatasetConfig, Sample, build_templates, generate_dataset, generate_samples

__version__ = "0.1.0"
