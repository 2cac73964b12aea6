"""Deterministic image augmentations with box co-transformation."""
from .geometry import (
    GeometricTransform,
    crop_fraction,
    crop_transform,
    crop_window,
    flip,
    flip_transform,
    rotate,
    rotate_transform,
    shear,
    shear_transform,
    transform_boxes,
    warp,
)
from .image import ImageError, check_image, read_png, write_png
from .photometric import (
    add_noise,
    adjust_brightness,
    adjust_exposure,
    adjust_saturation,
    cutout,
    cutout_regions,
    gaussian_blur,
    gaussian_kernel,
    grayscale,
    maybe_grayscale,
    shift_hue,
)
from .pipeline import (
    KITCHEN_PRESET,
    AugmentSpec,
    SpecError,
    apply_pipeline,
    dump_spec,
    geometric_transform,
    load_spec,
    parse_spec,
    substream,
)
