"""Conditional adversarial reconstruction of two-phase porous media."""

from porogen.grid import (
    BinaryImage,
    ConditionalInput,
    Mask,
    PGMError,
    SoftImage,
    binarize,
    load_image,
    load_mask,
    make_conditional_input,
    porosity,
    save_image,
    save_mask,
)

__version__ = "0.1.0"

__all__ = [
    "BinaryImage",
    "ConditionalInput",
    "Mask",
    "PGMError",
    "SoftImage",
    "binarize",
    "load_image",
    "load_mask",
    "make_conditional_input",
    "porosity",
    "save_image",
    "save_mask",
]
