"""Transition-encoding image translation (C++ core with numpy bindings)."""

import torch as _torch  # noqa: F401  loads libtorch before the extension

from ._core import (  # noqa: F401
    ConfigError,
    DimensionError,
    DomainError,
    Model,
    TeganError,
    adv_real_img,
    adv_real_newimg,
    adv_trans,
    attribute_names,
    frechet_distance,
    make_triplet,
    parse_config,
    psnr,
    recons_img_cyc,
    recons_img_self,
    render,
    run_cli,
    ssim,
    version,
)

__version__ = version()
