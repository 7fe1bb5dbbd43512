from .io import ImageFormatError, as_image, load_image, read_manifest, save_image, write_manifest
from .metrics import psnr, ssim
from .synth import GENERATORS, DatasetSpec, synth_dataset, synth_image

__all__ = [
    "GENERATORS",
    "DatasetSpec",
    "ImageFormatError",
    "as_image",
    "load_image",
    "psnr",
    "read_manifest",
    "save_image",
    "ssim",
    "synth_dataset",
    "synth_image",
    "write_manifest",
]
