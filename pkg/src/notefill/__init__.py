"""notefill: masked discrete diffusion for symbolic music.

Tokenizes MIDI onto a fixed 16th-note grid, trains a hierarchical
transformer to predict absorbed tokens, samples/infills/accompanies with
adjustable step counts and optional density guidance, evaluates sets with
framewise self-similarity metrics, and demonstrates how simulated
annealing can forge those metrics from an arbitrary image.
"""

from .diffusion import DiffusionSchedule
from .errors import NotefillError
from .model import Denoiser, DenoiserConfig, load_checkpoint, save_checkpoint
from .sampling import MaskPattern, accompany, guided_sample, infill, infill_central, sample, unconditional
from .tokens import TokenSequence, export_midi, parse_midi, transpose_augment

__all__ = [
    "DiffusionSchedule",
    "NotefillError",
    "Denoiser",
    "DenoiserConfig",
    "load_checkpoint",
    "save_checkpoint",
    "MaskPattern",
    "accompany",
    "guided_sample",
    "infill",
    "infill_central",
    "sample",
    "unconditional",
    "TokenSequence",
    "export_midi",
    "parse_midi",
    "transpose_augment",
]

__version__ = "0.1.0"
