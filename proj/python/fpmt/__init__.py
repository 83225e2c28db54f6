"""Semi-supervised incident detection with GAN class balancing and pseudo-mixup."""

try:
    from ._fpmt import *  # noqa: F401,F403
except ImportError:  # in-tree build: the extension sits next to the build outputs
    from _fpmt import *  # noqa: F401,F403

__version__ = "0.1.0"
