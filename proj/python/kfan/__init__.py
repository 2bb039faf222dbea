"""K-fan multimodal network: training pipeline and evaluation."""

try:
    from ._kfan import *  # noqa: F401,F403  (installed package layout)
except ImportError:
    from _kfan import *  # noqa: F401,F403  (build-tree layout)
