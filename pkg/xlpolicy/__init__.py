"""
xlpolicy - Transformer-XL policies learned from multimodal demonstrations

Behavior cloning followed by PPO fine-tuning, on top of a small float64
autodiff kernel, with a synthetic desk environment and scripted expert.
"""

__version__ = "1.0.0"
