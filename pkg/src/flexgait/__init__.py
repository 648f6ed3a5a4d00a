"""Hybrid rigid/soft multibody gait simulation with PPO imitation training."""

__version__ = "0.1.0"
