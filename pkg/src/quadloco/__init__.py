"""Perceptive quadruped locomotion at desk scale.

Procedural terrain, a simplified quadruped simulator with a CPG action
space, height-sample perception with a parametric noise model, recurrent
belief-state networks, PPO teacher training, student distillation, and an
evaluation harness.
"""

__version__ = "0.1.0"
