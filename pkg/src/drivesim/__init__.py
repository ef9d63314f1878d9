"""Driver-behavior imitation workbench: 2-D highway traffic simulation from
recorded trajectories, adversarial and supervised imitation learning, rule
and statistical baselines, and validation metrics."""

__version__ = "0.1.0"
