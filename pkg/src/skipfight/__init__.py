"""MicroFighter environment, frame-skip control and a numpy PPO trainer."""

__version__ = "0.1.0"
