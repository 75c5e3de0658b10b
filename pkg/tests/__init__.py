"""Test package for contraction-tuner."""
