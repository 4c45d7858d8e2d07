"""Experiment harness: data generators, adversaries, baselines, ground truth and audits."""
