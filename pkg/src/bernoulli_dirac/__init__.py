"""Bernoulli-Dirac localization toolkit."""
