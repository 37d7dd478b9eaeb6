"""Finite physically-realizable ensembles and the adaptive monitorings that track them."""
