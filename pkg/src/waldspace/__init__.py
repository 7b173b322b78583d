"""Geometry of the wald space of phylogenetic forests."""
