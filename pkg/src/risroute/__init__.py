"""Deterministic simulator for RIS-assisted multihop D2D routing.

Builds 2-D topologies of a source, a destination, intermediate users (IUs)
with ON/OFF Markov traffic, and phase-tunable reflecting surfaces (RISs);
routes packets hop by hop under a total delay budget, preferring idle IUs
and falling back to single or double RIS reflections; and reproduces the
coverage, density, traffic-validation, comparison, and mobility studies as
seeded CSV experiments.
"""

__version__ = "0.1.0"
