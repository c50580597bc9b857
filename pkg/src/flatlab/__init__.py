"""flatlab: computations on translation surfaces.

Saddle connections, systoles along SL(2,R) orbits, quantitative
non-divergence of horocycle arcs, Cantor sets of bounded directions and
billiard recurrence.
"""

__version__ = "0.1.0"
