"""Differentiable ray consistency over probabilistic voxel grids.

Occupancy fields store the probability that a cell is EMPTY (x), not that it
is occupied. Every loss, gradient and file in this package follows that
convention; soft occupancy is 1 - x.
"""

__version__ = "1.0.0"
