"""Active visual tracking lab for space non-cooperative objects.

A ray-cast RGB-D simulator of a chaser spacecraft tracking an uncontrolled
target, a deep Q-learning tracker, a position-based visual servoing baseline,
and the evaluation protocol tying them together.
"""

__version__ = "0.1.0"
