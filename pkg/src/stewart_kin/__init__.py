"""Two-stage forward kinematics for the 6-6 Gough-Stewart platform.

A distance-matrix graph network proposes a pose from the six leg lengths and
a Newton-Raphson loop on SE(3) twists refines it, using a hyperpower
iteration in place of an explicit Jacobian inverse.
"""

__version__ = "0.1.0"
