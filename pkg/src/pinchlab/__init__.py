"""pinchlab: a mean-convex bead chain that pinches at infinitely many times.

Modules
-------
profilekit   exact profile functions, mean-convexity and self-similarity checks
shrinkerlab  shrinking spheres, cylinders and the Angenent doughnut
axiflow      axisymmetric level-set solver
epochscope   topology observers and singular-epoch detection
"""

__version__ = "0.1.0"
