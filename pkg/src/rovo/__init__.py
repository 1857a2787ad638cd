"""Multi-camera fisheye visual odometry with a synthetic test harness.

Submodules:

* ``geometry``: rigid transforms in axis-angle form
* ``fisheye``: equidistant lens projection
* ``rig``, ``hybrid``: rig layout and the plane/cylinder warp
* ``world``, ``files``: synthetic scenes, observations and their file formats
* ``frontend``: inter-view match filters, triangulation and track bookkeeping
* ``estimation``: P3P, multi-view RANSAC and pose refinement
* ``lm``, ``backend``: Levenberg-Marquardt and windowed bundle adjustment
* ``pipeline``, ``evaluation``, ``cli``: the frame loop, metrics and commands

Submodules are not imported eagerly so ``rovo.cli`` can apply thread limits
before numerical libraries load.
"""

from .errors import RovoError

__version__ = "0.1.0"
__all__ = ["RovoError", "__version__"]
