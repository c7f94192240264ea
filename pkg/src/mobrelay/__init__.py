"""Throughput optimization for a buffer-aided mobile relay.

Library surface: scenario modeling (:mod:`mobrelay.scenario`), water-filling
primitives (:mod:`mobrelay.waterfill`), generic solvers
(:mod:`mobrelay.convex_core`), fixed-trajectory power allocation
(:mod:`mobrelay.power_opt`), fixed-power trajectory optimization
(:mod:`mobrelay.traj_opt`), the alternating optimizer
(:mod:`mobrelay.joint_opt`), the free-endpoint closed form
(:mod:`mobrelay.free_endpoint`), and the experiment harness/CLI
(:mod:`mobrelay.harness`).
"""

from ._kernels import BACKEND as kernel_backend

__version__ = "0.1.0"

__all__ = ["kernel_backend", "__version__"]
