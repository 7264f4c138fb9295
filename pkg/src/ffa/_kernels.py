"""Fused plasticity kernel for the online spiking trainer.

The per-timestep update touches every synapse (the eligibility trace decays
even where no spike arrived), so the online loop is memory-bound.  Fusing
impulse construction, the eligibility update and the weight increment into
one pass roughly halves the traffic.  The numba version is bit-identical to
the numpy fallback; a test asserts this.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _HAVE_NUMBA = False


def plasticity_step_numpy(
    e: np.ndarray,
    weights: np.ndarray,
    post: np.ndarray,
    in_spikes: np.ndarray,
    tau_e: float,
    eta: float,
) -> None:
    """Reference implementation: impulse = outer(post, in_spikes)."""
    e += (1.0 - tau_e) * (np.outer(post, in_spikes) - e)
    weights += eta * e


if _HAVE_NUMBA:

    # serial on purpose: the update is memory-bound at this layer size and
    # thread dispatch costs more than it saves
    @njit(cache=True)
    def _plasticity_step_jit(e, weights, post, in_spikes, tau_e, eta):  # pragma: no cover
        n_out, n_in = e.shape
        one_minus = 1.0 - tau_e
        for j in range(n_out):
            pj = post[j]
            for i in range(n_in):
                g = pj * in_spikes[i]
                e[j, i] += one_minus * (g - e[j, i])
                weights[j, i] += eta * e[j, i]

    def plasticity_step(e, weights, post, in_spikes, tau_e, eta) -> None:
        _plasticity_step_jit(e, weights, post, in_spikes, tau_e, eta)

else:
    plasticity_step = plasticity_step_numpy
