"""Physical one-slot dynamics shared by the simulator and the OFT search."""

from __future__ import annotations

import numpy as np


def energy_inverse_cdf(pmf: np.ndarray):
    """Map uniforms to clipped arrivals distributed per ``pmf`` (on 0..capacity)."""
    cdf = np.cumsum(pmf)
    cdf[-1] = 1.0

    def draw(u):
        return np.searchsorted(cdf, u, side="right").astype(np.int64)

    return draw


def step_physical(battery, aocsi, action, u_channel, energy, xi, capacity):
    """Advance true battery and untruncated AoCSI by one slot.

    Returns ``(battery', aocsi', transmitted, success, overflow)``. A command
    with an empty battery sends nothing; a transmission spends one unit even
    if the packet is dropped.
    """
    sent = action & (battery >= 1)
    success = sent & (u_channel < xi)
    new_aocsi = np.where(success, 1, aocsi + 1)
    raw = battery - sent + energy
    new_battery = np.minimum(raw, capacity)
    return new_battery, new_aocsi, sent, success, raw - new_battery
