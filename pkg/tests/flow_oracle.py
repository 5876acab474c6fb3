"""Hand-stepped reference for the closed programming loop.

This is an independent, minimal restatement of the control flow used by
the deterministic oracle tests: exact reads, the erase mean law, the
fixed write value. It is written against the loop definition, not
against the package internals, so structural drift in the real
implementation cannot silently pass.
"""

import math

READ_NS = 200_000
WRITE_NS = 100
ERASE_STEP = 10
G_FLOOR = 3.0
G_ON = 100.0


def hand_flow(
    g_start: float,
    g_low: float,
    g_high: float,
    tau: float,
    max_iterations: int = 200,
    cp_floor: int = 0,
    relax_aware: bool = False,
):
    """Replay the loop on a noiseless device.

    Returns (events, converged); each event is a tuple
    (op, pulse_width_ns, cp_after, g_read, waited) mirroring one trace
    record. With no relaxation the re-read of the waiting branch equals
    the tentative read, so the relax-aware loop accepts on its first
    verification pass.
    """
    g = g_start
    cp = 0
    events = []
    for _ in range(max_iterations):
        r = g
        if g_low <= r <= g_high:
            events.append(("read", READ_NS, cp, r, relax_aware))
            return events, True
        if r > g_high:
            cp += 1
            width = max(cp, 1) * ERASE_STEP
            g = G_FLOOR + (g - G_FLOOR) * math.exp(-width / tau)
            events.append(("erase", width, cp, r, False))
        else:
            cp = max(cp_floor, cp - 1)
            g = G_ON
            events.append(("write", WRITE_NS, cp, r, False))
    return events, False
