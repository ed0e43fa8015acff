#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""Cooperative interrupt handling for long-running simulations."""

import signal
import threading

_interrupt_requested = threading.Event()


def install_interrupt_handlers() -> None:
    """Route SIGINT/SIGTERM into a flag that simulation loops poll."""

    def handler(signum, frame):
        _interrupt_requested.set()
        raise KeyboardInterrupt

    signal.signal(signal.SIGINT, handler)
    signal.signal(signal.SIGTERM, handler)


def check_interrupted() -> None:
    """Raise KeyboardInterrupt once a shutdown signal was received.

    Event and step loops call this every `simulation.interruptCheckEvery`
    iterations so worker processes stop at a consistent point.
    """
    if _interrupt_requested.is_set():
        raise KeyboardInterrupt


def reset_interrupt() -> None:
    """Clear a pending interrupt request (used between CLI invocations in one process)."""
    _interrupt_requested.clear()
