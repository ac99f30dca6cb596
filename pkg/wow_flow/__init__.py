#!/usr/bin/env python
"""
wow_flow: flow matching between metameasures of point clouds.

The numerical core lives in the submodules (``measures``, ``ot``, ``sliced``, ``linearized``,
``couplings``, ``net``, ``flow``, ``evaluation``). ``WowFlow`` bundles them into the commands
the console script exposes and is loaded on first access.
"""

from config import __version__

__all__ = ["WowFlow", "__version__"]


def __getattr__(name):
    if name == "WowFlow":
        from wow_flow.pipeline import WowFlow

        return WowFlow
    raise AttributeError(f"module 'wow_flow' has no attribute '{name}'")
