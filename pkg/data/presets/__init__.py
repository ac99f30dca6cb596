"""
Bundled run configurations, addressable by name with ``--config circles`` or ``--config mnist``.
"""
