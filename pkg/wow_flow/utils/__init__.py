"""Helpers shared across wow_flow: validators, seeding, resources, binary and CSV I/O."""
