from config.get_version import get_version

"""
Test Suite for wow_flow

The test suite covers:
- Point clouds, permutations and metameasure batches
- Exact, entropic, sliced and lazy-linearized transport
- Outer/inner couplings and paired-batch sampling
- The velocity network, its gradients and checkpoints
- Training, Euler integration and evaluation (NNA, KDE)
- Dataset containers, IDX conversion and run configuration
- The command line entry point

Test Categories:
- Unit tests: Fast tests on small seeded inputs
- Slow tests: Statistical checks over many draws, marked for optional execution

To run the tests:
    pytest                    # Run all tests
    pytest -m "not slow"      # Skip the statistical checks
    pytest -v                 # Verbose output
"""

__version__ = get_version
