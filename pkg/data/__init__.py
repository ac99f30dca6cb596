"""
Data sources for wow_flow.

This package contains:
- idx: IDX ubyte image reader
- images: images to point clouds
- generators: synthetic clouds (circles, uniform, Gaussian)
- sources: source and target metameasures
- container: the WOWDS1 dataset format
- presets: bundled run configurations
"""
