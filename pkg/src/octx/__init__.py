"""Patch-level lesion detection on GLCM texture features.

Modules: ``glcm`` (co-occurrence features), ``patching`` (patch grids and
mask labels), ``fdtgs`` (double-threshold search), ``core`` (twin-cross
classifier and fusion), ``agent`` (label-noise filtering), ``metrics``,
``multirate`` (adaptive-modulation link simulator), ``synth`` (synthetic
frames), ``pipeline``, ``io`` and ``cli``.
"""

__version__ = "0.1.0"
