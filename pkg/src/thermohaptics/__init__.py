"""Simulation and stimulus planning for mid-air ultrasound haptics through absorbing gloves.

Modules
-------
array_model
    Dual phased-array geometry and focusing phases.
acoustic_field
    Piston-source superposition, intensity and radiation pressure.
modulation
    SP/AM exposure modes and safety-gated exposure planning.
thermal_model
    Absorbed flux and axisymmetric conduction through fabric and skin.
experiment_harness
    Thermal measurement runs and the randomised perceptual protocol.
cli
    ``thermohaptics`` command-line front end.
"""

__version__ = "0.1.0"
