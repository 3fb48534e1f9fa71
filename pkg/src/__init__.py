"""
CatSim - photon-subtracted squeezed state simulation and tomography toolkit
"""

__version__ = "1.0.0"
