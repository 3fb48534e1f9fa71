"""
Core numerics for CatSim: Fock and Gaussian state models, calibration,
acquisition synthesis, tomography and cat-state analysis
"""
