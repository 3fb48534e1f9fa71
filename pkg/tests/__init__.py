"""Test package for CatSim."""
