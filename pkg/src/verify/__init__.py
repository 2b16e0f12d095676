"""
Numerical checks of the sector, suppression, escape-time and rate bounds.
"""
