"""
Ring-law toolkit: spectral density of sub-unitary random matrices T = UH
"""

__version__ = '1.0.0'
