"""Spectral-hole in-band noise monitoring: simulation, measurement and validation.

Modules: ``txgen`` (PDM-QPSK transmitter with spectral holes), ``fiberlink``
(Manakov split-step link), ``osa`` (spectrum analyzer emulation), ``holescan``
(hole scans and noise PSD reconstruction), ``coherentrx`` (receiver DSP and
constellation SNR), ``analysis`` (PSD to SNR), ``experiments``/``cli``
(figure-reproduction runs).
"""

__version__ = "0.1.0"
