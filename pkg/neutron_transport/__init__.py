'''
Monte Carlo engine for the neutron transport equation.

Simulates neutron random walks (NRW), neutron branching processes (NBP) and
Doob h-transformed walks to estimate the principal eigenvalue and eigenfunctions,
with cost accounting, budget planning, a particle filter and an analytic slab oracle.
'''

__version__ = "0.1.0"
