"""qsdlab: quasi-stationary distributions and extinction times of
one-dimensional population diffusions with environmental and demographic
noise.

Modules
-------
model        coefficient triples, hypothesis audit, growth rate
density      potential, Gibbs densities, stationary density
scale        scale function, exit probabilities, mean exit times
spectral     Liouville transform, eigenvalues, QSD density
sde          Monte Carlo engine
asymptotics  sweeps over eps, scaling fits and verdicts
cli          command-line front end
"""

__version__ = "0.1.0"
