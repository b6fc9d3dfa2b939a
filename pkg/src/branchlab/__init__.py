"""branchlab: branching trees, their exact laws, and their scaling limits.

Subpackages by topic:

- ``trees``        plane trees, functionals, restriction, local topology
- ``offspring``    offspring distributions and size-biasing
- ``exact``        exact tail/point/prefix laws and the enumeration oracle
- ``samplers``     seeded tree samplers (plain, spine, rejection)
- ``discrete_lab`` local-convergence and ratio-limit experiments for trees
- ``cb``           continuous-state branching processes, exact transitions
- ``excursions``   Brownian height excursions, immortal/capped spinal heights
- ``cli``          reproducible experiment runner
"""

__version__ = "0.1.0"
