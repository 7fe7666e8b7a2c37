"""Universal sl3 link homology over Q[a,b,c] via Koszul matrix factorizations.

Subpackages:

* ``ring``    -- exact q-graded polynomial arithmetic
* ``mf``      -- matrix factorizations, Koszul matrices, slice homology
* ``web``     -- trivalent webs, their factorizations and vertex identification
* ``cob``     -- foam terms, elementary cobordism maps and relation checks
* ``linkhom`` -- link diagrams, cubes of resolutions and bigraded homology
* ``service`` -- FastAPI application exposing the engine
* ``cli``     -- command line client
"""

__version__ = "0.1.0"
