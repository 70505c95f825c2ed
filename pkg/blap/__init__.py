__license__ = "MIT"
__version__ = "0.1"


from blap.manifold import build_torus, build_sphere2, build_sphere3
from blap.operators import build_operator
from blap.spectral import eigensolve, bounds_report
