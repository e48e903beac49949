from .finite_difference import FiniteDifferenceEstimator, fd_bias_slope, greek_fd
from .pathwise import PathwiseEstimator, greek_pathwise
from .skorohod import SkorohodEstimator, SkorohodGridEstimator, greek_skorohod, skorohod_lambda_grid

estimators = {
        "fd": FiniteDifferenceEstimator,
        "pathwise": PathwiseEstimator,
        "skorohod": SkorohodEstimator,
        "skorohod_grid": SkorohodGridEstimator
}

__all__ = ['FiniteDifferenceEstimator', 'PathwiseEstimator', 'SkorohodEstimator', 'SkorohodGridEstimator',
           'greek_fd', 'fd_bias_slope', 'greek_pathwise', 'greek_skorohod', 'skorohod_lambda_grid', 'estimators']
