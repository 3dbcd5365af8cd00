from dataclasses import dataclass

import numpy as np


@dataclass
class StepRecord:
    """What a filter hands to a covariance estimator at one analysis time.

    ``F_prev`` holds the (linearized) one-step forward operators of the
    forecast that led to this analysis, in time order; it is None at the
    first analysis. Arrays may carry leading batch axes.
    """
    v: np.ndarray  # innovation (m)
    H: np.ndarray  # observation operator (m x n)
    K: np.ndarray  # gain (n x m)
    B_f: np.ndarray  # prior covariance (n x n)
    B_a: np.ndarray  # posterior covariance (n x n)
    F_prev: list = None
