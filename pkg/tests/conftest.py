import numpy as np
import pytest

from ota_fedsim.losses import LogisticLoss


@pytest.fixture
def logistic_fixture() -> LogisticLoss:
    """Four-sample fixture with fixed numbers, small enough to hand-check."""
    features = np.array(
        [
            [1.0, 2.0, 1.0],
            [-0.5, 0.25, 1.0],
            [3.0, -1.0, 1.0],
            [-2.0, -2.0, 1.0],
        ]
    )
    labels = np.array([1.0, 0.0, 1.0, 0.0])
    return LogisticLoss(1e-4, features, labels)
