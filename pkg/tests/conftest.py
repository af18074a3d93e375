from __future__ import annotations

import numpy as np
import pytest

import tinygbdt as tg
from corpus import BREAST_CANCER_CSV, full_corpus


@pytest.fixture(scope="session")
def corpus():
    return full_corpus()


@pytest.fixture(scope="session")
def breast_cancer():
    return tg.load_csv(BREAST_CANCER_CSV, "target", tg.BINARY)


@pytest.fixture
def tiny_regression():
    X = np.array([[0.0, 3.0], [1.0, 1.0], [2.0, 4.0], [3.0, 2.0]])
    y = np.array([0.0, 1.0, 1.0, 2.0])
    return tg.Dataset(X, y, tg.REGRESSION)
