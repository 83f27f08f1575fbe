import numpy as np
import pytest

from gradsamp import dataio, model


@pytest.fixture
def tiny_head_spec():
    """Dense{2,2} feeding the head; theta=0 gives a uniform softmax."""
    return model.ModelSpec((model.Dense(2, 2), model.SoftmaxCrossEntropyHead(2)))


def model_zoo():
    """Small specs (<= 200 params) exercising bias/no-bias, depth, and widths."""
    return [
        model.ModelSpec((model.Dense(2, 2), model.SoftmaxCrossEntropyHead(2))),
        model.ModelSpec((model.Dense(3, 4, bias=False), model.Relu(), model.Dense(4, 3), model.SoftmaxCrossEntropyHead(3))),
        model.mlp(4, [6], 3),
        model.mlp(2, [5, 4], 2),
        model.mlp(5, [8, 6], 4),
        model.ModelSpec(
            (
                model.Dense(3, 5),
                model.Relu(),
                model.Dense(5, 5, bias=False),
                model.Relu(),
                model.Dense(5, 2),
                model.SoftmaxCrossEntropyHead(2),
            )
        ),
    ]


def random_batch(spec, n, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, spec.input_dim))
    y = rng.integers(0, spec.classes, size=n)
    return model.Batch(x, y)


@pytest.fixture(scope="session")
def blobs_3class():
    return dataio.gen_blobs(n=600, d=2, classes=3, spread=0.4, seed=7)
