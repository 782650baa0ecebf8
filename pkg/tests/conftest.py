import os

# fixed thread count keeps float reductions (and so checkpoints) reproducible
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

import numpy as np  # noqa: E402
import pytest  # noqa: E402

from clsp import Instance  # noqa: E402
from clsp.encoding import fit_normalizer  # noqa: E402
from clsp.transformer import ModelCheckpoint, ModelConfig, init_parameters  # noqa: E402

ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


def make_i1():
    return Instance(d=[4, 4], p=[2, 2], f=[10, 10], h=[1, 1], cap=[8, 8])


def make_i2():
    return Instance(d=[5, 5], p=[1, 1], f=[5, 5], h=[1, 1], cap=[6, 6])


def random_instance(rng, T, dmax=6, capmax=8, pmax=5, fmax=20, hmax=3, dmin=0):
    """Small integer instance with at least one unit of capacity."""
    cap = rng.integers(0, capmax, size=T, endpoint=True)
    if cap.max() == 0:
        cap[rng.integers(T)] = capmax
    return Instance(
        d=rng.integers(dmin, dmax, size=T, endpoint=True),
        p=rng.integers(0, pmax, size=T, endpoint=True),
        f=rng.integers(0, fmax, size=T, endpoint=True),
        h=rng.integers(0, hmax, size=T, endpoint=True),
        cap=cap,
    )


@pytest.fixture
def i1():
    return make_i1()


@pytest.fixture
def i2():
    return make_i2()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


SMALL_MODEL = ModelConfig(
    enc_layers=1, dec_layers=1, heads=2, d_model=16, d_ff=32, max_src_len=60, max_tgt_len=12, dropout=0.0
)


@pytest.fixture(scope="session")
def zero_checkpoint():
    """Checkpoint whose parameters are all zero: every logit ties."""
    params = {k: np.zeros_like(v) for k, v in init_parameters(SMALL_MODEL).items()}
    tok = fit_normalizer([make_i1(), make_i2()])
    return ModelCheckpoint(SMALL_MODEL, tok, params)


@pytest.fixture(scope="session")
def i1_checkpoint():
    """Small model trained until it reproduces I1's optimal setup (1, 0)."""
    from clsp.transformer import TrainConfig, train

    cfg = TrainConfig(steps=150, lr=3e-3, warmup=10, batch_size=8, clip_norm=1.0)
    data = [(make_i1(), np.array([1, 0], dtype=np.int8))] * 8
    ckpt, _ = train(SMALL_MODEL, cfg, data)
    return ckpt
