import time

import numpy as np
import pytest

from valueqp import dataset as ds
from valueqp import valuenet as vn
from valueqp.config import Config


@pytest.fixture(scope="session")
def desk(tmp_path_factory):
    """Desk-scale trot dataset and trained model, shared by the
    acceptance tests (64 long runs, full training schedule)."""
    cfg = Config()

    t0 = time.time()
    data = ds.generate(64, "trot", cfg, seed=0, workers=1)
    gen_seconds = time.time() - t0

    tc = vn.TrainConfig(
        epochs=cfg.epochs,
        batch=cfg.batch,
        learning_rate=cfg.learning_rate,
        seed=0,
        val_fraction=cfg.val_fraction,
    )
    t0 = time.time()
    model, norm, curves = vn.train(data, tc)
    train_seconds = time.time() - t0

    # the same split train() used
    perm = np.random.default_rng(tc.seed).permutation(len(data))
    n_val = int(round(len(data) * tc.val_fraction))

    return {
        "cfg": cfg,
        "dataset": data,
        "model": model,
        "normalizer": norm,
        "curves": curves,
        "train_config": tc,
        "val_idx": perm[:n_val],
        "train_idx": perm[n_val:],
        "gen_seconds": gen_seconds,
        "train_seconds": train_seconds,
        "dir": tmp_path_factory.mktemp("desk"),
    }
