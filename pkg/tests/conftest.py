"""Shared dataset fixtures.

The mini dataset keeps unit tests fast; the desk-scale fixtures are
session-scoped and only built when a test actually pulls them in
(the end-to-end suite in test_acceptance.py).
"""

import time

import pytest

from mimoclr import datapipe
from mimoclr.chanmodel import ScenarioConfig, generate_scenario
from mimoclr.config import (dataset_params, load_config, pretrain_config,
                            scenario_configs)
from mimoclr.pretrain import run_pretraining


def _build(tmpdir, cfgs, seed, fraction, cap=None):
    scenarios = []
    for c in cfgs:
        samples = generate_scenario(c, seed)
        scenarios.append((c, samples))
    if cap is not None:
        keep = datapipe.stratified_cap([len(s) for _, s in scenarios], cap, seed)
        scenarios = [(c, [s[i] for i in idx])
                     for (c, s), idx in zip(scenarios, keep)]
    mpath = str(tmpdir / "manifest.json")
    rpath = str(tmpdir / "samples.bin")
    manifest = datapipe.write_dataset(scenarios, mpath, rpath, seed)
    datapipe.split_dataset(manifest, fraction, seed)
    datapipe.save_manifest(manifest, mpath)
    ds = datapipe.open_dataset(mpath)
    datapipe.attach_norm_stats(manifest, ds)
    datapipe.save_manifest(manifest, mpath)
    return datapipe.open_dataset(mpath)


@pytest.fixture(scope="session")
def mini_dataset(tmp_path_factory):
    """Two tiny scenarios, 120 samples total, desk geometry."""
    root = tmp_path_factory.mktemp("mini")
    cfgs = [ScenarioConfig(scenario_id=0, n_ue=60),
            ScenarioConfig(scenario_id=1, n_ue=60, cell_radius=100.0,
                           blockage_prob=0.25)]
    return _build(root, cfgs, seed=11, fraction=0.8)


@pytest.fixture(scope="session")
def desk_dataset(tmp_path_factory):
    """The full desk preset: 4 scenarios, 2560 samples."""
    root = tmp_path_factory.mktemp("desk")
    cfg = load_config("desk")
    params = dataset_params(cfg)
    return _build(root, scenario_configs(cfg), seed=params["seed"],
                  fraction=params["train_fraction"], cap=params["cap"])


@pytest.fixture(scope="session")
def desk_pretrained(tmp_path_factory, desk_dataset):
    """One desk-preset pretraining run, shared by the end-to-end tests.

    Returns (state, metrics_rows, wall_seconds, checkpoint_path).
    """
    out = tmp_path_factory.mktemp("desk_pretrain")
    cfg = pretrain_config(load_config("desk"))
    t0 = time.monotonic()
    state, rows = run_pretraining(desk_dataset, cfg, str(out))
    wall = time.monotonic() - t0
    return state, rows, wall, str(out / "pretrain.ckpt")
