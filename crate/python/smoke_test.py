"""Smoke test for the toncalib Python bindings.

Build and install first:
    pip install --no-build-isolation ./crates/py
"""

import json
import os
import tempfile

import toncalib

CONFIG = {
    "version": 1,
    "profile": "aggressive",
    "params": {"scale": 5.0, "rate": 0.7, "duration": 4.0},
    "offset": {"initial": 0.01},
    "variant": "sir",
    "seed": 3,
}


def check_grad() -> None:
    results = toncalib.grad_check(1)
    assert len(results) == 6, results
    for name, err in results:
        assert err < 1e-4, (name, err)


def check_cit() -> None:
    est = [5e-3, 3e-3, 2.05e-3, 2.02e-3, 2e-3]
    assert toncalib.cit(est, [2e-3] * 5, 1e-4, 1e-4, target=2e-3) == 3
    assert toncalib.cit([2e-3] * 4, [2e-3] * 4, 1e-4, 1e-4) == 1
    assert toncalib.cit([9e-3] * 4, [2e-3] * 4, 1e-4, 1e-4) is None


def check_config_errors() -> None:
    bad = dict(CONFIG)
    del bad["profile"]
    try:
        toncalib.normalize_config(json.dumps(bad))
    except ValueError as e:
        assert "profile" in str(e), e
    else:
        raise AssertionError("missing field accepted")
    full = json.loads(toncalib.normalize_config(json.dumps(CONFIG)))
    assert full["estimator"]["window"] == 10


def check_run() -> None:
    with tempfile.TemporaryDirectory() as tmp:
        cfg = json.dumps(CONFIG)
        ds = toncalib.simulate(cfg, os.path.join(tmp, "ds"))
        assert os.path.exists(os.path.join(ds, "frames.csv"))
        run_dir = os.path.join(tmp, "run")
        metrics = json.loads(toncalib.run(cfg, run_dir))
        assert metrics["variant"] == "sir"
        assert metrics["windows"] > 0
        with open(os.path.join(run_dir, "windows.csv")) as f:
            assert sum(1 for _ in f) == metrics["windows"] + 1
        again = json.loads(toncalib.run(cfg, os.path.join(tmp, "again")))
        assert again == metrics
        for path in toncalib.plotdata(run_dir):
            assert os.path.exists(path), path
        try:
            toncalib.plotdata(os.path.join(tmp, "ds"))
        except FileNotFoundError:
            pass
        else:
            raise AssertionError("plotdata accepted a dataset directory")


def main() -> None:
    check_grad()
    check_cit()
    check_config_errors()
    check_run()
    print("toncalib", toncalib.__version__, "smoke test passed")


if __name__ == "__main__":
    main()
