"""Smoke test for the `drpu` extension module.

Imports an installed `drpu` if there is one, otherwise the library built by
`cargo build --release -p drpu-py`.
"""

import importlib.util
import json
import math
import pathlib
import shutil
import sys
import sysconfig
import tempfile

ROOT = pathlib.Path(__file__).resolve().parents[1]


def load_drpu():
    try:
        import drpu

        return drpu
    except ImportError:
        pass
    built = ROOT / "target" / "release" / "libdrpu.so"
    if not built.exists():
        sys.exit(f"build the extension first: cargo build --release -p drpu-py ({built} missing)")
    tmp = pathlib.Path(tempfile.mkdtemp())
    target = tmp / ("drpu" + sysconfig.get_config_var("EXT_SUFFIX"))
    shutil.copy(built, target)
    spec = importlib.util.spec_from_file_location("drpu", target)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


def main():
    drpu = load_drpu()

    train = drpu.synth(1, 200, 1000, 0.4, seed=1)
    val = drpu.synth(1, 100, 500, 0.4, seed=2)
    assert len(train["positives"]) == 200 and len(train["unlabeled"]) == 1000

    model = drpu.RatioModel.gaussian_basis(train["unlabeled"], 1.0)
    config = {"epochs": 40, "batch_size": 200, "pairing": "unlabeled", "learning_rate": 1e-3}
    model, report = drpu.train(
        model, train["positives"], train["unlabeled"], val["positives"], val["unlabeled"], drpu.BregmanGenerator.lsif(), config
    )
    assert report["selected_epoch"] is not None
    assert report["epochs"][-1]["val_objective"] < report["initial_val_objective"]

    r_pos = model.predict(val["positives"])
    r_unl = model.predict(val["unlabeled"])
    est = drpu.estimate_prior(r_pos, r_unl, 0.9)
    assert 0.2 < est["value"] < 0.7, est

    intervals = drpu.ThresholdIntervals.from_scores(r_pos)
    again = drpu.ThresholdIntervals.from_json(intervals.to_json())
    assert again.n_pos == 100 and again.reconstruct(-1.0) == 1.0

    test_x, test_y = drpu.sample_labeled(1, 0.6, 1000, seed=3)
    r_test = model.predict(test_x)
    test_prior = drpu.estimate_test_prior(intervals, r_test, 0.9)
    c0, theta = drpu.cost_threshold(est["value"], test_prior["value"], 0.5)
    predictions = [1 if r >= theta else -1 for r in r_test]
    accuracy = sum(p == y for p, y in zip(predictions, test_y)) / len(test_y)
    auc = drpu.auc([r for r, y in zip(r_test, test_y) if y == 1], [r for r, y in zip(r_test, test_y) if y == -1])
    assert accuracy > 0.7 and auc > 0.8, (accuracy, auc)

    upu, _ = drpu.train_baseline(
        "upu", drpu.RatioModel.gaussian_basis(train["unlabeled"], 1.0), train["positives"], train["unlabeled"],
        val["positives"], val["unlabeled"], 0.4, config={"epochs": 5},
    )
    assert len(upu.predict([0.0, 1.0])) == 2

    theory = drpu.verify_theory(seed=1, trials=50)
    assert theory["all_passed"], json.dumps(theory)[:400]
    assert not drpu.verify_theory(seed=1, trials=20, inject_violation=True)["all_passed"]

    try:
        drpu.estimate_prior([1.0], [1.0], 1.5)
    except ValueError:
        pass
    else:
        raise AssertionError("gamma outside (0, 1) accepted")

    assert math.isclose(drpu.BregmanGenerator.quadratic(2.0).f(3.0), 9.0)
    print(
        f"ok: prior {est['value']:.3f}, test prior {test_prior['value']:.3f}, "
        f"theta {theta:.3f}, accuracy {accuracy:.3f}, auc {auc:.3f}"
    )


if __name__ == "__main__":
    main()
