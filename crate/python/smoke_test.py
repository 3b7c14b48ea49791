"""Smoke test for the stable_cir_py extension module.

Uses an installed module if there is one (e.g. after `maturin develop` in
crates/python); otherwise builds it with cargo and loads the shared library
from the target directory.
"""

import importlib.util
import json
import pathlib
import shutil
import statistics
import subprocess
import sys
import sysconfig
import tempfile

ROOT = pathlib.Path(__file__).resolve().parent.parent


def load():
    try:
        import stable_cir_py

        return stable_cir_py
    except ImportError:
        pass
    subprocess.run(
        ["cargo", "build", "--release", "-p", "stable-cir-py", "--features", "extension-module"],
        cwd=ROOT,
        check=True,
    )
    built = next(
        p
        for p in (ROOT / "target" / "release").iterdir()
        if p.name.startswith("libstable_cir_py.") and p.suffix in (".so", ".dylib", ".dll")
    )
    suffix = sysconfig.get_config_var("EXT_SUFFIX") or ".so"
    target = pathlib.Path(tempfile.mkdtemp()) / ("stable_cir_py" + suffix)
    shutil.copy(built, target)
    spec = importlib.util.spec_from_file_location("stable_cir_py", target)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


def main():
    m = load()

    p = m.ModelParams(1.0, 1.0, 1.0, 1.0, 1.5, 1.0)
    assert p.regime() == "subcritical", p.regime()
    assert p.mean(3.0) == 1.0

    try:
        m.ModelParams(1.0, 1.0, 1.0, 1.0, 2.5, 1.0)
    except ValueError:
        pass
    else:
        raise AssertionError("alpha = 2.5 accepted")

    path = m.simulate(p, 20.0, 20000, 7)
    assert len(path) == 20001 and path.projections == 0
    assert all(y >= 0.0 for y in path.values)
    again = m.simulate(p, 20.0, 20000, 7)
    assert again.values == path.values

    full = m.estimate(path, true_b=1.0)
    obs = m.estimate(path, method="path_only")
    assert abs(full["b_hat"] - 1.0) < 0.6, full
    assert abs(obs["b_hat"] - full["b_hat"]) < 0.2, (obs, full)
    assert 0.5 < m.estimate_sigma2(path) < 1.5

    with tempfile.TemporaryDirectory() as d:
        f = pathlib.Path(d) / "path.csv"
        path.write(str(f))
        back = m.Path.read(str(f))
        assert back.values == path.values

    assert m.stationary_laplace(p, 0.0) == 1.0
    y = m.laplace_y(p, 0.5, 2.0)
    assert abs(y - m.joint_laplace(p, -0.5, 0.0, 2.0)) < 1e-12
    assert 0.0 < y < 1.0

    sup = m.ModelParams(1.0, -1.0, 0.0, 1.0, 1.5, 1.0)
    x = m.k_inverse(sup, 3.0)
    assert abs(m.k_fun(sup, x) - 3.0) < 1e-10
    assert 0.0 < m.laplace_v(sup, -1.0) < 1.0

    quantiles = [statistics.NormalDist().inv_cdf((i + 0.5) / 200) for i in range(200)]
    stat, pval = m.ks_normal(quantiles)
    assert stat < 0.01 and pval > 0.99, (stat, pval)

    config = {
        "version": 1,
        "params": {"a": 1.0, "b": 1.0, "sigma": 1.0, "delta": 1.0, "alpha": 1.5, "y0": 1.0},
        "T_grid": [1.0, 2.0],
        "dt": 0.01,
        "n_reps": 8,
        "base_seed": 3,
    }
    rows, summary = m.run_experiment(json.dumps(config), workers=2)
    assert len(rows.strip().splitlines()) == 1 + 16
    assert len(json.loads(summary)["summaries"]) == 2

    assert m.oracle_check() == 0
    print("smoke test passed")


if __name__ == "__main__":
    sys.exit(main())
