import json

import numpy as np
import pytest

from lapcom.cli import evaluate_solution, main
from lapcom.evaluation.scenarios import Truth
from lapcom.manifest import MANIFEST_NAME, ManifestError, RunManifest
from lapcom.postprocess import load_solution


def files_of(d):
    return {p.relative_to(d).as_posix(): p.read_bytes() for p in sorted(d.rglob("*"))
            if p.is_file() and p.name != MANIFEST_NAME}


def test_simulate_reproducible(tmp_path):
    for name in ("a", "b"):
        assert main(["simulate", "--preset", "A", "--seed", "7", "--out", str(tmp_path / name)]) == 0
    assert files_of(tmp_path / "a") == files_of(tmp_path / "b")
    ma, mb = RunManifest.load(tmp_path / "a"), RunManifest.load(tmp_path / "b")
    assert ma.digest() == mb.digest()
    spec = json.loads((tmp_path / "a" / "scenario.json").read_text())
    assert (spec["M"], spec["N"], spec["family"]) == (20, 30, "count")


def test_simulate_binary_preset_and_spec_file(tmp_path):
    main(["simulate", "--preset", "I", "--seed", "1", "--out", str(tmp_path / "i")])
    spec = json.loads((tmp_path / "i" / "scenario.json").read_text())
    assert spec["family"] == "binary"
    spec.update(M=3, N=8)
    (tmp_path / "s.json").write_text(json.dumps(spec))
    assert main(["simulate", "--spec", str(tmp_path / "s.json"), "--out", str(tmp_path / "j")]) == 0


@pytest.mark.parametrize("argv", [["simulate", "--preset", "Q", "--out", "x"],
                                  ["simulate", "--out", "x"],
                                  ["fit", "nowhere", "--out", "x"]])
def test_usage_errors_exit_2(argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == 2


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("run")
    sim, fit, post = root / "sim", root / "fit", root / "post"
    main(["simulate", "--preset", "A", "--seed", "3", "--out", str(sim)])
    main(["fit", str(sim), "--out", str(fit), "--n-chains", "2", "--seed", "5",
          "--iters", "300", "--burnin", "300", "--thin", "5"])
    main(["postprocess", str(fit), "--out", str(post)])
    return root


def test_fit_defaults_resolve(pipeline):
    cfg = json.loads((pipeline / "fit" / "config.json").read_text())
    assert cfg["hyper"]["u_sigma2"] == 11 and cfg["hyper"]["G_max"] == 5
    assert cfg["n_chains"] == 2
    assert (pipeline / "fit" / "chain_2" / "states" / "states.csv").exists()


def test_fit_config_file_and_overrides(tmp_path, pipeline):
    cfgfile = tmp_path / "c.json"
    cfgfile.write_text(json.dumps({"sampler": {"n_iter": 20, "burn_in": 10, "thin": 2},
                                   "hyper": {"G_max": 3}}))
    out = tmp_path / "f"
    main(["fit", str(pipeline / "sim"), "--config", str(cfgfile), "--out", str(out),
          "--iters", "30", "--variant", "mono-lapcm"])
    cfg = json.loads((out / "config.json").read_text())
    assert cfg["n_iter"] == 30 and cfg["burn_in"] == 10 and cfg["hyper"]["G_max"] == 3
    assert cfg["variant"] == "mono-lapcm"
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"sampler": {"speed": 3}}))
    with pytest.raises(SystemExit):
        main(["fit", str(pipeline / "sim"), "--config", str(bad), "--out", str(tmp_path / "g")])


def test_manifest_chain(pipeline, tmp_path):
    sim = RunManifest.load(pipeline / "sim", pipeline / "sim" / "data")
    fit = RunManifest.load(pipeline / "fit")
    post = RunManifest.load(pipeline / "post")
    assert fit.upstream["simulate"] == sim.digest()
    assert post.upstream["fit"] == [fit.digest()]
    assert fit.data_digest == sim.data_digest == post.data_digest
    main(["ppc", str(pipeline / "post"), "-R", "5", "--out", str(tmp_path / "ppc")])
    ppc = RunManifest.load(tmp_path / "ppc")
    assert ppc.upstream == {"postprocess": post.digest(), "fit": [fit.digest()]}
    assert (tmp_path / "ppc" / "ecdf").is_dir()


def test_manifest_detects_tampering(pipeline, tmp_path):
    import shutil
    copy = tmp_path / "post"
    shutil.copytree(pipeline / "post", copy)
    RunManifest.load(copy)
    with open(copy / "chain_ari.csv", "a") as fh:
        fh.write("x\n")
    with pytest.raises(ManifestError):
        RunManifest.load(copy)
    man = json.loads((pipeline / "sim" / MANIFEST_NAME).read_text())
    man["config"]["seed"] = 99
    (tmp_path / "sim").mkdir()
    (tmp_path / "sim" / MANIFEST_NAME).write_text(json.dumps(man))
    with pytest.raises(ManifestError):
        RunManifest.load(tmp_path / "sim")


def test_ppc_rejects_large_r(pipeline, tmp_path):
    with pytest.raises(SystemExit):
        main(["ppc", str(pipeline / "post"), "-R", "100000", "--out", str(tmp_path / "p")])


def test_evaluate_pipeline_and_missing_truth(pipeline, tmp_path):
    assert main(["evaluate", str(pipeline / "post"), "--out", str(tmp_path / "ev")]) == 0
    metrics = json.loads((tmp_path / "ev" / "metrics.json").read_text())
    assert set(metrics) >= {"network_ari", "clusters"}
    with pytest.raises(SystemExit) as exc:
        main(["evaluate", str(pipeline / "post"), "--truth", str(tmp_path), "--out", str(tmp_path / "e2")])
    assert exc.value.code == 2


def test_postprocess_single_chain_passthrough(pipeline, tmp_path):
    out = tmp_path / "one"
    assert main(["postprocess", str(pipeline / "fit" / "chain_1"), "--out", str(out)]) == 0
    sol = json.loads((out / "solution.json").read_text())
    assert sol["selected_chain"] == "fit/chain_1"
    assert len((out / "chain_ari.csv").read_text().splitlines()) == 1


def make_solution(C, S, Z):
    return {"C_hat": np.asarray(C), "G_hat_plus": len(S), "S_hat": [np.asarray(s) for s in S],
            "Z_hat": [np.asarray(z) for z in Z]}


def test_evaluate_fixtures():
    rng = np.random.default_rng(0)
    Z = [rng.normal(size=(6, 2)), rng.normal(size=(6, 2))]
    S = [np.zeros(6, int), np.array([0, 0, 0, 1, 1, 1])]
    truth = Truth(np.array([0, 0, 1, 1, 1]), S, Z)
    perfect = evaluate_solution(make_solution(truth.C, S, Z), truth)
    assert perfect["network_ari"] == 1.0
    assert all(r["node_ari"] == 1.0 and abs(r["procrustes_correlation"] - 1) < 1e-10
               for r in perfect["clusters"])
    swapped = evaluate_solution(make_solution(1 - truth.C, S[::-1], Z[::-1]), truth)
    assert swapped["network_ari"] == 1.0
    assert [r["matched_true_cluster"] for r in swapped["clusters"]] == [2, 1]
    assert all(r["node_ari"] == 1.0 for r in swapped["clusters"])
    # contingency [[2,1],[0,3]]: index 4, expected 6*7/15, max 6.5
    est = [np.zeros(6, int), np.array([0, 0, 1, 1, 1, 1])]
    out = evaluate_solution(make_solution(truth.C, est, Z), truth)
    assert out["clusters"][1]["node_ari"] == pytest.approx((4 - 2.8) / (6.5 - 2.8), abs=1e-12)


def test_evaluate_mono_solution_without_node_partitions():
    rng = np.random.default_rng(1)
    Z = [rng.normal(size=(5, 2)), rng.normal(size=(5, 2))]
    truth = Truth(np.array([0, 1, 1]), [np.zeros(5, int)] * 2, Z)
    out = evaluate_solution(make_solution(truth.C, [], Z) | {"G_hat_plus": 2}, truth)
    assert out["network_ari"] == 1.0
    assert all(r["node_ari"] is None and r["procrustes_correlation"] > 0.999 for r in out["clusters"])
