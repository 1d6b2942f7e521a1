import json

import numpy as np
import pytest

from gmkcf import cli
from gmkcf.data_io import read_report
from gmkcf.kernel_bank import KernelBank, load_bank, save_bank

SYN = "clusters=3,per_cluster=12,dim=4,separation=10,seed=1"


def run(*argv):
    return cli.main([str(a) for a in argv])


def test_kernels_paper12_and_cosine(tmp_path, capsys):
    assert run("kernels", "--synthetic", SYN, "--out", tmp_path / "b.npz") == 0
    assert load_bank(tmp_path / "b.npz").m == 12
    out = capsys.readouterr().out
    assert "rbf(t=0.01)" in out and "min_eig" in out
    assert run("kernels", "--synthetic", SYN, "--recipe", "cosine", "--out", tmp_path / "c.npz") == 0
    assert load_bank(tmp_path / "c.npz").m == 1


def test_exit_codes(tmp_path, capsys):
    assert run("kernels", "--data", tmp_path / "missing.csv") == cli.EXIT_IO
    assert "missing.csv" in capsys.readouterr().err
    assert run("fit", "--bogus") == cli.EXIT_PARSE
    bad = tmp_path / "bad.csv"
    bad.write_text("1,2\n3\n")
    assert run("kernels", "--data", bad) == cli.EXIT_PARSE
    assert run("table") == cli.EXIT_PARSE
    codes = {cli.EXIT_OK, cli.EXIT_PARSE, cli.EXIT_SOLVER, cli.EXIT_IO}
    assert len(codes) == 4


def test_fit_report_structure_and_determinism(tmp_path):
    args = ["fit", "--synthetic", SYN, "--recipe", "rbf:1,cosine", "--restarts", 3, "--seed", 7]
    assert run(*args, "--out", tmp_path / "a.json") == 0
    assert run(*args, "--workers", 3, "--out", tmp_path / "b.json") == 0
    a = (tmp_path / "a.json").read_bytes()
    assert a == (tmp_path / "b.json").read_bytes()
    rep = json.loads(a)
    assert len(rep["restarts"]) == 3
    assert [e["restart"] for e in rep["restarts"]] == [0, 1, 2]
    assert len({e["seed"] for e in rep["restarts"]}) == 3
    for e in rep["restarts"]:
        assert len(e["w"]) == 2 and abs(sum(e["w"]) - 1) < 1e-12
        assert len(e["objective_trace"]) == e["iterations"] + 1
    for m in ("acc", "nmi", "purity"):
        assert set(rep["summary"][m]) == {"mean", "std"}


def test_restart_seed_injective():
    assert len({cli.restart_seed(5, r) for r in range(1000)}) == 1000


def test_m1_bank_matches_kcf(tmp_path):
    common = ["--synthetic", SYN, "--recipe", "rbf:1", "--restarts", 4, "--seed", 3]
    run("fit", "--algo", "gmkcf", *common, "--out", tmp_path / "g.json")
    run("fit", "--algo", "kcf", *common, "--out", tmp_path / "k.json")
    g, k = read_report(tmp_path / "g.json"), read_report(tmp_path / "k.json")
    for m in ("acc", "nmi", "purity"):
        assert g["summary"][m] == k["summary"][m]


def test_fit_from_cached_bank_and_nmf(tmp_path):
    run("synth", "--clusters", 3, "--per-cluster", 10, "--dim", 4, "--nonnegative", "--out", tmp_path / "d")
    assert (tmp_path / "d.csv").exists() and (tmp_path / "d.labels").exists()
    data = ["--data", tmp_path / "d.csv", "--labels", tmp_path / "d.labels"]
    assert run("kernels", *data, "--recipe", "rbf:1,poly:1:2", "--out", tmp_path / "d.npz") == 0
    assert run("fit", "--bank", tmp_path / "d.npz", "--labels", tmp_path / "d.labels",
               "--restarts", 2, "--out", tmp_path / "bank.json") == 0
    assert read_report(tmp_path / "bank.json")["kernels"] == ["rbf(t=1)", "poly(a=1,b=2)"]
    assert run("fit", *data, "--algo", "nmf", "--restarts", 2, "--out", tmp_path / "nmf.json") == 0
    assert run("fit", "--bank", tmp_path / "d.npz", "--algo", "nmf") == cli.EXIT_PARSE


def test_kcf_report_has_per_kernel_means(tmp_path):
    run("fit", "--synthetic", SYN, "--algo", "kcf", "--recipe", "rbf:1,cosine",
        "--restarts", 2, "--out", tmp_path / "k.json")
    rep = read_report(tmp_path / "k.json")
    assert set(rep["summary"]["per_kernel_mean"]) == {"rbf(t=1)", "cosine"}
    per = rep["summary"]["per_kernel_mean"]
    assert rep["summary"]["acc"]["mean"] == pytest.approx(np.mean([v["acc"] for v in per.values()]))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_solver_failure_recorded_per_restart(tmp_path):
    K = np.eye(6)
    K[0, 0] = np.inf
    save_bank(tmp_path / "inf.npz", KernelBank.from_matrices([K]))
    code = run("fit", "--bank", tmp_path / "inf.npz", "--k", 2, "--restarts", 2)
    assert code == cli.EXIT_SOLVER


def fake_report(dataset, algo, acc):
    summary = {m: {"mean": acc, "std": 0.0} for m in ("acc", "nmi", "purity")}
    return {"dataset": dataset, "algo": algo, "summary": summary}


def test_table_examples(tmp_path):
    paths = []
    for i, (ds, acc) in enumerate([("A", 0.5), ("B", 0.75)]):
        p = tmp_path / f"{i}.json"
        p.write_text(json.dumps(fake_report(ds, "gmkcf", acc)))
        paths.append(p)
    assert run("table", paths[0], "--out", tmp_path / "one.csv") == 0
    assert "acc,Mean,0.5000" in (tmp_path / "one.csv").read_text()
    assert run("table", *paths, "--out", tmp_path / "two.csv") == 0
    lines = (tmp_path / "two.csv").read_text().splitlines()
    assert "acc,A,0.5000" in lines and "acc,Mean,0.6250" in lines
    assert sum(1 for line in lines if ",Mean," in line) == 3


def test_table_rejects_missing_metric(tmp_path):
    rep = fake_report("A", "nmf", 0.5)
    rep["summary"]["nmi"] = None
    p = tmp_path / "r.json"
    p.write_text(json.dumps(rep))
    assert run("table", p) == cli.EXIT_PARSE


@pytest.mark.parametrize("suffix", [".json", ".yaml"])
def test_config_file(tmp_path, suffix):
    conf = {"synthetic": SYN, "recipe": "cosine", "restarts": 2, "out": str(tmp_path / "c.json")}
    path = tmp_path / f"conf{suffix}"
    if suffix == ".json":
        path.write_text(json.dumps(conf))
    else:
        path.write_text("".join(f"{k}: '{v}'\n" if isinstance(v, str) else f"{k}: {v}\n" for k, v in conf.items()))
    assert run("fit", "--config", path) == 0
    rep = read_report(tmp_path / "c.json")
    assert rep["kernels"] == ["cosine"] and len(rep["restarts"]) == 2
    path.write_text(json.dumps({"nonsense": 1}))
    assert run("fit", "--config", path) == cli.EXIT_PARSE
