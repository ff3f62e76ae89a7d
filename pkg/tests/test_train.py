import json

import numpy as np
import pytest
import torch

from fpst import cli, synthetic
from fpst.graph import Graph
from fpst.profiling import peak_bytes
from fpst.train import ConfigError, RunConfig, load_model, train_node_classification, train_reconstruction


def small(**kw):
    base = dict(dim=4, heads=2, epochs=20, eval_interval=10, record_time=False)
    base.update(kw)
    return RunConfig(**base)


def test_two_node_graph_reaches_full_map():
    res = train_reconstruction(small(epochs=200, eval_interval=50), graph=Graph(2, np.array([[0, 1]])))
    assert res.final["map"] == 1.0
    assert [r[0] for r in res.rows] == [50, 100, 150, 200]


def test_header_and_row_layout():
    res = train_reconstruction(small(layers=2), graph=synthetic.cycle(6))
    assert res.header == ["epoch", "loss", "metric", "wall_ms", "kappa_l1_h1", "kappa_l1_h2", "kappa_l2_h1", "kappa_l2_h2"]
    assert all(len(r) == len(res.header) and r[3] == 0 for r in res.rows)


def test_pinned_curvature_stays_at_init():
    res = train_reconstruction(small(curv_lr=0.0, kappa_init=-0.5), graph=synthetic.path(5))
    assert res.final["kappas"] == [-0.5, -0.5]


def test_sampled_negatives_run():
    res = train_reconstruction(small(neg=3), graph=synthetic.balanced_tree(2))
    assert 0 <= res.final["map"] <= 1


def test_config_errors():
    with pytest.raises(ConfigError):
        RunConfig(task="embed").resolved()
    with pytest.raises(ConfigError):
        RunConfig(dim=5, heads=2).resolved()
    with pytest.raises(ConfigError):
        train_reconstruction(RunConfig())  # no edges
    g = synthetic.sbm([10, 10], 0.5, 0.05, np.random.default_rng(0))
    with pytest.raises(ConfigError, match="split"):
        train_node_classification(small(task="nodeclf"), graph=g)


def test_node_classification_runs_and_restores_best():
    g = synthetic.sbm([20, 20], 0.3, 0.02, np.random.default_rng(1))
    res = train_node_classification(small(task="nodeclf", synth_split="622", epochs=30, eval_interval=1), graph=g)
    assert 1 <= res.final["best_epoch"] <= 30
    assert set(res.final) >= {"val_micro_f1", "test_accuracy", "test_micro_f1", "kappas"}


def test_checkpoint_reload_same_forward(tmp_path):
    res = train_reconstruction(small(out=str(tmp_path), kappa_init=-0.3), graph=synthetic.cycle(7))
    model, meta = load_model(tmp_path / "model.fpst")
    assert meta["run"]["dim"] == 4
    res.model.eval()
    with torch.no_grad():
        assert torch.equal(model(res.inputs), res.model(res.inputs))


def write_graph(tmp_path):
    p = tmp_path / "g.txt"
    p.write_text("".join(f"{u} {v}\n" for u, v in synthetic.balanced_tree(3).edges))
    return p


def run_cli(args):
    return cli.main([str(a) for a in args])


def test_cli_reconstruct_is_deterministic(tmp_path, capsys):
    edges = write_graph(tmp_path)
    outs = []
    for tag in "ab":
        rc = run_cli(["reconstruct", "--edges", edges, "--dim", 4, "--epochs", 30, "--eval-interval", 10,
                      "--seed", 3, "--no-record-time", "--out", tmp_path / tag, "-q"])
        assert rc == 0
        outs.append((tmp_path / tag / "metrics.csv").read_bytes())
    assert outs[0] == outs[1]
    assert outs[0].startswith(b"epoch,loss,metric,wall_ms,kappa_l1_h1,kappa_l1_h2\n")
    final = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert set(final) == {"map", "kappas"}


def test_cli_nodeclf_and_hist(tmp_path):
    edges = write_graph(tmp_path)
    n = 15
    rng = np.random.default_rng(0)
    (tmp_path / "f.csv").write_text("".join(",".join(repr(float(v)) for v in r) + "\n" for r in rng.normal(size=(n, 3))))
    (tmp_path / "y.txt").write_text("".join(f"{i % 2}\n" for i in range(n)))
    rc = run_cli(["nodeclf", "--edges", edges, "--features", tmp_path / "f.csv", "--labels", tmp_path / "y.txt",
                  "--synth-split", "622", "--dim", 4, "--epochs", 5, "--hops", 1, "--out", tmp_path / "c", "-q"])
    assert rc == 0 and (tmp_path / "c" / "model.fpst").exists()
    rc = run_cli(["curvature-hist", "--edges", edges, "--samples-per-node", 2, "--out", tmp_path / "h.txt"])
    lines = (tmp_path / "h.txt").read_text().splitlines()
    assert rc == 0 and lines[-1].startswith("mean,")
    vals = [float(v) for v in lines[:-1]]
    assert vals and all(v <= 0 for v in vals)  # trees have no positively curved triples


@pytest.mark.parametrize(
    "args",
    [
        ["reconstruct", "--edges", "missing.txt", "--out", "o"],
        ["reconstruct", "--edges", "{edges}", "--dim", 5, "--out", "o"],
        ["reconstruct", "--edges", "{edges}", "--mode", "dense", "--epochs", 0, "--out", "o"],
        ["curvature-hist", "--edges", "{edges}", "--samples-per-node", 0, "--out", "h"],
    ],
)
def test_cli_errors_exit_nonzero(tmp_path, capsys, args):
    edges = write_graph(tmp_path)
    rc = run_cli([str(a).replace("{edges}", str(edges)) for a in args])
    err = capsys.readouterr().err
    assert rc == 2 and err.startswith("fpst: error:") and err.count("\n") == 1


def test_cli_usage_error_exits_2(capsys):
    with pytest.raises(SystemExit) as e:
        cli.main(["reconstruct"])
    assert e.value.code == 2


def test_peak_bytes_counts_live_tensors():
    def f(n):
        a = torch.ones(n, dtype=torch.float64)
        b = a * 2
        del a
        c = b + 1
        return c.sum()

    peak, largest = peak_bytes(f, 1000)
    assert largest == 8000
    assert 16000 <= peak < 24000
    peak2, _ = peak_bytes(lambda: torch.zeros(10) + 1)
    assert peak2 < 1000
