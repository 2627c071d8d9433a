import subprocess
import sys

import numpy as np
import pytest

from flowgate.cli import main
from flowgate.dataset import read_dataset, read_latents
from flowgate.metrics import read_report, read_scores
from flowgate.packets import Label
from crafting import pcap_bytes, tcp_frame, udp_frame


def run_cli(*argv) -> int:
    return main([str(a) for a in argv])


def test_preprocess_command(tmp_path, capsys):
    frames = [
        tcp_frame(payload=b"hello world data"),
        udp_frame(payload=b"q", dport=53),      # dropped: DNS
        tcp_frame(payload=b""),                  # dropped: control segment
        tcp_frame(payload=b"more payload bytes"),
    ]
    pcap = tmp_path / "c.pcap"
    pcap.write_bytes(pcap_bytes(frames))
    out = tmp_path / "out.csv"
    assert run_cli("preprocess", "--in", pcap, "--out", out, "--label", "0") == 0
    rows = read_dataset(out)
    assert len(rows) == 2
    assert all(r.label is Label.NORMAL for r in rows)


def test_preprocess_directory(tmp_path):
    # files are processed in name order regardless of creation order
    (tmp_path / "b.pcap").write_bytes(pcap_bytes([tcp_frame(payload=b"B" * 30)]))
    (tmp_path / "a.pcap").write_bytes(pcap_bytes([tcp_frame(payload=b"A" * 30)]))
    out = tmp_path / "out.csv"
    assert run_cli("preprocess", "--in", tmp_path, "--out", out) == 0
    rows = read_dataset(out)
    assert len(rows) == 2
    assert rows[0].values[120] == ord("A") / 255.0
    assert rows[1].values[120] == ord("B") / 255.0


def test_make_corpus_with_splits(tmp_path):
    assert run_cli("make-corpus", "--out-dir", tmp_path / "c", "--seed", 1,
                   "--n-normal", 40, "--n-anomaly", 10,
                   "--n-train", 30, "--n-test-normal", 10,
                   "--n-test-anomaly", 10) == 0
    assert len(read_dataset(tmp_path / "c" / "normal.csv")) == 40
    assert len(read_dataset(tmp_path / "c" / "anomaly.csv")) == 10
    assert len(read_dataset(tmp_path / "c" / "train.csv")) == 30
    test_rows = read_dataset(tmp_path / "c" / "test.csv")
    assert len(test_rows) == 20
    assert sum(r.label is Label.ANOMALY for r in test_rows) == 10


@pytest.fixture(scope="module")
def stage_artifacts(tiny_corpus, tmp_path_factory):
    """Stage checkpoints built through the CLI commands themselves."""
    train_csv, test_csv = tiny_corpus
    root = tmp_path_factory.mktemp("cli_stages")
    ext = root / "extractor.ckpt"
    flw = root / "flow.ckpt"
    pseudo = root / "pseudo.csv"
    clf = root / "classifier.ckpt"
    assert run_cli("train-extractor", "--data", train_csv, "--out", ext,
                   "--seed", 2, "--epochs", 2) == 0
    assert run_cli("train-flow", "--latents-from", ext, "--data", train_csv,
                   "--out", flw, "--seed", 2, "--epochs", 2,
                   "--blocks", 4, "--hidden", 16) == 0
    assert run_cli("synthesize", "--flow", flw, "--extractor", ext,
                   "--data", train_csv, "--mu", 0, "--sigma", 1,
                   "--ratio", 0.5, "--seed", 2, "--out", pseudo) == 0
    # normal latents for classifier training come from the same encoder
    from flowgate.checkpoint import load_checkpoint
    from flowgate.dataset import values_matrix, write_latents
    from flowgate.extractor import extractor_from_checkpoint
    model = extractor_from_checkpoint(load_checkpoint(ext))
    latents = model.encode(values_matrix(read_dataset(train_csv)))
    normals_csv = root / "normals.csv"
    write_latents(normals_csv, latents, [Label.NORMAL] * latents.shape[0])
    assert run_cli("train-classifier", "--normals", normals_csv,
                   "--pseudo", pseudo, "--out", clf, "--seed", 2,
                   "--epochs", 2) == 0
    return root, ext, flw, clf, test_csv


def test_stage_commands_compose(stage_artifacts):
    root, ext, flw, clf, test_csv = stage_artifacts
    pseudo, labels = read_latents(root / "pseudo.csv")
    assert pseudo.shape == (150, 70)
    assert all(l is Label.ANOMALY for l in labels)


def test_infer_and_eval_commands(stage_artifacts, tmp_path):
    root, ext, flw, clf, test_csv = stage_artifacts
    scores_csv = tmp_path / "scores.csv"
    report_txt = tmp_path / "report.txt"
    assert run_cli("infer", "--extractor", ext, "--classifier", clf,
                   "--data", test_csv, "--scores-out", scores_csv) == 0
    assert len(read_scores(scores_csv)) == 120
    assert run_cli("eval", "--scores", scores_csv,
                   "--report-out", report_txt) == 0
    report = read_report(report_txt)
    assert report.n_pos == 60 and report.n_neg == 60


def test_pipeline_command_with_config_file(tiny_corpus, tmp_path, capsys):
    train_csv, test_csv = tiny_corpus
    config = tmp_path / "run.cfg"
    config.write_text(
        f"""
# desk-scale smoke run
workdir = {tmp_path / 'work'}
train_csv = {train_csv}
test_csv = {test_csv}
seed = 4
epochs = 2
noise_grid = 0,1
latent_dim = 16
flow_blocks = 4
flow_hidden = 16
""")
    # CLI flag overrides the file value
    assert run_cli("pipeline", "--config", config, "--seed", 5) == 0
    out = capsys.readouterr().out
    assert "auroc:" in out
    from flowgate.checkpoint import load_checkpoint
    from flowgate.seeding import derive_seed
    ckpt = load_checkpoint(tmp_path / "work" / "extractor.ckpt")
    assert ckpt.seed == derive_seed(5, "stage:extractor")


def test_pipeline_command_rejects_unknown_config_key(tmp_path, capsys):
    config = tmp_path / "bad.cfg"
    config.write_text("workdir = w\nbogus_key = 1\n")
    assert run_cli("pipeline", "--config", config) == 2
    assert "bogus_key" in capsys.readouterr().err


def test_train_classifier_rejects_anomaly_labeled_normals(tmp_path, capsys):
    from flowgate.dataset import write_latents
    rng = np.random.default_rng(0)
    normals_csv = tmp_path / "normals.csv"
    pseudo_csv = tmp_path / "pseudo.csv"
    write_latents(normals_csv, rng.standard_normal((10, 8)),
                  [Label.NORMAL] * 9 + [Label.ANOMALY])
    write_latents(pseudo_csv, rng.standard_normal((5, 8)),
                  [Label.ANOMALY] * 5)
    code = run_cli("train-classifier", "--normals", normals_csv,
                   "--pseudo", pseudo_csv, "--out", tmp_path / "c.ckpt",
                   "--seed", 1)
    assert code == 2
    assert "anomaly" in capsys.readouterr().err.lower()


def test_console_entry_point_runs():
    proc = subprocess.run([sys.executable, "-m", "flowgate.cli", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "pipeline" in proc.stdout
