"""Command-line interface.

Subcommands mirror the pipeline stages: preprocess, train-extractor,
train-flow, synthesize, train-classifier, infer, eval, pipeline, make-corpus.
The pipeline subcommand also reads a flat key=value config file; command-line
flags override file values.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .checkpoint import (
    STAGE_EXTRACTOR, STAGE_FLOW, load_checkpoint, save_checkpoint,
)
from .classifier import ClassifierConfig, train_classifier
from .corpus import make_synthetic_corpus
from .dataset import (
    read_dataset, read_latents, values_matrix, write_dataset, write_latents,
)
from .errors import AnomalyInTrainingSet, FlowgateError
from .extractor import ExtractorConfig, extractor_from_checkpoint, train_extractor
from .flow import FlowConfig, FlowModel, flow_from_checkpoint, train_flow
from .metrics import evaluate, format_report, read_scores, write_report, write_scores
from .packets import Label, capture_files, process_capture
from .pipeline import (
    DEFAULT_NOISE_GRID, PipelineConfig, infer, ratio_ablation, repeat_pipeline,
    run_pipeline,
)
from .synthesis import NoiseSpec, SynthesisConfig, synthesize

log = logging.getLogger("flowgate")


def _parse_label(text: str) -> Label | None:
    return {"0": Label.NORMAL, "1": Label.ANOMALY, "none": None}[text]


def _parse_noise_grid(text: str) -> tuple[tuple[float, float], ...]:
    """Format: 'mu,sigma;mu,sigma;...' e.g. '-9,5;-25,5;0,1'."""
    pairs = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        mu, sigma = chunk.split(",")
        pairs.append((float(mu), float(sigma)))
    if not pairs:
        raise ValueError("empty noise grid")
    return tuple(pairs)


def _read_config_file(path: str) -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise FlowgateError(f"{path}:{lineno}: expected 'key = value'")
        key, _, value = stripped.partition("=")
        values[key.strip()] = value.strip()
    return values


def cmd_preprocess(args) -> int:
    label = _parse_label(args.label)
    packets = []
    for f in capture_files(args.input):
        kept, stats = process_capture(f, label=label)
        log.info("%s: %s", f.name, stats.summary())
        packets.extend(kept)
    count = write_dataset(packets, args.out)
    print(f"wrote {count} rows to {args.out}")
    return 0


def cmd_make_corpus(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    normals, anomalies = make_synthetic_corpus(args.seed, args.n_normal,
                                               args.n_anomaly)
    write_dataset(normals, out_dir / "normal.csv")
    write_dataset(anomalies, out_dir / "anomaly.csv")
    print(f"wrote {len(normals)} normal rows and {len(anomalies)} anomaly rows "
          f"to {out_dir}")
    if args.n_train:
        if args.n_train + args.n_test_normal > len(normals):
            raise FlowgateError("not enough normal rows for the requested splits")
        if args.n_test_anomaly > len(anomalies):
            raise FlowgateError("not enough anomaly rows for the requested split")
        write_dataset(normals[:args.n_train], out_dir / "train.csv")
        test = (normals[args.n_train:args.n_train + args.n_test_normal]
                + anomalies[:args.n_test_anomaly])
        write_dataset(test, out_dir / "test.csv")
        print(f"wrote train.csv ({args.n_train} normal) and test.csv "
              f"({args.n_test_normal} normal + {args.n_test_anomaly} anomaly)")
    return 0


def cmd_train_extractor(args) -> int:
    packets = read_dataset(args.data)
    cfg = ExtractorConfig(epochs=args.epochs, batch_size=args.batch, lr=args.lr,
                          patience=args.patience)
    ckpt = train_extractor(packets, cfg, args.seed)
    save_checkpoint(args.out, ckpt)
    print(f"extractor checkpoint -> {args.out} "
          f"(best epoch {ckpt.meta['best_epoch']} of {ckpt.meta['epochs_run']})")
    return 0


def cmd_train_flow(args) -> int:
    packets = read_dataset(args.data)
    ext = extractor_from_checkpoint(
        load_checkpoint(args.latents_from, expect_stage=STAGE_EXTRACTOR))
    latents = ext.encode(values_matrix(packets))
    cfg = FlowConfig(dim=latents.shape[1], epochs=args.epochs,
                     batch_size=args.batch, lr=args.lr, patience=args.patience,
                     blocks=args.blocks, hidden=args.hidden)
    model = FlowModel.create(cfg, args.seed)
    ckpt = train_flow(model, latents, cfg, args.seed)
    save_checkpoint(args.out, ckpt)
    print(f"flow checkpoint -> {args.out} "
          f"(best epoch {ckpt.meta['best_epoch']} of {ckpt.meta['epochs_run']})")
    return 0


def cmd_synthesize(args) -> int:
    packets = read_dataset(args.data)
    ext = extractor_from_checkpoint(
        load_checkpoint(args.extractor, expect_stage=STAGE_EXTRACTOR))
    flow = flow_from_checkpoint(load_checkpoint(args.flow, expect_stage=STAGE_FLOW))
    latents = ext.encode(values_matrix(packets))
    spec = NoiseSpec(mu=args.mu, sigma=args.sigma, seed=args.seed)
    cfg = SynthesisConfig(ratio=args.ratio, allow_oversampling=args.ratio > 1)
    pseudo = synthesize(flow, latents, spec, cfg)
    write_latents(args.out, pseudo, [Label.ANOMALY] * pseudo.shape[0])
    print(f"wrote {pseudo.shape[0]} pseudo-anomaly latents to {args.out}")
    return 0


def cmd_train_classifier(args) -> int:
    normals, normal_labels = read_latents(args.normals)
    for i, label in enumerate(normal_labels):
        if label is Label.ANOMALY:
            raise AnomalyInTrainingSet(
                f"{args.normals}: row {i} is labeled as an anomaly")
    pseudo, _ = read_latents(args.pseudo)
    cfg = ClassifierConfig(widths=(normals.shape[1], 64, 32, 1),
                           epochs=args.epochs, batch_size=args.batch,
                           lr=args.lr, patience=args.patience)
    ckpt = train_classifier(normals, pseudo, cfg, args.seed)
    save_checkpoint(args.out, ckpt)
    print(f"classifier checkpoint -> {args.out} "
          f"(best epoch {ckpt.meta['best_epoch']} of {ckpt.meta['epochs_run']})")
    return 0


def cmd_infer(args) -> int:
    packets = read_dataset(args.data)
    scored = infer(args.extractor, args.classifier, packets)
    write_scores(args.scores_out, scored)
    print(f"wrote {len(scored)} scores to {args.scores_out}")
    if args.report_out:
        report = evaluate(scored)
        write_report(args.report_out, report)
        print(format_report(report), end="")
    return 0


def cmd_eval(args) -> int:
    scored = read_scores(args.scores)
    report = evaluate(scored)
    if args.report_out:
        write_report(args.report_out, report)
    print(format_report(report), end="")
    return 0


_PIPELINE_KEYS = {
    "workdir": str, "train_csv": str, "test_csv": str, "train_pcap": str,
    "test_normal_pcap": str, "test_anomaly_pcap": str, "seed": int,
    "ratio": float, "input_dim": int, "latent_dim": int, "w_adv": float,
    "w_rec": float, "epochs": int, "batch_size": int, "lr": float,
    "patience": int, "flow_blocks": int, "flow_hidden": int,
}


def _pipeline_config(args) -> PipelineConfig:
    values: dict = {}
    if args.config:
        raw = _read_config_file(args.config)
        for key, text in raw.items():
            if key == "noise_grid":
                values[key] = _parse_noise_grid(text)
            elif key in _PIPELINE_KEYS:
                values[key] = _PIPELINE_KEYS[key](text)
            else:
                raise FlowgateError(f"unknown config key {key!r}")
    for key in _PIPELINE_KEYS:
        arg = getattr(args, key, None)
        if arg is not None:
            values[key] = arg
    if args.noise_grid:
        values["noise_grid"] = _parse_noise_grid(args.noise_grid)
    if "workdir" not in values:
        raise FlowgateError("pipeline needs a workdir (flag or config file)")
    return PipelineConfig(**values)


def cmd_pipeline(args) -> int:
    cfg = _pipeline_config(args)
    if args.seeds:
        seeds = [int(s) for s in args.seeds.split(",")]
        summary, _ = repeat_pipeline(cfg, seeds)
        print(summary, end="")
        return 0
    if args.ratios:
        ratios = [float(r) for r in args.ratios.split(",")]
        table, _ = ratio_ablation(cfg, ratios)
        print(table, end="")
        return 0
    result = run_pipeline(cfg)
    mu, sigma = result.best_setting
    print(f"best noise setting: mu={mu:g} sigma={sigma:g}")
    print(format_report(result.best), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flowgate",
        description="Semi-supervised anomaly traffic detection trained on "
                    "normal packets only")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="captures -> encoded packet CSV")
    p.add_argument("--in", dest="input", required=True,
                   help="capture file or directory")
    p.add_argument("--out", required=True)
    p.add_argument("--label", choices=["0", "1", "none"], default="none")
    p.set_defaults(fn=cmd_preprocess)

    p = sub.add_parser("make-corpus", help="generate the synthetic desk-scale corpus")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--n-normal", type=int, default=12000)
    p.add_argument("--n-anomaly", type=int, default=1000)
    p.add_argument("--n-train", type=int, default=10000,
                   help="also write train/test splits (0 disables)")
    p.add_argument("--n-test-normal", type=int, default=1000)
    p.add_argument("--n-test-anomaly", type=int, default=1000)
    p.set_defaults(fn=cmd_make_corpus)

    p = sub.add_parser("train-extractor", help="stage 1: reconstruction model")
    p.add_argument("--data", required=True, help="normal packet CSV")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--patience", type=int, default=10)
    p.set_defaults(fn=cmd_train_extractor)

    p = sub.add_parser("train-flow", help="stage 2: bidirectional flow")
    p.add_argument("--latents-from", required=True, help="extractor checkpoint")
    p.add_argument("--data", required=True, help="normal packet CSV")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--patience", type=int, default=10)
    p.add_argument("--blocks", type=int, default=8)
    p.add_argument("--hidden", type=int, default=128)
    p.set_defaults(fn=cmd_train_flow)

    p = sub.add_parser("synthesize", help="pseudo-anomaly latents via the flow")
    p.add_argument("--flow", required=True)
    p.add_argument("--extractor", required=True)
    p.add_argument("--data", required=True, help="normal packet CSV")
    p.add_argument("--mu", type=float, required=True)
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--ratio", type=float, default=0.5)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help="latent CSV output")
    p.set_defaults(fn=cmd_synthesize)

    p = sub.add_parser("train-classifier", help="stage 3: latent classifier")
    p.add_argument("--normals", required=True, help="normal latent CSV")
    p.add_argument("--pseudo", required=True, help="pseudo-anomaly latent CSV")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--patience", type=int, default=10)
    p.set_defaults(fn=cmd_train_classifier)

    p = sub.add_parser("infer", help="score packets with encoder + classifier only")
    p.add_argument("--extractor", required=True)
    p.add_argument("--classifier", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--scores-out", required=True)
    p.add_argument("--report-out")
    p.set_defaults(fn=cmd_infer)

    p = sub.add_parser("eval", help="AUROC and histograms from a score CSV")
    p.add_argument("--scores", required=True)
    p.add_argument("--report-out")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("pipeline", help="run all stages end to end")
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--workdir")
    p.add_argument("--train-csv", dest="train_csv")
    p.add_argument("--test-csv", dest="test_csv")
    p.add_argument("--train-pcap", dest="train_pcap")
    p.add_argument("--test-normal-pcap", dest="test_normal_pcap")
    p.add_argument("--test-anomaly-pcap", dest="test_anomaly_pcap")
    p.add_argument("--seed", type=int)
    p.add_argument("--noise-grid", dest="noise_grid",
                   help="e.g. '-9,5;-25,5;-100,5;0,1' "
                        f"(default {';'.join(f'{m:g},{s:g}' for m, s in DEFAULT_NOISE_GRID)})")
    p.add_argument("--ratio", type=float)
    p.add_argument("--ratios", help="comma list; runs the ratio ablation table")
    p.add_argument("--seeds", help="comma list; repeats the pipeline per seed "
                                   "and reports mean/stddev")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--patience", type=int)
    p.add_argument("--latent-dim", dest="latent_dim", type=int)
    p.add_argument("--flow-blocks", dest="flow_blocks", type=int)
    p.add_argument("--flow-hidden", dest="flow_hidden", type=int)
    p.set_defaults(fn=cmd_pipeline)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(name)s %(message)s", datefmt="%H:%M:%S")
    try:
        return args.fn(args)
    except FlowgateError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
