"""Command-line driver.

Subcommands: synth, train, advtrain, attack, eval, gradcheck, report.
Exit codes: 0 success, 1 configuration error, 2 runtime failure. All
randomness flows from --seed / the config seed.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .data import (save_tabular_csv, save_text_csv, synth_tabular_dataset,
                   synth_text_dataset, write_manifest)
from .encoding import AlphabetCodec, TINY_LENGTH
from .errors import ConfigError, ContractError, FormatError, NumericsError, TrainingDiverged
from .gradcheck import grad_check
from .gradient_attacks import ContinuousAttackSpec, batch_attack
from .harness import (EvalReport, ExperimentConfig, LossBundle, ReportRow,
                      adversarial_train, config_from_toml, evaluate, load_trained,
                      make_loss_builder, make_loss_fn, parse_attack, train,
                      write_report)
from .losses import ClassCenters
from .models import CharCnnModel, tiny_charcnn_config
from .tensor import Tape
from .text_attacks import DiscreteAttackSpec, generate_adversarial, save_adversarial_csv


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit 1 with usage instead of argparse's exit 2
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="robust1d", description=__doc__)
    parser.add_argument("--version", action="version", version=f"robust1d {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="experiment config (TOML)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help="override the output directory")
        p.add_argument("--profile", choices=["tiny", "full"])
        p.add_argument("--loss", choices=["ce", "center", "marginal", "marginal-contrastive"])
        p.add_argument("--margin", type=float)
        p.add_argument("--variant", choices=["eq4", "eq6"])
        p.add_argument("--attack", action="append", default=None,
                       help="attack spec, repeatable (e.g. pgd:eps=8/255,steps=10)")
        p.add_argument("--subsample", type=int)

    p_synth = sub.add_parser("synth", help="generate a synthetic corpus + manifest")
    p_synth.add_argument("--classes", type=int, default=3)
    p_synth.add_argument("--per-class", type=int, default=100)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--out", required=True, help="CSV path to write")
    p_synth.add_argument("--tabular", action="store_true", help="tabular blobs instead of text")
    p_synth.add_argument("--features", type=int, default=8)

    for name, help_text in [
        ("train", "train a model"),
        ("advtrain", "adversarially train a model"),
        ("eval", "evaluate a checkpoint under the configured attacks"),
        ("attack", "write an adversarial corpus for a checkpoint"),
    ]:
        p = sub.add_parser(name, help=help_text)
        common(p)
        if name in ("eval", "attack"):
            p.add_argument("--checkpoint", required=True)

    p_gc = sub.add_parser("gradcheck", help="finite-difference check of the model+loss gradient")
    p_gc.add_argument("--profile", choices=["tiny"], default="tiny")
    p_gc.add_argument("--loss", default="marginal-contrastive",
                      choices=["ce", "center", "marginal", "marginal-contrastive"])
    p_gc.add_argument("--seed", type=int, default=0)
    p_gc.add_argument("--margin", type=float, default=0.5)
    p_gc.add_argument("--variant", choices=["eq4", "eq6"], default="eq4")
    p_gc.add_argument("--coords", type=int, default=8,
                      help="probed coordinates per parameter (0 = all)")

    p_rep = sub.add_parser("report", help="merge eval reports into one CSV/JSON pair")
    p_rep.add_argument("reports", nargs="+", help="report.json files to merge")
    p_rep.add_argument("--out", required=True)
    return parser


def _load_config(args) -> ExperimentConfig:
    if not args.config:
        raise ConfigError("missing --config")
    cfg = config_from_toml(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out_dir = args.out
    if args.profile is not None:
        cfg.profile = args.profile
    if args.loss is not None:
        cfg.loss = args.loss
    if args.margin is not None:
        cfg.margin = args.margin
    if args.variant is not None:
        cfg.variant = args.variant
    if args.attack is not None:
        for spec in args.attack:
            parse_attack(spec)
        cfg.eval_attacks = list(args.attack)
    if args.subsample is not None:
        cfg.subsample = args.subsample
    return cfg


def _cmd_synth(args) -> int:
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if args.tabular:
        ds = synth_tabular_dataset(classes=args.classes, per_class=args.per_class,
                                   features=args.features, seed=args.seed)
        save_tabular_csv(ds, out)
        schema = "tabular"
    else:
        ds = synth_text_dataset(classes=args.classes, per_class=args.per_class,
                                seed=args.seed)
        save_text_csv(ds, out)
        schema = "text"
    manifest = out.with_suffix(".manifest")
    write_manifest(manifest, {
        "name": ds.name,
        "path": out.name,
        "schema": schema,
        "classes": ds.classes,
        "split_seed": args.seed,
    })
    print(f"wrote {out} and {manifest} ({len(ds)} records, {ds.classes} classes)")
    return 0


def _cmd_train(args, adversarial: bool) -> int:
    cfg = _load_config(args)
    result = adversarial_train(cfg) if adversarial else train(cfg)
    final = result.history[-1]
    print(f"trained {cfg.loss} model: epoch {final['epoch']} "
          f"loss {final['loss']:.6f} val_acc {final['val_acc']:.2f}")
    print(f"checkpoint: {result.checkpoint_path}")
    report = evaluate(result, [parse_attack(s) for s in cfg.eval_attacks],
                      subsample=cfg.subsample, seed=cfg.seed,
                      attack_bundle=_attack_bundle(cfg))
    csv_path, json_path = write_report([report], cfg.out_dir, cfg.echo)
    print(f"report: {csv_path} {json_path}")
    return 0


def _attack_bundle(cfg: ExperimentConfig):
    if cfg.attack_loss is None:
        return None
    return LossBundle.from_config(cfg, kind=cfg.attack_loss)


def _cmd_eval(args) -> int:
    cfg = _load_config(args)
    result = load_trained(cfg, args.checkpoint)
    report = evaluate(result, [parse_attack(s) for s in cfg.eval_attacks],
                      subsample=cfg.subsample, seed=cfg.seed,
                      attack_bundle=_attack_bundle(cfg))
    csv_path, json_path = write_report([report], cfg.out_dir, cfg.echo)
    for row in report.rows:
        print(f"{row.attack or 'clean'}: clean {row.clean_accuracy:.2f} "
              f"adv {row.adversarial_accuracy:.2f} (n={row.samples})")
    print(f"report: {csv_path} {json_path}")
    return 0


def _cmd_attack(args) -> int:
    cfg = _load_config(args)
    if len(cfg.eval_attacks) != 1:
        raise ConfigError("attack needs exactly one --attack spec")
    spec = parse_attack(cfg.eval_attacks[0])
    result = load_trained(cfg, args.checkpoint)
    test = result.test_set
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    out_path = out_dir / "adversarial.csv"
    bundle = _attack_bundle(cfg) or result.bundle
    if isinstance(spec, DiscreteAttackSpec):
        rows = []
        for i, (label, text) in enumerate(test.records):
            per_sample = dataclasses.replace(spec, seed=spec.seed ^ i)
            adv, edits, success = generate_adversarial(
                result.model, result.codec, text, label - 1, per_sample,
                make_loss_builder(bundle, result.centers))
            rows.append((label, adv, edits, success, spec.scoring, spec.transform))
        save_adversarial_csv(out_path, rows)
    else:
        loss_fn = make_loss_fn(bundle, result.centers)
        adv, success, _ = batch_attack(result.model, loss_fn, test.features,
                                       test.labels, spec)
        with open(out_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"f{i}" for i in range(test.feature_count)]
                            + ["label", "success", "attack"])
            for row, label, won in zip(adv.data, test.labels, success):
                writer.writerow([f"{v:.12g}" for v in row]
                                + [int(label), int(won), spec.label()])
    print(f"wrote {out_path} ({len(test)} samples)")
    return 0


def _cmd_gradcheck(args) -> int:
    rng = np.random.default_rng(args.seed)
    codec = AlphabetCodec(length=TINY_LENGTH)
    model = CharCnnModel(tiny_charcnn_config(classes=3), codec, rng=rng)
    centers = ClassCenters.init(3, model.feature_dim, rng=rng)
    bundle = LossBundle(kind=args.loss, margin=args.margin, variant=args.variant)
    letters = "abcdefghijklmnopqrstuvwxyz "
    texts = ["".join(rng.choice(list(letters), size=40)) for _ in range(4)]
    labels = rng.integers(0, 3, size=4)
    xs = [codec.encode(t) for t in texts]

    def f(tape):
        features, logits = model.forward_rows(xs, tape)
        return bundle.compute(tape, features, logits, labels,
                              centers if bundle.needs_centers else None)

    params = model.parameters() + ([centers.weights] if bundle.needs_centers else [])
    coords = None if args.coords == 0 else args.coords
    err = grad_check(f, params, max_coords_per_param=coords,
                     rng=np.random.default_rng([args.seed, 1]))
    print(f"max relative error: {err:.3e}")
    return 0 if err <= 1e-4 else 2


def _cmd_report(args) -> int:
    reports = []
    echoes = []
    for path in args.reports:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        rows = []
        for entry in payload.get("rows", []):
            entry = dict(entry)
            entry.pop("improvement", None)
            rows.append(ReportRow(**entry))
        reports.append(EvalReport(rows))
        if payload.get("config"):
            echoes.append(str(payload["config"]))
    csv_path, json_path = write_report(reports, args.out, "\n".join(echoes))
    print(f"report: {csv_path} {json_path}")
    return 0


def cli(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "synth":
            return _cmd_synth(args)
        if args.command == "train":
            return _cmd_train(args, adversarial=False)
        if args.command == "advtrain":
            return _cmd_train(args, adversarial=True)
        if args.command == "eval":
            return _cmd_eval(args)
        if args.command == "attack":
            return _cmd_attack(args)
        if args.command == "gradcheck":
            return _cmd_gradcheck(args)
        if args.command == "report":
            return _cmd_report(args)
        raise ConfigError(f"unknown command {args.command!r}")
    except SystemExit as exc:  # argparse --help / --version
        return int(exc.code or 0)
    except (ConfigError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ContractError, NumericsError, TrainingDiverged, OSError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli())


if __name__ == "__main__":
    main()
