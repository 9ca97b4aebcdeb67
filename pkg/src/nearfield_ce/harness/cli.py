"""Command-line entry point: ``python -m nearfield_ce.harness <verb> ...``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from .config import ConfigError, ExperimentConfig, load_config, write_snapshot

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4

log = logging.getLogger("nearfield_ce")


def _config(args) -> ExperimentConfig:
    return load_config(args.config) if args.config else ExperimentConfig()


def cmd_gen(args) -> None:
    from .dataset import gen_dataset, save_dataset

    cfg = _config(args)
    ds = gen_dataset(cfg, args.seed)
    save_dataset(ds, args.out)
    write_snapshot(cfg, Path(args.out).parent)
    log.info("wrote %s (%d/%d/%d sequences)", args.out, len(ds["train"]), len(ds["val"]),
             len(ds["test"]))


def cmd_train(args) -> None:
    from ..dstice import checkpoint
    from ..dstice.gain import EstimatorContext
    from ..dstice.train import train
    from ..pilot import build_codebooks
    from .dataset import gen_dataset, load_dataset
    from .sweep import loss_trace_report

    cfg = _config(args)
    ds = load_dataset(args.dataset) if args.dataset else gen_dataset(cfg)
    if ds.config_hash != cfg.config_hash():
        log.warning("dataset was generated with config %s, training config is %s",
                    ds.config_hash, cfg.config_hash())
    sys_cfg, pilot = cfg.system_config(), cfg.pilot_config()
    ctx = EstimatorContext.build(sys_cfg, build_codebooks(sys_cfg, pilot), pilot)
    val = ds["val"].sequence_data() if len(ds["val"]) else None
    res = train(ds["train"].sequence_data(), cfg.network_config(), cfg.train_config(), ctx, val)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    checkpoint.save(out, cfg.network_config(), res.params, cfg.seed)
    loss_trace_report(res.losses, out.with_suffix(".loss.csv"), cfg.training.window)
    write_snapshot(cfg, out.parent)
    log.info("trained %d iterations (converged=%s), checkpoint %s", res.iterations,
             res.converged, out)


def cmd_eval(args) -> None:
    from .dataset import load_dataset
    from .sweep import evaluate_split

    cfg = _config(args)
    if args.checkpoint:
        cfg = dataclasses.replace(cfg, checkpoint=args.checkpoint)
    ds = load_dataset(args.dataset)
    evaluate_split(cfg, ds["test"], args.out, cov_h=ds["train"].h if len(ds["train"]) else None)
    write_snapshot(cfg, Path(args.out).parent)


def cmd_sweep(args) -> None:
    from .sweep import run_sweep

    cfg = _config(args)
    if args.checkpoint:
        cfg = dataclasses.replace(cfg, checkpoint=args.checkpoint)
    run_sweep(cfg, args.kind, args.out)
    write_snapshot(cfg, Path(args.out).parent)


def cmd_flops(args) -> None:
    from ..complexity import comparison_report, write_report

    rows = comparison_report()
    write_report(rows, args.out)
    for r in rows:
        print(f"{r.method:7s} ({r.n_t:2d},{r.n_r}) formula={r.formula_flops:.3e} "
              f"printed={r.printed_flops:.3g} ratio={r.ratio:.3f}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nearfield-ce", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True)

    g = sub.add_parser("gen", help="generate a dataset file")
    g.add_argument("--config")
    g.add_argument("--seed", type=int)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    t = sub.add_parser("train", help="train D-STiCE and write a checkpoint")
    t.add_argument("--config")
    t.add_argument("--dataset", help="dataset file (generated from the config when omitted)")
    t.add_argument("--out", required=True, help="checkpoint path (.json)")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate methods on a dataset's test split")
    e.add_argument("--config")
    e.add_argument("--dataset", required=True)
    e.add_argument("--checkpoint")
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("sweep", help="SNR or pilot-ratio sweep to CSV (resumable)")
    s.add_argument("kind", choices=("snr", "pilot_ratio"))
    s.add_argument("--config")
    s.add_argument("--checkpoint")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sweep)

    f = sub.add_parser("flops", help="complexity comparison report")
    f.add_argument("--out", required=True)
    f.set_defaults(func=cmd_flops)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except ConfigError as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except FloatingPointError as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERIC
    except OSError as exc:
        log.error("I/O error: %s", exc)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
