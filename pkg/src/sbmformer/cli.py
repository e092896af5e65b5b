"""Command line entry points.

    sbmformer train --config configs/synthetic_desk.cfg --out runs/desk
    sbmformer eval --ckpt runs/desk/model_final.ckpt
    sbmformer sample-mask --seq-len 16 --d 32 --k 8 --cost-csv cost.csv
    sbmformer sample-mask --ckpt runs/desk/model_final.ckpt --seq-file toks.txt
    sbmformer verify-theory --n 16 --k 4 --mc-trials 200000
    sbmformer gradcheck --tiny
    sbmformer flops --n 256 --m 65536 --k 128 --d 32

Every config key doubles as a ``--key-name value`` flag; ``--config FILE``
is applied first and flags override it. Outputs land in ``--out`` when
given, otherwise under ``$SBMFORMER_OUT/run-<hash8>`` (default root
``runs``), so identical configs rerun into identical paths and identical
files. Exit codes: 0 success, 1 a check failed or training diverged,
2 malformed input or config.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys

import numpy as np

from . import rngs, runconfig
from .checkpoint import load_model, save_model
from .costing import (density_report, flops_attention, instrument_forward,
                      write_cost_csv, write_density_csv)
from .duplicates import TaskConfig, generate_batch, read_sequence
from .encoder import _accuracy, init_model, model_forward, train_loop
from .errors import DomainError, InputError, NonFiniteLossError, ShapeError
from .gradcheck import check_model_gradients
from .numerics import bce_loss
from .sampler import write_mask
from .theory import (build_patterns, hamiltonian_cycle_expectation, monte_carlo_cycles,
                     threshold_probability, threshold_probability_clamped,
                     verify_assumption1)


def _add_config_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", metavar="FILE",
                     help="key = value file, applied before any flags")
    for key in runconfig.SCHEMA:
        sub.add_argument("--" + key.replace("_", "-"), dest=f"cfg_{key}",
                         metavar=key.upper(), help=argparse.SUPPRESS)


def _resolve_config(args: argparse.Namespace) -> dict:
    config = runconfig.defaults()
    if getattr(args, "config", None):
        config = runconfig.read_config(args.config, base=config)
    for key in runconfig.SCHEMA:
        raw = getattr(args, f"cfg_{key}", None)
        if raw is not None:
            config[key] = runconfig.parse_value(key, raw)
    return config


def _out_dir(args: argparse.Namespace, config: dict) -> str:
    if getattr(args, "out", None):
        return args.out
    root = os.environ.get("SBMFORMER_OUT", "runs")
    return os.path.join(root, f"run-{runconfig.config_hash(config)[:8]}")


def _eval_with_density(model, seq_len: int, batch_size: int, n_batches: int, seed: int):
    """(loss, accuracy, density rows) over fresh batches; batch i draws its
    data from substream (EVAL, 2i) and its forward randomness from (EVAL, 2i+1)."""
    task = TaskConfig(seq_len=seq_len, batch_size=batch_size, seed=seed)
    total_loss = 0.0
    total_hits = 0.0
    count = 0
    parts = []
    for i in range(n_batches):
        batch = generate_batch(task, rngs.substream(seed, rngs.STREAM_EVAL, 2 * i))
        trace = model_forward(model, batch.tokens,
                              rngs.substream(seed, rngs.STREAM_EVAL, 2 * i + 1),
                              training=False)
        if model.config.pooling == "mean":
            mask = np.ones_like(batch.targets, dtype=bool)
        else:
            mask = trace.valid.reshape(batch.tokens.shape)
        bce, _ = bce_loss(trace.logits, batch.targets, mask)
        n = int(mask.sum())
        total_loss += bce * n
        total_hits += _accuracy(trace.logits, batch.targets, mask) * n
        count += n
        parts.append(trace.head_densities())
    rows = density_report(np.concatenate(parts, axis=2))
    return total_loss / count, total_hits / count, rows


def _cmd_train(args: argparse.Namespace) -> int:
    config = _resolve_config(args)
    mc = runconfig.model_config(config)
    task = runconfig.task_config(config)
    out_dir = _out_dir(args, config)
    os.makedirs(out_dir, exist_ok=True)
    runconfig.write_manifest(os.path.join(out_dir, "manifest.txt"), config)
    chash = runconfig.config_hash(config)
    citems = dataclasses.asdict(mc)

    model = init_model(mc)
    steps = config["steps"]
    every = max(1, steps // 20)
    header = ["step", "loss", "bce", "accuracy", "density_mean", "expected_density_mean"]
    header += [f"density_l{li}h{hi}" for li in range(mc.n_layers) for hi in range(mc.n_heads)]

    with open(os.path.join(out_dir, "metrics.csv"), "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")

        def on_step(m):
            row = [str(m.step), f"{m.loss:.10g}", f"{m.bce:.10g}",
                   f"{m.accuracy:.6g}", f"{m.density_mean:.10g}",
                   f"{m.expected_density_mean:.10g}"]
            row += [f"{m.density_by_head[li, hi]:.10g}"
                    for li in range(mc.n_layers) for hi in range(mc.n_heads)]
            fh.write(",".join(row) + "\n")
            if m.step % every == 0 or m.step == steps - 1:
                print(f"step {m.step:>6}  loss {m.loss:.4f}  bce {m.bce:.4f}  "
                      f"acc {m.accuracy:.3f}  density {m.density_mean:.3f}")
            if config["ckpt_every"] > 0 and (m.step + 1) % config["ckpt_every"] == 0:
                save_model(model, os.path.join(out_dir, f"model_step{m.step + 1:06d}.ckpt"),
                           citems, chash)

        history = train_loop(model, task, steps, lr=config["lr"],
                             on_step=on_step, stop_bce=args.stop_bce)

    save_model(model, os.path.join(out_dir, "model_final.ckpt"), citems, chash)
    loss, acc, rows = _eval_with_density(model, config["seq_len"], config["batch_size"],
                                         config["eval_batches"], config["seed"])
    write_density_csv(os.path.join(out_dir, "density.csv"), rows)
    last = history[-1]
    print(f"finished after {len(history)} steps: train bce {last.bce:.4f}, "
          f"eval loss {loss:.4f}, eval accuracy {acc:.4f}")
    print(f"outputs in {out_dir}")
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    config = _resolve_config(args)
    model, chash, _items = load_model(args.ckpt)
    loss, acc, rows = _eval_with_density(model, model.config.max_seq_len,
                                         config["batch_size"], config["eval_batches"],
                                         config["seed"])
    print(f"checkpoint {args.ckpt} (config hash {chash})")
    print(f"eval loss {loss:.6f}, accuracy {acc:.4f} over {config['eval_batches']} batches")
    for row in rows:
        print(f"  layer {row.layer} head {row.head}: density {row.mean:.4f} +- {row.std:.4f}")
    if args.density_csv:
        write_density_csv(args.density_csv, rows)
    return 0


def _cmd_sample_mask(args: argparse.Namespace) -> int:
    config = _resolve_config(args)
    seed = config["seed"]
    if args.ckpt:
        model, _chash, _items = load_model(args.ckpt)
    else:
        model = init_model(runconfig.model_config(config))
    cfg = model.config
    if args.seq_file:
        with open(args.seq_file, "r", encoding="utf-8") as fh:
            tokens = read_sequence(fh)
    else:
        task = TaskConfig(seq_len=cfg.max_seq_len, batch_size=1, seed=seed)
        tokens = generate_batch(task, rngs.substream(seed, rngs.STREAM_TASK)).tokens[0]
    trace = model_forward(model, tokens, rngs.substream(seed, rngs.STREAM_FORWARD),
                          training=False, injected_mask=args.inject, count_ops=True)
    li, hi = args.layer, args.head
    if not (0 <= li < cfg.n_layers and 0 <= hi < cfg.n_heads):
        raise InputError(f"no head at layer {li}, head {hi} in a "
                         f"{cfg.n_layers}-layer, {cfg.n_heads}-head model")
    head_trace = trace.layer_traces[li].head_traces[hi]
    mask = head_trace.blocks[0].mask
    summary = (f"layer {li} head {hi}: {mask.m} edges over {tokens.size} tokens, "
               f"density {mask.density():.4f}")
    if args.out_file:
        with open(args.out_file, "w", encoding="utf-8") as fh:
            write_mask(mask, fh)
        print(summary + f", written to {args.out_file}")
    else:
        write_mask(mask, sys.stdout)
        print(summary, file=sys.stderr)
    if args.cost_csv:
        write_cost_csv(args.cost_csv, instrument_forward(head_trace))
    return 0


def _cmd_verify_theory(args: argparse.Namespace) -> int:
    patterns, _realizations = build_patterns(args.n, args.k)
    report = verify_assumption1(patterns)
    print(f"alternating patterns on n={args.n} tokens, k={args.k} clusters/relays")
    for line in report.lines():
        print(line)
    ok = report.passed

    p_raw = threshold_probability(args.n)
    p = threshold_probability_clamped(args.n)
    expect = hamiltonian_cycle_expectation(args.n, p)
    print(f"cycle threshold p*(n={args.n}) = {p_raw:.6f}"
          + (f" (clamped to {p:.6f})" if p < p_raw else ""))
    print(f"expected Hamiltonian cycles at p*: {expect:.6f}")

    if args.mc_trials > 0:
        n, p_mc = args.mc_n, args.mc_p
        expect_mc = hamiltonian_cycle_expectation(n, p_mc)
        mean, se = monte_carlo_cycles(n, p_mc, args.mc_trials,
                                      rngs.substream(args.seed, rngs.STREAM_TEST))
        dev = abs(mean - expect_mc) / se if se > 0 else 0.0
        print(f"monte carlo n={n}, p={p_mc}: mean {mean:.4f} vs expected "
              f"{expect_mc:.4f} ({dev:.2f} standard errors, {args.mc_trials} trials)")
        ok = ok and dev <= 4.0

    print("theory checks " + ("passed" if ok else "FAILED"))
    return 0 if ok else 1


def _cmd_gradcheck(args: argparse.Namespace) -> int:
    n, d, k = (6, 8, 2) if args.tiny else (args.n, args.d, args.k)
    report = check_model_gradients(n=n, d=d, k=k, seed=args.seed,
                                   h=args.h, tol=args.tol)
    for line in report.lines():
        print(line)
    return 0 if report.passed else 1


def _cmd_flops(args: argparse.Namespace) -> int:
    config = _resolve_config(args)
    n, k = config["seq_len"], config["k"]
    d_h = config["d"] // config["n_heads"]
    m = args.m if args.m is not None else round(args.density * n * n)
    report = flops_attention(n, m, k, d_h)
    for line in report.lines():
        print(line)
    dense = flops_attention(n, n * n, k, d_h)
    print(f"dense equivalent (m = n^2): {dense.flops_total:,.0f} FLOPs "
          f"({report.flops_total / dense.flops_total:.3f}x)")
    if args.csv:
        write_cost_csv(args.csv, report)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sbmformer",
        description="Sparse attention with sampled block-model supports.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train on the duplicate-token task")
    _add_config_flags(p)
    p.add_argument("--out", metavar="DIR", help="output directory")
    p.add_argument("--stop-bce", type=float, default=None, metavar="X",
                   help="stop once the train batch loss drops below X")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on fresh batches")
    _add_config_flags(p)
    p.add_argument("--ckpt", required=True, metavar="FILE")
    p.add_argument("--density-csv", metavar="FILE", help="also write density rows here")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("sample-mask", help="draw one attention mask and dump it as text")
    _add_config_flags(p)
    p.add_argument("--ckpt", metavar="FILE",
                   help="use this checkpoint instead of a fresh model")
    p.add_argument("--seq-file", metavar="FILE",
                   help="token ids to run through, whitespace separated")
    p.add_argument("--layer", type=int, default=0, help="layer to dump (default 0)")
    p.add_argument("--head", type=int, default=0, help="head to dump (default 0)")
    p.add_argument("--inject", choices=("full", "identity"),
                   help="skip sampling and emit this fixed mask")
    p.add_argument("--out-file", metavar="FILE", help="write here instead of stdout")
    p.add_argument("--cost-csv", metavar="FILE",
                   help="write the head's instrumented cost report here")
    p.set_defaults(func=_cmd_sample_mask)

    p = sub.add_parser("verify-theory", help="run the constructive approximation checks")
    p.add_argument("--n", type=int, default=16)
    p.add_argument("--k", type=int, default=4)
    p.add_argument("--mc-trials", type=int, default=0, metavar="T",
                   help="also monte-carlo the cycle expectation with T trials")
    p.add_argument("--mc-n", type=int, default=6)
    p.add_argument("--mc-p", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_verify_theory)

    p = sub.add_parser("gradcheck", help="finite-difference the backward pass")
    p.add_argument("--tiny", action="store_true",
                   help="force the small reference instance (n=6, d=8, k=2)")
    p.add_argument("--n", type=int, default=6)
    p.add_argument("--d", type=int, default=8)
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--h", type=float, default=1e-5)
    p.add_argument("--tol", type=float, default=1e-4)
    p.set_defaults(func=_cmd_gradcheck)

    p = sub.add_parser("flops", help="print the attention cost model")
    _add_config_flags(p)
    p.add_argument("--n", dest="cfg_seq_len", metavar="N",
                   help="token count (alias for --seq-len)")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--m", type=int, default=None, help="sampled edge count")
    group.add_argument("--density", type=float, default=1.0,
                       help="edge count as a fraction of n^2")
    p.add_argument("--csv", metavar="FILE", help="write component,flops,bytes rows")
    p.set_defaults(func=_cmd_flops)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InputError, DomainError, ShapeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NonFiniteLossError as exc:
        print(f"error: {exc}", file=sys.stderr)
        for key, value in exc.diagnostics.items():
            print(f"  {key}: {value}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
