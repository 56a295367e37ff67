"""Command-line surface: gen-data, group, train, sample, eval.

Every command takes a run-config YAML, is deterministic for a fixed
(config, seed) pair, and uses exit code 0 for success, 1 for runtime
failure, and 2 for validation failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .circuits import Circuit
from .config import RunConfig
from .curriculum import (
    build_curriculum,
    count_affine_subspaces,
    count_clifford_distributions,
    enumerate_affine_subspaces,
    enumerate_clifford_distributions,
    gaussian_binomial,
    group_records,
    read_manifest,
    write_manifest,
)
from .device import DatasetConfig, NOISE_PRESETS, generate_germ_dataset, read_dataset, write_dataset
from .errors import (
    CheckpointError,
    ConfigError,
    ProbabilityError,
    QmlcError,
    StructureError,
)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_VALIDATION = 2

_VALIDATION_ERRORS = (ConfigError, StructureError, ProbabilityError, CheckpointError)


def _load_config(args) -> RunConfig:
    if args.config:
        cfg = RunConfig.from_yaml(args.config)
    else:
        cfg = RunConfig()
    if args.seed is not None:
        cfg = RunConfig.from_dict({**cfg.to_dict(), "seed": args.seed})
    return cfg


def _noise(cfg: RunConfig):
    try:
        return NOISE_PRESETS[cfg.noise_preset]()
    except KeyError:
        raise ConfigError(f"unknown noise preset {cfg.noise_preset!r}") from None


def _log(msg: str) -> None:
    print(msg, flush=True)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_gen_data(args) -> int:
    cfg = _load_config(args)
    germs = tuple(Circuit.from_text(t) for t in cfg.germs)
    ds_cfg = DatasetConfig(
        Q=cfg.Q,
        germs=germs,
        powers=cfg.powers,
        T_max=cfg.T,
        shots=cfg.shots,
        noise=_noise(cfg),
        seed=cfg.seed,
        preset=cfg.noise_preset,
    )
    records = generate_germ_dataset(ds_cfg)
    out = args.out or "dataset.tsv"
    write_dataset(records, out)
    meta = {
        "records": len(records),
        "germs": len(cfg.germs),
        "powers": list(cfg.powers),
        "shots": cfg.shots,
        "preset": cfg.noise_preset,
        "seed": cfg.seed,
        "config_hash": cfg.config_hash,
    }
    with open(out + ".meta.json", "w") as fh:
        json.dump(meta, fh, sort_keys=True, indent=2)
    _log(f"wrote {len(records)} records to {out}")
    return EXIT_OK


def cmd_group(args) -> int:
    cfg = _load_config(args)
    records = read_dataset(args.dataset)
    sets = group_records(records, cfg.n_set, cfg.tau, cfg.seed, max_use=cfg.max_use)
    plan = build_curriculum(sets, cfg.stage_edges)
    out = args.out or "minisets.tsv"
    write_manifest(plan, out)
    n_sets = sum(len(st) for st in plan.stages)
    _log(f"wrote {n_sets} mini-sets over {len(plan.stages)} stages to {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    from .checkpoint import load_bundle, save_bundle
    from .training import build_bundle, train

    cfg = _load_config(args)
    records = read_dataset(args.dataset)
    plan = read_manifest(args.manifest)
    out = args.out or "checkpoint.pt"
    if args.resume:
        bundle = load_bundle(args.resume, cfg=cfg, force=args.force)
        _log(f"resumed from {args.resume} at step {bundle.step}")
    else:
        bundle = build_bundle(cfg)
    report = train(bundle, records, plan, log=_log)
    save_bundle(bundle, out)
    curve_path = out + ".losses.tsv"
    mode = "a" if args.resume and os.path.exists(curve_path) else "w"
    with open(curve_path, mode) as fh:
        if mode == "w":
            fh.write("step\tstage\ttotal\tgcd\tctd\n")
        for row in report.joint:
            fh.write(
                f"{row['step']}\t{row['stage']}\t{row['total']:.8g}"
                f"\t{row['gcd']:.8g}\t{row['ctd']:.8g}\n"
            )
    if args.plots:
        _write_loss_plot(report, out + ".losses.png")
    _log(f"wrote checkpoint to {out} (step {bundle.step})")
    return EXIT_OK


def cmd_sample(args) -> int:
    from .checkpoint import load_bundle
    from .synthesis import read_prompts, evaluate_suite, write_report

    cfg = _load_config(args)
    bundle = load_bundle(args.checkpoint, cfg=cfg if args.config else None, force=args.force)
    prompts = read_prompts(args.prompts, max_attempts=bundle.cfg.max_attempts)
    noise = _noise(bundle.cfg)
    report = evaluate_suite(prompts, bundle, noise, seed=args.seed or bundle.cfg.seed)
    out = args.out or "synthesis.jsonl"
    write_report(report, out)
    accepted = sum(1 for r in report.rows if r["accepted"])
    _log(f"{accepted}/{len(prompts)} prompts accepted; report at {out}")
    return EXIT_OK if accepted >= 1 else EXIT_RUNTIME


def cmd_eval(args) -> int:
    from .checkpoint import load_bundle
    from .encoder import permutation_defect
    from .synthesis import SynthesisPrompt, evaluate_suite, write_report
    from .training import miniset_tensors

    cfg = _load_config(args)
    bundle = load_bundle(args.checkpoint, cfg=cfg if args.config else None, force=args.force)
    cfg = bundle.cfg
    failures: list[str] = []
    report: dict = {"config_hash": cfg.config_hash}

    # counting oracles against brute-force enumeration
    oracle = {}
    for n in range(1, 4):
        enum = enumerate_affine_subspaces(n)
        by_dim: dict[int, int] = {}
        for s in enum:
            k = int(np.log2(len(s)))
            by_dim[k] = by_dim.get(k, 0) + 1
        for k in range(n + 1):
            if by_dim.get(k, 0) != count_affine_subspaces(n, k):
                failures.append(f"subspace count mismatch at n={n}, k={k}")
        if len(enum) != count_clifford_distributions(n):
            failures.append(f"total distribution count mismatch at n={n}")
        oracle[f"T({n})"] = count_clifford_distributions(n)
    if oracle["T(1)"] != 3 or oracle["T(2)"] != 11:
        failures.append("closed-form distribution counts off reference values")
    oracle["gb(4,2)"] = gaussian_binomial(4, 2)
    report["counting"] = oracle

    # permutation invariance of the trained set encoder
    records = read_dataset(args.dataset) if args.dataset else None
    if records:
        import torch

        pool = records[: max(cfg.n_set, 3)]
        grids, ys = miniset_tensors(bundle, pool)
        with torch.no_grad():
            h_shorts = bundle.pipeline.embed_short(bundle.pipeline.transform_batch(ys))
        defect = permutation_defect(bundle.encoder, grids, h_shorts)
        report["permutation_defect"] = defect
        if defect > 1e-5:
            failures.append(f"set encoder permutation defect {defect:.3g} > 1e-5")

    # synthesis over every reachable target distribution
    noise = _noise(cfg)
    gates = tuple(bundle.vocab.gate_names())
    prompts = [
        SynthesisPrompt(
            target=p,
            gate_subset=gates,
            L_max=cfg.T,
            theta_tvd=cfg.theta_tvd,
            max_attempts=cfg.max_attempts,
        )
        for p in enumerate_clifford_distributions(cfg.Q)
    ]
    suite = evaluate_suite(prompts, bundle, noise, seed=args.seed or cfg.seed)
    report["acceptance_rate"] = suite.acceptance_rate
    report["mean_length"] = suite.mean_length

    out = args.out or "eval.json"
    with open(out, "w") as fh:
        json.dump({**report, "failures": failures}, fh, sort_keys=True, indent=2)
    write_report(suite, out + ".suite.jsonl")
    if args.plots:
        _write_suite_plot(suite, out + ".tvd.png")
    if failures:
        for f in failures:
            _log(f"FAIL: {f}")
        return EXIT_RUNTIME
    _log(f"all invariants hold; acceptance rate {suite.acceptance_rate:.2f}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# plots
# ---------------------------------------------------------------------------


def _write_loss_plot(report, path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    steps = [r["step"] for r in report.joint]
    fig, ax = plt.subplots(figsize=(7, 4))
    for key in ("total", "gcd", "ctd"):
        ax.plot(steps, [r[key] for r in report.joint], label=key)
    for s in report.stage_starts:
        ax.axvline(s, color="gray", ls=":", lw=0.8)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _write_suite_plot(suite, path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    tvds = [r["tvd"] for r in suite.rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(range(len(tvds)), tvds)
    ax.set_xlabel("prompt")
    ax.set_ylabel("best TVD")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qmlc",
        description="circuit synthesis from measurement statistics",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="run-config YAML (defaults used if absent)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help="output path")
        p.add_argument("--plots", action="store_true", help="emit plot files")
        p.add_argument("--force", action="store_true", help="ignore config-hash mismatch")

    p = sub.add_parser("gen-data", help="simulate the germ-power dataset")
    common(p)
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("group", help="build the mini-set curriculum manifest")
    common(p)
    p.add_argument("dataset", help="dataset TSV from gen-data")
    p.set_defaults(fn=cmd_group)

    p = sub.add_parser("train", help="train label nets, encoder, and diffusion models")
    common(p)
    p.add_argument("dataset", help="dataset TSV")
    p.add_argument("manifest", help="mini-set manifest TSV")
    p.add_argument("--resume", help="checkpoint to continue from")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("sample", help="synthesize circuits for a prompt file")
    common(p)
    p.add_argument("checkpoint", help="trained checkpoint")
    p.add_argument("prompts", help="prompt TSV")
    p.set_defaults(fn=cmd_sample)

    p = sub.add_parser("eval", help="run invariant suites and the synthesis benchmark")
    common(p)
    p.add_argument("checkpoint", help="trained checkpoint")
    p.add_argument("--dataset", help="dataset TSV for the permutation check")
    p.set_defaults(fn=cmd_eval)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except _VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except QmlcError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
