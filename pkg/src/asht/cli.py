"""Command-line interface: reproducible runs of every stage of the laboratory.

Subcommands
-----------
run-pipeline     train policy + monitor + inference end to end into a run dir
train-policy     phase 1 only: train the recurrent policy
gen-dataset      simulate an agent and write a labeled sequence dataset
train-monitor    fit the stopping monitor on a scalar-labeled dataset
train-inference  fit the hypothesis classifier on a class-labeled dataset
eval             evaluate a trained run directory (fixed or sequential)
baseline         evaluate the exact-belief baselines without any training
sweep            decoder sample-efficiency curve from a trained run
env-validate     check an environment config and print its dimensions

Conventions: ``--seed``, ``--config`` and ``--out`` are accepted everywhere.
Artifact-producing commands write into ``<out>/<run-id>/`` — ``--out``
defaults to ``$ASHT_RUN_DIR`` or ``./runs`` — always including a
``manifest.json`` with content digests, and refuse to overwrite an existing
run directory unless ``--force`` is given.  Named configs (for example
``two_sensor_T10``) resolve to the files shipped under ``asht/configs``;
paths are used as-is.  Failures print one ``error: ...`` line on stderr and
exit nonzero.
"""

from __future__ import annotations

import argparse
import json
import shutil
import sys
from dataclasses import asdict, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .data import LABEL_EXTRACTORS, dataset_from_batch, load_dataset, save_dataset
from .decoders import DecoderArch, TrainingConfig, train_inference, train_monitor
from .engine import ChernoffAgent, RandomAgent, simulate
from .env import EnvConfigError, EnvironmentPair, load_env_config
from .evaluation import (
    AGENT_KINDS,
    ENV_KINDS,
    MODE_KINDS,
    STOP_RULES,
    EvalSpec,
    evaluate,
    sample_efficiency_sweep,
    summaries_to_csv,
    sweep_to_csv,
)
from .persist import (
    CheckpointError,
    RunManifest,
    file_sha256,
    load_manifest,
    load_policy_checkpoint,
    save_decoder_checkpoint,
    save_manifest,
    save_policy_checkpoint,
)
from .pipeline import (
    LL_DISCARD_ABOVE,
    PipelineConfig,
    PipelineError,
    load_bundle,
    pipeline_config_from_dict,
    resolve_env_pair,
    run_pipeline,
)
from .policy import PolicyAgent, save_learning_curve, train_policy

OUTPUT_ROOT_VAR = "ASHT_RUN_DIR"
_EXPECTED_ERRORS = (ValueError, OSError, KeyError, PipelineError, CheckpointError,
                    EnvConfigError, json.JSONDecodeError)


# --------------------------------------------------------------------------
# shared plumbing


def packaged_config_names() -> list:
    root = resources.files("asht") / "configs"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def resolve_config_file(name: str) -> Path:
    """A literal path if it exists, otherwise a config shipped with the package."""
    p = Path(name)
    if p.exists():
        return p
    if "/" not in name:
        candidate = resources.files("asht") / "configs" / f"{name}.json"
        if candidate.is_file():
            return Path(str(candidate))
    raise FileNotFoundError(
        f"no config file {name!r}; packaged configs: {', '.join(packaged_config_names())}"
    )


def load_pipeline_config(name: str) -> PipelineConfig:
    path = resolve_config_file(name)
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    return pipeline_config_from_dict(doc)


def _resolve_env(name: str) -> EnvironmentPair:
    """Builtin pair name, env-config path, or packaged env-config name."""
    try:
        return resolve_env_pair(name)
    except FileNotFoundError:
        return load_env_config(resolve_config_file(name))


def _output_root(args) -> Path:
    if args.out:
        return Path(args.out)
    import os

    return Path(os.environ.get(OUTPUT_ROOT_VAR, "runs"))


def _prepare_run_dir(args, run_id: str) -> Path:
    run_dir = _output_root(args) / run_id
    if run_dir.exists():
        if not args.force:
            raise FileExistsError(
                f"run directory {run_dir} already exists (use --force to replace it)"
            )
        shutil.rmtree(run_dir)
    run_dir.mkdir(parents=True)
    return run_dir


def _finish_run(run_dir: Path, run_id: str, seed: int, config: dict) -> None:
    """Digest every artifact in the run directory and write the manifest."""
    artifacts = {p.name: file_sha256(p) for p in sorted(run_dir.iterdir())
                 if p.name != "manifest.json"}
    manifest = RunManifest(run_id=run_id, seed=seed, config=config, artifacts=artifacts)
    save_manifest(manifest, run_dir / "manifest.json")


def _write_report(run_dir: Path, rows) -> None:
    lines = ["phase,metric,value"]
    lines += [f"{phase},{metric},{value:.6f}" for phase, metric, value in rows]
    (run_dir / "report.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")


def _episodes(args) -> int:
    if args.episodes is not None:
        return args.episodes
    return 2000 if args.fast else 10000


def _spec_from_flags(args, agent: str) -> EvalSpec:
    if args.mode == "fixed":
        if args.T is None:
            raise ValueError("fixed mode requires --T")
        value = float(args.T)
    else:
        if args.c is None:
            raise ValueError("sequential mode requires --c")
        value = args.c
    return EvalSpec(
        agent=agent,
        env=args.env,
        mode=args.mode,
        value=value,
        episodes=_episodes(args),
        seed=args.seed if args.seed is not None else 0,
        t_cap=args.t_cap if args.t_cap is not None else 50,
        knowledge=args.knowledge,
        stop_rule=args.stop_rule,
    )


def _emit_summary(args, spec: EvalSpec, summary, run_id: str, config: dict) -> None:
    text = summaries_to_csv([summary], timing=args.timing)
    sys.stdout.write(text)
    run_dir = _prepare_run_dir(args, run_id)
    (run_dir / "results.csv").write_text(text, encoding="utf-8")
    _finish_run(run_dir, run_id, spec.seed, config)


# --------------------------------------------------------------------------
# subcommands


def cmd_env_validate(args) -> int:
    if not args.config:
        raise ValueError("env-validate requires --config")
    pair = _resolve_env(args.config)
    print(
        f"ok: hypotheses={pair.train.n_hypotheses} actions={pair.train.n_actions} "
        f"observations={pair.train.n_observations}"
    )
    return 0


def cmd_baseline(args) -> int:
    if not args.config:
        raise ValueError("baseline requires --config (environment name or path)")
    pair = _resolve_env(args.config)
    spec = _spec_from_flags(args, args.agent)
    summary = evaluate(spec, pair, workers=args.workers)
    run_id = f"baseline-{spec.agent}-{spec.mode}-{spec.value:g}-s{spec.seed}"
    if args.run_id:
        run_id = args.run_id
    _emit_summary(args, spec, summary, run_id,
                  {**asdict(spec), "env_config": args.config})
    return 0


def cmd_eval(args) -> int:
    run_dir = Path(args.run)
    manifest = load_manifest(run_dir / "manifest.json")
    pair = _resolve_env(manifest.config["env"])
    bundle = load_bundle(run_dir) if args.agent == "composite" else None
    if args.mode is None:
        args.mode = manifest.config["mode"]
        if args.mode == "fixed" and args.T is None:
            args.T = int(manifest.config["fixed_horizon"])
        if args.mode == "sequential" and args.c is None:
            args.c = float(manifest.config["threshold_c"])
    if args.t_cap is None:
        args.t_cap = int(manifest.config.get("t_cap", 50))
    spec = _spec_from_flags(args, args.agent)
    summary = evaluate(spec, pair, bundle, workers=args.workers)
    run_id = f"eval-{manifest.run_id}-{spec.agent}-{spec.mode}-{spec.value:g}-s{spec.seed}"
    if args.run_id:
        run_id = args.run_id
    _emit_summary(args, spec, summary, run_id,
                  {**asdict(spec), "source_run": manifest.run_id,
                   "env_config": manifest.config["env"]})
    return 0


def _pipeline_config(args) -> PipelineConfig:
    if not args.config:
        raise ValueError("this command requires --config (pipeline config name or path)")
    config = load_pipeline_config(args.config)
    if args.seed is not None:
        config = replace(config, seed_policy=args.seed, seed_monitor=args.seed + 1,
                         seed_inference=args.seed + 2)
    if getattr(args, "run_id", None):
        config = replace(config, run_id=args.run_id)
    return config


def cmd_run_pipeline(args) -> int:
    config = _pipeline_config(args)
    run_dir, manifest, _ = run_pipeline(config, _output_root(args), force=args.force)
    sys.stdout.write((run_dir / "report.csv").read_text(encoding="utf-8"))
    print(f"run {manifest.run_id} -> {run_dir}")
    return 0


def cmd_train_policy(args) -> int:
    config = _pipeline_config(args)
    pair = resolve_env_pair(config.env)
    ppo = replace(config.ppo, horizon=config.policy_horizon)
    policy, curve, _ = train_policy(pair, ppo, config.seed_policy)
    run_id = args.run_id or f"{config.run_id}-policy"
    run_dir = _prepare_run_dir(args, run_id)
    save_policy_checkpoint(run_dir / "policy.ckpt", policy, config.seed_policy)
    save_learning_curve(curve, run_dir / "learning_curve.csv")
    _write_report(run_dir, [("policy", k, float(v)) for k, v in curve[-1].items()])
    _finish_run(run_dir, run_id, config.seed_policy, asdict(config))
    print(f"run {run_id} -> {run_dir}")
    return 0


def cmd_gen_dataset(args) -> int:
    if not args.config:
        raise ValueError("gen-dataset requires --config (environment name or path)")
    pair = _resolve_env(args.config)
    env_model = pair.test if args.env == "test" else pair.train
    belief_model = pair.test if args.belief == "test" else pair.train
    seed = args.seed if args.seed is not None else 0

    if args.agent == "policy":
        if not args.policy:
            raise ValueError("--agent policy requires --policy (checkpoint path)")
        policy, _ = load_policy_checkpoint(args.policy)
        agent = PolicyAgent(policy)
    elif args.agent == "chernoff":
        agent = ChernoffAgent(belief_model, pair.prior)
    else:
        agent = RandomAgent()

    lo, hi = args.horizon_min, args.horizon_max
    if not 1 <= lo <= hi:
        raise ValueError(f"need 1 <= --horizon-min <= --horizon-max, got {lo}, {hi}")
    if lo == hi:
        horizons = np.full(args.n, lo, dtype=np.int64)
    else:
        horizons = np.random.default_rng(seed).integers(lo, hi + 1, size=args.n)
    batch = simulate(env_model, pair.prior, agent, args.n, hi, seed,
                     knowledge_model=belief_model)
    ds = dataset_from_batch(batch, horizons, args.label, belief_model, pair.prior)
    if args.label == "ll_gap":
        kept = [it for it in ds.items if it.label <= LL_DISCARD_ABOVE]
        ds = replace(ds, items=kept)

    run_id = args.run_id or f"dataset-{args.agent}-{args.label}-n{args.n}-s{seed}"
    run_dir = _prepare_run_dir(args, run_id)
    save_dataset(ds, run_dir / "dataset.jsonl")
    _finish_run(run_dir, run_id, seed,
                {"env_config": args.config, "agent": args.agent, "label": args.label,
                 "n": args.n, "kept": len(ds.items), "horizon_min": lo,
                 "horizon_max": hi, "env_model": args.env, "belief": args.belief,
                 "seed": seed})
    print(f"run {run_id} -> {run_dir} ({len(ds.items)} sequences)")
    return 0


def _cmd_train_decoder(args, which: str) -> int:
    config = _pipeline_config(args)
    pair = resolve_env_pair(config.env)
    n_classes = pair.train.n_hypotheses if which == "inference" else None
    ds = load_dataset(args.data, n_actions=pair.train.n_actions,
                      n_observations=pair.train.n_observations, n_classes=n_classes)
    if which == "inference":
        seed = args.seed if args.seed is not None else config.seed_inference
        result = train_inference(ds, config.inference_arch, config.inference_training,
                                 rng=np.random.default_rng(seed))
        metric = ("test_f1", result.report.f1)
    else:
        seed = args.seed if args.seed is not None else config.seed_monitor
        result = train_monitor(ds, config.monitor_arch, config.monitor_training,
                               rng=np.random.default_rng(seed))
        metric = ("test_mae", result.report.mae)
    run_id = args.run_id or f"{config.run_id}-{which}"
    run_dir = _prepare_run_dir(args, run_id)
    save_decoder_checkpoint(run_dir / f"{which}.ckpt", result.model, seed)
    _write_report(run_dir, [(which, "dataset_size", float(len(ds.items))),
                            (which, metric[0], metric[1])])
    _finish_run(run_dir, run_id, seed, {**asdict(config), "data": str(args.data)})
    print(f"run {run_id} -> {run_dir} ({metric[0]}={metric[1]:.6f})")
    return 0


def cmd_train_monitor(args) -> int:
    return _cmd_train_decoder(args, "monitor")


def cmd_train_inference(args) -> int:
    return _cmd_train_decoder(args, "inference")


def cmd_sweep(args) -> int:
    run_dir = Path(args.run)
    manifest = load_manifest(run_dir / "manifest.json")
    pair = _resolve_env(manifest.config["env"])
    bundle = load_bundle(run_dir)
    sizes = [int(s) for s in args.sizes.split(",") if s]
    if not sizes:
        raise ValueError("--sizes must list at least one dataset size")
    seed = args.seed if args.seed is not None else 0
    arch = DecoderArch(**manifest.config["inference_arch"])
    training = TrainingConfig(**manifest.config["inference_training"])
    rows = sample_efficiency_sweep(bundle.policy, pair, sizes, args.T, _episodes(args),
                                   seed, arch=arch, training=training,
                                   workers=args.workers)
    text = sweep_to_csv(rows)
    sys.stdout.write(text)
    run_id = args.run_id or f"sweep-{manifest.run_id}-T{args.T}-s{seed}"
    out_dir = _prepare_run_dir(args, run_id)
    (out_dir / "sweep.csv").write_text(text, encoding="utf-8")
    _finish_run(out_dir, run_id, seed,
                {"source_run": manifest.run_id, "env_config": manifest.config["env"],
                 "sizes": sizes, "T": args.T, "eval_episodes": _episodes(args),
                 "seed": seed})
    return 0


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None,
                        help="master seed (command-specific default otherwise)")
    common.add_argument("--config", type=str, default=None,
                        help="config name (packaged) or path")
    common.add_argument("--out", type=str, default=None,
                        help=f"output root (default ${OUTPUT_ROOT_VAR} or ./runs)")
    common.add_argument("--force", action="store_true",
                        help="replace an existing run directory")
    common.add_argument("--run-id", type=str, default=None,
                        help="override the derived run-directory name")

    evalish = argparse.ArgumentParser(add_help=False)
    evalish.add_argument("--mode", choices=MODE_KINDS, default=None)
    evalish.add_argument("--T", type=int, default=None, help="fixed horizon")
    evalish.add_argument("--c", type=float, default=None, help="stopping threshold")
    evalish.add_argument("--t-cap", type=int, default=None,
                         help="sequential-mode step cap (default 50, or the "
                              "source run's cap for eval)")
    evalish.add_argument("--env", choices=ENV_KINDS, default="test",
                         help="which environment of the pair to run in")
    evalish.add_argument("--knowledge", choices=ENV_KINDS, default="test",
                         help="model the exact-belief baselines assume")
    evalish.add_argument("--stop-rule", choices=STOP_RULES, default="belief",
                         help="Chernoff sequential stopping statistic")
    evalish.add_argument("--episodes", type=int, default=None,
                         help="episode count (default 10000)")
    evalish.add_argument("--fast", action="store_true",
                         help="2000 episodes unless --episodes is given")
    evalish.add_argument("--workers", type=int, default=1,
                         help="parallel workers; results match --workers 1 exactly")
    evalish.add_argument("--timing", action="store_true",
                         help="write real wall-clock seconds into the CSV")

    parser = argparse.ArgumentParser(
        prog="asht",
        description="Active sequential hypothesis testing laboratory.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("env-validate", parents=[common],
                   help="validate an environment config").set_defaults(func=cmd_env_validate)

    p = sub.add_parser("baseline", parents=[common, evalish],
                       help="evaluate the exact-belief baselines")
    p.add_argument("--agent", choices=("chernoff", "random"), default="chernoff")
    p.set_defaults(func=cmd_baseline, mode="fixed")

    p = sub.add_parser("eval", parents=[common, evalish],
                       help="evaluate a trained run directory")
    p.add_argument("--run", required=True, help="run directory with checkpoints")
    p.add_argument("--agent", choices=AGENT_KINDS, default="composite")
    p.set_defaults(func=cmd_eval, mode=None)

    p = sub.add_parser("run-pipeline", parents=[common],
                       help="train policy, monitor and inference end to end")
    p.set_defaults(func=cmd_run_pipeline)

    p = sub.add_parser("train-policy", parents=[common],
                       help="train the recurrent policy only")
    p.set_defaults(func=cmd_train_policy)

    p = sub.add_parser("gen-dataset", parents=[common],
                       help="simulate an agent into a labeled dataset")
    p.add_argument("--agent", choices=("chernoff", "random", "policy"),
                   default="chernoff")
    p.add_argument("--policy", type=str, default=None,
                   help="policy checkpoint (for --agent policy)")
    p.add_argument("--label", choices=LABEL_EXTRACTORS, default="hypothesis")
    p.add_argument("--n", type=int, default=20000, help="number of sequences")
    p.add_argument("--horizon-min", type=int, default=1)
    p.add_argument("--horizon-max", type=int, default=50)
    p.add_argument("--env", choices=ENV_KINDS, default="train",
                   help="environment generating the observations")
    p.add_argument("--belief", choices=ENV_KINDS, default="train",
                   help="model under which labels are computed")
    p.set_defaults(func=cmd_gen_dataset)

    p = sub.add_parser("train-monitor", parents=[common],
                       help="train the stopping monitor on a dataset")
    p.add_argument("--data", required=True, help="dataset.jsonl path")
    p.set_defaults(func=cmd_train_monitor)

    p = sub.add_parser("train-inference", parents=[common],
                       help="train the hypothesis classifier on a dataset")
    p.add_argument("--data", required=True, help="dataset.jsonl path")
    p.set_defaults(func=cmd_train_inference)

    p = sub.add_parser("sweep", parents=[common],
                       help="decoder sample-efficiency curve")
    p.add_argument("--run", required=True, help="run directory with a policy")
    p.add_argument("--sizes", type=str, default="100,1000,20000")
    p.add_argument("--T", type=int, default=25)
    p.add_argument("--episodes", type=int, default=None)
    p.add_argument("--fast", action="store_true")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _EXPECTED_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
