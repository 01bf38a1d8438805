"""Command-line entry points and run configuration.

Config files are plain ``key = value`` text with ``#`` comments; flags
override file values, which override defaults.  Logs are one line per
epoch, flushed immediately, in CSV or JSONL.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass, fields

import numpy as np

from .bench import compare_strategies
from .controller import (EpochRecord, SearchSettings, StageConfig, StopMode,
                         SupernetBackend, TabularBackend, run_search)
from .fitness import FitnessWeights, LossBounds
from .gradcheck import check_gradients, make_gradcheck_problem
from .runtime import RandomStream
from .supernet import (ArchLayout, ArchParams, Genotype, SupernetState,
                       SyntheticDataset)
from .swarm import SwarmConfig
from .tabular import brute_force_best, generate_space, load_space, save_space


@dataclass
class RunConfig:
    """Flat run configuration; field names double as config-file keys and
    (kebab-cased) CLI flags."""

    backend: str = "supernet"
    space: str = ""
    out: str = "run_out"
    seed: int = 0
    dataset_seed: int = 1
    log_format: str = "csv"
    timing: bool = False

    # layout / data
    num_nodes: int = 2
    ops: str = "zero,skip,linear,relu_linear,tanh_linear"
    feature_dim: int = 16
    num_classes: int = 3
    train_size: int = 600
    val_size: int = 300

    # swarm
    pop_size: int = 60
    phi: float = 0.15
    generations_per_epoch: int = 8
    swarm_bound: float = 3.0

    # fitness
    lambda_swarm: float = 0.3
    lambda_op: float = 0.2
    history_capacity: int = 200
    loss_min: float = math.nan   # nan: backend default bounds
    loss_max: float = math.nan

    # stages
    warmup_epochs: int = 5
    batch_size: int = 64
    eta_w: float = 0.025
    exploration_eta_alpha: float = 0.3
    stability_threshold: float = 0.82
    stability_arch_lr: float = 1e-5
    min_stability_epochs: int = 5
    window_n: int = 5
    confidence_delta: float = 0.05
    abs_alpha_threshold: float = 1e-3
    stop_mode: str = "strict"
    max_epochs: int = 100

    def layout(self) -> ArchLayout:
        names = tuple(o.strip() for o in self.ops.split(",") if o.strip())
        return ArchLayout(self.num_nodes, names)

    def settings(self) -> SearchSettings:
        lb = None
        if not (math.isnan(self.loss_min) or math.isnan(self.loss_max)):
            lb = LossBounds(self.loss_min, self.loss_max)
        return SearchSettings(
            stage=StageConfig(
                warmup_epochs=self.warmup_epochs,
                batch_size=self.batch_size,
                eta_w=self.eta_w,
                exploration_eta_alpha=self.exploration_eta_alpha,
                stability_threshold=self.stability_threshold,
                stability_arch_lr=self.stability_arch_lr,
                min_stability_epochs=self.min_stability_epochs,
                window_n=self.window_n,
                confidence_delta=self.confidence_delta,
                abs_alpha_threshold=self.abs_alpha_threshold,
                stop_mode=StopMode(self.stop_mode),
                max_total_epochs=self.max_epochs,
                swarm_bound=self.swarm_bound,
            ),
            swarm=SwarmConfig(pop_size=self.pop_size, phi=self.phi,
                              generations_per_epoch=self.generations_per_epoch,
                              rng_seed=self.seed),
            weights=FitnessWeights(self.lambda_swarm, self.lambda_op),
            loss_bounds=lb,
            history_capacity=self.history_capacity,
        )


def _coerce(key: str, raw: str, target_type, line_no: int | None = None):
    where = f" (line {line_no})" if line_no is not None else ""
    raw = raw.strip()
    try:
        if target_type is bool:
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError
        return target_type(raw)
    except ValueError:
        raise ValueError(f"bad value for {key}{where}: {raw!r} is not {target_type.__name__}")


def parse_config(file_path: str | None, flag_overrides: dict | None = None
                 ) -> RunConfig:
    """Defaults, then file values, then flag overrides."""
    values: dict = {}
    concrete = {f.name: type(getattr(RunConfig(), f.name)) for f in fields(RunConfig)}
    if file_path:
        with open(file_path, encoding="utf-8") as fh:
            for no, ln in enumerate(fh, start=1):
                ln = ln.split("#", 1)[0].strip()
                if not ln:
                    continue
                if "=" not in ln:
                    raise ValueError(f"line {no}: expected 'key = value', got {ln!r}")
                key, raw = (p.strip() for p in ln.split("=", 1))
                if key not in concrete:
                    raise ValueError(f"unknown config key {key!r} (line {no})")
                values[key] = _coerce(key, raw, concrete[key], no)
    for key, val in (flag_overrides or {}).items():
        if val is None:
            continue
        if key not in concrete:
            raise ValueError(f"unknown config key {key!r}")
        values[key] = val
    cfg = RunConfig(**values)
    cfg.settings()   # validate invariants up front
    cfg.layout()
    return cfg


def serialize_config(cfg: RunConfig) -> str:
    lines = []
    for f in fields(RunConfig):
        lines.append(f"{f.name} = {getattr(cfg, f.name)}")
    return "\n".join(lines) + "\n"


class EpochLogger:
    """One line per epoch, flushed per record."""

    def __init__(self, path: str, fmt: str):
        if fmt not in ("csv", "jsonl"):
            raise ValueError(f"log format must be csv or jsonl, got {fmt!r}")
        self.fmt = fmt
        self.path = path
        try:
            self.fh = open(path, "w", encoding="utf-8")
        except OSError as exc:
            raise OSError(f"cannot open log file {path}: {exc}")
        if fmt == "csv":
            self.fh.write(",".join(EpochRecord.FIELDS) + "\n")
            self.fh.flush()

    def log_epoch(self, record: EpochRecord) -> None:
        vals = {k: getattr(record, k) for k in EpochRecord.FIELDS}
        if self.fmt == "csv":
            def cell(v):
                if v is None:
                    return ""
                if isinstance(v, float):
                    return repr(v)
                return str(v)
            self.fh.write(",".join(cell(vals[k]) for k in EpochRecord.FIELDS) + "\n")
        else:
            self.fh.write(json.dumps(vals) + "\n")
        self.fh.flush()

    def close(self) -> None:
        self.fh.close()


def parse_log(path: str, fmt: str) -> list[dict]:
    """Inverse of EpochLogger, used by tests to round-trip records."""
    out = []
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if fmt == "csv":
        header = lines[0].split(",")
        for ln in lines[1:]:
            cells = ln.split(",")
            row = {}
            for k, c in zip(header, cells):
                if c == "":
                    row[k] = None
                elif k == "stage":
                    row[k] = c
                elif k in ("epoch", "queries_used", "wall_ms"):
                    row[k] = int(c)
                else:
                    row[k] = float(c)
            out.append(row)
    else:
        out = [json.loads(ln) for ln in lines if ln.strip()]
    return out


def export_genotype(genotype: Genotype, layout: ArchLayout, path: str) -> None:
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(genotype.to_text(layout))
    except OSError as exc:
        raise OSError(f"cannot write genotype to {path}: {exc}")


def load_genotype(path: str, layout: ArchLayout) -> Genotype:
    with open(path, encoding="utf-8") as fh:
        return Genotype.from_text(fh.read(), layout)


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", default=None, help="config file path")
    for f in fields(RunConfig):
        flag = "--" + f.name.replace("_", "-")
        ftype = type(getattr(RunConfig(), f.name))
        if ftype is bool:
            parser.add_argument(flag, default=None, type=lambda s: s.lower() in ("true", "1", "yes"))
        else:
            parser.add_argument(flag, default=None, type=ftype)


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    overrides = {f.name: getattr(args, f.name, None) for f in fields(RunConfig)}
    return parse_config(args.config, overrides)


def _build_backend(cfg: RunConfig):
    layout = cfg.layout()
    if cfg.backend == "supernet":
        data_rng = RandomStream(cfg.seed).substream("data").generator
        init_rng = RandomStream(cfg.seed).substream("init").generator
        dataset = SyntheticDataset.spirals(
            data_rng, n_train=cfg.train_size, n_val=cfg.val_size,
            num_classes=cfg.num_classes)
        state = SupernetState.init(layout, init_rng, feature_dim=cfg.feature_dim,
                                   num_classes=cfg.num_classes)
        return SupernetBackend(layout, dataset, state)
    if cfg.backend == "tabular":
        if not cfg.space:
            raise ValueError("tabular backend requires --space")
        space = load_space(cfg.space)
        return TabularBackend(space, layout)
    raise ValueError(f"unknown backend {cfg.backend!r}")


def _cmd_search(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    backend = _build_backend(cfg)
    os.makedirs(cfg.out, exist_ok=True)
    ext = "csv" if cfg.log_format == "csv" else "jsonl"
    logger = EpochLogger(os.path.join(cfg.out, f"log.{ext}"), cfg.log_format)
    result = run_search(cfg.settings(), backend, cfg.seed, timing=cfg.timing)
    for rec in result.records:
        logger.log_epoch(rec)
    logger.close()
    export_genotype(result.genotype, cfg.layout(),
                    os.path.join(cfg.out, "genotype.txt"))
    with open(os.path.join(cfg.out, "config.txt"), "w", encoding="utf-8") as fh:
        fh.write(serialize_config(cfg))
    print(f"stages completed, termination={result.termination.value}, "
          f"epochs={len(result.records)}")
    print(f"genotype:\n{result.genotype.to_text(cfg.layout())}", end="")
    return 0


def _cmd_bench(args: argparse.Namespace) -> int:
    seeds = [args.seed + i for i in range(args.seeds)]
    config = SwarmConfig(pop_size=args.pop_size, phi=args.phi)
    results = compare_strategies(args.fn, args.dim, args.budget, seeds,
                                 low=-args.bound, high=args.bound, config=config)
    for name, vals in results.items():
        med = float(np.median(vals))
        print(f"{name:8s} median_best={med:.6g} runs={len(vals)}")
    return 0


def _cmd_gen_space(args: argparse.Namespace) -> int:
    names = tuple(o.strip() for o in args.ops.split(","))
    layout = ArchLayout(args.num_nodes, names)
    space = generate_space(layout, args.seed, name=args.name)
    save_space(space, args.out)
    print(f"wrote {space.size} genotypes to {args.out}")
    return 0


def _cmd_oracle(args: argparse.Namespace) -> int:
    space = load_space(args.space)
    key, metrics = brute_force_best(space)
    names = [space.op_names[int(i)] for i in key.split("-")]
    print(f"best genotype: {key} ({','.join(names)})")
    print(f"valid_acc={metrics.valid_acc} test_acc={metrics.test_acc} "
          f"cost={metrics.cost}")
    return 0


def _cmd_check_grad(args: argparse.Namespace) -> int:
    names = tuple(o.strip() for o in args.ops.split(","))
    layout = ArchLayout(args.num_nodes, names)
    state, alpha, x, y = make_gradcheck_problem(
        layout, args.seed, batch=args.batch, feature_dim=args.feature_dim)
    res = check_gradients(state, alpha, x, y)
    print(f"max relative error: weights={res.max_rel_error_weights:.3e} "
          f"({res.num_weight_coords} coords), "
          f"alpha={res.max_rel_error_alpha:.3e} ({res.num_alpha_coords} coords)")
    return 0 if res.max_rel_error < 1e-5 else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hybridnas")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("search", help="run the three-stage search")
    _add_config_flags(p)
    p.set_defaults(handler=_cmd_search)

    p = sub.add_parser("bench", help="compare swarm strategies on test functions")
    p.add_argument("--fn", choices=("sphere", "rastrigin"), default="sphere")
    p.add_argument("--dim", type=int, default=224)
    p.add_argument("--budget", type=int, default=60 * 8 * 15)
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pop-size", type=int, default=60)
    p.add_argument("--phi", type=float, default=0.15)
    p.add_argument("--bound", type=float, default=3.0)
    p.set_defaults(handler=_cmd_bench)

    p = sub.add_parser("gen-space", help="emit a synthetic tabular space")
    p.add_argument("--num-nodes", type=int, default=1)
    p.add_argument("--ops", default="zero,skip,linear,relu_linear")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--name", default="synthetic")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_gen_space)

    p = sub.add_parser("oracle", help="brute-force best genotype of a space")
    p.add_argument("--space", required=True)
    p.set_defaults(handler=_cmd_oracle)

    p = sub.add_parser("check-grad", help="finite-difference gradient check")
    p.add_argument("--num-nodes", type=int, default=2)
    p.add_argument("--ops", default="zero,skip,linear,relu_linear,tanh_linear")
    p.add_argument("--feature-dim", type=int, default=16)
    p.add_argument("--batch", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(handler=_cmd_check_grad)
    return parser


def main_cli(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.handler(args)
    except (ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    raise SystemExit(main_cli())
