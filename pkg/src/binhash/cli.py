"""Command-line surface wiring data generation, mining, training, encoding,
search, and evaluation together.

Configuration is a line-based ``key = value`` file; command-line flags
override file values, and BINHASH_SEED serves as a seed fallback when
neither flag nor file provides one. Every command that writes into an
output directory also echoes the effective configuration there.

Exit codes: 0 success, 1 usage, 2 config validation, 3 data/format error,
4 training divergence.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .dataset import (
    FeatureStore,
    ModelWorld,
    WorldGenParams,
    co_observed,
    generate_world,
    load_features,
    load_world,
    save_features,
    save_world,
)
from .errors import (
    BinhashError,
    ConfigError,
    ContractError,
    DataGenerationError,
    DivergenceError,
    InitError,
    ProtocolError,
)
from .loss import LossParams
from .mining import MiningParams
from .model import embed_store, load_head, save_head
from .optimizer import TrainSchedule, train
from .retrieval import binarize, evaluate_map, load_codes, save_codes, search

SWEEP_LENGTHS = (8, 16, 32, 256, 512)

# key -> (parser, default); `c = auto` means the margin follows L/2
_CONFIG_SCHEMA: dict[str, tuple] = {
    "seed": (int, 7),
    "num_models": (int, 20),
    "images_per_model": (int, 30),
    "points_per_model": (int, 100),
    "obs_fraction": (float, 0.5),
    "feature_dim": (int, 64),
    "cluster_spread": (float, 1.0),
    "noise_sigma": (float, 1.25),
    "k": (int, 70),
    "m": (int, 6),
    "tau": (int, 10),
    "alpha": (float, 1.0),
    "c": ("margin", "auto"),
    "code_len": (int, 16),
    "outer_loops": (int, 4),
    "inner_loops": (int, 5),
    "epochs": (int, 10),
    "lr": (float, 1e-3),
    "momentum": (float, 0.9),
    "queries_per_batch": (int, 4),
    "threads": (int, 1),
}


def _parse_value(key: str, raw: str):
    kind, _ = _CONFIG_SCHEMA[key]
    try:
        if kind == "margin":
            return "auto" if raw == "auto" else float(raw)
        return kind(raw)
    except ValueError:
        raise ConfigError(f"config key {key!r}: cannot parse {raw!r}") from None


def parse_config_file(path) -> dict:
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, _, raw = stripped.partition("=")
            key = key.strip()
            if key not in _CONFIG_SCHEMA:
                raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
            values[key] = _parse_value(key, raw.strip())
    return values


def effective_config(args) -> dict:
    """Defaults <- config file <- --set pairs <- dedicated flags, with
    BINHASH_SEED as the seed fallback when no file/flag supplies one."""
    config = {key: default for key, (_, default) in _CONFIG_SCHEMA.items()}
    seed_given = False
    if getattr(args, "config", None):
        file_values = parse_config_file(args.config)
        seed_given = "seed" in file_values
        config.update(file_values)
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, _, raw = item.partition("=")
        key = key.strip()
        if key not in _CONFIG_SCHEMA:
            raise ConfigError(f"--set: unknown config key {key!r}")
        config[key] = _parse_value(key, raw.strip())
        seed_given = seed_given or key == "seed"
    for flag in ("seed", "threads", "code_len", "tau"):
        value = getattr(args, flag, None)
        if value is not None:
            config[flag] = value
            seed_given = seed_given or flag == "seed"
    if not seed_given and os.environ.get("BINHASH_SEED"):
        config["seed"] = _parse_value("seed", os.environ["BINHASH_SEED"])
    return config


def _echo_config(config: dict, out_dir: Path) -> None:
    lines = [f"{key} = {config[key]!r}" if isinstance(config[key], float)
             else f"{key} = {config[key]}" for key in sorted(config)]
    (out_dir / "effective.cfg").write_text("\n".join(lines) + "\n", encoding="utf-8")


def _world_params(config: dict) -> WorldGenParams:
    try:
        return WorldGenParams(
            num_models=config["num_models"],
            images_per_model=config["images_per_model"],
            points_per_model=config["points_per_model"],
            obs_fraction=config["obs_fraction"],
            feature_dim=config["feature_dim"],
            cluster_spread=config["cluster_spread"],
            noise_sigma=config["noise_sigma"],
            seed=config["seed"],
        )
    except DataGenerationError as exc:
        raise ConfigError(str(exc)) from None


def _mining_params(config: dict) -> MiningParams:
    try:
        return MiningParams(k=config["k"], m=config["m"], tau=config["tau"])
    except ContractError as exc:
        raise ConfigError(str(exc)) from None


def _loss_params(config: dict, code_len: int) -> LossParams:
    margin = config["c"]
    try:
        if margin == "auto":
            return LossParams.for_code_len(code_len, alpha=config["alpha"])
        return LossParams(c=margin, alpha=config["alpha"])
    except ContractError as exc:
        raise ConfigError(str(exc)) from None


def _schedule(config: dict) -> TrainSchedule:
    try:
        return TrainSchedule(
            outer_loops=config["outer_loops"],
            inner_loops=config["inner_loops"],
            epochs=config["epochs"],
            lr=config["lr"],
            momentum=config["momentum"],
            queries_per_batch=config["queries_per_batch"],
            seed=config["seed"],
        )
    except ContractError as exc:
        raise ConfigError(str(exc)) from None


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_data(data_dir) -> tuple[ModelWorld, FeatureStore]:
    data = Path(data_dir)
    return load_world(data / "world.json"), load_features(data / "features.feat")


def _relevance(world: ModelWorld, tau: int):
    def is_relevant(query_id: str, image_id: str) -> bool:
        return (
            world.image(query_id).model_id == world.image(image_id).model_id
            and co_observed(world, query_id, image_id) >= tau
        )

    return is_relevant


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen_data(args) -> int:
    config = effective_config(args)
    params = _world_params(config)
    world, store = generate_world(params, min_co_observed=config["tau"])
    out = _out_dir(args)
    save_world(world, out / "world.json")
    save_features(store, out / "features.feat")
    _echo_config(config, out)
    print(f"wrote {out / 'world.json'} and {out / 'features.feat'} "
          f"({len(store.ids)} images, dim {store.features.shape[1]})")
    return 0


def _run_training(config: dict, world, store, code_len: int, verbose: bool):
    log = (lambda line: print(line, file=sys.stderr)) if verbose else None
    return train(
        world,
        store,
        code_len,
        mining_params=_mining_params(config),
        loss_params=_loss_params(config, code_len),
        schedule=_schedule(config),
        threads=config["threads"],
        log=log,
    )


def _write_training_outputs(out: Path, config: dict, head, report) -> None:
    save_head(head, out / "model.hash")
    (out / "report.csv").write_text(report.csv_text(), encoding="utf-8")
    (out / "report.json").write_text(
        json.dumps(report.summary(), sort_keys=True, separators=(",", ":")) + "\n",
        encoding="utf-8",
    )
    _echo_config(config, out)


def cmd_train(args) -> int:
    config = effective_config(args)
    world, store = _load_data(args.data)
    code_len = config["code_len"]
    head, report = _run_training(config, world, store, code_len, args.verbose)
    out = _out_dir(args)
    _write_training_outputs(out, config, head, report)
    k, t = report.best_checkpoint
    print(f"best checkpoint k={k} t={t} val_map={report.best_val_map:.6f} "
          f"({report.wall_clock:.1f}s); model in {out / 'model.hash'}")
    return 0


def cmd_encode(args) -> int:
    config = effective_config(args)
    _, store = _load_data(args.data)
    head = load_head(args.model)
    codes = binarize(embed_store(head, store))
    out = _out_dir(args)
    save_codes(codes, out / "codes.bcdb")
    _echo_config(config, out)
    print(f"encoded {len(codes)} images at {codes.code_len} bits into {out / 'codes.bcdb'}")
    return 0


def cmd_search(args) -> int:
    config = effective_config(args)
    _, store = _load_data(args.data)
    codes = load_codes(args.codes, ids=list(store.ids))
    remove = None if args.keep_query else args.query_id
    ranked = search(codes, codes.row(args.query_id), args.query_id, remove_id=remove)
    out = _out_dir(args)
    lines = ["query_id,rank,image_id,distance"]
    lines += [
        f"{args.query_id},{rank},{image_id},{dist}"
        for rank, (image_id, dist) in enumerate(ranked.entries, start=1)
    ]
    (out / "ranked.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    _echo_config(config, out)
    print(f"wrote {len(ranked.entries)} ranked entries to {out / 'ranked.csv'}")
    return 0


def _codes_map(codes, world, tau: int, split: str) -> float:
    query_ids = [q for q in world.split_ids(split) if q in codes]
    if not query_ids:
        raise ProtocolError(f"no {split} images present in the code database")
    return evaluate_map(
        codes, query_ids, world.database_ids, _relevance(world, tau),
    )


def cmd_eval(args) -> int:
    config = effective_config(args)
    world, store = _load_data(args.data)
    codes = load_codes(args.codes, ids=list(store.ids))
    split = "validation_query" if args.queries == "validation" else "train_query"
    value = _codes_map(codes, world, config["tau"], split)
    print(f"mAP {value:.6f}")
    return 0


def cmd_report(args) -> int:
    config = effective_config(args)
    world, store = _load_data(args.data)
    try:
        lengths = [int(v) for v in args.lengths.split(",")] if args.lengths else list(SWEEP_LENGTHS)
        if not lengths or min(lengths) < 1:
            raise ValueError
    except ValueError:
        raise ConfigError(f"--lengths must be a comma list of positive ints, got {args.lengths!r}") from None
    out = _out_dir(args)
    rows = ["L,map"]
    for code_len in lengths:
        per_l = dict(config, code_len=code_len)
        head, report = _run_training(per_l, world, store, code_len, args.verbose)
        subdir = out / f"L{code_len:03d}"
        subdir.mkdir(parents=True, exist_ok=True)
        _write_training_outputs(subdir, per_l, head, report)
        codes = binarize(embed_store(head, store))
        value = _codes_map(codes, world, config["tau"], "validation_query")
        rows.append(f"{code_len},{value:.6f}")
        print(f"L={code_len}: mAP {value:.6f}", file=sys.stderr)
    (out / "sweep.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    _echo_config(config, out)
    print(f"wrote {out / 'sweep.csv'}")
    return 0


# ---------------------------------------------------------------------------
# parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit 1, not argparse's 2
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_common(sub, config=True, out=True):
    if config:
        sub.add_argument("--config", help="key = value configuration file")
        sub.add_argument("--set", action="append", metavar="KEY=VALUE",
                         help="override one config key (repeatable)")
        sub.add_argument("--seed", type=int, help="override the config seed")
        sub.add_argument("--threads", type=int, help="worker-thread cap (results are identical for any value)")
    if out:
        sub.add_argument("--out", required=True, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="binhash", description=__doc__.splitlines()[0])
    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser("gen-data", parents=[], help="generate a synthetic world + feature store",
                            description="Generate a synthetic co-observation world and its feature store.")
    _add_common(p)
    p.set_defaults(func=cmd_gen_data)

    p = commands.add_parser("train", help="train a hashing head",
                            description="Train the hashing head on a generated world.")
    _add_common(p)
    p.add_argument("--data", required=True, help="directory with world.json + features.feat")
    p.add_argument("--code-len", dest="code_len", type=int, help="code length in bits")
    p.add_argument("--verbose", action="store_true", help="log per-step progress to stderr")
    p.set_defaults(func=cmd_train)

    p = commands.add_parser("encode", help="binarize all features with a trained model",
                            description="Encode every image in the feature store into packed binary codes.")
    _add_common(p)
    p.add_argument("--data", required=True, help="directory with world.json + features.feat")
    p.add_argument("--model", required=True, help="trained model file")
    p.set_defaults(func=cmd_encode)

    p = commands.add_parser("search", help="rank the database for one query image",
                            description="Rank all codes by Hamming distance to a query image's code.")
    _add_common(p)
    p.add_argument("--data", required=True, help="directory with world.json + features.feat")
    p.add_argument("--codes", required=True, help="code database file")
    p.add_argument("--query-id", dest="query_id", required=True, help="query image id")
    p.add_argument("--keep-query", action="store_true", help="do not remove the query from the ranking")
    p.set_defaults(func=cmd_search)

    p = commands.add_parser("eval", help="mean average precision of a code database",
                            description="Evaluate retrieval mAP of a code database against a world's ground truth.")
    _add_common(p, out=False)
    p.add_argument("--data", required=True, help="directory with world.json + features.feat")
    p.add_argument("--codes", required=True, help="code database file")
    p.add_argument("--tau", type=int, help="co-observation threshold for relevance")
    p.add_argument("--queries", choices=("validation", "train"), default="validation",
                   help="which query split to evaluate")
    p.set_defaults(func=cmd_eval)

    p = commands.add_parser("report", help="mAP-vs-code-length sweep",
                            description="Train and evaluate across code lengths, writing an L,map CSV.")
    _add_common(p)
    p.add_argument("--data", required=True, help="directory with world.json + features.feat")
    p.add_argument("--lengths", help=f"comma list of code lengths (default {','.join(map(str, SWEEP_LENGTHS))})")
    p.add_argument("--verbose", action="store_true", help="log per-step progress to stderr")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ConfigError, InitError) as exc:
        print(f"binhash: config error: {exc}", file=sys.stderr)
        return 2
    except DivergenceError as exc:
        print(f"binhash: training diverged: {exc}", file=sys.stderr)
        return 4
    except (BinhashError, OSError) as exc:
        print(f"binhash: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
