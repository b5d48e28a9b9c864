"""Experiment runner.

Usage::

    skellam-rank experiment.ini [--output-dir DIR] [--seed N] [--quiet]

The config is an INI file. ``[experiment]`` names the dataset, the algorithms
and the root seed; optional ``[split]``, ``[csv]`` and per-algorithm sections
(``[skellam-rank]``, ``[classic-mf]``, ``[poissonmat]``) override defaults.
Writes ``report.csv``, one ``rank_frequency_<algorithm>.csv`` per algorithm and
``run_manifest.json`` into the output directory.

Exit codes: 0 success, 1 config error, 2 data error, 3 training/eval error.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import hashlib
import json
import logging
import platform
import re
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .baselines import MfConfig, poissonmat_scorer, random_recommender, train_classic_mf, train_poissonmat
from .data import DatasetError, RatingDataset, SplitSpec, load_csv_ratings, load_movielens, split_train_test
from .metrics import evaluate
from .special import BesselMode, SeriesControl
from .trainer import SkellamRankConfig, train

_logger = logging.getLogger("skellam_rank")

ALGORITHMS = ("skellam-rank", "classic-mf", "poissonmat", "random")
REPORT_HEADER = "algorithm,mae,dme,k,wall_time_seconds,seed"

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_RUN = 0, 1, 2, 3

_CSV_DEFAULTS = {"user_col": "user_id", "item_col": "item_id", "rating_col": "rating", "delimiter": ","}


class ConfigError(ValueError):
    pass


class AlgorithmError(RuntimeError):
    def __init__(self, algorithm: str, cause: Exception):
        super().__init__(f"algorithm {algorithm!r} failed: {type(cause).__name__}: {cause}")
        self.algorithm = algorithm


@dataclass
class ExperimentConfig:
    dataset_path: Path
    dataset_format: str = "movielens"
    movielens_sep: str = "::"
    csv_columns: dict = field(default_factory=lambda: dict(_CSV_DEFAULTS))
    algorithms: tuple = ("skellam-rank", "classic-mf", "poissonmat", "random")
    seed: int = 0
    test_fraction: float = 0.2
    eval_k: int = 10
    calibrate: bool = True
    output_dir: Path = Path("results")
    skellam: dict = field(default_factory=dict)
    classic_mf: dict = field(default_factory=dict)
    poissonmat: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.algorithms:
            raise ConfigError("at least one algorithm must be requested")


def derive_seed(root: int, label: str) -> int:
    """Child seed for ``label``, a fixed function of the root seed."""
    digest = hashlib.sha256(f"{root}/{label}".encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def fmt(x: float) -> str:
    return format(float(x), ".7g")


# --- config parsing -------------------------------------------------------

_SECTION_KEYS = {
    "experiment": {"dataset_path", "dataset_format", "movielens_sep", "algorithms", "seed",
                   "eval_k", "output_dir", "calibrate"},
    "split": {"test_fraction"},
    "csv": {"user_col", "item_col", "rating_col", "delimiter"},
    "skellam-rank": {"d", "gamma", "max_iter", "users_per_iter", "items_per_user", "pair_mode",
                     "step_direction", "dot_clamp_min", "dot_clamp_max", "bessel_mode",
                     "max_terms", "tail_tolerance"},
    "classic-mf": {"d", "gamma", "max_iter"},
    "poissonmat": {"d", "gamma", "max_iter"},
}
_INT_KEYS = {"seed", "eval_k", "d", "max_iter", "users_per_iter", "items_per_user", "max_terms"}
_FLOAT_KEYS = {"test_fraction", "gamma", "dot_clamp_min", "dot_clamp_max", "tail_tolerance"}
_DELIMITERS = {"tab": "\t", "\\t": "\t", "comma": ",", "semicolon": ";", "pipe": "|"}


def _locate(lines: list[str], section: str, key: str | None = None) -> int:
    """1-based line of ``key`` in ``section`` (or of the section header), 0 if not found."""
    current = None
    for n, raw in enumerate(lines, start=1):
        line = raw.strip()
        m = re.fullmatch(r"\[([^\]]+)\]", line)
        if m:
            current = m.group(1).strip()
            if key is None and current == section:
                return n
            continue
        if current == section and key is not None and re.match(rf"{re.escape(key)}\s*[=:]", line):
            return n
    return 0


def _error(path, lines, section, key, msg) -> ConfigError:
    line = _locate(lines, section, key)
    where = f"{path}:{line}" if line else str(path)
    return ConfigError(f"{where}: {msg}")


def _convert(path, lines, section, key, value):
    try:
        if key in _INT_KEYS:
            return int(value)
        if key in _FLOAT_KEYS:
            return float(value)
    except ValueError:
        kind = "an integer" if key in _INT_KEYS else "a number"
        raise _error(path, lines, section, key, f"[{section}] {key} must be {kind}, got {value!r}") from None
    return value


def _syntax_message(path, exc: configparser.Error) -> str:
    if isinstance(exc, configparser.MissingSectionHeaderError):
        return f"{path}:{exc.lineno}: expected a [section] header before {exc.line.strip()!r}"
    if isinstance(exc, configparser.ParsingError):
        return "; ".join(f"{path}:{lineno}: cannot parse {line.strip()!r}" for lineno, line in exc.errors)
    if isinstance(exc, configparser.DuplicateOptionError):
        return f"{path}:{exc.lineno}: duplicate key {exc.option!r} in [{exc.section}]"
    if isinstance(exc, configparser.DuplicateSectionError):
        return f"{path}:{exc.lineno}: duplicate section [{exc.section}]"
    return f"{path}: {exc}".replace("\n", " ")


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc}") from None
    lines = text.splitlines()
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"),
                                       inline_comment_prefixes=("#",))
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(_syntax_message(path, exc)) from None

    values: dict[str, dict] = {}
    for section in parser.sections():
        if section not in _SECTION_KEYS:
            raise _error(path, lines, section, None, f"unknown section [{section}]")
        values[section] = {}
        for key, value in parser.items(section):
            if key not in _SECTION_KEYS[section]:
                raise _error(path, lines, section, key, f"unknown key {key!r} in [{section}]")
            values[section][key] = _convert(path, lines, section, key, value.strip())

    exp = values.get("experiment")
    if exp is None or "dataset_path" not in exp:
        raise ConfigError(f"{path}: [experiment] dataset_path is required")
    base = path.parent
    kwargs = {"dataset_path": base / exp["dataset_path"]}
    if "dataset_format" in exp:
        if exp["dataset_format"] not in ("movielens", "csv"):
            raise _error(path, lines, "experiment", "dataset_format",
                         f"dataset_format must be 'movielens' or 'csv', got {exp['dataset_format']!r}")
        kwargs["dataset_format"] = exp["dataset_format"]
    if "movielens_sep" in exp:
        kwargs["movielens_sep"] = _DELIMITERS.get(exp["movielens_sep"], exp["movielens_sep"])
    if "algorithms" in exp:
        algos = tuple(a.strip() for a in exp["algorithms"].split(",") if a.strip())
        bad = [a for a in algos if a not in ALGORITHMS]
        if bad or not algos:
            raise _error(path, lines, "experiment", "algorithms",
                         f"algorithms must be a nonempty subset of {', '.join(ALGORITHMS)}; got {exp['algorithms']!r}")
        if len(set(algos)) != len(algos):
            raise _error(path, lines, "experiment", "algorithms", "algorithms must not repeat")
        kwargs["algorithms"] = algos
    for key in ("seed", "eval_k"):
        if key in exp:
            kwargs[key] = exp[key]
    if kwargs.get("eval_k", 1) < 1:
        raise _error(path, lines, "experiment", "eval_k", "eval_k must be at least 1")
    kwargs["output_dir"] = base / exp.get("output_dir", "results")
    if "calibrate" in exp:
        try:
            kwargs["calibrate"] = parser.getboolean("experiment", "calibrate")
        except ValueError:
            raise _error(path, lines, "experiment", "calibrate", "calibrate must be true or false") from None
    if "test_fraction" in values.get("split", {}):
        kwargs["test_fraction"] = values["split"]["test_fraction"]
    if "csv" in values:
        cols = dict(_CSV_DEFAULTS)
        cols.update(values["csv"])
        cols["delimiter"] = _DELIMITERS.get(cols["delimiter"], cols["delimiter"])
        if len(cols["delimiter"]) != 1:
            raise _error(path, lines, "csv", "delimiter", "delimiter must be a single character")
        kwargs["csv_columns"] = cols
    kwargs["skellam"] = values.get("skellam-rank", {})
    kwargs["classic_mf"] = values.get("classic-mf", {})
    kwargs["poissonmat"] = values.get("poissonmat", {})

    cfg = ExperimentConfig(**kwargs)
    # validate algorithm blocks now so bad values are reported against the config
    for section, block in (("skellam-rank", cfg.skellam), ("classic-mf", cfg.classic_mf),
                           ("poissonmat", cfg.poissonmat)):
        try:
            _algorithm_config(section, block, 0)
        except (ValueError, TypeError) as exc:
            raise _error(path, lines, section, None, f"[{section}] {exc}") from None
    try:
        SplitSpec(cfg.test_fraction, 0)
    except ValueError as exc:
        raise _error(path, lines, "split", "test_fraction", str(exc)) from None
    return cfg


def _algorithm_config(name: str, block: dict, seed: int):
    if name == "skellam-rank":
        block = dict(block)
        series = SeriesControl(block.pop("max_terms", 80), block.pop("tail_tolerance", 1e-12))
        if "bessel_mode" in block:
            block["bessel_mode"] = BesselMode.parse(block["bessel_mode"])
        return SkellamRankConfig(series=series, seed=seed, **block)
    return MfConfig(seed=seed, **block)


def _config_summary(cfg: SkellamRankConfig | MfConfig) -> dict:
    out = {}
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, BesselMode):
            v = v.value
        elif dataclasses.is_dataclass(v):
            v = dataclasses.asdict(v)
        out[f.name] = v
    return out


# --- running --------------------------------------------------------------

def load_dataset(cfg: ExperimentConfig) -> RatingDataset:
    if cfg.dataset_format == "movielens":
        return load_movielens(cfg.dataset_path, sep=cfg.movielens_sep)
    c = cfg.csv_columns
    return load_csv_ratings(cfg.dataset_path, c["user_col"], c["item_col"], c["rating_col"], c["delimiter"])


def _fit_scorer(name: str, train_ds: RatingDataset, algo_cfg, seed: int):
    if name == "skellam-rank":
        return train(train_ds, algo_cfg).score
    if name == "classic-mf":
        return train_classic_mf(train_ds, algo_cfg).score
    if name == "poissonmat":
        return poissonmat_scorer(train_poissonmat(train_ds, algo_cfg), train_ds)
    return random_recommender(train_ds, seed)


def _write_lines(path: Path, lines: list[str]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def run_experiment(cfg: ExperimentConfig) -> list[Path]:
    """Load, split, train every requested algorithm, evaluate, and write the reports.

    Raises :class:`~skellam_rank.data.DatasetError` / ``OSError`` for data
    problems and :class:`AlgorithmError` when an algorithm fails.
    """
    ds = load_dataset(cfg)
    _logger.info("loaded %d ratings: %d users x %d items", len(ds), ds.n_users, ds.n_items)
    split = SplitSpec(cfg.test_fraction, derive_seed(cfg.seed, "split"))
    train_ds, test_ds = split_train_test(ds, split)
    _logger.info("split: %d train / %d test", len(train_ds), len(test_ds))

    blocks = {"skellam-rank": cfg.skellam, "classic-mf": cfg.classic_mf, "poissonmat": cfg.poissonmat}
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows, written, resolved = [REPORT_HEADER], [], {}
    for name in cfg.algorithms:
        seed = derive_seed(cfg.seed, name)
        algo_cfg = None if name == "random" else _algorithm_config(name, blocks[name], seed)
        resolved[name] = {"seed": seed} if algo_cfg is None else _config_summary(algo_cfg)
        _logger.info("training %s", name)
        start = time.perf_counter()
        try:
            scorer = _fit_scorer(name, train_ds, algo_cfg, seed)
            report = evaluate(name, scorer, train_ds, test_ds, cfg.eval_k, cfg.calibrate)
        except Exception as exc:
            raise AlgorithmError(name, exc) from exc
        elapsed = time.perf_counter() - start
        _logger.info("%s: mae=%s dme=%s (%.1fs)", name, fmt(report.mae), fmt(report.dme), elapsed)
        rows.append(",".join([name, fmt(report.mae), fmt(report.dme), str(report.k), fmt(elapsed), str(seed)]))
        rf_path = out_dir / f"rank_frequency_{name}.csv"
        _write_lines(rf_path, ["rank,frequency"] + [f"{r},{c}" for r, c in report.rank_frequency])
        written.append(rf_path)

    report_path = out_dir / "report.csv"
    _write_lines(report_path, rows)
    manifest = {
        "software": {"skellam_rank": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
        "dataset": {"path": str(cfg.dataset_path), "format": cfg.dataset_format,
                    "movielens_sep": cfg.movielens_sep, "csv_columns": cfg.csv_columns,
                    "n_users": ds.n_users, "n_items": ds.n_items, "n_ratings": len(ds),
                    "n_malformed": ds.n_malformed},
        "seed": cfg.seed,
        "split": {"strategy": split.strategy, "test_fraction": split.test_fraction, "seed": split.seed,
                  "n_train": len(train_ds), "n_test": len(test_ds)},
        "eval": {"k": cfg.eval_k, "calibrate": cfg.calibrate},
        "algorithms": {name: resolved[name] for name in cfg.algorithms},
    }
    manifest_path = out_dir / "run_manifest.json"
    _write_lines(manifest_path, [json.dumps(manifest, indent=2, sort_keys=True)])
    return [report_path, *written, manifest_path]


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="skellam-rank", description="Run a Skellam Rank comparison experiment.")
    parser.add_argument("config", help="path to the experiment INI file")
    parser.add_argument("--output-dir", help="override [experiment] output_dir")
    parser.add_argument("--seed", type=int, help="override the root seed")
    parser.add_argument("--quiet", action="store_true", help="only print warnings and errors")
    args = parser.parse_args(argv)

    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.output_dir is not None:
        cfg.output_dir = Path(args.output_dir)
    if args.seed is not None:
        cfg.seed = args.seed

    try:
        paths = run_experiment(cfg)
    except (DatasetError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except AlgorithmError as exc:
        print(f"run error: {exc}", file=sys.stderr)
        return EXIT_RUN
    if not args.quiet:
        print(paths[0].read_text(encoding="utf-8"), end="")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
