"""Run configuration: CLI flags, optional config file, validation.

Precedence is command line > config file > defaults. The config file is flat
``key = value`` text with ``#`` comments; keys are the RunConfig field names
(annotation files use an ``annotation_`` prefix, e.g.
``annotation_pdb_structure = pdb.tsv``).
"""

from __future__ import annotations

import argparse
import os
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError

TRANSPORTS = ("inprocess", "multiprocess", "socket")
CHUNKING_MODES = ("static", "dynamic")
SIMILARITY_BACKENDS = ("builtin", "external")
ANNOTATION_KINDS = ("pdb_structure", "tm_segments", "signal_peptide", "function")
LOG_LEVELS = ("debug", "info", "warning", "error")

DEFAULTS = {
    "n_flanking_up": 4,
    "n_flanking_down": 4,
    "family_distance_cutoff": 0.7,
    "operon_distance_cutoff": 0.5,
    "workers": 1,
    "cores_per_worker": 1,
    "transport": "inprocess",
    "chunking": "static",
    "dynamic_chunk_size": 1,
    "similarity_backend": "builtin",
    "external_tool_path": None,
    "listen": None,
    "log_level": "info",
}

_INT_KEYS = {"n_flanking_up", "n_flanking_down", "workers", "cores_per_worker", "dynamic_chunk_size"}
_FLOAT_KEYS = {"family_distance_cutoff", "operon_distance_cutoff"}
_PATH_KEYS = {"targets_path", "out_dir", "data_dir", "external_tool_path"}
_STR_KEYS = {"transport", "chunking", "similarity_backend", "listen", "log_level"}


@dataclass
class RunConfig:
    targets_path: Path
    out_dir: Path
    data_dir: Path
    n_flanking_up: int = 4
    n_flanking_down: int = 4
    family_distance_cutoff: float = 0.7
    operon_distance_cutoff: float = 0.5
    workers: int = 1
    cores_per_worker: int = 1
    transport: str = "inprocess"
    chunking: str = "static"
    dynamic_chunk_size: int = 1
    similarity_backend: str = "builtin"
    external_tool_path: Path | None = None
    listen: str | None = None
    annotation_files: dict = field(default_factory=dict)
    log_level: str = "info"

    def to_dict(self) -> dict:
        d = {
            "targets_path": str(self.targets_path),
            "out_dir": str(self.out_dir),
            "data_dir": str(self.data_dir),
            "annotation_files": {k: str(v) for k, v in sorted(self.annotation_files.items())},
            "external_tool_path": str(self.external_tool_path) if self.external_tool_path else None,
        }
        for key in DEFAULTS:
            if key not in ("external_tool_path",):
                d[key] = getattr(self, key)
        return d


def read_config_file(path) -> dict:
    """Parse flat `key = value` lines into a raw string map."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    values: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected `key = value`, got {stripped!r}")
        key, _, value = stripped.partition("=")
        values[key.strip()] = value.strip()
    return values


def add_run_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--targets", help="targets file (plain list or FASTA)")
    parser.add_argument("--out", help="output directory for the result bundle")
    parser.add_argument("--data", help="directory holding the built stores (or set GCONTEXT_DATA_DIR)")
    parser.add_argument("--config", help="config file with key = value lines")
    parser.add_argument("--n-flanking-up", type=int, dest="n_flanking_up")
    parser.add_argument("--n-flanking-down", type=int, dest="n_flanking_down")
    parser.add_argument("--family-distance-cutoff", type=float, dest="family_distance_cutoff")
    parser.add_argument("--operon-distance-cutoff", type=float, dest="operon_distance_cutoff")
    parser.add_argument("--workers", type=int)
    parser.add_argument("--cores-per-worker", type=int, dest="cores_per_worker")
    parser.add_argument("--transport", choices=TRANSPORTS)
    parser.add_argument("--chunking", choices=CHUNKING_MODES)
    parser.add_argument("--chunk-size", type=int, dest="dynamic_chunk_size")
    parser.add_argument("--similarity-backend", choices=SIMILARITY_BACKENDS, dest="similarity_backend")
    parser.add_argument("--external-tool-path", dest="external_tool_path")
    parser.add_argument("--listen", help="host:port for the socket transport coordinator")
    parser.add_argument(
        "--annotation",
        action="append",
        default=None,
        metavar="KIND=PATH",
        help="user annotation file, repeatable; KIND one of " + ", ".join(ANNOTATION_KINDS),
    )
    parser.add_argument("--log-level", choices=LOG_LEVELS, dest="log_level")


class RaisingParser(argparse.ArgumentParser):
    """argparse that raises ConfigError instead of exiting, so the CLI owns
    exit codes."""

    def error(self, message):
        raise ConfigError(message)


def _coerce(key: str, value, source: str):
    if value is None or not isinstance(value, str):
        return value
    try:
        if key in _INT_KEYS:
            return int(value)
        if key in _FLOAT_KEYS:
            return float(value)
    except ValueError as exc:
        raise ConfigError(f"{source}: bad value for {key}: {value!r}") from exc
    return value


def config_from_values(cli: dict, file_values: dict | None = None) -> RunConfig:
    """Merge CLI values over config-file values over defaults, then validate."""
    file_values = dict(file_values or {})

    annotations: dict[str, str] = {}
    for key in list(file_values):
        if key.startswith("annotation_"):
            kind = key[len("annotation_") :]
            annotations[kind] = file_values.pop(key)
    for entry in cli.get("annotation") or []:
        if "=" not in entry:
            raise ConfigError(f"--annotation expects KIND=PATH, got {entry!r}")
        kind, _, path = entry.partition("=")
        annotations[kind.strip()] = path.strip()

    merged: dict = dict(DEFAULTS)
    merged.update({"targets_path": None, "out_dir": None, "data_dir": None})
    known = set(merged)
    for key, raw in file_values.items():
        if key not in known:
            raise ConfigError(f"config file: unknown key '{key}'")
        merged[key] = _coerce(key, raw, "config file")
    cli_map = {
        "targets_path": cli.get("targets"),
        "out_dir": cli.get("out"),
        "data_dir": cli.get("data"),
    }
    for key in DEFAULTS:
        cli_map[key] = cli.get(key)
    for key, value in cli_map.items():
        if value is not None:
            merged[key] = _coerce(key, value, "command line")

    if merged["data_dir"] is None:
        merged["data_dir"] = os.environ.get("GCONTEXT_DATA_DIR") or None

    for key in ("targets_path", "out_dir", "data_dir"):
        if not merged[key]:
            flag = {"targets_path": "--targets", "out_dir": "--out", "data_dir": "--data"}[key]
            raise ConfigError(f"missing required setting {key} ({flag})")

    cfg = RunConfig(
        targets_path=Path(merged["targets_path"]),
        out_dir=Path(merged["out_dir"]),
        data_dir=Path(merged["data_dir"]),
        n_flanking_up=merged["n_flanking_up"],
        n_flanking_down=merged["n_flanking_down"],
        family_distance_cutoff=merged["family_distance_cutoff"],
        operon_distance_cutoff=merged["operon_distance_cutoff"],
        workers=merged["workers"],
        cores_per_worker=merged["cores_per_worker"],
        transport=merged["transport"],
        chunking=merged["chunking"],
        dynamic_chunk_size=merged["dynamic_chunk_size"],
        similarity_backend=merged["similarity_backend"],
        external_tool_path=Path(merged["external_tool_path"]) if merged["external_tool_path"] else None,
        listen=merged["listen"],
        annotation_files={k: Path(v) for k, v in annotations.items()},
        log_level=merged["log_level"],
    )
    validate_config(cfg)
    return cfg


def validate_config(cfg: RunConfig) -> None:
    if cfg.n_flanking_up < 0:
        raise ConfigError("n_flanking_up must be >= 0")
    if cfg.n_flanking_down < 0:
        raise ConfigError("n_flanking_down must be >= 0")
    for key in ("family_distance_cutoff", "operon_distance_cutoff"):
        value = getattr(cfg, key)
        if not 0.0 <= value <= 1.0:
            raise ConfigError(f"{key} must be in [0, 1], got {value}")
    if cfg.workers < 1:
        raise ConfigError("workers must be >= 1")
    if cfg.cores_per_worker < 1:
        raise ConfigError("cores_per_worker must be >= 1")
    if cfg.dynamic_chunk_size < 1:
        raise ConfigError("dynamic_chunk_size must be >= 1")
    if cfg.transport not in TRANSPORTS:
        raise ConfigError(f"transport must be one of {', '.join(TRANSPORTS)}")
    if cfg.chunking not in CHUNKING_MODES:
        raise ConfigError(f"chunking must be one of {', '.join(CHUNKING_MODES)}")
    if cfg.similarity_backend not in SIMILARITY_BACKENDS:
        raise ConfigError(f"similarity_backend must be one of {', '.join(SIMILARITY_BACKENDS)}")
    if cfg.log_level not in LOG_LEVELS:
        raise ConfigError(f"log_level must be one of {', '.join(LOG_LEVELS)}")
    if cfg.similarity_backend == "external" and cfg.external_tool_path is None:
        raise ConfigError("external backend requires tool path (--external-tool-path)")
    if cfg.transport == "socket" and not cfg.listen:
        raise ConfigError("socket transport requires --listen host:port")
    if not cfg.targets_path.is_file():
        raise ConfigError(f"targets_path: no such file: {cfg.targets_path}")
    if not cfg.data_dir.is_dir():
        raise ConfigError(f"data_dir: no such directory: {cfg.data_dir}")
    if cfg.external_tool_path is not None and not cfg.external_tool_path.is_file():
        raise ConfigError(f"external_tool_path: no such file: {cfg.external_tool_path}")
    for kind, path in cfg.annotation_files.items():
        if kind not in ANNOTATION_KINDS:
            raise ConfigError(f"annotation kind '{kind}' not one of {', '.join(ANNOTATION_KINDS)}")
        if not Path(path).is_file():
            raise ConfigError(f"annotation file for {kind}: no such file: {path}")


def parse_config(argv: list[str], config_file=None) -> RunConfig:
    """Parse `run` subcommand flags (plus optional config file) into a
    validated RunConfig."""
    parser = RaisingParser(prog="gcontext run", add_help=False)
    add_run_arguments(parser)
    ns = parser.parse_args(argv)
    cli = vars(ns)
    file_path = config_file or cli.get("config")
    file_values = read_config_file(file_path) if file_path else None
    return config_from_values(cli, file_values)
