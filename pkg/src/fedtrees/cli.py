"""Command-line entry points: simulate, master, client, predict, sweep, eval.

Configuration lives in a TOML file mirrored one-to-one by flags; a flag
set on the command line wins over the file, which wins over built-in
defaults. Exit codes: 0 success, 2 config error, 3 protocol error,
4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import socket
import sys
from dataclasses import dataclass, fields
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

import dataclasses

import numpy as np

from . import dataset as ds
from . import forest as fo
from . import metrics as me
from .ldp import (
    BloomParams,
    LdpError,
    MODE_LDP,
    MODE_NONE,
    PRIVACY_MODES,
    RrParams,
    session_epsilon,
)
from .rand import repeat_seeds
from .protocol import (
    ClientEngine,
    LinkError,
    MasterEngine,
    ProtocolViolation,
    SessionConfig,
    SessionConfigError,
    TcpLink,
    simulate,
)

log = logging.getLogger("fedtrees")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PROTOCOL = 3
EXIT_IO = 4


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    dataset: str | None = None
    label_column: str | None = None
    has_header: bool = True
    categorical_columns: list | None = None
    label_classes: list | None = None
    train_fraction: float = 0.8
    subsample_fraction: float = 0.8
    seed: int = 0
    clients: int = 2
    trees: int = 20
    max_depth: int = 20
    min_samples_leaf: int = 2
    candidate_count: int | None = None
    privacy: str = MODE_NONE
    epsilon_node: float = 1.0
    bloom_h: int = 32
    bloom_m: int = 2
    bloom_hash_seed: int | None = None
    pr: float = 0.5
    xi: float = 0.75
    zeta: float = 0.25
    repeats: int = 1
    model_out: str | None = None
    report_out: str | None = None
    listen: str | None = None
    connect: str | None = None
    client_id: int | None = None
    timeout_s: float = 30.0

    def session_config(self) -> SessionConfig:
        if self.privacy not in PRIVACY_MODES:
            raise ConfigError(f"privacy must be one of {PRIVACY_MODES}, got {self.privacy!r}")
        bloom = rr = None
        if self.privacy == MODE_LDP:
            hash_seed = self.seed if self.bloom_hash_seed is None else self.bloom_hash_seed
            bloom = BloomParams(h=self.bloom_h, m=self.bloom_m, hash_seed=hash_seed)
            rr = RrParams(pr=self.pr, xi=self.xi, zeta=self.zeta)
        return SessionConfig(
            clients=self.clients,
            trees=self.trees,
            max_depth=self.max_depth,
            min_samples_leaf=self.min_samples_leaf,
            candidate_count=self.candidate_count,
            privacy_mode=self.privacy,
            bloom=bloom,
            rr=rr,
            epsilon_node=self.epsilon_node,
            subsample_fraction=self.subsample_fraction,
            master_seed=self.seed,
            timeout_s=self.timeout_s,
        )


_CONFIG_KEYS = {f.name for f in fields(RunConfig)}


def load_config(path: str | None, overrides: dict) -> RunConfig:
    values: dict = {}
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {p}")
        try:
            loaded = tomllib.loads(p.read_text(encoding="utf-8"))
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"invalid config file {p}: {e}") from None
        unknown = set(loaded) - _CONFIG_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        values.update(loaded)
    for key, value in overrides.items():
        if value is not None:
            values[key] = value
    try:
        return RunConfig(**values)
    except TypeError as e:
        raise ConfigError(str(e)) from None


def _require(cfg: RunConfig, *names: str) -> None:
    for name in names:
        if getattr(cfg, name) is None:
            raise ConfigError(f"missing required setting {name!r} (flag or config file)")


def _load_dataset(cfg: RunConfig, path: str | None = None) -> ds.DataShard:
    _require(cfg, "label_column")
    src = path if path is not None else cfg.dataset
    if src is None:
        raise ConfigError("missing required setting 'dataset'")
    return ds.load_csv(
        src,
        label_column=cfg.label_column,
        has_header=cfg.has_header,
        categorical=cfg.categorical_columns or (),
        classes=cfg.label_classes,
    )


def _print_epsilon(epsilon: float | None) -> None:
    if epsilon is None:
        print("privacy budget: none spent (no perturbation applied)")
    else:
        print(f"privacy budget: epsilon = {epsilon:.6g}")


def _write_model(forest: fo.Forest, path: str | None) -> None:
    if path:
        fo.save_model(forest, path)
        print(f"model written to {path}")


def _write_report(report: me.EvalReport, path: str | None) -> None:
    if path:
        Path(path).write_text(report.to_json() + "\n", encoding="utf-8")
        print(f"report written to {path}")


def cmd_simulate(cfg: RunConfig) -> int:
    shard = _load_dataset(cfg)
    session = cfg.session_config()
    report = me.repeat_experiment(
        session, shard, cfg.train_fraction, cfg.repeats, base_seed=cfg.seed
    )
    if cfg.model_out:
        # persist the forest of the first repetition for reuse
        split_seed, master_seed = repeat_seeds(cfg.seed, 0)
        train, _ = ds.split_train_test(shard, cfg.train_fraction, split_seed)
        result = simulate(dataclasses.replace(session, master_seed=master_seed), train)
        _write_model(result.forest, cfg.model_out)
    print(report.to_table())
    _print_epsilon(report.epsilon)
    _write_report(report, cfg.report_out)
    return EXIT_OK


def _parse_addr(addr: str) -> tuple[str, int]:
    host, _, port = addr.rpartition(":")
    if not host or not port.isdigit():
        raise ConfigError(f"address must be host:port, got {addr!r}")
    return host, int(port)


def cmd_master(cfg: RunConfig) -> int:
    _require(cfg, "listen")
    session = cfg.session_config()
    host, port = _parse_addr(cfg.listen)
    links = []
    server = socket.create_server((host, port), backlog=session.clients)
    server.settimeout(session.timeout_s)
    try:
        log.info("master listening on %s:%d for %d clients", host, port, session.clients)
        try:
            for _ in range(session.clients):
                conn, peer = server.accept()
                log.info("client connected from %s", peer)
                links.append(TcpLink(conn))
        except socket.timeout:
            raise ProtocolViolation(
                "timeout", f"{len(links)} of {session.clients} clients connected"
            ) from None
        result = MasterEngine(session, links).run()
    finally:
        for link in links:
            link.close()
        server.close()
    _write_model(result.forest, cfg.model_out)
    _print_epsilon(result.epsilon)
    return EXIT_OK


def cmd_client(cfg: RunConfig) -> int:
    _require(cfg, "connect", "client_id")
    session = cfg.session_config()
    shard = _load_dataset(cfg)
    shard.client_id = cfg.client_id
    host, port = _parse_addr(cfg.connect)
    sock = socket.create_connection((host, port), timeout=session.timeout_s)
    link = TcpLink(sock)
    try:
        forest = ClientEngine(session, shard, link).run()
    finally:
        link.close()
    _write_model(forest, cfg.model_out)
    _print_epsilon(
        session_epsilon(
            session.epsilon_node,
            [fo.tree_depth(t) for t in forest.trees],
            session.clients,
            session.privacy_mode,
        )
    )
    return EXIT_OK


def cmd_predict(cfg: RunConfig, model_path: str, data_path: str, out_path: str) -> int:
    forest = fo.load_model(model_path)
    rows = _load_feature_rows(Path(data_path), forest, cfg.has_header)
    names = []
    if rows.shape[0]:
        pred = fo.predict_batch(forest, rows)
        names = [forest.label_space.classes[int(i)] for i in pred]
    Path(out_path).write_text("".join(n + "\n" for n in names), encoding="utf-8")
    print(f"{len(names)} predictions written to {out_path}")
    return EXIT_OK


def _load_feature_rows(path: Path, forest: fo.Forest, has_header: bool) -> np.ndarray:
    if not path.exists():
        raise ds.DatasetError(f"input file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        records = list(csv.reader(fh))
    metas = forest.feature_metas
    if not records:
        return np.empty((0, len(metas)))
    if has_header:
        names = [c.strip() for c in records[0]]
        missing = [m.name for m in metas if m.name not in names]
        if missing:
            raise ds.DatasetError(f"input is missing model features: {missing}")
        positions = [names.index(m.name) for m in metas]
        records = records[1:]
    else:
        positions = list(range(len(metas)))
    x = np.empty((len(records), len(metas)))
    for r, record in enumerate(records):
        if not has_header and len(record) != len(metas):
            raise ds.DatasetError(
                f"line {r + 1}: expected {len(metas)} columns, got {len(record)}"
            )
        for j, (meta, pos) in enumerate(zip(metas, positions)):
            if pos >= len(record):
                raise ds.DatasetError(f"line {r + 1 + int(has_header)}: too few columns")
            cell = record[pos].strip()
            if meta.categories is not None:
                try:
                    x[r, j] = meta.categories.index(cell)
                except ValueError:
                    raise ds.DatasetError(
                        f"line {r + 1 + int(has_header)}, column {meta.name!r}: "
                        f"unknown category {cell!r}"
                    ) from None
            else:
                try:
                    x[r, j] = float(cell)
                except ValueError:
                    raise ds.DatasetError(
                        f"line {r + 1 + int(has_header)}, column {meta.name!r}: "
                        f"cannot parse {cell!r} as a number"
                    ) from None
    return x


def cmd_eval(cfg: RunConfig, model_path: str, data_path: str) -> int:
    forest = fo.load_model(model_path)
    cfg.label_classes = list(forest.label_space.classes)
    shard = _load_dataset(cfg, path=data_path)
    if shard.n_features != forest.n_features:
        raise ds.DatasetError(
            f"feature count mismatch: model has {forest.n_features}, data has {shard.n_features}"
        )
    acc, score, precision, recall = me.evaluate_forest(forest, shard)
    report = me.EvalReport(
        accuracy=acc,
        f1=score,
        accuracy_std=0.0,
        f1_std=0.0,
        precision=precision,
        recall=recall,
        classes=list(forest.label_space.classes),
        n_test=shard.n,
        repeats=1,
    )
    print(report.to_table())
    _write_report(report, cfg.report_out)
    return EXIT_OK


SWEEP_AXES = ("clients", "trees", "depth")


def cmd_sweep(cfg: RunConfig, axis: str, values: list[int], out_path: str | None) -> int:
    if axis not in SWEEP_AXES:
        raise ConfigError(f"sweep axis must be one of {SWEEP_AXES}, got {axis!r}")
    if not values:
        raise ConfigError("sweep needs at least one value")
    shard = _load_dataset(cfg)
    rows = []
    for value in values:
        session = cfg.session_config()
        if axis == "clients":
            session = dataclasses.replace(session, clients=value)
        elif axis == "trees":
            session = dataclasses.replace(session, trees=value)
        else:
            session = dataclasses.replace(session, max_depth=value)
        report = me.repeat_experiment(
            session, shard, cfg.train_fraction, cfg.repeats, base_seed=cfg.seed
        )
        rows.append((value, report.accuracy, report.accuracy_std, report.f1, report.f1_std))
        log.info("%s=%d: accuracy %.4f +/- %.4f", axis, value, report.accuracy, report.accuracy_std)
    lines = [f"{axis},accuracy_mean,accuracy_std,f1_mean,f1_std"]
    for value, acc, acc_std, score, score_std in rows:
        lines.append(f"{value},{acc:.6f},{acc_std:.6f},{score:.6f},{score_std:.6f}")
    text = "\n".join(lines) + "\n"
    if out_path:
        Path(out_path).write_text(text, encoding="utf-8")
        print(f"sweep results written to {out_path}")
    else:
        print(text, end="")
    return EXIT_OK


def _add_common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML config file")
    p.add_argument("--privacy", choices=list(PRIVACY_MODES))
    p.add_argument("--trees", type=int)
    p.add_argument("--max-depth", type=int, dest="max_depth")
    p.add_argument("--clients", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--epsilon-node", type=float, dest="epsilon_node")
    p.add_argument("--min-samples-leaf", type=int, dest="min_samples_leaf")
    p.add_argument("--candidate-count", type=int, dest="candidate_count")
    p.add_argument("--subsample-fraction", type=float, dest="subsample_fraction")
    p.add_argument("--train-fraction", type=float, dest="train_fraction")
    p.add_argument("--label-column", dest="label_column")
    p.add_argument("--repeats", type=int)
    p.add_argument("--timeout", type=float, dest="timeout_s")
    p.add_argument("--data", dest="dataset", help="dataset CSV path")
    p.add_argument("--out", dest="model_out", help="model output path")
    p.add_argument("--report", dest="report_out", help="report JSON output path")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedtrees",
        description="Federated extra-trees training, inference, and experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="train in-process with simulated clients")
    _add_common_flags(p)

    p = sub.add_parser("master", help="coordinate a multi-machine session")
    _add_common_flags(p)
    p.add_argument("--listen", help="host:port to listen on")

    p = sub.add_parser("client", help="join a session as a data holder")
    _add_common_flags(p)
    p.add_argument("--connect", help="master host:port")
    p.add_argument("--client-id", type=int, dest="client_id")

    p = sub.add_parser("predict", help="predict labels for a CSV of feature rows")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--no-header", action="store_true", help="input CSV has no header row")

    p = sub.add_parser("eval", help="evaluate a saved model on a labeled CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--label-column", required=True, dest="label_column")
    p.add_argument("--report", dest="report_out")
    p.add_argument("--no-header", action="store_true")

    p = sub.add_parser("sweep", help="repeat experiments along one parameter axis")
    _add_common_flags(p)
    p.add_argument("--axis", required=True, choices=list(SWEEP_AXES))
    p.add_argument("--values", required=True, help="comma-separated integers")

    return parser


_OVERRIDE_KEYS = (
    "privacy trees max_depth clients seed epsilon_node min_samples_leaf "
    "candidate_count subsample_fraction train_fraction label_column repeats "
    "timeout_s dataset model_out report_out listen connect client_id"
).split()


def _overrides_from_args(args: argparse.Namespace) -> dict:
    return {k: getattr(args, k) for k in _OVERRIDE_KEYS if hasattr(args, k)}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        level=os.environ.get("FET_LOG", "warning").upper(),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "predict":
            cfg = RunConfig(has_header=not args.no_header)
            return cmd_predict(cfg, args.model, args.data, args.out)
        if args.command == "eval":
            cfg = load_config(None, {"label_column": args.label_column, "report_out": args.report_out})
            cfg.has_header = not args.no_header
            return cmd_eval(cfg, args.model, args.data)
        cfg = load_config(args.config, _overrides_from_args(args))
        if args.command == "simulate":
            return cmd_simulate(cfg)
        if args.command == "master":
            return cmd_master(cfg)
        if args.command == "client":
            return cmd_client(cfg)
        if args.command == "sweep":
            try:
                values = [int(v) for v in args.values.split(",") if v.strip()]
            except ValueError:
                raise ConfigError(f"--values must be comma-separated integers: {args.values!r}") from None
            return cmd_sweep(cfg, args.axis, values, cfg.model_out)
        parser.error(f"unknown command {args.command}")
    except (ConfigError, SessionConfigError, LdpError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (ProtocolViolation, LinkError) as e:
        print(f"protocol error: {e}", file=sys.stderr)
        return EXIT_PROTOCOL
    except (ds.DatasetError, fo.ModelError, OSError) as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
