"""Operator command line.

Every subcommand is a thin wrapper over module functions.  Settings come
from built-in defaults, then a ``key = value`` config file (``--config`` or
``$LEDGERLEARN_CONFIG``), then command-line flags.  A network created by
``init`` keeps its own settings in ``<state-dir>/config.json``; later
commands on that directory reuse them.
"""
import argparse
import configparser
import json
import os
import sys
from dataclasses import fields
from pathlib import Path

from . import ingest, ledger, simnet
from .canonical import canonical_json
from .contracts import Role
from .errors import LedgerLearnError

ENV_CONFIG = "LEDGERLEARN_CONFIG"
DEFAULT_STATE_DIR = "ledgerlearn-state"
CONFIG_KEYS = {f.name: f.type for f in fields(simnet.SimConfig)}
_CASTS = {"int": int, "float": float, "str": str, "bool": lambda v: str(v).lower() in ("1", "true", "yes", "on")}


class UsageError(Exception):
    pass


def _cast(key, value):
    kind = CONFIG_KEYS[key]
    kind = kind if isinstance(kind, str) else kind.__name__
    return _CASTS[kind](value)


def read_config_file(path) -> dict:
    parser = configparser.ConfigParser()
    text = Path(path).read_text(encoding="utf-8")
    parser.read_string("[ledgerlearn]\n" + text)
    values = {}
    for key, raw in parser["ledgerlearn"].items():
        key = key.replace("-", "_")
        key = "C" if key == "c" else key
        if key not in CONFIG_KEYS:
            raise UsageError(f"unknown config key {key!r} in {path}")
        values[key] = _cast(key, raw)
    return values


def effective_config(args) -> simnet.SimConfig:
    values = {}
    saved = Path(args.state_dir) / "config.json"
    if saved.exists():
        values.update(json.loads(saved.read_text()))
    path = args.config or os.environ.get(ENV_CONFIG)
    if path:
        values.update(read_config_file(path))
    for key in CONFIG_KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    return simnet.SimConfig(**values)


def _emit(args, payload, human=None):
    if args.json:
        print(canonical_json(payload))
    else:
        print(human if human is not None else json.dumps(payload, indent=2))


def _open(args, cfg):
    return simnet.open_network(args.state_dir, cfg)


def _ensure_account(state, name, role):
    for acct in state.contracts.accounts.values():
        if acct.name == name:
            return acct
    return simnet.register(state, name, role)


def cmd_init(args, cfg):
    state_dir = Path(args.state_dir)
    if (state_dir / "events.jsonl").exists():
        raise UsageError(f"{state_dir} already holds a network")
    records = ingest.load_csv(args.train)
    train, test = simnet.prepare_initial(records, cfg)
    state = simnet.init_network(cfg, train, test, args.regulator, workdir=state_dir)
    (state_dir / "config.json").write_text(canonical_json(cfg.to_dict()))
    genesis = state.chain.tip
    payload = {"genesis_hash": genesis.hash, "model_hash": state.contracts.current_model_hash,
               "regulator": state.contracts.regulator.id, "metrics": state.contracts.best.to_dict()}
    _emit(args, payload, f"genesis block {genesis.hash}\nmodel {payload['model_hash']}\n"
                         f"regulator id {payload['regulator']}")
    return 0


def cmd_contribute(args, cfg):
    state = _open(args, cfg)
    acct = _ensure_account(state, args.contributor, Role.CONTRIBUTOR)
    outcome = simnet.contribute(state, acct, Path(args.csv))
    payload = outcome.to_dict()
    _emit(args, payload, f"{outcome.status}" + (f" ({outcome.reason})" if outcome.reason else "")
          + (f" block {outcome.block_no} incentive {outcome.incentive}" if outcome.block_no is not None else ""))
    return 1 if outcome.status == "rejected" else 0


def cmd_query(args, cfg):
    state = _open(args, cfg)
    try:
        row = json.loads(args.row)
    except ValueError as exc:
        raise UsageError(f"row must be a JSON list: {exc}") from None
    if isinstance(row, dict):
        row = row.get("features")
    acct = _ensure_account(state, args.caller, Role.USER)
    prediction, digest = simnet.serve_query(state, acct, row)
    _emit(args, {"prediction": prediction, "model_hash": digest}, str(prediction))
    return 0


def cmd_chain(args, cfg):
    chain = ledger.load_journal(Path(args.state_dir) / "chain.jsonl", cfg.difficulty)
    if args.action == "verify":
        bad = ledger.verify_chain(chain)
        payload = {"status": "ok" if bad is None else "invalid", "length": len(chain),
                   "first_invalid_index": bad}
        _emit(args, payload, "ok" if bad is None else f"invalid at block {bad}")
        return 0 if bad is None else 1
    blocks = [b.to_dict() for b in chain.blocks]
    _emit(args, {"blocks": blocks}, "\n".join(
        f"#{b['block_no']} {b['block_hash']} nonce={b['nonce']} fnr={b['data'][0]['false_negative_rate']}"
        for b in blocks))
    return 0


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def cmd_bench(args, cfg):
    rows = simnet.bench_mining(args.difficulties, args.volumes, args.repeats, cfg.workers, cfg.seed)
    table = simnet.bench_csv(rows)
    if args.out:
        Path(args.out).write_text(table)
    _emit(args, {"rows": [r.__dict__ for r in rows]}, table.rstrip("\n"))
    return 0


def cmd_simulate(args, cfg):
    report = simnet.run_scenario(cfg, args.contributions, workdir=args.out_dir)
    if args.out_dir:
        out = Path(args.out_dir)
        (out / "report.json").write_text(report.to_json())
        (out / "metrics.csv").write_text(report.metrics_csv())
    payload = report.to_dict()
    accepted = sum(o.status == "accepted" for o in report.outcomes)
    human = (f"{accepted}/{len(report.outcomes)} contributions accepted\n"
             f"accepted FNR: {', '.join(f'{v:.4f}' for v in report.accepted_fnr)}\n"
             f"chain tip {report.chain.tip_hash()} ({len(report.chain)} blocks, "
             f"verify {'ok' if report.verify_index is None else report.verify_index})")
    _emit(args, payload, human)
    return 0


def cmd_generate(args, cfg):
    path = ingest.generate_synthetic(args.out, args.rows, args.fraud_rate, args.data_seed, args.noise)
    _emit(args, {"path": str(path), "rows": args.rows}, str(path))
    return 0


def cmd_serve(args, cfg):
    from .service import serve

    state = _open(args, cfg)
    serve(state, args.host, args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help=f"key = value settings file (or ${ENV_CONFIG})")
    common.add_argument("--state-dir", default=DEFAULT_STATE_DIR, help="network journals and models")
    common.add_argument("--json", action="store_true", help="machine-readable output")
    common.add_argument("--difficulty", type=int)
    common.add_argument("--beta", type=float)
    common.add_argument("--epsilon", type=float)
    common.add_argument("--C", dest="C", type=float, help="passive-aggressive step cap")
    common.add_argument("--split-ratio", dest="split_ratio", type=float)
    common.add_argument("--balance-fraction", dest="balance_fraction", type=float)
    common.add_argument("--k", type=int, help="SMOTE neighbours")
    common.add_argument("--base-incentive", dest="base_incentive", type=float)
    common.add_argument("--workers", type=int)

    parser = argparse.ArgumentParser(prog="ledgerlearn", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init", parents=[common], help="train the initial model and mine genesis")
    p.add_argument("train", help="PaySim-schema CSV")
    p.add_argument("--regulator", default="regulator")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_init)

    p = sub.add_parser("contribute", parents=[common], help="submit a dataset")
    p.add_argument("csv")
    p.add_argument("--as", dest="contributor", default="contributor-1")
    p.set_defaults(func=cmd_contribute)

    p = sub.add_parser("query", parents=[common], help="predict one feature row")
    p.add_argument("row", help='JSON list, e.g. "[0, 1, 9000, 9000, 0, 0, 0]"')
    p.add_argument("--as", dest="caller", default="cli-user")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("chain", parents=[common], help="inspect the block journal")
    p.add_argument("action", choices=("verify", "show"))
    p.set_defaults(func=cmd_chain)

    p = sub.add_parser("bench", parents=[common], help="mining-time benchmark table")
    p.add_argument("--difficulties", type=_int_list, default=[2, 3, 4])
    p.add_argument("--volumes", type=_int_list, default=[500, 1000, 2000])
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="also write the CSV here")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("simulate", parents=[common], help="seeded end-to-end scenario")
    p.add_argument("--contributions", type=int, default=15)
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir", help="keep journals, report.json and metrics.csv here")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("generate-data", parents=[common], help="write a synthetic PaySim-schema CSV")
    p.add_argument("--rows", type=int, default=10000)
    p.add_argument("--fraud-rate", type=float, default=ingest.DEFAULT_FRAUD_RATE)
    p.add_argument("--seed", dest="data_seed", type=int, default=0)
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--out", default="transactions.csv")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("serve", parents=[common], help="run the HTTP node")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = effective_config(args)
        print("config: " + canonical_json(cfg.to_dict()), file=sys.stderr)
        return args.func(args, cfg)
    except UsageError as exc:
        print("error: " + canonical_json({"type": "UsageError", "error": str(exc)}), file=sys.stderr)
        return 2
    except (LedgerLearnError, OSError, ValueError) as exc:
        print("error: " + canonical_json({"type": type(exc).__name__, "error": str(exc)}), file=sys.stderr)
        return 1


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
