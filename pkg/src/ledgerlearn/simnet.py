"""In-process network simulation of the collaborative training loop.

One :class:`SimState` holds the contract state, the canonical chain, every
verifier node's chain copy and the model registry.  Contributions are
processed strictly one at a time; the contributing node mines, every
verifier checks and appends the block.

When a working directory is given, four append-only files are kept::

    chain.jsonl     one sealed block per line
    events.jsonl    contract events (registrations, updates, rewards)
    activity.jsonl  contributions received and queries served
    models/         model files named model-<version>-<hash12>.json

Nothing written there contains feature values, labels or model weights,
except the model files themselves, which stay off-chain.
"""
import csv
import io
import json
import threading
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from . import contracts as ct
from . import ingest, learner, ledger
from .canonical import canonical_bytes, canonical_json
from .dataset import Dataset, train_test_split
from .errors import LedgerLearnError, NotAuthorized
from .metrics import DEFAULT_BETA, ConfusionMatrix, MetricsReport, confusion_matrix
from .sampling import smote_balance

GENESIS_TIME = 1_700_000_000
CLOCK_STEP = 60


@dataclass(frozen=True)
class SimConfig:
    difficulty: int = 2
    seed: int = 0
    split_ratio: float = 0.8
    beta: float = DEFAULT_BETA
    epsilon: float = ct.EPSILON
    balance_fraction: float = 1.0
    k: int = 5
    base_incentive: float = ct.BASE_INCENTIVE
    n_verifier_nodes: int = 3
    smote_test: bool = True
    drop_step: bool = False
    kind: str = learner.PAC
    C: float = learner.DEFAULT_C
    eta: float = learner.DEFAULT_ETA
    tol: float = learner.DEFAULT_TOL
    max_iter: int = learner.DEFAULT_MAX_ITER
    workers: int = 1

    def __post_init__(self):
        if not 0 < self.split_ratio < 1:
            raise ValueError("split_ratio must be in (0, 1)")
        if not 0 <= self.difficulty <= ledger.MAX_DIFFICULTY:
            raise ValueError("difficulty must be in [0, 8]")
        if self.n_verifier_nodes < 1:
            raise ValueError("n_verifier_nodes must be positive")

    def contract_config(self) -> ct.ContractConfig:
        return ct.ContractConfig(base_incentive=self.base_incentive, epsilon=self.epsilon)

    def to_dict(self):
        return asdict(self)


class LogicalClock:
    def __init__(self, start: int = GENESIS_TIME, step: int = CLOCK_STEP):
        self.now = start
        self.step = step

    def tick(self) -> int:
        t = self.now
        self.now += self.step
        return t


@dataclass
class NodeCtx:
    name: str
    chain: ledger.Chain


@dataclass
class Stats:
    contributions: int = 0
    model_updates: int = 0
    queries_served: int = 0


@dataclass
class ContributionOutcome:
    status: str  # accepted | base_rewarded | rejected
    contributor: str
    reason: Optional[str] = None
    incentive: float = 0.0
    block_no: Optional[int] = None
    model_hash: Optional[str] = None
    metrics: Optional[MetricsReport] = None
    attempts: int = 0
    timings_ms: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"outcome": self.status, "contributor": self.contributor, "reason": self.reason,
                "incentive": self.incentive, "block_no": self.block_no,
                "model_hash": self.model_hash, "attempts": self.attempts,
                "metrics": None if self.metrics is None else self.metrics.to_dict()}


class SimState:
    def __init__(self, cfg: SimConfig, contracts: ct.ContractState, workdir=None):
        self.cfg = cfg
        self.contracts = contracts
        self.chain = ledger.Chain(cfg.difficulty)
        self.nodes = [NodeCtx(f"node-{i}", ledger.Chain(cfg.difficulty))
                      for i in range(cfg.n_verifier_nodes)]
        self.workdir = None if workdir is None else Path(workdir)
        if self.workdir is not None:
            self.workdir.mkdir(parents=True, exist_ok=True)
        self.registry = learner.ModelRegistry(None if self.workdir is None else self.workdir / "models")
        self.clock = LogicalClock()
        self.stats = Stats()
        self.activity: List[dict] = []
        self._events_written = 0
        self._io_lock = threading.Lock()

    # persistence -----------------------------------------------------------
    def _path(self, name):
        return None if self.workdir is None else self.workdir / name

    def _flush_events(self):
        path = self._path("events.jsonl")
        pending = self.contracts.events[self._events_written:]
        if path is not None and pending:
            with open(path, "ab") as fh:
                fh.write(b"".join(canonical_bytes(ev) + b"\n" for ev in pending))
        self._events_written = len(self.contracts.events)

    def _log_activity(self, record: dict):
        with self._io_lock:
            if record["activity"] == "query":
                self.stats.queries_served += 1
            self.activity.append(record)
            path = self._path("activity.jsonl")
            if path is not None:
                with open(path, "ab") as fh:
                    fh.write(canonical_bytes(record) + b"\n")

    # chain -----------------------------------------------------------------
    def _seal_and_broadcast(self, entry: ledger.Entry):
        block = ledger.make_block(self.chain.next_number(), self.chain.tip_hash(), [entry],
                                  self.clock.tick())
        t0 = time.perf_counter()
        if self.cfg.workers > 1:
            sealed, attempts = ledger.mine_parallel(block, self.cfg.difficulty, self.cfg.workers)
        else:
            sealed, attempts = ledger.mine(block, self.cfg.difficulty)
        mine_ms = (time.perf_counter() - t0) * 1000
        ledger.append(self.chain, sealed)
        for node in self.nodes:
            ledger.append(node.chain, sealed)  # raises InvalidBlock on a bad broadcast
        path = self._path("chain.jsonl")
        if path is not None:
            ledger.append_journal(path, sealed)
        return sealed, attempts, mine_ms

    def tips_agree(self) -> bool:
        tip = self.chain.tip_hash()
        return all(node.chain.tip_hash() == tip for node in self.nodes)

    # models ----------------------------------------------------------------
    def current_model(self) -> learner.LinearModel:
        model, _ = self.registry.get(self.contracts.current_model_hash)
        return model

    def seed_for(self, *parts) -> int:
        return int(np.random.SeedSequence([self.cfg.seed, *parts]).generate_state(1)[0])


def _new_scaler(ds: Dataset):
    return learner.FeatureScaler.fit(ds.features, ds.feature_names)


def prepare_initial(records, cfg: SimConfig):
    """Genesis data path: split first, then balance each side."""
    ds = ingest.records_to_dataset(records, cfg.drop_step)
    train, test = train_test_split(ds, cfg.split_ratio, cfg.seed)
    scaler = _new_scaler(train)
    train = smote_balance(train, cfg.balance_fraction, cfg.k, cfg.seed, scaler.transform)
    if cfg.smote_test:
        test = smote_balance(test, cfg.balance_fraction, cfg.k, cfg.seed + 1, scaler.transform)
    return train, test


def prepare_contribution(records, cfg: SimConfig, scaler: learner.FeatureScaler, seed: int):
    """Contribution data path: clean, select, balance, then split."""
    ds = ingest.records_to_dataset(records, cfg.drop_step)
    if cfg.smote_test:
        ds = smote_balance(ds, cfg.balance_fraction, cfg.k, seed, scaler.transform)
        return train_test_split(ds, cfg.split_ratio, seed)
    train, test = train_test_split(ds, cfg.split_ratio, seed)
    return smote_balance(train, cfg.balance_fraction, cfg.k, seed, scaler.transform), test


def init_network(cfg: SimConfig, initial_train: Dataset, initial_test: Dataset,
                 regulator_name: str = "regulator", workdir=None) -> SimState:
    """Train the regulator's model, mine the genesis block and seed the contract bests."""
    contracts = ct.new_state(regulator_name, cfg.contract_config())
    state = SimState(cfg, contracts, workdir)
    regulator = contracts.regulator
    for node in state.nodes:
        ct.register_account(contracts, node.name, ct.Role.USER, regulator)
    model = learner.fit(initial_train, cfg.kind, cfg.C, cfg.eta, cfg.tol, cfg.max_iter, cfg.seed)
    metrics = learner.evaluate(model, initial_train, initial_test, cfg.beta)
    digest = state.registry.put(model, metrics)
    entry = ct.deploy_genesis(contracts, metrics, digest, regulator)
    state._seal_and_broadcast(entry)
    state._flush_events()
    return state


def register(state: SimState, name: str, role=ct.Role.CONTRIBUTOR) -> ct.Account:
    acct = ct.register_account(state.contracts, name, role, state.contracts.regulator)
    state._flush_events()
    return acct


def _as_records(raw):
    if isinstance(raw, (str, bytes)):
        text = raw.decode("utf-8") if isinstance(raw, bytes) else raw
        return ingest.parse_csv(text)
    if isinstance(raw, Path):
        return ingest.load_csv(raw)
    return list(raw)


def contribute(state: SimState, contributor: ct.Account, raw_csv) -> ContributionOutcome:
    """Run one contribution through preparation, off-chain training and the gate.

    ``raw_csv`` is CSV text/bytes, a :class:`~pathlib.Path`, or parsed records.
    """
    contributor = state.contracts.account(contributor.id)
    if contributor.role is not ct.Role.CONTRIBUTOR:
        raise NotAuthorized(f"{contributor.role.value} accounts cannot contribute")
    index = state.stats.contributions
    state.stats.contributions += 1
    seed = state.seed_for(1, index)
    deployed = state.current_model()
    timings = {}
    try:
        t0 = time.perf_counter()
        train, test = prepare_contribution(_as_records(raw_csv), state.cfg, deployed.scaler, seed)
        candidate = learner.partial_fit(deployed, train)
        t1 = time.perf_counter()
        metrics = learner.evaluate(candidate, train, test, state.cfg.beta)
        t2 = time.perf_counter()
        timings = {"train_ms": (t1 - t0) * 1000, "evaluate_ms": (t2 - t1) * 1000}
    except LedgerLearnError as exc:
        outcome = ContributionOutcome("rejected", contributor.id, reason=type(exc).__name__)
        state._log_activity({"activity": "contribution", "contributor": contributor.id,
                             "outcome": outcome.status, "reason": outcome.reason})
        return outcome

    decision = ct.compare_result(metrics, state.contracts)
    if not decision.accepted:
        ct.reward_base(state.contracts, contributor)
        state._flush_events()
        outcome = ContributionOutcome("base_rewarded", contributor.id, reason=decision.reason,
                                      incentive=state.cfg.base_incentive, metrics=metrics,
                                      timings_ms=timings)
    else:
        digest = state.registry.put(candidate, metrics)
        entry, event = ct.apply_model_update(state.contracts, metrics, digest, contributor)
        sealed, attempts, mine_ms = state._seal_and_broadcast(entry)
        state._flush_events()
        state.stats.model_updates += 1
        timings["mine_ms"] = mine_ms
        outcome = ContributionOutcome("accepted", contributor.id, incentive=event["incentive"],
                                      block_no=sealed.number, model_hash=digest, metrics=metrics,
                                      attempts=attempts, timings_ms=timings)
    state._log_activity({"activity": "contribution", "contributor": contributor.id,
                         "outcome": outcome.status, "reason": outcome.reason,
                         "block_no": outcome.block_no})
    return outcome


def serve_query(state: SimState, caller: ct.Account, feature_row):
    """Predict with the current best model; returns ``(prediction, model_hash)``."""
    caller = state.contracts.account(caller.id)
    digest = state.contracts.current_model_hash
    model, _ = state.registry.get(digest)
    prediction = learner.predict(model, feature_row)
    state._log_activity({"activity": "query", "caller": caller.id, "model_hash": digest})
    return prediction, digest


def query(state: SimState, caller: ct.Account, feature_row) -> int:
    """Free prediction from the current best model for any registered account."""
    return serve_query(state, caller, feature_row)[0]


# audits ---------------------------------------------------------------------

def state_from_chain(chain: ledger.Chain, config: ct.ContractConfig = ct.ContractConfig()):
    """Re-run the gate and incentive schedule over the chain's entries.

    Raises ``GateNotPassed`` if any post-genesis entry would not have been
    accepted against the state rebuilt from the blocks before it, or
    ``ValueError`` if a recorded incentive is wrong.
    """
    state = ct.ContractState(config=config, price=config.initial_price)
    for block in chain.blocks:
        for entry in block.entries:
            if state.best is None:
                state.best, state.history = entry.metrics, [entry.metrics]
                state.current_model_hash = entry.model_hash
                continue
            if entry.contributor_id not in state.accounts:
                state.accounts[entry.contributor_id] = ct.Account(entry.contributor_id, entry.contributor_id,
                                                                   ct.Role.CONTRIBUTOR)
            acct = state.accounts[entry.contributor_id]
            new_entry, _ = ct.apply_model_update(state, entry.metrics, entry.model_hash, acct)
            if new_entry.incentive_paid != entry.incentive_paid:
                raise ValueError(f"block {block.number}: incentive {entry.incentive_paid} "
                                 f"!= recomputed {new_entry.incentive_paid}")
    return state


def recount_stats(activity, events) -> Stats:
    return Stats(
        contributions=sum(1 for a in activity if a["activity"] == "contribution"),
        model_updates=sum(1 for e in events if e["event"] == "UpdatedModel"),
        queries_served=sum(1 for a in activity if a["activity"] == "query"),
    )


def _read_jsonl(path):
    path = Path(path)
    if not path.exists():
        return []
    return [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]


def open_network(workdir, cfg: SimConfig) -> SimState:
    """Rebuild a persisted network from its journals and model directory."""
    workdir = Path(workdir)
    events = _read_jsonl(workdir / "events.jsonl")
    if not events:
        raise FileNotFoundError(f"no network found in {workdir}")
    contracts = ct.replay(events, cfg.contract_config())
    chain = ledger.load_journal(workdir / "chain.jsonl", cfg.difficulty)
    bad = ledger.verify_chain(chain)
    if bad is not None:
        raise ledger.InvalidBlock(f"block journal fails verification at block {bad}")
    state = SimState.__new__(SimState)
    state.cfg = cfg
    state.contracts = contracts
    state.chain = chain
    state.nodes = [NodeCtx(f"node-{i}", ledger.Chain(cfg.difficulty, list(chain.blocks)))
                   for i in range(cfg.n_verifier_nodes)]
    state.workdir = workdir
    state.registry = learner.ModelRegistry(workdir / "models")
    state.clock = LogicalClock(GENESIS_TIME + CLOCK_STEP * len(chain))
    state.activity = _read_jsonl(workdir / "activity.jsonl")
    state.stats = recount_stats(state.activity, events)
    state._events_written = len(contracts.events)
    state._io_lock = threading.Lock()
    return state


# benchmark ------------------------------------------------------------------

@dataclass
class BenchRow:
    difficulty: int
    volume: int
    repeat: int
    workers: int
    train_ms: float
    evaluate_ms: float
    mine_ms: float
    attempts: int


BENCH_COLUMNS = ("difficulty", "volume", "repeat", "workers", "train_ms", "evaluate_ms",
                 "mine_ms", "attempts")


def bench_mining(difficulties, data_volumes, repeats: int = 3, workers: int = 1, seed: int = 0,
                 fraud_rate: float = 0.02) -> List[BenchRow]:
    """Time train / evaluate / mine for every (difficulty, volume) cell.

    The update gate is bypassed so every run reaches the mining phase; the
    contract state is not touched.
    """
    from .errors import InvalidParams

    if repeats < 1 or not difficulties or not data_volumes:
        raise InvalidParams("need repeats >= 1 and at least one difficulty and volume")
    if any(not 0 <= d <= ledger.MAX_DIFFICULTY for d in difficulties) or any(v < 500 for v in data_volumes):
        raise InvalidParams("difficulties must be in [0, 8] and volumes >= 500")
    cfg = SimConfig(difficulty=0, seed=seed)
    base_records = ingest.parse_csv(ingest.synthetic_csv(2000, fraud_rate, seed, noise=0.2))
    train, test = prepare_initial(base_records, cfg)
    base = learner.fit(train, seed=seed)
    contributor = ct.account_id("bench-contributor")
    rows = []
    for d in difficulties:
        for volume in data_volumes:
            for r in range(repeats):
                batch_seed = int(np.random.SeedSequence([seed, d, volume, r]).generate_state(1)[0])
                records = ingest.parse_csv(ingest.synthetic_csv(volume, fraud_rate, batch_seed, noise=0.1))
                t0 = time.perf_counter()
                tr, te = prepare_contribution(records, cfg, base.scaler, batch_seed)
                candidate = learner.partial_fit(base, tr)
                t1 = time.perf_counter()
                metrics = learner.evaluate(candidate, tr, te, cfg.beta)
                t2 = time.perf_counter()
                entry = ledger.Entry(contributor, metrics, learner.model_hash(candidate, metrics)
                                     if metrics.complete else contributor, 0.0)
                block = ledger.make_block(1, ledger.ZERO_HASH, [entry], GENESIS_TIME + r)
                t3 = time.perf_counter()
                if workers > 1:
                    _, attempts = ledger.mine_parallel(block, d, workers)
                else:
                    _, attempts = ledger.mine(block, d)
                t4 = time.perf_counter()
                rows.append(BenchRow(d, volume, r, workers, (t1 - t0) * 1000, (t2 - t1) * 1000,
                                     (t4 - t3) * 1000, attempts))
    return rows


def bench_csv(rows: List[BenchRow]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(BENCH_COLUMNS)
    for row in rows:
        writer.writerow([getattr(row, c) if not isinstance(getattr(row, c), float)
                         else f"{getattr(row, c):.3f}" for c in BENCH_COLUMNS])
    return out.getvalue()


# scenario -------------------------------------------------------------------

@dataclass
class ScenarioReport:
    config: dict
    outcomes: List[ContributionOutcome]
    accepted_metrics: List[MetricsReport]
    probe_confusion: List[ConfusionMatrix]
    incentives: List[float]
    prices: List[float]
    gammas: List[float]
    balances: Dict[str, float]
    chain: ledger.Chain
    verify_index: Optional[int]
    final_model_hash: str
    stats: Stats

    @property
    def accepted_fnr(self) -> List[float]:
        return [m.fnr for m in self.accepted_metrics]

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "outcomes": [o.to_dict() for o in self.outcomes],
            "accepted_metrics": [m.to_dict() for m in self.accepted_metrics],
            "probe_confusion": [c.to_dict() for c in self.probe_confusion],
            "incentives": self.incentives,
            "prices": self.prices,
            "gammas": self.gammas,
            "balances": self.balances,
            "chain_tip": self.chain.tip_hash(),
            "chain_length": len(self.chain),
            "chain_verify": "ok" if self.verify_index is None else self.verify_index,
            "final_model_hash": self.final_model_hash,
            "stats": asdict(self.stats),
        }

    def to_json(self) -> str:
        return canonical_json(self.to_dict())

    def metrics_csv(self) -> str:
        """One row per accepted model (genesis first) with its probe confusion matrix."""
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        names = list(self.accepted_metrics[0].to_dict())
        writer.writerow(["update"] + names + ["probe_tp", "probe_tn", "probe_fp", "probe_fn"])
        for i, (m, cm) in enumerate(zip(self.accepted_metrics, self.probe_confusion)):
            writer.writerow([i] + [m.to_dict()[n] for n in names] + [cm.tp, cm.tn, cm.fp, cm.fn])
        return out.getvalue()


@dataclass(frozen=True)
class ScenarioData:
    genesis_rows: int = 12000
    batch_rows: int = 3000
    probe_rows: int = 4000
    fraud_rate: float = 0.03
    genesis_noise: float = 0.35
    start_noise: float = 0.3
    end_noise: float = 0.02
    n_contributors: int = 3


def run_scenario(cfg: SimConfig, n_contributions: int = 15, data: ScenarioData = ScenarioData(),
                 workdir=None) -> ScenarioReport:
    """Genesis plus ``n_contributions`` batches whose label noise falls step by step."""
    genesis = ingest.parse_csv(ingest.synthetic_csv(data.genesis_rows, data.fraud_rate, cfg.seed,
                                                    data.genesis_noise))
    train, test = prepare_initial(genesis, cfg)
    state = init_network(cfg, train, test, workdir=workdir)
    orgs = [register(state, f"org-{i + 1}") for i in range(data.n_contributors)]
    probe_records = ingest.parse_csv(ingest.synthetic_csv(
        data.probe_rows, data.fraud_rate, cfg.seed + 7919, data.end_noise))
    probe = ingest.records_to_dataset(probe_records, cfg.drop_step)

    def probe_cm():
        return confusion_matrix(probe.labels, state.current_model().predict_many(probe.features))

    accepted = [state.contracts.best]
    probe_cms = [probe_cm()]
    prices, gammas = [state.contracts.price], [state.contracts.gamma]
    outcomes = []
    for i in range(n_contributions):
        frac = i / max(1, n_contributions - 1)
        noise = data.start_noise + (data.end_noise - data.start_noise) * frac
        text = ingest.synthetic_csv(data.batch_rows, data.fraud_rate, cfg.seed * 1000 + i + 1, noise)
        outcome = contribute(state, orgs[i % len(orgs)], text)
        outcomes.append(outcome)
        if outcome.status == "accepted":
            accepted.append(outcome.metrics)
            probe_cms.append(probe_cm())
            prices.append(state.contracts.price)
            gammas.append(state.contracts.gamma)
    return ScenarioReport(
        config=cfg.to_dict(), outcomes=outcomes, accepted_metrics=accepted,
        probe_confusion=probe_cms, incentives=list(state.contracts.incentives), prices=prices,
        gammas=gammas, balances=state.contracts.balances(), chain=state.chain,
        verify_index=ledger.verify_chain(state.chain),
        final_model_hash=state.contracts.current_model_hash, stats=replace(state.stats))
