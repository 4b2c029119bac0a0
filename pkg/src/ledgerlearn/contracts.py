"""Main/model contract logic: roles, the update gate, incentives and balances.

All state changes go through functions in this module and each one records
an event dict on ``state.events``.  :func:`replay` folds such an event log
back into an identical :class:`ContractState`, which is how journals are
audited.
"""
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, NamedTuple, Optional

from .canonical import is_hex64, sha256_hex
from .errors import DuplicateName, GateNotPassed, NotAuthorized, ZeroImprovement
from .ledger import Entry
from .metrics import GATE_FIELDS, MetricsReport

INITIAL_PRICE = 100.0
INITIAL_GAMMA = 0.001
GAMMA_STEP = 0.002
BASE_INCENTIVE = 1.0
EPSILON = 0.02
DEFAULT_SALT = "ledgerlearn"


class Role(str, Enum):
    REGULATOR = "Regulator"
    CONTRIBUTOR = "Contributor"
    USER = "User"


@dataclass
class Account:
    id: str
    name: str
    role: Role
    balance: float = 0.0


@dataclass(frozen=True)
class ContractConfig:
    initial_price: float = INITIAL_PRICE
    initial_gamma: float = INITIAL_GAMMA
    gamma_step: float = GAMMA_STEP
    base_incentive: float = BASE_INCENTIVE
    epsilon: float = EPSILON
    salt: str = DEFAULT_SALT

    def to_dict(self):
        return dict(self.__dict__)


@dataclass
class ContractState:
    config: ContractConfig = field(default_factory=ContractConfig)
    accounts: Dict[str, Account] = field(default_factory=dict)
    best: Optional[MetricsReport] = None
    history: List[MetricsReport] = field(default_factory=list)
    current_model_hash: Optional[str] = None
    price: float = INITIAL_PRICE
    updates: int = 0
    incentives: List[float] = field(default_factory=list)
    events: List[dict] = field(default_factory=list)

    @property
    def gamma(self) -> float:
        return self.config.initial_gamma + self.config.gamma_step * self.updates

    @property
    def regulator(self) -> Optional[Account]:
        return next((a for a in self.accounts.values() if a.role is Role.REGULATOR), None)

    def account(self, account_id: str) -> Account:
        try:
            return self.accounts[account_id]
        except KeyError:
            raise NotAuthorized(f"unknown account {account_id}") from None

    def balances(self) -> Dict[str, float]:
        return {a.id: a.balance for a in self.accounts.values()}

    def _emit(self, kind: str, **payload) -> dict:
        event = {"event": kind, "seq": len(self.events), **payload}
        self.events.append(event)
        return event


class Decision(NamedTuple):
    accepted: bool
    reason: Optional[str] = None


def account_id(name: str, salt: str = DEFAULT_SALT) -> str:
    return sha256_hex((name + salt).encode("utf-8"))


def _require(account: Account, role: Role):
    if account.role is not role:
        raise NotAuthorized(f"{account.role.value} may not perform a {role.value}-only action")


def new_state(regulator_name: str, config: ContractConfig = ContractConfig()) -> ContractState:
    """Fresh contract state with its single bootstrap regulator."""
    state = ContractState(config=config, price=config.initial_price)
    _add_account(state, regulator_name, Role.REGULATOR)
    return state


def _add_account(state, name, role) -> Account:
    if any(a.name == name for a in state.accounts.values()):
        raise DuplicateName(f"account name {name!r} already registered")
    acct = Account(account_id(name, state.config.salt), name, Role(role))
    state.accounts[acct.id] = acct
    state._emit("AccountRegistered", id=acct.id, name=name, role=acct.role.value)
    return acct


def register_account(state: ContractState, name: str, role, caller: Account) -> Account:
    _require(caller, Role.REGULATOR)
    if Role(role) is Role.REGULATOR:
        raise NotAuthorized("only one regulator may exist")
    return _add_account(state, name, role)


def deploy_genesis(state: ContractState, metrics: MetricsReport, model_hash: str,
                   caller: Account) -> Entry:
    """Seed bests and history from the regulator's initial model."""
    _require(caller, Role.REGULATOR)
    if state.best is not None:
        raise GateNotPassed("genesis already deployed")
    state.best = metrics
    state.history = [metrics]
    state.current_model_hash = model_hash
    state._emit("GenesisDeployed", regulator=caller.id, model_hash=model_hash,
                metrics=metrics.to_dict())
    return Entry(caller.id, metrics, model_hash, 0.0)


def history_mean(state: ContractState, name: str) -> float:
    values = [getattr(m, name) for m in state.history]
    return math.fsum(values) / len(values)


def compare_result(current: MetricsReport, state: ContractState) -> Decision:
    """Accept only a strictly lower FNR whose precision, recall and fbeta stay
    no more than ``epsilon`` below their historical means."""
    missing = [n for n in GATE_FIELDS if getattr(current, n) is None]
    if missing:
        return Decision(False, f"undefined:{missing[0]}")
    if state.best is None:
        return Decision(False, "no_genesis")
    if not current.fnr < state.best.fnr:
        return Decision(False, "fnr")
    for name in ("precision", "recall", "fbeta"):
        if getattr(current, name) < history_mean(state, name) - state.config.epsilon:
            return Decision(False, name)
    return Decision(True)


def incentive_amount(price, gamma, current: MetricsReport, best: MetricsReport) -> float:
    improvement = best.fnr - current.fnr
    if improvement == 0:
        raise ZeroImprovement("FNR did not change")
    # the leading price term is the model price; the middle factor is the precision change
    spread = ((current.recall - best.recall) * (current.precision - best.precision)
              * (current.fbeta - best.fbeta))
    return price + spread ** 2 / (gamma * improvement)


def calculate_incentive(current: MetricsReport, state: ContractState) -> float:
    return incentive_amount(state.price, state.gamma, current, state.best)


def apply_model_update(state: ContractState, current: MetricsReport, new_model_hash: str,
                       contributor: Account):
    """Promote an accepted model, pay the contributor and advance price/gamma.

    Returns ``(entry, event)``.
    """
    _require(contributor, Role.CONTRIBUTOR)
    if not is_hex64(new_model_hash):
        raise ValueError("model hash must be 64 lowercase hex characters")
    decision = compare_result(current, state)
    if not decision.accepted:
        raise GateNotPassed(decision.reason)
    amount = calculate_incentive(current, state)
    state.best = current
    state.history.append(current)
    state.current_model_hash = new_model_hash
    state.accounts[contributor.id].balance += amount
    state.price += amount
    state.updates += 1
    state.incentives.append(amount)
    event = state._emit("UpdatedModel", contributor=contributor.id, model_hash=new_model_hash,
                        metrics=current.to_dict(), incentive=amount, price=state.price,
                        gamma=state.gamma)
    return Entry(contributor.id, current, new_model_hash, amount), event


def reward_base(state: ContractState, contributor: Account) -> dict:
    """Flat reward for usable data that did not improve the model."""
    _require(contributor, Role.CONTRIBUTOR)
    amount = state.config.base_incentive
    state.accounts[contributor.id].balance += amount
    return state._emit("BaseReward", contributor=contributor.id, incentive=amount)


def replay(events, config: ContractConfig = ContractConfig()) -> ContractState:
    """Rebuild contract state from an event log, re-deriving every incentive.

    Raises ``ValueError`` if a recorded figure disagrees with the recomputed one.
    """
    state = ContractState(config=config, price=config.initial_price)
    for ev in events:
        kind = ev["event"]
        if kind == "AccountRegistered":
            _add_account(state, ev["name"], ev["role"])
            if state.accounts[ev["id"]].name != ev["name"]:
                raise ValueError(f"event {ev['seq']}: account id mismatch")
        elif kind == "GenesisDeployed":
            deploy_genesis(state, MetricsReport.from_dict(ev["metrics"]), ev["model_hash"],
                           state.account(ev["regulator"]))
        elif kind == "UpdatedModel":
            _, mine = apply_model_update(state, MetricsReport.from_dict(ev["metrics"]),
                                         ev["model_hash"], state.account(ev["contributor"]))
            for key in ("incentive", "price", "gamma"):
                if mine[key] != ev[key]:
                    raise ValueError(f"event {ev['seq']}: recorded {key} {ev[key]!r} != {mine[key]!r}")
        elif kind == "BaseReward":
            mine = reward_base(state, state.account(ev["contributor"]))
            if mine["incentive"] != ev["incentive"]:
                raise ValueError(f"event {ev['seq']}: base reward mismatch")
        else:
            raise ValueError(f"unknown event {kind!r}")
        if state.events[-1]["seq"] != ev["seq"]:
            raise ValueError(f"event sequence broken at {ev['seq']}")
    return state
