"""
From a confusion matrix to an incentive
=======================================

"""
from ledgerlearn import contracts as ct
from ledgerlearn.metrics import ConfusionMatrix, derive_metrics

genesis = derive_metrics(ConfusionMatrix(tp=850, tn=930, fp=70, fn=150)).with_accuracies(0.89, 0.89)
print("genesis  fnr=%.4f precision=%.4f fbeta=%.4f" % (genesis.fnr, genesis.precision, genesis.fbeta))

state = ct.new_state("regulator")
org = ct.register_account(state, "orgA", ct.Role.CONTRIBUTOR, state.regulator)
ct.deploy_genesis(state, genesis, "1" * 64, state.regulator)

candidates = [
    ConfusionMatrix(tp=880, tn=925, fp=75, fn=120),  # fewer misses
    ConfusionMatrix(tp=900, tn=600, fp=400, fn=100),  # fewer misses, far worse precision
    ConfusionMatrix(tp=880, tn=925, fp=75, fn=120),  # no further change
    ConfusionMatrix(tp=930, tn=940, fp=60, fn=70),
]
for i, cm in enumerate(candidates, 1):
    m = derive_metrics(cm).with_accuracies(0.9, 0.9)
    verdict = ct.compare_result(m, state)
    if verdict.accepted:
        _, ev = ct.apply_model_update(state, m, f"{i:064x}", org)
        print(f"#{i} accepted  incentive {ev['incentive']:.6f}  price {ev['price']:.6f}  gamma {ev['gamma']:.3f}")
    else:
        ct.reward_base(state, org)
        print(f"#{i} skipped on {verdict.reason}; base reward paid")

print("balance of orgA:", state.accounts[org.id].balance)
print("replayed balance:", ct.replay(state.events).accounts[org.id].balance)
