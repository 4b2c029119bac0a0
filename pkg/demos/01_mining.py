"""
Sealing blocks by brute force
=============================

Each extra leading zero multiplies the expected number of hashes by 16.
"""
import statistics
from dataclasses import replace

from ledgerlearn import ledger
from ledgerlearn.canonical import ZERO_HASH
from ledgerlearn.contracts import account_id
from ledgerlearn.metrics import ConfusionMatrix, derive_metrics

# a block carries metrics and hashes only, never data
metrics = derive_metrics(ConfusionMatrix(tp=90, tn=880, fp=20, fn=10)).with_accuracies(0.97, 0.97)
entry = ledger.Entry(account_id("orgA"), metrics, account_id("some-model"), 0.0)

for d in range(1, 5):
    attempts = []
    for t in range(40):
        block = ledger.make_block(0, ZERO_HASH, [entry], 1_700_000_000 + t)
        sealed, n = ledger.mine(block, d)
        attempts.append(n)
    print(f"d={d}  mean attempts {statistics.fmean(attempts):9.0f}  (expected {16 ** d})  e.g. {sealed.hash[:12]}")

# mutate a sealed block and the chain notices
chain = ledger.Chain(2)
for i in range(4):
    block = ledger.make_block(i, chain.tip_hash(), [entry], 1_700_000_000 + 60 * i)
    ledger.append(chain, ledger.mine(block, 2)[0])
print("intact chain ->", ledger.verify_chain(chain))
chain.blocks[1] = replace(chain.blocks[1], timestamp=0)
print("edited block 1 ->", ledger.verify_chain(chain))
