"""
How path selection moves explanation metrics
============================================

The same ranked list can carry very different explanations. Here one user
has three past interactions and every recommendation can be justified
through either an obscure or a well-known director. Choosing the path
differently changes recency (LIR), popularity (SEP) and type diversity (PTD)
while utility stays the same.
"""
import numpy as np

from kgaudit import Hop, InteractionLog, KnowledgeGraph, ReasoningPath, RecommendedList, Vocab
from kgaudit.explanation import lir, precompute_weights, ptd, sep, select_path

###############################################################################
# A tiny catalog
# --------------
# products 0-5, an obscure director (6), a prolific one (7) and a genre (8).

names = [f"movie{i}" for i in range(6)] + ["obscure", "prolific", "noir"]
types = ["product"] * 6 + ["director", "director", "genre"]
heads = [0, 3, 0, 1, 2, 3, 4, 5, 1, 4]
rels = [0, 0, 0, 0, 0, 0, 0, 0, 1, 1]
tails = [6, 6, 7, 7, 7, 7, 7, 7, 8, 8]
kg = KnowledgeGraph(Vocab(names), Vocab(["directed_by", "genre"]), types, heads, rels, tails,
                    present=np.ones(len(names), dtype=bool))
train = InteractionLog.from_records([(0, 0, 4.0, 10), (0, 1, 5.0, 20), (0, 2, 3.0, 30)])
weights = precompute_weights(train, kg, beta=0.3)


def via(linking, shared, product, rel="directed_by"):
    return ReasoningPath(0, (linking, shared, product), (Hop("interacted"), Hop(rel), Hop(rel, True)))


candidates = {
    3: [via(0, 6, 3), via(2, 7, 3)],
    4: [via(1, 8, 4, "genre"), via(0, 7, 4), via(2, 7, 4)],
    5: [via(0, 7, 5), via(2, 7, 5)],
}

###############################################################################
# Three policies, one ranking
# ---------------------------

print(f"{'policy':<9}{'LIR':>7}{'SEP':>7}{'PTD':>7}")
for policy in ("first", "max-lir", "max-sep"):
    entries = [(p, 1.0, select_path(paths, kg, train, weights, policy)) for p, paths in candidates.items()]
    lst = RecommendedList.from_ranked(0, entries)
    print(f"{policy:<9}{lir(lst, weights, 3):7.3f}{sep(lst, weights, 3):7.3f}{ptd(lst, 3):7.3f}")
