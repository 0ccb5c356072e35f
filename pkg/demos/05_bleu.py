# Corpus BLEU, tallied by hand and by the library.

# %%
import math

from mgmae.metrics import bleu, bleu_stats, brevity_penalty, denotation_match_proxy, token_accuracy

cands = ["the cat is on the mat".split(), "a dog runs".split()]
refs = ["the cat is on the red mat".split(), "a dog runs fast".split()]

# %% clipped n-gram counts pooled over the corpus
stats = bleu_stats(cands, refs)
for n, (m, t) in enumerate(zip(stats.matches, stats.totals), start=1):
    print(f"{n}-grams: {m}/{t}")
print("reference length", stats.r, "candidate length", stats.c)

# %% geometric mean of the precisions times the brevity penalty
by_hand = 100 * math.exp(1 - stats.r / stats.c) * (1 * 6 / 7 * 4 / 5 * 2 / 3) ** 0.25
print("by hand %.6f   library %.6f" % (by_hand, bleu(cands, refs)))

# %% the penalty is capped at 1 by default; the uncapped form rewards long output
print("BP(r=10, c=20) standard", brevity_penalty(10, 20), " uncapped", round(brevity_penalty(10, 20, "paper-exact"), 4))

# %% the semantic-parsing metrics
print("token accuracy", token_accuracy([["a", "b", "c"]], [["a", "x", "c", "d"]]))
print("exact-match proxy", denotation_match_proxy([["a", "b"], ["c"]], [["a", "b"], ["c", "d"]]))
