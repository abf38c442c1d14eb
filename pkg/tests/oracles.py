"""Reference implementations used as test oracles.

Each one is written from the defining formula, in the most literal way
possible, and shares no code with the package.
"""

import itertools
import math
from collections import Counter


def model1_brute_force(pairs, iterations, use_null):
    """Model-1 EM by explicit enumeration of every alignment of every pair.

    The posterior of an alignment is proportional to the product of its link
    probabilities; expected counts sum link indicators weighted by posteriors.
    Returns ``(table, log_likelihoods)`` with ``table[s][t]``.
    """
    tgt_vocab = sorted({t for _, tgt in pairs for t in tgt})
    sources_of = [(("<null>",) if use_null else ()) + tuple(src) for src, _ in pairs]
    table = {}
    for sources, (_, tgt) in zip(sources_of, pairs):
        for s in sources:
            for t in tgt:
                table.setdefault(s, {})[t] = 1.0 / len(tgt_vocab)

    def loglik(tab):
        total = 0.0
        for sources, (_, tgt) in zip(sources_of, pairs):
            # sum over all alignments of prod p(t_j | s_a_j) / |sources|^m
            z = 0.0
            for align in itertools.product(range(len(sources)), repeat=len(tgt)):
                z += math.prod(tab[sources[a]][t] for a, t in zip(align, tgt))
            total += math.log(z) - len(tgt) * math.log(len(sources))
        return total

    lls = [loglik(table)]
    for _ in range(iterations):
        counts = {}
        for sources, (_, tgt) in zip(sources_of, pairs):
            aligns = list(itertools.product(range(len(sources)), repeat=len(tgt)))
            weights = [math.prod(table[sources[a]][t] for a, t in zip(al, tgt)) for al in aligns]
            z = sum(weights)
            for al, w in zip(aligns, weights):
                for a, t in zip(al, tgt):
                    row = counts.setdefault(sources[a], {})
                    row[t] = row.get(t, 0.0) + w / z
        table = {s: {t: c / sum(row.values()) for t, c in row.items()} for s, row in counts.items()}
        lls.append(loglik(table))
    if use_null:
        table.pop("<null>", None)
    return table, lls


def bm25_exhaustive(docs, query_terms, k1=1.2, b=0.75):
    """Score every document from raw tokens; keep documents containing a query term."""
    N = len(docs)
    avg = sum(len(toks) for toks in docs.values()) / N
    results = []
    for doc_id, toks in docs.items():
        tf = Counter(toks)
        score, matched = 0.0, False
        for term, weight in query_terms:
            if tf[term] == 0:
                continue
            matched = True
            df = sum(1 for other in docs.values() if term in other)
            idf = math.log((N - df + 0.5) / (df + 0.5) + 1)
            score += weight * idf * tf[term] * (k1 + 1) / (tf[term] + k1 * (1 - b + b * len(toks) / avg))
        if matched:
            results.append((doc_id, score))
    results.sort(key=lambda r: (-r[1], r[0]))
    return results


def average_precision_reference(ranked, relevant):
    precisions = [
        sum(1 for d in ranked[: i + 1] if d in relevant) / (i + 1)
        for i, d in enumerate(ranked)
        if d in relevant
    ]
    return sum(precisions) / len(relevant) if relevant else 0.0


def expected_ap_brute_force(scores, labels):
    """Average AP over every ordering consistent with the scores (ties permuted)."""
    items = list(zip(scores, labels))
    n_rel = sum(1 for _, lab in items if lab > 0)
    total, count = 0.0, 0
    for perm in itertools.permutations(range(len(items))):
        ranked = [items[i] for i in perm]
        if any(ranked[i][0] < ranked[i + 1][0] for i in range(len(ranked) - 1)):
            continue
        hits, ap = 0, 0.0
        for rank, (_, lab) in enumerate(ranked, 1):
            if lab > 0:
                hits += 1
                ap += hits / rank
        total += ap / n_rel
        count += 1
    return total / count


def pmi_reference(docs, w1, w2):
    n = len(docs)
    n1 = sum(1 for d in docs if w1 in d)
    n2 = sum(1 for d in docs if w2 in d)
    n12 = sum(1 for d in docs if w1 in d and w2 in d)
    if 0 in (n1, n2, n12):
        return 0.0
    return math.log((n12 / n) / ((n1 / n) * (n2 / n)))


def clpmi_reference(aligned, ws, wt):
    n = len(aligned)
    ns = sum(1 for s, _ in aligned if ws in s)
    nt = sum(1 for _, t in aligned if wt in t)
    nst = sum(1 for s, t in aligned if ws in s and wt in t)
    if 0 in (ns, nt, nst):
        return 0.0
    return math.log((nst / n) / ((ns / n) * (nt / n)))
