"""Fixed built-in English stop-word list.

The list is frozen in the repository so vocabularies built from the same
corpus are reproducible bit-for-bit. Entries are lowercase and contain
only [a-z] so they can match the tokenizer's output; single letters and
contraction fragments ("don", "ll", "ve", ...) are included because the
tokenizer splits on apostrophes.

Do not edit casually: any change alters every vocabulary built afterwards.
"""

STOPWORDS = frozenset(
    """
    a about above after again against ain all am an and any are aren as at
    be because been before being below between both but by
    can cannot could couldn
    d did didn do does doesn doing don down during
    each
    few for from further
    had hadn has hasn have haven having he her here hers herself him himself
    his how
    i if in into is isn it its itself
    just
    ll
    m ma me might mightn more most must mustn my myself
    needn no nor not now
    o of off on once only onto or other our ours ourselves out over own
    re
    s same shan she should shouldn so some such
    t than that the their theirs them themselves then there these they this
    those through to too
    under until up upon
    ve very
    was wasn we were weren what when where which while who whom why will with
    won would wouldn
    y you your yours yourself yourselves
    """.split()
)
