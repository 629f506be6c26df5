"""Shared test utilities."""


def damerau_levenshtein(a: str, b: str) -> int:
    """Reference edit distance with transpositions; the one-edit oracle."""
    da = {}
    maxdist = len(a) + len(b)
    d = {(-1, -1): maxdist}
    for i in range(len(a) + 1):
        d[(i, -1)] = maxdist
        d[(i, 0)] = i
    for j in range(len(b) + 1):
        d[(-1, j)] = maxdist
        d[(0, j)] = j
    for i in range(1, len(a) + 1):
        db = 0
        for j in range(1, len(b) + 1):
            k = da.get(b[j - 1], 0)
            l = db
            if a[i - 1] == b[j - 1]:
                cost = 0
                db = j
            else:
                cost = 1
            d[(i, j)] = min(
                d[(i - 1, j - 1)] + cost,
                d[(i, j - 1)] + 1,
                d[(i - 1, j)] + 1,
                d[(k - 1, l - 1)] + (i - k - 1) + 1 + (j - l - 1),
            )
        da[a[i - 1]] = i
    return d[(len(a), len(b))]
