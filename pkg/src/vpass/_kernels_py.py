"""Pure-Python kernels, used when the compiled ``_kernels`` module is unavailable.

Every function here has a twin with the same signature in ``_kernels.pyx``.
Digit sequences are plain sequences of ints already reduced mod ``z``.
"""

from itertools import product


def response(xs, a, ys, c, z):
    """Forward recurrence of the randomized linear function; returns a tuple."""
    n = len(xs)
    k = (a * xs[0] + ys[0] + xs[1] + c) % z
    out = [k]
    for i in range(1, n):
        # 0-based successor of position i; wraps n-1 -> 0
        j = i + 1 if i + 1 < n else 0
        k = (a * k + ys[i] + xs[i] + c + xs[j]) % z
        out.append(k)
    return tuple(out)


def scan_c(xs, a, ys, ks, z):
    """Smallest c in [0, z) reproducing ``ks``, and the number of c values tried.

    Returns ``(-1, z)`` when nothing matches.
    """
    target = tuple(ks)
    for c in range(z):
        if response(xs, a, ys, c, z) == target:
            return c, c + 1
    return -1, z


def consistent_keys(units, n, z, salts, responses):
    """All (X, a) such that every (salt, response) pair is reproducible for some c."""
    found = []
    pairs = [(tuple(y), tuple(k)) for y, k in zip(salts, responses)]
    for a in units:
        for xs in product(range(z), repeat=n):
            if all(scan_c(xs, a, y, k, z)[0] >= 0 for y, k in pairs):
                found.append((xs, a))
    return found


def reachable_keys_modified(units, n, z, responses):
    """All (X, a) for which every response is produced by some salt (no c term)."""
    targets = [tuple(k) for k in responses]
    found = []
    salts = list(product(range(z), repeat=n))
    for a in units:
        for xs in product(range(z), repeat=n):
            ok = True
            for k in targets:
                if not any(response(xs, a, y, 0, z) == k for y in salts):
                    ok = False
                    break
            if ok:
                found.append((xs, a))
    return found
