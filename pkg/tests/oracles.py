"""Independent reference implementations used to cross-check the library.

Nothing here imports hashing or verification code from ``spoq``.
"""

import struct

_K = [
    0x428a2f98, 0x71374491, 0xb5c0fbcf, 0xe9b5dba5, 0x3956c25b, 0x59f111f1, 0x923f82a4, 0xab1c5ed5,
    0xd807aa98, 0x12835b01, 0x243185be, 0x550c7dc3, 0x72be5d74, 0x80deb1fe, 0x9bdc06a7, 0xc19bf174,
    0xe49b69c1, 0xefbe4786, 0x0fc19dc6, 0x240ca1cc, 0x2de92c6f, 0x4a7484aa, 0x5cb0a9dc, 0x76f988da,
    0x983e5152, 0xa831c66d, 0xb00327c8, 0xbf597fc7, 0xc6e00bf3, 0xd5a79147, 0x06ca6351, 0x14292967,
    0x27b70a85, 0x2e1b2138, 0x4d2c6dfc, 0x53380d13, 0x650a7354, 0x766a0abb, 0x81c2c92e, 0x92722c85,
    0xa2bfe8a1, 0xa81a664b, 0xc24b8b70, 0xc76c51a3, 0xd192e819, 0xd6990624, 0xf40e3585, 0x106aa070,
    0x19a4c116, 0x1e376c08, 0x2748774c, 0x34b0bcb5, 0x391c0cb3, 0x4ed8aa4a, 0x5b9cca4f, 0x682e6ff3,
    0x748f82ee, 0x78a5636f, 0x84c87814, 0x8cc70208, 0x90befffa, 0xa4506ceb, 0xbef9a3f7, 0xc67178f2,
]


def _rotr(x, n):
    return ((x >> n) | (x << (32 - n))) & 0xFFFFFFFF


def sha256(data):
    """Textbook SHA-256 (FIPS 180-4), slow and dependency free."""
    h = [0x6a09e667, 0xbb67ae85, 0x3c6ef372, 0xa54ff53a,
         0x510e527f, 0x9b05688c, 0x1f83d9ab, 0x5be0cd19]
    msg = bytes(data) + b"\x80"
    msg += b"\x00" * ((56 - len(msg) % 64) % 64) + struct.pack(">Q", 8 * len(data))
    for off in range(0, len(msg), 64):
        w = list(struct.unpack(">16I", msg[off:off + 64]))
        for i in range(16, 64):
            s0 = _rotr(w[i - 15], 7) ^ _rotr(w[i - 15], 18) ^ (w[i - 15] >> 3)
            s1 = _rotr(w[i - 2], 17) ^ _rotr(w[i - 2], 19) ^ (w[i - 2] >> 10)
            w.append((w[i - 16] + s0 + w[i - 7] + s1) & 0xFFFFFFFF)
        a, b, c, d, e, f, g, hh = h
        for i in range(64):
            t1 = (hh + (_rotr(e, 6) ^ _rotr(e, 11) ^ _rotr(e, 25))
                  + ((e & f) ^ (~e & g)) + _K[i] + w[i]) & 0xFFFFFFFF
            t2 = ((_rotr(a, 2) ^ _rotr(a, 13) ^ _rotr(a, 22)) + ((a & b) ^ (a & c) ^ (b & c))) & 0xFFFFFFFF
            a, b, c, d, e, f, g, hh = (t1 + t2) & 0xFFFFFFFF, a, b, c, (d + t1) & 0xFFFFFFFF, e, f, g
        h = [(x + y) & 0xFFFFFFFF for x, y in zip(h, (a, b, c, d, e, f, g, hh))]
    return b"".join(struct.pack(">I", x) for x in h)


# -- efficiency ---------------------------------------------------------------

def count_transactions(p, b1, b2, a1, o1, a2, o2):
    """Event-by-event tally of the two tracing strategies.

    Product-wise: every product is created and then carries every action and
    transfer itself.  Batched: b1 roots carry phase one; phase two runs on
    b2 split-off sub-batches (one split transaction each) or, when b2 is 0,
    stays on the roots.
    """
    ex = 0
    for _ in range(p):
        ex += 1 + a1 + o1 + a2 + o2
    spoq = 0
    for _ in range(b1):
        spoq += 1 + a1 + o1
    if b2 == 0:
        for _ in range(b1):
            spoq += a2 + o2
    else:
        for _ in range(b2):
            spoq += 1 + a2 + o2
    return ex, spoq


# -- origin trail -------------------------------------------------------------

def brute_force_origin(target, nodes):
    """Reference verdict for an origin check over an explicit hierarchy.

    ``nodes`` maps a node id to ground truth recorded while the fixture was
    built: ``intact`` (stored bytes unmodified), ``author`` (the registered
    key that validly signed the stored entry, else None), ``parent`` (node id
    or None) and ``listed`` (node ids named in the node's component list,
    each mapped to whether the listed hash still matches that node's bytes).

    The trail from ``target`` up to its root is enumerated outright.  Every
    ancestor must be intact and validly signed, and must list some node
    beneath it on the trail; the nearest listed node decides whether the
    link holds.  A non-root target must share its verified author with the
    root.
    """
    path = [target]
    while nodes[path[-1]]["parent"] is not None:
        nxt = nodes[path[-1]]["parent"]
        if nxt in path:
            return False
        path.append(nxt)
    for i in range(1, len(path)):
        anc = nodes[path[i]]
        if not anc["intact"] or anc["author"] is None:
            return False
        below = path[:i][::-1]  # nearest first
        hits = [n for n in below if n in anc["listed"]]
        if not hits or not anc["listed"][hits[0]]:
            return False
    if len(path) > 1:
        root_author = nodes[path[-1]]["author"]
        if root_author is None or root_author != nodes[target]["author"]:
            return False
    return True
