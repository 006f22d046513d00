"""Independent reference implementations used to check the package.

Nothing here imports from ``agentos``: each oracle is rebuilt from the defining
recurrence or formula so that a shared bug cannot make both sides agree.
"""

import math

M64 = (1 << 64) - 1


def splitmix64_stream(seed, count):
    out = []
    s = seed & M64
    for _ in range(count):
        s = (s + 0x9E3779B97F4A7C15) & M64
        z = s
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & M64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & M64
        out.append(z ^ (z >> 31))
    return out


class Uniforms:
    """(x >> 11) * 2^-53 with zero redrawn, from the raw stream."""

    def __init__(self, seed):
        self.s = seed & M64

    def raw(self):
        self.s = (self.s + 0x9E3779B97F4A7C15) & M64
        z = self.s
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & M64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & M64
        return z ^ (z >> 31)

    def u(self):
        while True:
            v = (self.raw() >> 11) / 9007199254740992.0
            if v != 0.0:
                return v


def attention_row_oracle(seed, t, anchor_prob, beta, anchors=None):
    """Replays the row recipe: t exponentials, one anchor draw, beta mass on the target."""
    g = Uniforms(seed)
    anchors = list(anchors or [])
    e = [-math.log(g.u()) for _ in range(t)]
    if g.u() < anchor_prob:
        anchors.append(t)
    target = anchors[-1] if anchors else t
    s = sum(e)
    w = [(1 - beta) * x / s for x in e]
    w[target - 1] += beta
    z = sum(w)
    return [x / z for x in w]


def fnv1a64_bytes(data: bytes):
    h = 0xCBF29CE484222325
    for b in data:
        h ^= b
        h = (h * 0x100000001B3) & M64
    return h


def fnv1a64_ids(ids):
    buf = bytearray()
    for t in ids:
        for k in range(8):
            buf.append((t >> (8 * k)) & 0xFF)
    return fnv1a64_bytes(bytes(buf))


def entropy(weights):
    return -sum(w * math.log(w) for w in weights if w > 0)


def cid(weights):
    t = len(weights)
    if t == 1:
        return 1.0
    return min(1.0, max(0.0, 1.0 - entropy(weights) / math.log(t)))


def cid_base2(weights):
    t = len(weights)
    if t == 1:
        return 1.0
    h2 = -sum(w * math.log2(w) for w in weights if w > 0)
    return min(1.0, max(0.0, 1.0 - h2 / math.log2(t)))


def boundaries(series, eps):
    """Brute-force adjacent-difference scan, 1-based positions, terminal appended."""
    n = len(series)
    out = [t for t in range(2, n + 1) if abs(series[t - 1] - series[t - 2]) > eps]
    if not out or out[-1] != n:
        out.append(n)
    return out


def partition(series, eps):
    """Ranges implied by the jump positions: a jump at t opens a slice at t."""
    n = len(series)
    starts = [1] + [t for t in range(2, n + 1) if abs(series[t - 1] - series[t - 2]) > eps]
    ends = [s - 1 for s in starts[1:]] + [n]
    return list(zip(starts, ends))


def two_pass_mean(vectors):
    n = len(vectors)
    d = len(vectors[0])
    return [sum(v[k] for v in vectors) / n for k in range(d)]


def euclid(a, b):
    acc = 0.0
    for x, y in zip(a, b):
        acc += (x - y) * (x - y)
    return math.sqrt(acc)


def i_eff(importance, last_access, now, w):
    return w * (1.0 / (1 + now - last_access)) + (1 - w) * importance


class LruSemanticModel:
    """Plain-dict model of the L1 admission loop: evict argmin (I_eff, id) until the new slice fits."""

    def __init__(self, capacity, w):
        self.k = capacity
        self.w = w
        self.resident = {}  # id -> (size, importance, last_access)

    def admit(self, sid, size, importance, now):
        victims = []
        while sum(s for s, _, _ in self.resident.values()) + size > self.k:
            v = min(self.resident, key=lambda i: (i_eff(self.resident[i][1], self.resident[i][2], now, self.w), i))
            victims.append(v)
            del self.resident[v]
        self.resident[sid] = (size, importance, now)
        return victims


def trapezoid_discounted(deltas, lam, dt):
    """Direct sum over every interval of the discounted trapezoid over [0, T]."""
    n = len(deltas) - 1
    T = n * dt
    tot = 0.0
    for i in range(n):
        a, b = i * dt, (i + 1) * dt
        fa = math.exp(-lam * (T - a)) * deltas[i]
        fb = math.exp(-lam * (T - b)) * deltas[i + 1]
        tot += 0.5 * dt * (fa + fb)
    return tot


def ols_slope(xs, ys):
    lx = [math.log(x) for x in xs]
    ly = [math.log(y) for y in ys]
    mx = sum(lx) / len(lx)
    my = sum(ly) / len(ly)
    return sum((a - mx) * (b - my) for a, b in zip(lx, ly)) / sum((a - mx) ** 2 for a in lx)
