#!/usr/bin/env python3
"""Reference oracle for frozen test values.

Standalone scalar implementation of the stream generator, the shared
mini-batch draw, and a two-layer tanh network forward pass. Run it to
regenerate the constants asserted in the C++ unit tests:

    python3 tests/golden/gen_golden.py
"""
import math

MASK = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15


def mix(z):
    z &= MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
    return z ^ (z >> 31)


def fnv1a(s):
    h = 0xCBF29CE484222325
    for b in s.encode():
        h = ((h ^ b) * 0x100000001B3) & MASK
    return h


class Stream:
    """Counter stream keyed by (seed, tag, round)."""

    def __init__(self, seed, tag, round_index):
        key = mix((seed + GAMMA) & MASK)
        key = mix(key ^ fnv1a(tag))
        key = mix(key ^ (round_index & MASK))
        self.state = key

    def next_u64(self):
        self.state = (self.state + GAMMA) & MASK
        return mix(self.state)

    def next_f64(self):
        return (self.next_u64() >> 11) * (2.0 ** -53)

    def uniform(self, lo, hi):
        return lo + self.next_f64() * (hi - lo)

    def below(self, n):
        threshold = ((1 << 64) - n) % n
        while True:
            x = self.next_u64()
            if x >= threshold:
                return x % n

    def normal(self):
        u1 = ((self.next_u64() >> 11) + 1) * (2.0 ** -53)
        u2 = self.next_f64()
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(6.283185307179586476925286766559 * u2)


def sample_minibatch(seed, round_index, batch, m):
    g = Stream(seed, "minibatch", round_index)
    ids = list(range(m))
    for i in range(batch):
        j = i + g.below(m - i)
        ids[i], ids[j] = ids[j], ids[i]
    return ids[:batch]


def init_mlp(seed, silo, d, h, e):
    g = Stream(seed, "init", silo)
    bound1 = 1.0 / math.sqrt(d)
    bound2 = 1.0 / math.sqrt(h)
    w1 = [[0.0] * h for _ in range(d)]
    b1 = [0.0] * h
    w2 = [[0.0] * e for _ in range(h)]
    b2 = [0.0] * e
    for i in range(d):
        for j in range(h):
            w1[i][j] = g.uniform(-bound1, bound1)
    for j in range(h):
        b1[j] = g.uniform(-bound1, bound1)
    for i in range(h):
        for j in range(e):
            w2[i][j] = g.uniform(-bound2, bound2)
    for j in range(e):
        b2[j] = g.uniform(-bound2, bound2)
    return w1, b1, w2, b2


def mlp_forward(w1, b1, w2, b2, x):
    h = len(b1)
    e = len(b2)
    a1 = [0.0] * h
    for j in range(h):
        z = b1[j]
        for i in range(len(x)):
            z += x[i] * w1[i][j]
        a1[j] = math.tanh(z)
    out = [0.0] * e
    for j in range(e):
        z = b2[j]
        for i in range(h):
            z += a1[i] * w2[i][j]
        out[j] = z
    return out


def solve_linear(a, b):
    """Gaussian elimination with partial pivoting, mirroring the C++ helper."""
    d = len(b)
    a = [row[:] for row in a]
    b = b[:]
    for col in range(d):
        pivot = col
        for r in range(col + 1, d):
            if abs(a[r][col]) > abs(a[pivot][col]):
                pivot = r
        if abs(a[pivot][col]) < 1e-300:
            raise ValueError("singular")
        if pivot != col:
            a[col], a[pivot] = a[pivot], a[col]
            b[col], b[pivot] = b[pivot], b[col]
        inv = 1.0 / a[col][col]
        for r in range(col + 1, d):
            f = a[r][col] * inv
            if f == 0.0:
                continue
            for c in range(col, d):
                a[r][c] -= f * a[col][c]
            b[r] -= f * b[col]
    x = [0.0] * d
    for i in reversed(range(d)):
        s = b[i]
        for j in range(i + 1, d):
            s -= a[i][j] * x[j]
        x[i] = s / a[i][i]
    return x


def lambda_max(a, tol=1e-12, max_iters=20000):
    d = len(a)
    v = [1.0 + 1e-3 * i for i in range(d)]
    nv = math.sqrt(sum(x * x for x in v))
    v = [x / nv for x in v]
    lam = 0.0
    for _ in range(max_iters):
        av = [sum(a[i][j] * v[j] for j in range(d)) for i in range(d)]
        nxt = sum(v[i] * av[i] for i in range(d))
        na = math.sqrt(sum(x * x for x in av))
        if na == 0.0:
            return 0.0
        v = [x / na for x in av]
        if abs(nxt - lam) <= tol * max(1.0, abs(nxt)):
            return nxt
        lam = nxt
    return lam


def synthetic_golden():
    """Least-squares instance: seed=2024, M=8, D=4, noise=0.25, condition=4,
    correlation=0.5. Mirrors the row-major draw order of the C++ generator:
    per row one shared factor, then one own draw per column."""
    seed, m, d = 2024, 8, 4
    noise, condition, rho = 0.25, 4.0, 0.5
    scale = [condition ** (-c / (2.0 * (d - 1))) for c in range(d)]
    ws, wo = math.sqrt(rho), math.sqrt(1.0 - rho)

    xs = Stream(seed, "synthetic-x", 0)
    x = [[0.0] * d for _ in range(m)]
    for i in range(m):
        shared = xs.normal()
        for c in range(d):
            own = xs.normal()
            x[i][c] = scale[c] * (ws * shared + wo * own)

    ts = Stream(seed, "synthetic-theta", 0)
    theta_star = [ts.normal() for _ in range(d)]

    ns = Stream(seed, "synthetic-noise", 0)
    y = [0.0] * m
    for i in range(m):
        z = sum(x[i][c] * theta_star[c] for c in range(d))
        y[i] = z + noise * ns.normal()

    # Gram accumulated row by row like the C++ helper, scaled by exact
    # powers of two so the round trip 2/m then m/2 stays bitwise.
    gram = [[0.0] * d for _ in range(d)]
    for i in range(m):
        for a in range(d):
            for b in range(d):
                gram[a][b] += x[i][a] * x[i][b]
    gram2m = [[gram[a][b] * (2.0 / m) for b in range(d)] for a in range(d)]
    xtx = [[gram2m[a][b] * (m / 2.0) for b in range(d)] for a in range(d)]
    xty = [0.0] * d
    for i in range(m):
        for c in range(d):
            xty[c] += x[i][c] * y[i]
    theta_opt = solve_linear(xtx, xty)
    sse = 0.0
    for i in range(m):
        z = sum(x[i][c] * theta_opt[c] for c in range(d))
        sse += (z - y[i]) ** 2
    smooth_l = lambda_max(gram2m)

    print("synthetic golden (seed=2024, M=8, D=4, least_squares, noise=0.25,"
          " condition=4, correlation=0.5):")
    print("  x[0] = %s" % " ".join("%.17g" % v for v in x[0]))
    print("  x[7] = %s" % " ".join("%.17g" % v for v in x[7]))
    print("  theta_star = %s" % " ".join("%.17g" % v for v in theta_star))
    print("  y[0] = %.17g  y[7] = %.17g" % (y[0], y[7]))
    print("  theta_opt = %s" % " ".join("%.17g" % v for v in theta_opt))
    print("  optimum_loss = %.17g" % (sse / m))
    print("  smooth_l = %.17g" % smooth_l)


def main():
    g = Stream(42, "minibatch", 0)
    print("first five u64 of stream(seed=42, tag=minibatch, round=0):")
    for _ in range(5):
        print(f"  {g.next_u64()}ull")

    g2 = Stream(42, "minibatch", 0)
    print("first f64 of same stream: %.17g" % g2.next_f64())

    ids = sample_minibatch(42, 0, 3, 10)
    print(f"minibatch(seed=42, round=0, B=3, M=10): {ids}")

    w1, b1, w2, b2 = init_mlp(7, 0, 3, 4, 2)
    out = mlp_forward(w1, b1, w2, b2, [0.3, -1.2, 0.7])
    print("mlp(seed=7, silo=0, d=3, h=4, e=2) forward on [0.3,-1.2,0.7]:")
    for v in out:
        print("  %.17g" % v)
    flat = (
        [w1[i][j] for i in range(3) for j in range(4)]
        + b1
        + [w2[i][j] for i in range(4) for j in range(2)]
        + b2
    )
    print("first three init draws: %.17g %.17g %.17g" % (flat[0], flat[1], flat[2]))

    g3 = Stream(11, "probe", 0)
    print("first two normals of stream(seed=11, tag=probe, round=0): %.17g %.17g"
          % (g3.normal(), g3.normal()))

    synthetic_golden()


if __name__ == "__main__":
    main()
