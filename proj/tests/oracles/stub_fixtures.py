#!/usr/bin/env python3
"""Independent re-derivation of the regression fixtures frozen in the unit tests.

Everything here is computed from the documented definitions of the stub
backbones (SplitMix64 hashing, FNV-1a token ids) and of the weight
initializer (MT19937-64 draws mapped to [lo, hi)), using plain Python and
numpy. Nothing is imported from the C++ code.

Run:  python3 tests/oracles/stub_fixtures.py
"""
import math

import numpy as np

M64 = (1 << 64) - 1


def splitmix64(x):
    x = (x + 0x9E3779B97F4A7C15) & M64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & M64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & M64
    return x ^ (x >> 31)


def mix_seed(seed, stream):
    return splitmix64(seed ^ splitmix64(stream))


def unit(bits):
    return (bits >> 11) * 2.0 ** -53


def hashed_unit(seed, tag, i):
    return unit(mix_seed(seed, ((tag << 56) ^ i) & M64))


def fnv1a64(data):
    h = 0xCBF29CE484222325
    for b in data:
        h ^= b
        h = (h * 0x100000001B3) & M64
    return h


class MT19937_64:
    N, M = 312, 156
    UPPER, LOWER = 0xFFFFFFFF80000000, 0x7FFFFFFF

    def __init__(self, seed):
        self.mt = [0] * self.N
        self.mt[0] = seed & M64
        for i in range(1, self.N):
            prev = self.mt[i - 1]
            self.mt[i] = (6364136223846793005 * (prev ^ (prev >> 62)) + i) & M64
        self.idx = self.N

    def _twist(self):
        for i in range(self.N):
            x = (self.mt[i] & self.UPPER) | (self.mt[(i + 1) % self.N] & self.LOWER)
            xa = x >> 1
            if x & 1:
                xa ^= 0xB5026F5AA96619E9
            self.mt[i] = self.mt[(i + self.M) % self.N] ^ xa
        self.idx = 0

    def next(self):
        if self.idx >= self.N:
            self._twist()
        x = self.mt[self.idx]
        self.idx += 1
        x ^= (x >> 29) & 0x5555555555555555
        x ^= (x << 17) & 0x71D67FFFEDA60000
        x ^= (x << 37) & 0xFFF7EEE000000000
        x ^= x >> 43
        return x & M64


def check_mt():
    g = MT19937_64(5489)
    for _ in range(9999):
        g.next()
    assert g.next() == 9981545732273789042, "MT19937-64 reference value mismatch"


def init_linear(seed, rows, cols):
    g = MT19937_64(seed)
    bound = 1.0 / math.sqrt(cols)
    w = np.empty((rows, cols))
    for r in range(rows):
        for c in range(cols):
            w[r, c] = -bound + (2 * bound) * unit(g.next())
    return w, np.zeros(rows)


def stub_vision_bias(seed, native):
    return np.array([2.0 * hashed_unit(seed, 2, r) - 1.0 for r in range(native)])


def stub_text_embedding(seed, token_id, hidden=768):
    base = token_id * hidden
    return np.array([2.0 * hashed_unit(seed, 3, base + d) - 1.0 for d in range(hidden)])


def hash_token(piece, vocab=30000, first=1000):
    return first + fnv1a64(piece.encode()) % vocab


def relu(x):
    return np.maximum(x, 0.0)


def fmt(v):
    return ", ".join(f"{x:.17g}" for x in v)


def main():
    check_mt()

    # Vision stub (seed 17, native 2048) on the all-zeros tensor with identity
    # projection: the pooled input is zero, so F1 = relu(bias[:512]).
    f1 = relu(stub_vision_bias(17, 2048)[:512])
    print("vision_zero_f1_head8 =", fmt(f1[:8]))
    print("vision_zero_f1_sum   = %.17g" % f1.sum())
    print("vision_zero_f1_nnz   =", int((f1 > 0).sum()))

    # Text stub (seed 23, [CLS] x [SEP] layout, ids 101/102) on "hello".
    hello = hash_token("hello")
    print("hello_token_id =", hello)
    pooled_a = (stub_text_embedding(23, 101) + stub_text_embedding(23, hello) + stub_text_embedding(23, 102)) / 3.0
    f2 = relu(pooled_a[:512])
    print("text_hello_f2_head8 =", fmt(f2[:8]))
    print("text_hello_f2_sum   = %.17g" % f2.sum())

    # Second text stub (seed 29, x <sep> <cls> layout, ids 4/3).
    pooled_b = (stub_text_embedding(29, hello) + stub_text_embedding(29, 4) + stub_text_embedding(29, 3)) / 3.0
    f3 = relu(pooled_b[:512])
    print("text_hello_f3_sum   = %.17g" % f3.sum())

    # Seeded head (model seed 5) on a fixed F4 pattern.
    w1, b1 = init_linear(mix_seed(5, 200), 128, 1536)
    w2, b2 = init_linear(mix_seed(5, 201), 2, 128)
    print("head_w1_00 = %.17g" % w1[0, 0])
    f4 = np.array([((i % 7) - 3) / 4.0 for i in range(1536)])
    logits = w2 @ relu(w1 @ f4 + b1) + b2
    print("head_fixed_f4_logits =", fmt(logits))

    # End-to-end: F4 = F1 || F2 || F3 from the fixtures above, same head.
    f4e = np.concatenate([f1, f2, f3])
    le = w2 @ relu(w1 @ f4e + b1) + b2
    p = np.exp(le - le.max())
    p /= p.sum()
    print("end_to_end_logits =", fmt(le))
    print("end_to_end_probs  =", fmt(p))
    print("end_to_end_label  =", "hate" if le[1] > le[0] else "no_hate")


if __name__ == "__main__":
    main()
