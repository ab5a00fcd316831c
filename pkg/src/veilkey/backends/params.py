"""Shared numeric parameters for both arithmetic cores.

Everything here is a plain Python value so the compiled and pure cores can
consume identical constants. Derived values (twist coefficient, Frobenius
multipliers, sponge round constants) are computed at import time from the
primary curve parameters rather than pasted, and a handful of cheap
consistency asserts guard against transcription errors.

Curve: the 254-bit Barreto-Naehrig curve used by most SNARK tooling
(alt_bn128). G1 is E(Fp): y^2 = x^3 + 3, prime order. G2 lives on the
sextic D-twist over Fp2.
"""

import hashlib

# ---------------------------------------------------------------------------
# Base curve parameters
# ---------------------------------------------------------------------------

# BN parameter x; p and r are the standard polynomials evaluated at x.
BN_X = 4965661367192848881

P = 21888242871839275222246405745257275088696311157297823662689037894645226208583
R = 21888242871839275222246405745257275088548364400416034343698204186575808495617

assert P == 36 * BN_X**4 + 36 * BN_X**3 + 24 * BN_X**2 + 6 * BN_X + 1
assert R == 36 * BN_X**4 + 36 * BN_X**3 + 18 * BN_X**2 + 6 * BN_X + 1

B_G1 = 3

G1_GENERATOR = (1, 2)

# Standard G2 generator on the twist (x, y as Fp2 pairs (c0, c1)).
G2_GENERATOR = (
    (
        10857046999023057135944570762232829481370756359578518086990519993285655852781,
        11559732032986387107991004021392285783925812861821192530917403151452391805634,
    ),
    (
        8495653923123431417604973247489272438418190587263600148770280649306958101930,
        4082367875863433681332203403145435568316851327593401208105741076214120093531,
    ),
)

# Optimal ate loop length for BN curves.
ATE_LOOP_COUNT = 6 * BN_X + 2
ATE_BITS = [int(b) for b in bin(ATE_LOOP_COUNT)[2:]]

# Hard part of the final exponentiation, (p^4 - p^2 + 1) / r.
assert (P**4 - P**2 + 1) % R == 0
FINAL_EXP_HARD = (P**4 - P**2 + 1) // R

# ---------------------------------------------------------------------------
# Fp2 helpers used only for deriving constants below
# ---------------------------------------------------------------------------


def _f2_mul(a, b):
    a0, a1 = a
    b0, b1 = b
    t0 = a0 * b0 % P
    t1 = a1 * b1 % P
    return ((t0 - t1) % P, ((a0 + a1) * (b0 + b1) - t0 - t1) % P)


def _f2_pow(a, e):
    out = (1, 0)
    base = a
    while e:
        if e & 1:
            out = _f2_mul(out, base)
        base = _f2_mul(base, base)
        e >>= 1
    return out


def _f2_inv(a):
    a0, a1 = a
    d = pow(a0 * a0 + a1 * a1, P - 2, P)
    return (a0 * d % P, -a1 * d % P)


# Non-residue for the Fp6/Fp12 tower: xi = 9 + u.
XI = (9, 1)

# Twist coefficient b' = 3 / xi (D-twist: y^2 = x^3 + b').
B_G2 = _f2_mul((3, 0), _f2_inv(XI))

_g2x, _g2y = G2_GENERATOR
assert _f2_mul(_g2y, _g2y) == tuple(
    (a + b) % P for a, b in zip(_f2_mul(_f2_mul(_g2x, _g2x), _g2x), B_G2)
), "G2 generator is not on the twist"

# Frobenius multipliers: (w^k)^p = w^k * xi^(k(p-1)/6) with w^6 = xi.
assert (P - 1) % 6 == 0
FROB_COEFF_1 = [_f2_pow(XI, k * (P - 1) // 6) for k in range(6)]
FROB_COEFF_2 = [_f2_pow(XI, k * (P * P - 1) // 6) for k in range(6)]

# Action of the p-power Frobenius on twisted G2 coordinates.
TWIST_FROB_X = FROB_COEFF_1[2]  # xi^((p-1)/3)
TWIST_FROB_Y = FROB_COEFF_1[3]  # xi^((p-1)/2)

# ---------------------------------------------------------------------------
# Scalar-field (Fr) NTT parameters
# ---------------------------------------------------------------------------

FR_TWO_ADICITY = 28
assert (R - 1) % (1 << FR_TWO_ADICITY) == 0
FR_GENERATOR = 5
assert pow(FR_GENERATOR, (R - 1) // 2, R) == R - 1, "5 must generate Fr*"

# 2^28-th root of unity; roots for smaller domains are powers of this.
FR_ROOT_OF_UNITY = pow(FR_GENERATOR, (R - 1) >> FR_TWO_ADICITY, R)

# Multiplicative coset shift used for quotient-polynomial evaluation.
FR_COSET_SHIFT = FR_GENERATOR

# ---------------------------------------------------------------------------
# Sponge permutation parameters (width-3 Poseidon-style, x^5 s-box)
# ---------------------------------------------------------------------------

SPONGE_WIDTH = 3
SPONGE_FULL_ROUNDS = 8
SPONGE_PARTIAL_ROUNDS = 57
SPONGE_ROUNDS = SPONGE_FULL_ROUNDS + SPONGE_PARTIAL_ROUNDS


def _derive_round_constants(count):
    """Nothing-up-my-sleeve constants: a SHA-256 counter chain, rejection
    sampled into Fr so the distribution is uniform."""
    out = []
    seed = b"veilkey/sponge/v1"
    counter = 0
    while len(out) < count:
        block = hashlib.sha256(seed + counter.to_bytes(8, "big")).digest()
        counter += 1
        value = int.from_bytes(block, "big")
        if value < R:
            out.append(value)
    return out


SPONGE_ROUND_CONSTANTS = _derive_round_constants(SPONGE_ROUNDS * SPONGE_WIDTH)

# Cauchy matrix 1/(i + j + 3); Cauchy matrices over a prime field are MDS.
SPONGE_MDS = [
    [pow(i + j + 3, R - 2, R) for j in range(SPONGE_WIDTH)]
    for i in range(SPONGE_WIDTH)
]


def _det3(m):
    return (
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    ) % R


assert _det3(SPONGE_MDS) != 0
