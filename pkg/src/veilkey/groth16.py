"""Groth16 over BN254: setup, prove, verify, and the byte codecs.

The CRS uses the standard per-wire query layout, so proving cost is a
handful of multi-scalar multiplications whose sizes track the wire count
(linear in tree depth for the redemption relation) plus FFTs over the
constraint domain. Domains are 3-smooth (2^a * 3^b, b <= 2) to keep the
padding overhead small; see backends.ntt_fr.

Nothing here is ceremony-grade: setup takes an explicit seed in test
mode and wipes nothing. The toxic waste stays in process memory.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass

from .backends import core, params
from .r1cs import ConstraintSystem

P = params.P
R = params.R

PROOF_SIZE = 132  # 1 version + 33 G1 + 65 G2 + 33 G1
PROOF_VERSION_GROTH16 = 0x01


class ProofFormatError(Exception):
    pass


class SetupError(Exception):
    pass


# ---------------------------------------------------------------------------
# Key material
# ---------------------------------------------------------------------------


@dataclass
class ProvingKey:
    fingerprint: bytes
    n_public: int
    domain: int
    alpha1: tuple
    beta1: tuple
    delta1: tuple
    beta2: tuple
    delta2: tuple
    a_query: list
    b1_query: list
    b2_query: list
    l_query: list
    h_query: list


@dataclass
class VerificationKey:
    fingerprint: bytes
    alpha1: tuple
    beta2: tuple
    gamma2: tuple
    delta2: tuple
    ic: list


def _domain_size(n: int) -> int:
    best = None
    for b in range(3):
        size = 3**b
        while size < n:
            size *= 2
        if best is None or size < best:
            best = size
    return best


def _derive_toxic_waste(seed: bytes | None) -> list[int]:
    """tau, alpha, beta, gamma, delta; seeded only in test mode."""
    if seed is None:
        seed = os.urandom(32)
    out = []
    counter = 0
    while len(out) < 5:
        block = hashlib.sha256(b"veilkey/setup/" + seed + counter.to_bytes(4, "big")).digest()
        counter += 1
        value = int.from_bytes(block, "big")
        if 0 < value < R:
            out.append(value)
    return out


def setup_keys(
    cs: ConstraintSystem, fingerprint: bytes, seed: bytes | None = None
) -> tuple[ProvingKey, VerificationKey]:
    m = cs.n_wires
    domain = _domain_size(cs.n_constraints)
    tau, alpha, beta, gamma, delta = _derive_toxic_waste(seed)

    powers = [1] * domain
    for k in range(1, domain):
        powers[k] = powers[k - 1] * tau % R
    lag = core.ntt_fr(powers, invert=True)  # L_k(tau) for the whole domain

    u = [0] * m
    v = [0] * m
    w = [0] * m
    for k, (a_terms, b_terms, c_terms, _) in enumerate(cs.constraints):
        lk = lag[k]
        for wire, coeff in a_terms.items():
            u[wire] = (u[wire] + coeff * lk) % R
        for wire, coeff in b_terms.items():
            v[wire] = (v[wire] + coeff * lk) % R
        for wire, coeff in c_terms.items():
            w[wire] = (w[wire] + coeff * lk) % R

    z_tau = (pow(tau, domain, R) - 1) % R
    gamma_inv = pow(gamma, R - 2, R)
    delta_inv = pow(delta, R - 2, R)

    ic_exp = [
        (beta * u[i] + alpha * v[i] + w[i]) * gamma_inv % R for i in range(cs.n_public + 1)
    ]
    l_exp = [
        (beta * u[i] + alpha * v[i] + w[i]) * delta_inv % R
        for i in range(cs.n_public + 1, m)
    ]
    h_exp = []
    acc = z_tau * delta_inv % R
    for _ in range(domain - 1):
        h_exp.append(acc)
        acc = acc * tau % R

    g1_exps = [alpha, beta, delta] + u + v + ic_exp + l_exp + h_exp
    g1_pts = core.g1_fixed_base_mul(g1_exps)
    g2_pts = core.g2_fixed_base_mul([beta, gamma, delta] + v)

    alpha1, beta1, delta1 = g1_pts[0], g1_pts[1], g1_pts[2]
    pos = 3
    a_query = g1_pts[pos : pos + m]
    pos += m
    b1_query = g1_pts[pos : pos + m]
    pos += m
    ic = g1_pts[pos : pos + cs.n_public + 1]
    pos += cs.n_public + 1
    l_query = g1_pts[pos : pos + len(l_exp)]
    pos += len(l_exp)
    h_query = g1_pts[pos:]
    beta2, gamma2, delta2 = g2_pts[0], g2_pts[1], g2_pts[2]
    b2_query = g2_pts[3:]

    pk = ProvingKey(
        fingerprint=fingerprint,
        n_public=cs.n_public,
        domain=domain,
        alpha1=alpha1,
        beta1=beta1,
        delta1=delta1,
        beta2=beta2,
        delta2=delta2,
        a_query=a_query,
        b1_query=b1_query,
        b2_query=b2_query,
        l_query=l_query,
        h_query=h_query,
    )
    vk = VerificationKey(
        fingerprint=fingerprint,
        alpha1=alpha1,
        beta2=beta2,
        gamma2=gamma2,
        delta2=delta2,
        ic=ic,
    )
    return pk, vk


# ---------------------------------------------------------------------------
# Prove / verify
# ---------------------------------------------------------------------------


def _quotient_coefficients(cs: ConstraintSystem, values: list[int], domain: int) -> list[int]:
    """h(X) = (a(X) b(X) - c(X)) / Z(X) via a coset evaluation."""

    def ev(terms):
        return sum(coeff * values[wire] for wire, coeff in terms.items()) % R

    a_vec = [0] * domain
    b_vec = [0] * domain
    c_vec = [0] * domain
    for k, (a_terms, b_terms, c_terms, _) in enumerate(cs.constraints):
        a_vec[k] = ev(a_terms)
        b_vec[k] = ev(b_terms)
        c_vec[k] = ev(c_terms)

    shift = params.FR_COSET_SHIFT
    shifts = [1] * domain
    for j in range(1, domain):
        shifts[j] = shifts[j - 1] * shift % R

    def to_coset(vec):
        coeffs = core.ntt_fr(vec, invert=True)
        return core.ntt_fr([c * shifts[j] % R for j, c in enumerate(coeffs)])

    a_cos = to_coset(a_vec)
    b_cos = to_coset(b_vec)
    c_cos = to_coset(c_vec)
    # on the coset, Z(shift * omega^k) = shift^domain - 1, a nonzero constant
    z_inv = pow((pow(shift, domain, R) - 1) % R, R - 2, R)
    h_cos = [(a_cos[k] * b_cos[k] - c_cos[k]) * z_inv % R for k in range(domain)]
    h_shift = core.ntt_fr(h_cos, invert=True)
    shift_inv = pow(shift, R - 2, R)
    inv_pows = [1] * domain
    for j in range(1, domain):
        inv_pows[j] = inv_pows[j - 1] * shift_inv % R
    h = [h_shift[j] * inv_pows[j] % R for j in range(domain)]
    if h[-1] != 0:
        raise AssertionError("quotient degree overflow: witness does not satisfy the system")
    return h[:-1]


def prove_with_key(pk: ProvingKey, cs: ConstraintSystem, values: list[int], rng) -> tuple:
    r = rng.randrange(R)
    s = rng.randrange(R)
    a_w = core.g1_msm(pk.a_query, values)
    a_pt = core.g1_add(core.g1_add(pk.alpha1, a_w), core.g1_scale(pk.delta1, r))
    b2_w = core.g2_msm(pk.b2_query, values)
    b2_pt = core.g2_add(core.g2_add(pk.beta2, b2_w), core.g2_scale(pk.delta2, s))
    b1_w = core.g1_msm(pk.b1_query, values)
    b1_pt = core.g1_add(core.g1_add(pk.beta1, b1_w), core.g1_scale(pk.delta1, s))

    h = _quotient_coefficients(cs, values, pk.domain)
    c_pt = core.g1_add(
        core.g1_msm(pk.l_query, values[pk.n_public + 1 :]),
        core.g1_msm(pk.h_query, h),
    )
    c_pt = core.g1_add(c_pt, core.g1_scale(a_pt, s))
    c_pt = core.g1_add(c_pt, core.g1_scale(b1_pt, r))
    c_pt = core.g1_add(c_pt, core.g1_neg(core.g1_scale(pk.delta1, r * s % R)))
    return (a_pt, b2_pt, c_pt)


def verify_with_key(vk: VerificationKey, publics: list[int], points: tuple) -> bool:
    if len(publics) != len(vk.ic) - 1:
        return False
    a_pt, b2_pt, c_pt = points
    ic = core.g1_msm(vk.ic, [1] + [x % R for x in publics])
    return core.pairing_product_is_one(
        [
            (a_pt, b2_pt),
            (core.g1_neg(vk.alpha1), vk.beta2),
            (core.g1_neg(ic), vk.gamma2),
            (core.g1_neg(c_pt), vk.delta2),
        ]
    )


def rerandomize(vk: VerificationKey, points: tuple, rng) -> tuple:
    """Fresh-looking proof for the same statement; Groth16 malleability."""
    a_pt, b2_pt, c_pt = points
    t = rng.randrange(1, R)
    s = rng.randrange(R)
    t_inv = pow(t, R - 2, R)
    a_new = core.g1_scale(a_pt, t_inv)
    b_new = core.g2_add(core.g2_scale(b2_pt, t), core.g2_scale(vk.delta2, s))
    c_new = core.g1_add(c_pt, core.g1_scale(a_new, s))
    return (a_new, b_new, c_new)


# ---------------------------------------------------------------------------
# Point and key codecs
# ---------------------------------------------------------------------------


def _sqrt_fp(a: int) -> int | None:
    root = pow(a, (P + 1) // 4, P)  # p = 3 mod 4
    return root if root * root % P == a % P else None


def _sqrt_fp2(a: tuple) -> tuple | None:
    a0, a1 = a[0] % P, a[1] % P
    if a1 == 0:
        root = _sqrt_fp(a0)
        if root is not None:
            return (root, 0)
        root = _sqrt_fp(-a0 % P)
        return None if root is None else (0, root)
    norm = (a0 * a0 + a1 * a1) % P
    s = _sqrt_fp(norm)
    if s is None:
        return None
    inv2 = (P + 1) // 2
    for sign in (s, P - s):
        lam = (a0 + sign) * inv2 % P
        y0 = _sqrt_fp(lam)
        if y0 is None or y0 == 0:
            continue
        y1 = a1 * pow(2 * y0, P - 2, P) % P
        if (y0 * y0 - y1 * y1) % P == a0 and 2 * y0 * y1 % P == a1:
            return (y0, y1)
    return None


def _parity_fp2(y: tuple) -> int:
    return (y[0] & 1) if y[0] else (y[1] & 1)


def g1_compress(p) -> bytes:
    if p is None:
        raise ProofFormatError("proof element at infinity")
    flag = 0x02 | (p[1] & 1)
    return bytes([flag]) + p[0].to_bytes(32, "big")


def g1_decompress(data: bytes):
    if len(data) != 33 or data[0] not in (0x02, 0x03):
        raise ProofFormatError("bad G1 encoding")
    x = int.from_bytes(data[1:], "big")
    if x >= P:
        raise ProofFormatError("G1 x out of range")
    y = _sqrt_fp((x * x % P * x + params.B_G1) % P)
    if y is None:
        raise ProofFormatError("G1 x not on curve")
    if (y & 1) != (data[0] & 1):
        y = P - y
    return (x, y)


def g2_compress(q) -> bytes:
    if q is None:
        raise ProofFormatError("proof element at infinity")
    flag = 0x02 | _parity_fp2(q[1])
    return bytes([flag]) + q[0][0].to_bytes(32, "big") + q[0][1].to_bytes(32, "big")


def g2_decompress(data: bytes):
    if len(data) != 65 or data[0] not in (0x02, 0x03):
        raise ProofFormatError("bad G2 encoding")
    x = (int.from_bytes(data[1:33], "big"), int.from_bytes(data[33:], "big"))
    if x[0] >= P or x[1] >= P:
        raise ProofFormatError("G2 x out of range")
    x_cubed = _f2_mul(_f2_mul(x, x), x)
    rhs = ((x_cubed[0] + params.B_G2[0]) % P, (x_cubed[1] + params.B_G2[1]) % P)
    y = _sqrt_fp2(rhs)
    if y is None:
        raise ProofFormatError("G2 x not on curve")
    if _parity_fp2(y) != (data[0] & 1):
        y = (-y[0] % P, -y[1] % P)
    q = (x, y)
    if not core.g2_subgroup_check(q):
        raise ProofFormatError("G2 point outside the prime-order subgroup")
    return q


def _f2_mul(a, b):
    return ((a[0] * b[0] - a[1] * b[1]) % P, (a[0] * b[1] + a[1] * b[0]) % P)


def proof_points_to_bytes(points: tuple) -> bytes:
    a_pt, b2_pt, c_pt = points
    out = bytes([PROOF_VERSION_GROTH16]) + g1_compress(a_pt) + g2_compress(b2_pt) + g1_compress(c_pt)
    assert len(out) == PROOF_SIZE
    return out


def proof_points_from_bytes(data: bytes) -> tuple:
    if len(data) != PROOF_SIZE:
        raise ProofFormatError(f"proof must be {PROOF_SIZE} bytes, got {len(data)}")
    if data[0] != PROOF_VERSION_GROTH16:
        raise ProofFormatError(f"unknown proof version {data[0]}")
    a_pt = g1_decompress(data[1:34])
    b2_pt = g2_decompress(data[34:99])
    c_pt = g1_decompress(data[99:132])
    if not core.g1_is_on_curve(a_pt) or not core.g1_is_on_curve(c_pt):
        raise ProofFormatError("G1 point not on curve")
    return (a_pt, b2_pt, c_pt)


def _g1_raw(p) -> bytes:
    if p is None:
        return b"\x00" * 64
    return p[0].to_bytes(32, "big") + p[1].to_bytes(32, "big")


def _g1_unraw(data: bytes):
    if data == b"\x00" * 64:
        return None
    return (int.from_bytes(data[:32], "big"), int.from_bytes(data[32:], "big"))


def _g2_raw(q) -> bytes:
    if q is None:
        return b"\x00" * 128
    return b"".join(c.to_bytes(32, "big") for c in (q[0][0], q[0][1], q[1][0], q[1][1]))


def _g2_unraw(data: bytes):
    if data == b"\x00" * 128:
        return None
    vals = [int.from_bytes(data[i : i + 32], "big") for i in range(0, 128, 32)]
    return ((vals[0], vals[1]), (vals[2], vals[3]))


_PK_MAGIC = b"VKPK1"
_VK_MAGIC = b"VKVK1"


def proving_key_to_bytes(pk: ProvingKey) -> bytes:
    head = _PK_MAGIC + pk.fingerprint
    head += pk.n_public.to_bytes(4, "big")
    head += pk.domain.to_bytes(4, "big")
    head += len(pk.a_query).to_bytes(4, "big")
    body = [_g1_raw(pk.alpha1), _g1_raw(pk.beta1), _g1_raw(pk.delta1)]
    body += [_g2_raw(pk.beta2), _g2_raw(pk.delta2)]
    body += [_g1_raw(p) for p in pk.a_query]
    body += [_g1_raw(p) for p in pk.b1_query]
    body += [_g2_raw(p) for p in pk.b2_query]
    body += [_g1_raw(p) for p in pk.l_query]
    body += [_g1_raw(p) for p in pk.h_query]
    return head + b"".join(body)


def proving_key_from_bytes(data: bytes) -> ProvingKey:
    if data[:5] != _PK_MAGIC:
        raise ValueError("not a proving key")
    fingerprint = data[5:37]
    n_public = int.from_bytes(data[37:41], "big")
    domain = int.from_bytes(data[41:45], "big")
    m = int.from_bytes(data[45:49], "big")
    pos = 49

    def take(n):
        nonlocal pos
        chunk = data[pos : pos + n]
        if len(chunk) != n:
            raise ValueError("truncated proving key")
        pos += n
        return chunk

    alpha1 = _g1_unraw(take(64))
    beta1 = _g1_unraw(take(64))
    delta1 = _g1_unraw(take(64))
    beta2 = _g2_unraw(take(128))
    delta2 = _g2_unraw(take(128))
    a_query = [_g1_unraw(take(64)) for _ in range(m)]
    b1_query = [_g1_unraw(take(64)) for _ in range(m)]
    b2_query = [_g2_unraw(take(128)) for _ in range(m)]
    n_priv = m - (n_public + 1)
    l_query = [_g1_unraw(take(64)) for _ in range(n_priv)]
    h_query = [_g1_unraw(take(64)) for _ in range(domain - 1)]
    if pos != len(data):
        raise ValueError("trailing bytes in proving key")
    return ProvingKey(
        fingerprint, n_public, domain, alpha1, beta1, delta1, beta2, delta2,
        a_query, b1_query, b2_query, l_query, h_query,
    )


def verification_key_to_bytes(vk: VerificationKey) -> bytes:
    head = _VK_MAGIC + vk.fingerprint + len(vk.ic).to_bytes(4, "big")
    body = [_g1_raw(vk.alpha1), _g2_raw(vk.beta2), _g2_raw(vk.gamma2), _g2_raw(vk.delta2)]
    body += [_g1_raw(p) for p in vk.ic]
    return head + b"".join(body)


def verification_key_from_bytes(data: bytes) -> VerificationKey:
    if data[:5] != _VK_MAGIC:
        raise ValueError("not a verification key")
    fingerprint = data[5:37]
    n_ic = int.from_bytes(data[37:41], "big")
    pos = 41

    def take(n):
        nonlocal pos
        chunk = data[pos : pos + n]
        if len(chunk) != n:
            raise ValueError("truncated verification key")
        pos += n
        return chunk

    alpha1 = _g1_unraw(take(64))
    beta2 = _g2_unraw(take(128))
    gamma2 = _g2_unraw(take(128))
    delta2 = _g2_unraw(take(128))
    ic = [_g1_unraw(take(64)) for _ in range(n_ic)]
    if pos != len(data):
        raise ValueError("trailing bytes in verification key")
    return VerificationKey(fingerprint, alpha1, beta2, gamma2, delta2, ic)
