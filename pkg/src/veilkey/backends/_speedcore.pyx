# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled arithmetic core.

Same kernel API as purecore, with field elements held as 4x64-bit limbs in
Montgomery form and all inner loops in C. Selected automatically when built;
purecore is the reference implementation this module must agree with
bit-for-bit at the API boundary.
"""

from libc.stdlib cimport malloc, free
from libc.string cimport memcpy, memset

from . import params as _params

BACKEND_NAME = "compiled"

cdef extern from *:
    ctypedef unsigned long long u128 "unsigned __int128"

ctypedef unsigned long long u64

# ---------------------------------------------------------------------------
# Generic 4-limb Montgomery arithmetic (shared by Fp and Fr)
# ---------------------------------------------------------------------------

cdef u64 PM[4]          # curve field modulus p
cdef u64 P_INV          # -p^-1 mod 2^64
cdef u64 P_R2[4]        # (2^256)^2 mod p
cdef u64 P_ONE[4]       # 2^256 mod p (Montgomery one)
cdef u64 RM[4]          # scalar field modulus r
cdef u64 R_INV
cdef u64 R_R2[4]
cdef u64 R_ONE[4]

cdef u64 EXP_PM2[4]     # p - 2, for Fermat inversion
cdef u64 EXP_RM2[4]     # r - 2
cdef u64 EXP_R[4]       # r, for subgroup checks
cdef u64 EXP_HARD[12]   # hard part of the final exponentiation
cdef int EXP_HARD_BITS
cdef int ATE_BITS_C[80]
cdef int ATE_LEN


cdef inline int limbs_geq(const u64* a, const u64* b) noexcept:
    cdef int i
    for i in range(3, -1, -1):
        if a[i] > b[i]:
            return 1
        if a[i] < b[i]:
            return 0
    return 1


cdef inline int limbs_is_zero(const u64* a) noexcept:
    return a[0] == 0 and a[1] == 0 and a[2] == 0 and a[3] == 0


cdef inline void limbs_sub_mod(u64* r, const u64* a, const u64* m) noexcept:
    # r = a - m (a >= m assumed)
    cdef u128 t
    cdef u64 borrow = 0
    cdef int i
    for i in range(4):
        t = <u128>a[i] - m[i] - borrow
        r[i] = <u64>t
        borrow = 1 if (t >> 64) else 0


cdef inline void mod_add(u64* r, const u64* a, const u64* b, const u64* m) noexcept:
    cdef u128 t = <u128>a[0] + b[0]
    cdef u64 t0 = <u64>t
    t = <u128>a[1] + b[1] + (t >> 64)
    cdef u64 t1 = <u64>t
    t = <u128>a[2] + b[2] + (t >> 64)
    cdef u64 t2 = <u64>t
    t = <u128>a[3] + b[3] + (t >> 64)
    cdef u64 t3 = <u64>t
    cdef u64 carry = <u64>(t >> 64)
    cdef u64 tmp[4]
    tmp[0] = t0; tmp[1] = t1; tmp[2] = t2; tmp[3] = t3
    if carry or limbs_geq(tmp, m):
        limbs_sub_mod(r, tmp, m)
    else:
        r[0] = t0; r[1] = t1; r[2] = t2; r[3] = t3


cdef inline void mod_sub(u64* r, const u64* a, const u64* b, const u64* m) noexcept:
    cdef u128 t
    cdef u64 borrow = 0
    cdef u64 tmp[4]
    cdef int i
    for i in range(4):
        t = <u128>a[i] - b[i] - borrow
        tmp[i] = <u64>t
        borrow = 1 if (t >> 64) else 0
    if borrow:
        t = <u128>tmp[0] + m[0]
        r[0] = <u64>t
        t = <u128>tmp[1] + m[1] + (t >> 64)
        r[1] = <u64>t
        t = <u128>tmp[2] + m[2] + (t >> 64)
        r[2] = <u64>t
        t = <u128>tmp[3] + m[3] + (t >> 64)
        r[3] = <u64>t
    else:
        r[0] = tmp[0]; r[1] = tmp[1]; r[2] = tmp[2]; r[3] = tmp[3]


cdef inline void mod_neg(u64* r, const u64* a, const u64* m) noexcept:
    if limbs_is_zero(a):
        r[0] = 0; r[1] = 0; r[2] = 0; r[3] = 0
    else:
        limbs_sub_mod(r, m, a)
        # m >= a always holds for reduced a


cdef void mont_mul(u64* r, const u64* a, const u64* b, const u64* m, u64 inv) noexcept:
    # CIOS: interleaved multiply and reduce, result < m
    cdef u64 t0 = 0, t1 = 0, t2 = 0, t3 = 0, t4 = 0
    cdef u128 acc
    cdef u64 ai, mf, carry
    cdef int i
    for i in range(4):
        ai = a[i]
        acc = <u128>ai * b[0] + t0
        t0 = <u64>acc
        acc = <u128>ai * b[1] + t1 + (acc >> 64)
        t1 = <u64>acc
        acc = <u128>ai * b[2] + t2 + (acc >> 64)
        t2 = <u64>acc
        acc = <u128>ai * b[3] + t3 + (acc >> 64)
        t3 = <u64>acc
        t4 = t4 + <u64>(acc >> 64)

        mf = t0 * inv
        acc = <u128>mf * m[0] + t0
        carry = <u64>(acc >> 64)
        acc = <u128>mf * m[1] + t1 + carry
        t0 = <u64>acc
        acc = <u128>mf * m[2] + t2 + (acc >> 64)
        t1 = <u64>acc
        acc = <u128>mf * m[3] + t3 + (acc >> 64)
        t2 = <u64>acc
        acc = <u128>t4 + (acc >> 64)
        t3 = <u64>acc
        t4 = <u64>(acc >> 64)
    cdef u64 tmp[4]
    tmp[0] = t0; tmp[1] = t1; tmp[2] = t2; tmp[3] = t3
    if t4 or limbs_geq(tmp, m):
        limbs_sub_mod(r, tmp, m)
    else:
        r[0] = t0; r[1] = t1; r[2] = t2; r[3] = t3


cdef void mont_pow(u64* r, const u64* base, const u64* e, int ebits,
                   const u64* m, u64 inv, const u64* one) noexcept:
    cdef u64 acc[4]
    cdef u64 b[4]
    cdef int i, word, bit
    acc[0] = one[0]; acc[1] = one[1]; acc[2] = one[2]; acc[3] = one[3]
    b[0] = base[0]; b[1] = base[1]; b[2] = base[2]; b[3] = base[3]
    for i in range(ebits - 1, -1, -1):
        word = i >> 6
        bit = i & 63
        mont_mul(acc, acc, acc, m, inv)
        if (e[word] >> bit) & 1:
            mont_mul(acc, acc, b, m, inv)
    r[0] = acc[0]; r[1] = acc[1]; r[2] = acc[2]; r[3] = acc[3]


cdef inline void fp_mul(u64* r, const u64* a, const u64* b) noexcept:
    mont_mul(r, a, b, PM, P_INV)


cdef inline void fp_add(u64* r, const u64* a, const u64* b) noexcept:
    mod_add(r, a, b, PM)


cdef inline void fp_sub(u64* r, const u64* a, const u64* b) noexcept:
    mod_sub(r, a, b, PM)


cdef inline void fp_neg(u64* r, const u64* a) noexcept:
    mod_neg(r, a, PM)


cdef void fp_inv(u64* r, const u64* a) noexcept:
    mont_pow(r, a, EXP_PM2, 254, PM, P_INV, P_ONE)


cdef inline void fr_mul(u64* r, const u64* a, const u64* b) noexcept:
    mont_mul(r, a, b, RM, R_INV)


cdef void fr_pow_u64(u64* r, const u64* base, u64 e) noexcept:
    cdef u64 acc[4]
    cdef u64 b[4]
    acc[0] = R_ONE[0]; acc[1] = R_ONE[1]; acc[2] = R_ONE[2]; acc[3] = R_ONE[3]
    b[0] = base[0]; b[1] = base[1]; b[2] = base[2]; b[3] = base[3]
    while e:
        if e & 1:
            fr_mul(acc, acc, b)
        fr_mul(b, b, b)
        e >>= 1
    r[0] = acc[0]; r[1] = acc[1]; r[2] = acc[2]; r[3] = acc[3]


# ---------------------------------------------------------------------------
# Python <-> limb conversion
# ---------------------------------------------------------------------------

cdef void int_to_limbs(object v, u64* out):
    cdef u64 m = 0xFFFFFFFFFFFFFFFF
    out[0] = v & m
    out[1] = (v >> 64) & m
    out[2] = (v >> 128) & m
    out[3] = (v >> 192) & m


cdef object limbs_to_int(const u64* a):
    return a[0] | (<object>a[1] << 64) | (<object>a[2] << 128) | (<object>a[3] << 192)


cdef void fp_from_obj(object v, u64* out):
    cdef u64 raw[4]
    int_to_limbs(v % _PP, raw)
    mont_mul(out, raw, P_R2, PM, P_INV)


cdef object fp_to_obj(const u64* a):
    cdef u64 raw[4]
    cdef u64 one[4]
    one[0] = 1; one[1] = 0; one[2] = 0; one[3] = 0
    mont_mul(raw, a, one, PM, P_INV)
    return limbs_to_int(raw)


cdef void fr_from_obj(object v, u64* out):
    cdef u64 raw[4]
    int_to_limbs(v % _RR, raw)
    mont_mul(out, raw, R_R2, RM, R_INV)


cdef object fr_to_obj(const u64* a):
    cdef u64 raw[4]
    cdef u64 one[4]
    one[0] = 1; one[1] = 0; one[2] = 0; one[3] = 0
    mont_mul(raw, a, one, RM, R_INV)
    return limbs_to_int(raw)


# ---------------------------------------------------------------------------
# Tower: Fp2, Fp6, Fp12
# ---------------------------------------------------------------------------

cdef struct Fp2:
    u64 c0[4]
    u64 c1[4]

cdef struct Fp6:
    Fp2 c0
    Fp2 c1
    Fp2 c2

cdef struct Fp12:
    Fp6 c0
    Fp6 c1

cdef Fp2 F2_ZERO_C
cdef Fp2 F2_ONE_C
cdef Fp2 B_G2_C
cdef Fp2 TWF_X_C
cdef Fp2 TWF_Y_C
cdef Fp2 FROB1_C[6]
cdef Fp2 FROB2_C[6]


cdef inline void f2_add(Fp2* r, const Fp2* a, const Fp2* b) noexcept:
    fp_add(r.c0, a.c0, b.c0)
    fp_add(r.c1, a.c1, b.c1)


cdef inline void f2_sub(Fp2* r, const Fp2* a, const Fp2* b) noexcept:
    fp_sub(r.c0, a.c0, b.c0)
    fp_sub(r.c1, a.c1, b.c1)


cdef inline void f2_neg(Fp2* r, const Fp2* a) noexcept:
    fp_neg(r.c0, a.c0)
    fp_neg(r.c1, a.c1)


cdef inline void f2_conj(Fp2* r, const Fp2* a) noexcept:
    r.c0[0] = a.c0[0]; r.c0[1] = a.c0[1]; r.c0[2] = a.c0[2]; r.c0[3] = a.c0[3]
    fp_neg(r.c1, a.c1)


cdef void f2_mul(Fp2* r, const Fp2* a, const Fp2* b) noexcept:
    cdef u64 t0[4], t1[4], sa[4], sb[4], s[4]
    fp_mul(t0, a.c0, b.c0)
    fp_mul(t1, a.c1, b.c1)
    fp_add(sa, a.c0, a.c1)
    fp_add(sb, b.c0, b.c1)
    fp_mul(s, sa, sb)
    fp_sub(s, s, t0)
    fp_sub(r.c1, s, t1)
    fp_sub(r.c0, t0, t1)


cdef void f2_sqr(Fp2* r, const Fp2* a) noexcept:
    cdef u64 sum_[4], diff[4], prod[4]
    fp_add(sum_, a.c0, a.c1)
    fp_sub(diff, a.c0, a.c1)
    fp_mul(prod, a.c0, a.c1)
    fp_mul(r.c0, sum_, diff)
    fp_add(r.c1, prod, prod)


cdef void f2_inv(Fp2* r, const Fp2* a) noexcept:
    cdef u64 t0[4], t1[4], d[4]
    fp_mul(t0, a.c0, a.c0)
    fp_mul(t1, a.c1, a.c1)
    fp_add(d, t0, t1)
    fp_inv(d, d)
    fp_mul(r.c0, a.c0, d)
    fp_mul(t0, a.c1, d)
    fp_neg(r.c1, t0)


cdef void f2_mul_xi(Fp2* r, const Fp2* a) noexcept:
    # xi = 9 + u; out computed into temps so r may alias a
    cdef u64 t0[4], t1[4], nine_a0[4], nine_a1[4], out0[4], out1[4]
    fp_add(t0, a.c0, a.c0)
    fp_add(t0, t0, t0)
    fp_add(t0, t0, t0)
    fp_add(nine_a0, t0, a.c0)
    fp_add(t1, a.c1, a.c1)
    fp_add(t1, t1, t1)
    fp_add(t1, t1, t1)
    fp_add(nine_a1, t1, a.c1)
    fp_sub(out0, nine_a0, a.c1)
    fp_add(out1, nine_a1, a.c0)
    memcpy(r.c0, out0, sizeof(u64) * 4)
    memcpy(r.c1, out1, sizeof(u64) * 4)


cdef inline void f2_copy(Fp2* r, const Fp2* a) noexcept:
    memcpy(r, a, sizeof(Fp2))


cdef inline int f2_is_zero(const Fp2* a) noexcept:
    return limbs_is_zero(a.c0) and limbs_is_zero(a.c1)


cdef inline int f2_eq(const Fp2* a, const Fp2* b) noexcept:
    cdef int i
    for i in range(4):
        if a.c0[i] != b.c0[i] or a.c1[i] != b.c1[i]:
            return 0
    return 1


cdef inline void f6_add(Fp6* r, const Fp6* a, const Fp6* b) noexcept:
    f2_add(&r.c0, &a.c0, &b.c0)
    f2_add(&r.c1, &a.c1, &b.c1)
    f2_add(&r.c2, &a.c2, &b.c2)


cdef inline void f6_sub(Fp6* r, const Fp6* a, const Fp6* b) noexcept:
    f2_sub(&r.c0, &a.c0, &b.c0)
    f2_sub(&r.c1, &a.c1, &b.c1)
    f2_sub(&r.c2, &a.c2, &b.c2)


cdef inline void f6_neg(Fp6* r, const Fp6* a) noexcept:
    f2_neg(&r.c0, &a.c0)
    f2_neg(&r.c1, &a.c1)
    f2_neg(&r.c2, &a.c2)


cdef void f6_mul(Fp6* r, const Fp6* a, const Fp6* b) noexcept:
    cdef Fp2 t0, t1, t2, s1, s2, tmp, out0, out1, out2
    f2_mul(&t0, &a.c0, &b.c0)
    f2_mul(&t1, &a.c1, &b.c1)
    f2_mul(&t2, &a.c2, &b.c2)

    f2_add(&s1, &a.c1, &a.c2)
    f2_add(&s2, &b.c1, &b.c2)
    f2_mul(&tmp, &s1, &s2)
    f2_sub(&tmp, &tmp, &t1)
    f2_sub(&tmp, &tmp, &t2)
    f2_mul_xi(&tmp, &tmp)
    f2_add(&out0, &t0, &tmp)

    f2_add(&s1, &a.c0, &a.c1)
    f2_add(&s2, &b.c0, &b.c1)
    f2_mul(&tmp, &s1, &s2)
    f2_sub(&tmp, &tmp, &t0)
    f2_sub(&tmp, &tmp, &t1)
    f2_mul_xi(&s1, &t2)
    f2_add(&out1, &tmp, &s1)

    f2_add(&s1, &a.c0, &a.c2)
    f2_add(&s2, &b.c0, &b.c2)
    f2_mul(&tmp, &s1, &s2)
    f2_sub(&tmp, &tmp, &t0)
    f2_sub(&tmp, &tmp, &t2)
    f2_add(&out2, &tmp, &t1)

    f2_copy(&r.c0, &out0)
    f2_copy(&r.c1, &out1)
    f2_copy(&r.c2, &out2)


cdef void f6_mul_v(Fp6* r, const Fp6* a) noexcept:
    cdef Fp2 t
    f2_mul_xi(&t, &a.c2)
    f2_copy(&r.c2, &a.c1)
    f2_copy(&r.c1, &a.c0)
    f2_copy(&r.c0, &t)


cdef void f6_inv(Fp6* r, const Fp6* a) noexcept:
    cdef Fp2 c0, c1, c2, t, acc
    f2_sqr(&c0, &a.c0)
    f2_mul(&t, &a.c1, &a.c2)
    f2_mul_xi(&t, &t)
    f2_sub(&c0, &c0, &t)

    f2_sqr(&c1, &a.c2)
    f2_mul_xi(&c1, &c1)
    f2_mul(&t, &a.c0, &a.c1)
    f2_sub(&c1, &c1, &t)

    f2_sqr(&c2, &a.c1)
    f2_mul(&t, &a.c0, &a.c2)
    f2_sub(&c2, &c2, &t)

    f2_mul(&acc, &a.c2, &c1)
    f2_mul(&t, &a.c1, &c2)
    f2_add(&acc, &acc, &t)
    f2_mul_xi(&acc, &acc)
    f2_mul(&t, &a.c0, &c0)
    f2_add(&acc, &acc, &t)
    f2_inv(&acc, &acc)

    f2_mul(&r.c0, &c0, &acc)
    f2_mul(&r.c1, &c1, &acc)
    f2_mul(&r.c2, &c2, &acc)


cdef inline void f6_copy(Fp6* r, const Fp6* a) noexcept:
    memcpy(r, a, sizeof(Fp6))


cdef void f12_mul(Fp12* r, const Fp12* a, const Fp12* b) noexcept:
    cdef Fp6 t0, t1, s1, s2, c1
    f6_mul(&t0, &a.c0, &b.c0)
    f6_mul(&t1, &a.c1, &b.c1)
    f6_add(&s1, &a.c0, &a.c1)
    f6_add(&s2, &b.c0, &b.c1)
    f6_mul(&c1, &s1, &s2)
    f6_sub(&c1, &c1, &t0)
    f6_sub(&c1, &c1, &t1)
    f6_mul_v(&s1, &t1)
    f6_add(&r.c0, &t0, &s1)
    f6_copy(&r.c1, &c1)


cdef void f12_sqr(Fp12* r, const Fp12* a) noexcept:
    cdef Fp6 t, s1, s2
    f6_mul(&t, &a.c0, &a.c1)
    f6_add(&s1, &a.c0, &a.c1)
    f6_mul_v(&s2, &a.c1)
    f6_add(&s2, &a.c0, &s2)
    f6_mul(&s1, &s1, &s2)
    f6_sub(&s1, &s1, &t)
    f6_mul_v(&s2, &t)
    f6_sub(&r.c0, &s1, &s2)
    f6_add(&r.c1, &t, &t)


cdef inline void f12_conj(Fp12* r, const Fp12* a) noexcept:
    f6_copy(&r.c0, &a.c0)
    f6_neg(&r.c1, &a.c1)


cdef void f12_inv(Fp12* r, const Fp12* a) noexcept:
    cdef Fp6 t0, t1
    f6_mul(&t0, &a.c0, &a.c0)
    f6_mul(&t1, &a.c1, &a.c1)
    f6_mul_v(&t1, &t1)
    f6_sub(&t0, &t0, &t1)
    f6_inv(&t0, &t0)
    f6_mul(&r.c0, &a.c0, &t0)
    f6_mul(&t1, &a.c1, &t0)
    f6_neg(&r.c1, &t1)


cdef void f12_frobenius(Fp12* r, const Fp12* a) noexcept:
    cdef Fp2 t
    f2_conj(&r.c0.c0, &a.c0.c0)
    f2_conj(&t, &a.c0.c1)
    f2_mul(&r.c0.c1, &t, &FROB1_C[2])
    f2_conj(&t, &a.c0.c2)
    f2_mul(&r.c0.c2, &t, &FROB1_C[4])
    f2_conj(&t, &a.c1.c0)
    f2_mul(&r.c1.c0, &t, &FROB1_C[1])
    f2_conj(&t, &a.c1.c1)
    f2_mul(&r.c1.c1, &t, &FROB1_C[3])
    f2_conj(&t, &a.c1.c2)
    f2_mul(&r.c1.c2, &t, &FROB1_C[5])


cdef void f12_frobenius2(Fp12* r, const Fp12* a) noexcept:
    f2_copy(&r.c0.c0, &a.c0.c0)
    f2_mul(&r.c0.c1, &a.c0.c1, &FROB2_C[2])
    f2_mul(&r.c0.c2, &a.c0.c2, &FROB2_C[4])
    f2_mul(&r.c1.c0, &a.c1.c0, &FROB2_C[1])
    f2_mul(&r.c1.c1, &a.c1.c1, &FROB2_C[3])
    f2_mul(&r.c1.c2, &a.c1.c2, &FROB2_C[5])


cdef void f12_set_one(Fp12* r) noexcept:
    memset(r, 0, sizeof(Fp12))
    memcpy(r.c0.c0.c0, P_ONE, sizeof(u64) * 4)


cdef int f12_is_one(const Fp12* a) noexcept:
    cdef Fp12 one
    f12_set_one(&one)
    cdef const u64* pa = <const u64*>a
    cdef const u64* po = <const u64*>&one
    cdef int i
    for i in range(48):
        if pa[i] != po[i]:
            return 0
    return 1


cdef void f12_pow_hard(Fp12* r, const Fp12* a) noexcept:
    cdef Fp12 acc, base
    cdef int i, word, bit
    f12_set_one(&acc)
    memcpy(&base, a, sizeof(Fp12))
    for i in range(EXP_HARD_BITS - 1, -1, -1):
        word = i >> 6
        bit = i & 63
        f12_sqr(&acc, &acc)
        if (EXP_HARD[word] >> bit) & 1:
            f12_mul(&acc, &acc, &base)
    memcpy(r, &acc, sizeof(Fp12))


# ---------------------------------------------------------------------------
# G1 (jacobian over Fp)
# ---------------------------------------------------------------------------

cdef struct G1J:
    u64 x[4]
    u64 y[4]
    u64 z[4]


cdef inline int g1j_is_inf(const G1J* p) noexcept:
    return limbs_is_zero(p.z)


cdef void g1j_set_inf(G1J* p) noexcept:
    memcpy(p.x, P_ONE, sizeof(u64) * 4)
    memcpy(p.y, P_ONE, sizeof(u64) * 4)
    memset(p.z, 0, sizeof(u64) * 4)


cdef void g1j_dbl(G1J* r, const G1J* p) noexcept:
    cdef u64 a[4], b[4], c[4], d[4], e[4], f[4], t[4]
    if g1j_is_inf(p) or limbs_is_zero(p.y):
        g1j_set_inf(r)
        return
    fp_mul(a, p.x, p.x)
    fp_mul(b, p.y, p.y)
    fp_mul(c, b, b)
    fp_add(d, p.x, b)
    fp_mul(d, d, d)
    fp_sub(d, d, a)
    fp_sub(d, d, c)
    fp_add(d, d, d)
    fp_add(e, a, a)
    fp_add(e, e, a)
    fp_mul(f, e, e)
    fp_add(t, d, d)
    fp_sub(f, f, t)
    # z first: it reads p.y and p.z before x/y overwritten (r may alias p)
    fp_add(t, p.y, p.y)
    fp_mul(t, t, p.z)
    fp_sub(d, d, f)
    fp_mul(d, e, d)
    fp_add(c, c, c)
    fp_add(c, c, c)
    fp_add(c, c, c)
    fp_sub(d, d, c)
    memcpy(r.x, f, sizeof(u64) * 4)
    memcpy(r.y, d, sizeof(u64) * 4)
    memcpy(r.z, t, sizeof(u64) * 4)


cdef void g1j_add(G1J* r, const G1J* p, const G1J* q) noexcept:
    cdef u64 z1z1[4], z2z2[4], u1[4], u2[4], s1[4], s2[4], h[4], rr[4]
    cdef u64 hh[4], hhh[4], v[4], t[4], x3[4], y3[4], z3[4]
    if g1j_is_inf(p):
        memcpy(r, q, sizeof(G1J))
        return
    if g1j_is_inf(q):
        memcpy(r, p, sizeof(G1J))
        return
    fp_mul(z1z1, p.z, p.z)
    fp_mul(z2z2, q.z, q.z)
    fp_mul(u1, p.x, z2z2)
    fp_mul(u2, q.x, z1z1)
    fp_mul(s1, p.y, q.z)
    fp_mul(s1, s1, z2z2)
    fp_mul(s2, q.y, p.z)
    fp_mul(s2, s2, z1z1)
    fp_sub(h, u2, u1)
    fp_sub(rr, s2, s1)
    if limbs_is_zero(h):
        if limbs_is_zero(rr):
            g1j_dbl(r, p)
        else:
            g1j_set_inf(r)
        return
    fp_mul(hh, h, h)
    fp_mul(hhh, h, hh)
    fp_mul(v, u1, hh)
    fp_mul(x3, rr, rr)
    fp_sub(x3, x3, hhh)
    fp_add(t, v, v)
    fp_sub(x3, x3, t)
    fp_sub(t, v, x3)
    fp_mul(y3, rr, t)
    fp_mul(t, s1, hhh)
    fp_sub(y3, y3, t)
    fp_mul(z3, p.z, q.z)
    fp_mul(z3, z3, h)
    memcpy(r.x, x3, sizeof(u64) * 4)
    memcpy(r.y, y3, sizeof(u64) * 4)
    memcpy(r.z, z3, sizeof(u64) * 4)


cdef void g1j_scale(G1J* r, const G1J* p, const u64* k) noexcept:
    cdef G1J acc, base
    cdef int i, word, bit, top
    g1j_set_inf(&acc)
    memcpy(&base, p, sizeof(G1J))
    top = 255
    while top >= 0 and not ((k[top >> 6] >> (top & 63)) & 1):
        top -= 1
    for i in range(top + 1):
        word = i >> 6
        bit = i & 63
        if (k[word] >> bit) & 1:
            g1j_add(&acc, &acc, &base)
        g1j_dbl(&base, &base)
    memcpy(r, &acc, sizeof(G1J))


# ---------------------------------------------------------------------------
# G2 (jacobian over Fp2)
# ---------------------------------------------------------------------------

cdef struct G2J:
    Fp2 x
    Fp2 y
    Fp2 z


cdef inline int g2j_is_inf(const G2J* p) noexcept:
    return f2_is_zero(&p.z)


cdef void g2j_set_inf(G2J* p) noexcept:
    memset(p, 0, sizeof(G2J))
    memcpy(p.x.c0, P_ONE, sizeof(u64) * 4)
    memcpy(p.y.c0, P_ONE, sizeof(u64) * 4)


cdef void g2j_dbl(G2J* r, const G2J* p) noexcept:
    cdef Fp2 a, b, c, d, e, f, t
    if g2j_is_inf(p) or f2_is_zero(&p.y):
        g2j_set_inf(r)
        return
    f2_sqr(&a, &p.x)
    f2_sqr(&b, &p.y)
    f2_sqr(&c, &b)
    f2_add(&d, &p.x, &b)
    f2_sqr(&d, &d)
    f2_sub(&d, &d, &a)
    f2_sub(&d, &d, &c)
    f2_add(&d, &d, &d)
    f2_add(&e, &a, &a)
    f2_add(&e, &e, &a)
    f2_sqr(&f, &e)
    f2_add(&t, &d, &d)
    f2_sub(&f, &f, &t)
    f2_add(&t, &p.y, &p.y)
    f2_mul(&t, &t, &p.z)
    f2_sub(&d, &d, &f)
    f2_mul(&d, &e, &d)
    f2_add(&c, &c, &c)
    f2_add(&c, &c, &c)
    f2_add(&c, &c, &c)
    f2_sub(&d, &d, &c)
    f2_copy(&r.x, &f)
    f2_copy(&r.y, &d)
    f2_copy(&r.z, &t)


cdef void g2j_add(G2J* r, const G2J* p, const G2J* q) noexcept:
    cdef Fp2 z1z1, z2z2, u1, u2, s1, s2, h, rr, hh, hhh, v, t, x3, y3, z3
    if g2j_is_inf(p):
        memcpy(r, q, sizeof(G2J))
        return
    if g2j_is_inf(q):
        memcpy(r, p, sizeof(G2J))
        return
    f2_sqr(&z1z1, &p.z)
    f2_sqr(&z2z2, &q.z)
    f2_mul(&u1, &p.x, &z2z2)
    f2_mul(&u2, &q.x, &z1z1)
    f2_mul(&s1, &p.y, &q.z)
    f2_mul(&s1, &s1, &z2z2)
    f2_mul(&s2, &q.y, &p.z)
    f2_mul(&s2, &s2, &z1z1)
    f2_sub(&h, &u2, &u1)
    f2_sub(&rr, &s2, &s1)
    if f2_is_zero(&h):
        if f2_is_zero(&rr):
            g2j_dbl(r, p)
        else:
            g2j_set_inf(r)
        return
    f2_sqr(&hh, &h)
    f2_mul(&hhh, &h, &hh)
    f2_mul(&v, &u1, &hh)
    f2_sqr(&x3, &rr)
    f2_sub(&x3, &x3, &hhh)
    f2_add(&t, &v, &v)
    f2_sub(&x3, &x3, &t)
    f2_sub(&t, &v, &x3)
    f2_mul(&y3, &rr, &t)
    f2_mul(&t, &s1, &hhh)
    f2_sub(&y3, &y3, &t)
    f2_mul(&z3, &p.z, &q.z)
    f2_mul(&z3, &z3, &h)
    f2_copy(&r.x, &x3)
    f2_copy(&r.y, &y3)
    f2_copy(&r.z, &z3)


cdef void g2j_scale(G2J* r, const G2J* p, const u64* k) noexcept:
    cdef G2J acc, base
    cdef int i, top
    g2j_set_inf(&acc)
    memcpy(&base, p, sizeof(G2J))
    top = 255
    while top >= 0 and not ((k[top >> 6] >> (top & 63)) & 1):
        top -= 1
    for i in range(top + 1):
        if (k[i >> 6] >> (i & 63)) & 1:
            g2j_add(&acc, &acc, &base)
        g2j_dbl(&base, &base)
    memcpy(r, &acc, sizeof(G2J))


# ---------------------------------------------------------------------------
# Affine conversions at the Python boundary
# ---------------------------------------------------------------------------

_PP = _params.P
_RR = _params.R


cdef int py_to_g1j(object p, G1J* out) except -1:
    if p is None:
        g1j_set_inf(out)
        return 0
    fp_from_obj(p[0], out.x)
    fp_from_obj(p[1], out.y)
    memcpy(out.z, P_ONE, sizeof(u64) * 4)
    return 0


cdef object g1j_to_py(const G1J* p):
    cdef u64 zi[4], zi2[4], xa[4], ya[4]
    if g1j_is_inf(p):
        return None
    fp_inv(zi, p.z)
    fp_mul(zi2, zi, zi)
    fp_mul(xa, p.x, zi2)
    fp_mul(ya, p.y, zi2)
    fp_mul(ya, ya, zi)
    return (fp_to_obj(xa), fp_to_obj(ya))


cdef int py_to_f2(object v, Fp2* out) except -1:
    fp_from_obj(v[0], out.c0)
    fp_from_obj(v[1], out.c1)
    return 0


cdef object f2_to_py(const Fp2* v):
    return (fp_to_obj(v.c0), fp_to_obj(v.c1))


cdef int py_to_g2j(object p, G2J* out) except -1:
    if p is None:
        g2j_set_inf(out)
        return 0
    py_to_f2(p[0], &out.x)
    py_to_f2(p[1], &out.y)
    memset(&out.z, 0, sizeof(Fp2))
    memcpy(out.z.c0, P_ONE, sizeof(u64) * 4)
    return 0


cdef object g2j_to_py(const G2J* p):
    cdef Fp2 zi, zi2, xa, ya
    if g2j_is_inf(p):
        return None
    f2_inv(&zi, &p.z)
    f2_sqr(&zi2, &zi)
    f2_mul(&xa, &p.x, &zi2)
    f2_mul(&ya, &p.y, &zi2)
    f2_mul(&ya, &ya, &zi)
    return (f2_to_py(&xa), f2_to_py(&ya))


# ---------------------------------------------------------------------------
# Public group API
# ---------------------------------------------------------------------------


def g1_add(p, q):
    cdef G1J a, b
    py_to_g1j(p, &a)
    py_to_g1j(q, &b)
    g1j_add(&a, &a, &b)
    return g1j_to_py(&a)


def g1_neg(p):
    if p is None:
        return None
    return (p[0], (-p[1]) % _PP)


def g1_scale(p, k):
    k = k % _RR
    if p is None or k == 0:
        return None
    cdef G1J a
    cdef u64 kl[4]
    py_to_g1j(p, &a)
    int_to_limbs(k, kl)
    g1j_scale(&a, &a, kl)
    return g1j_to_py(&a)


def g1_is_on_curve(p):
    if p is None:
        return True
    x, y = p
    return (y * y - (x * x * x + 3)) % _PP == 0


def g2_add(p, q):
    cdef G2J a, b
    py_to_g2j(p, &a)
    py_to_g2j(q, &b)
    g2j_add(&a, &a, &b)
    return g2j_to_py(&a)


def g2_neg(p):
    if p is None:
        return None
    return (p[0], ((-p[1][0]) % _PP, (-p[1][1]) % _PP))


def g2_scale(p, k):
    k = k % _RR
    if p is None or k == 0:
        return None
    cdef G2J a
    cdef u64 kl[4]
    py_to_g2j(p, &a)
    int_to_limbs(k, kl)
    g2j_scale(&a, &a, kl)
    return g2j_to_py(&a)


def g2_is_on_curve(p):
    cdef Fp2 x, y, lhs, rhs
    if p is None:
        return True
    py_to_f2(p[0], &x)
    py_to_f2(p[1], &y)
    f2_sqr(&lhs, &y)
    f2_sqr(&rhs, &x)
    f2_mul(&rhs, &rhs, &x)
    f2_add(&rhs, &rhs, &B_G2_C)
    return bool(f2_eq(&lhs, &rhs))


def g2_subgroup_check(p):
    if p is None:
        return True
    if not g2_is_on_curve(p):
        return False
    cdef G2J a
    py_to_g2j(p, &a)
    g2j_scale(&a, &a, EXP_R)
    return bool(g2j_is_inf(&a))


cdef object _msm_g1(list pairs):
    # Pippenger over converted jacobian points
    cdef Py_ssize_t n = len(pairs)
    cdef int c = 3
    if n >= 32: c = 4
    if n >= 128: c = 6
    if n >= 512: c = 8
    if n >= 2048: c = 10
    if n >= 8192: c = 12
    cdef int windows = (254 + c - 1) // c
    cdef int nbuckets = (1 << c) - 1
    cdef G1J* pts = <G1J*>malloc(n * sizeof(G1J))
    cdef u64* ks = <u64*>malloc(n * 4 * sizeof(u64))
    cdef char* used = <char*>malloc(nbuckets)
    cdef G1J* buckets = <G1J*>malloc(nbuckets * sizeof(G1J))
    if pts == NULL or ks == NULL or used == NULL or buckets == NULL:
        free(pts); free(ks); free(used); free(buckets)
        raise MemoryError()
    cdef Py_ssize_t i
    cdef int w, b, shift, word, bit, lo, hi, d
    cdef G1J result, running, acc
    try:
        for i in range(n):
            py_to_g1j(pairs[i][1], &pts[i])
            int_to_limbs(pairs[i][0], &ks[4 * i])
        g1j_set_inf(&result)
        for w in range(windows - 1, -1, -1):
            if w != windows - 1:
                for b in range(c):
                    g1j_dbl(&result, &result)
            memset(used, 0, nbuckets)
            shift = w * c
            for i in range(n):
                word = shift >> 6
                bit = shift & 63
                d = <int>((ks[4 * i + word] >> bit) & <u64>((1 << c) - 1))
                if bit + c > 64 and word < 3:
                    d |= <int>((ks[4 * i + word + 1] << (64 - bit)) & <u64>((1 << c) - 1))
                if d:
                    if used[d - 1]:
                        g1j_add(&buckets[d - 1], &buckets[d - 1], &pts[i])
                    else:
                        memcpy(&buckets[d - 1], &pts[i], sizeof(G1J))
                        used[d - 1] = 1
            g1j_set_inf(&running)
            g1j_set_inf(&acc)
            for b in range(nbuckets - 1, -1, -1):
                if used[b]:
                    g1j_add(&running, &running, &buckets[b])
                g1j_add(&acc, &acc, &running)
            g1j_add(&result, &result, &acc)
        return g1j_to_py(&result)
    finally:
        free(pts); free(ks); free(used); free(buckets)


def g1_msm(points, scalars):
    pairs = [(s % _RR, pt) for s, pt in zip(scalars, points) if pt is not None and s % _RR]
    if not pairs:
        return None
    return _msm_g1(pairs)


cdef object _msm_g2(list pairs):
    cdef Py_ssize_t n = len(pairs)
    cdef int c = 3
    if n >= 32: c = 4
    if n >= 128: c = 6
    if n >= 512: c = 8
    if n >= 2048: c = 10
    if n >= 8192: c = 12
    cdef int windows = (254 + c - 1) // c
    cdef int nbuckets = (1 << c) - 1
    cdef G2J* pts = <G2J*>malloc(n * sizeof(G2J))
    cdef u64* ks = <u64*>malloc(n * 4 * sizeof(u64))
    cdef char* used = <char*>malloc(nbuckets)
    cdef G2J* buckets = <G2J*>malloc(nbuckets * sizeof(G2J))
    if pts == NULL or ks == NULL or used == NULL or buckets == NULL:
        free(pts); free(ks); free(used); free(buckets)
        raise MemoryError()
    cdef Py_ssize_t i
    cdef int w, b, shift, word, bit, d
    cdef G2J result, running, acc
    try:
        for i in range(n):
            py_to_g2j(pairs[i][1], &pts[i])
            int_to_limbs(pairs[i][0], &ks[4 * i])
        g2j_set_inf(&result)
        for w in range(windows - 1, -1, -1):
            if w != windows - 1:
                for b in range(c):
                    g2j_dbl(&result, &result)
            memset(used, 0, nbuckets)
            shift = w * c
            for i in range(n):
                word = shift >> 6
                bit = shift & 63
                d = <int>((ks[4 * i + word] >> bit) & <u64>((1 << c) - 1))
                if bit + c > 64 and word < 3:
                    d |= <int>((ks[4 * i + word + 1] << (64 - bit)) & <u64>((1 << c) - 1))
                if d:
                    if used[d - 1]:
                        g2j_add(&buckets[d - 1], &buckets[d - 1], &pts[i])
                    else:
                        memcpy(&buckets[d - 1], &pts[i], sizeof(G2J))
                        used[d - 1] = 1
            g2j_set_inf(&running)
            g2j_set_inf(&acc)
            for b in range(nbuckets - 1, -1, -1):
                if used[b]:
                    g2j_add(&running, &running, &buckets[b])
                g2j_add(&acc, &acc, &running)
            g2j_add(&result, &result, &acc)
        return g2j_to_py(&result)
    finally:
        free(pts); free(ks); free(used); free(buckets)


def g2_msm(points, scalars):
    pairs = [(s % _RR, pt) for s, pt in zip(scalars, points) if pt is not None and s % _RR]
    if not pairs:
        return None
    return _msm_g2(pairs)


def g1_fixed_base_mul(scalars):
    # 8-bit windowed table over the generator, shared across all scalars
    cdef int windows = 32
    cdef G1J* table = <G1J*>malloc(windows * 255 * sizeof(G1J))
    if table == NULL:
        raise MemoryError()
    cdef G1J row_base, acc
    cdef int w, d
    cdef u64 kl[4]
    cdef Py_ssize_t i
    out = []
    try:
        py_to_g1j(_params.G1_GENERATOR, &row_base)
        for w in range(windows):
            memcpy(&table[w * 255], &row_base, sizeof(G1J))
            for d in range(1, 255):
                g1j_add(&table[w * 255 + d], &table[w * 255 + d - 1], &row_base)
            g1j_add(&row_base, &table[w * 255 + 254], &row_base)
        for i in range(len(scalars)):
            int_to_limbs(scalars[i] % _RR, kl)
            g1j_set_inf(&acc)
            for w in range(windows):
                d = <int>((kl[(8 * w) >> 6] >> ((8 * w) & 63)) & 0xFF)
                if d:
                    g1j_add(&acc, &acc, &table[w * 255 + d - 1])
            out.append(g1j_to_py(&acc))
        return out
    finally:
        free(table)


def g2_fixed_base_mul(scalars):
    cdef int windows = 32
    cdef G2J* table = <G2J*>malloc(windows * 255 * sizeof(G2J))
    if table == NULL:
        raise MemoryError()
    cdef G2J row_base, acc
    cdef int w, d
    cdef u64 kl[4]
    cdef Py_ssize_t i
    out = []
    try:
        py_to_g2j(_params.G2_GENERATOR, &row_base)
        for w in range(windows):
            memcpy(&table[w * 255], &row_base, sizeof(G2J))
            for d in range(1, 255):
                g2j_add(&table[w * 255 + d], &table[w * 255 + d - 1], &row_base)
            g2j_add(&row_base, &table[w * 255 + 254], &row_base)
        for i in range(len(scalars)):
            int_to_limbs(scalars[i] % _RR, kl)
            g2j_set_inf(&acc)
            for w in range(windows):
                d = <int>((kl[(8 * w) >> 6] >> ((8 * w) & 63)) & 0xFF)
                if d:
                    g2j_add(&acc, &acc, &table[w * 255 + d - 1])
            out.append(g2j_to_py(&acc))
        return out
    finally:
        free(table)


# ---------------------------------------------------------------------------
# NTT over Fr
# ---------------------------------------------------------------------------


cdef void _ntt_radix2(u64* a, Py_ssize_t n, const u64* root) noexcept:
    # iterative DIT with bit-reversal; n is a power of two
    cdef Py_ssize_t i, j, bit, length, half, k
    cdef u64 tmp[4]
    cdef u64 w[4]
    cdef u64 wlen[4]
    cdef u64 u[4]
    cdef u64 v[4]
    j = 0
    for i in range(1, n):
        bit = n >> 1
        while j & bit:
            j ^= bit
            bit >>= 1
        j |= bit
        if i < j:
            memcpy(tmp, &a[4 * i], 32)
            memcpy(&a[4 * i], &a[4 * j], 32)
            memcpy(&a[4 * j], tmp, 32)
    length = 2
    while length <= n:
        half = length >> 1
        fr_pow_u64(wlen, root, <u64>(n // length))
        i = 0
        while i < n:
            memcpy(w, R_ONE, 32)
            for k in range(half):
                memcpy(u, &a[4 * (i + k)], 32)
                fr_mul(v, &a[4 * (i + k + half)], w)
                mod_add(&a[4 * (i + k)], u, v, RM)
                mod_sub(&a[4 * (i + k + half)], u, v, RM)
                fr_mul(w, w, wlen)
            i += length
        length <<= 1


cdef void _ntt_rec(u64* a, Py_ssize_t n, const u64* root):
    cdef Py_ssize_t m, k
    cdef u64* s0
    cdef u64* s1
    cdef u64* s2
    cdef u64 r3[4], w3[4], w3sq[4], w[4], w2[4], e0[4], e1[4], e2[4], t[4]
    if n == 1:
        return
    if n % 3 != 0:
        _ntt_radix2(a, n, root)
        return
    m = n // 3
    s0 = <u64*>malloc(m * 4 * sizeof(u64))
    s1 = <u64*>malloc(m * 4 * sizeof(u64))
    s2 = <u64*>malloc(m * 4 * sizeof(u64))
    if s0 == NULL or s1 == NULL or s2 == NULL:
        free(s0); free(s1); free(s2)
        raise MemoryError()
    try:
        for k in range(m):
            memcpy(&s0[4 * k], &a[4 * (3 * k)], 32)
            memcpy(&s1[4 * k], &a[4 * (3 * k + 1)], 32)
            memcpy(&s2[4 * k], &a[4 * (3 * k + 2)], 32)
        fr_pow_u64(r3, root, 3)
        _ntt_rec(s0, m, r3)
        _ntt_rec(s1, m, r3)
        _ntt_rec(s2, m, r3)
        fr_pow_u64(w3, root, <u64>m)
        fr_mul(w3sq, w3, w3)
        memcpy(w, R_ONE, 32)
        for k in range(m):
            fr_mul(w2, w, w)
            memcpy(e0, &s0[4 * k], 32)
            fr_mul(e1, w, &s1[4 * k])
            fr_mul(e2, w2, &s2[4 * k])
            mod_add(t, e0, e1, RM)
            mod_add(&a[4 * k], t, e2, RM)
            fr_mul(t, w3, e1)
            mod_add(t, e0, t, RM)
            fr_mul(w2, w3sq, e2)
            mod_add(&a[4 * (k + m)], t, w2, RM)
            fr_mul(t, w3sq, e1)
            mod_add(t, e0, t, RM)
            fr_mul(w2, w3, e2)
            mod_add(&a[4 * (k + 2 * m)], t, w2, RM)
            fr_mul(w, w, root)
    finally:
        free(s0); free(s1); free(s2)


def ntt_fr(values, invert=False):
    cdef Py_ssize_t n = len(values)
    if n == 0:
        return []
    if (_RR - 1) % n != 0:
        raise ValueError("NTT size must divide r - 1")
    m = n
    while m % 2 == 0:
        m //= 2
    while m % 3 == 0:
        m //= 3
    if m != 1:
        raise ValueError("NTT size must be of the form 2^a * 3^b")
    root_i = pow(_params.FR_GENERATOR, (_RR - 1) // n, _RR)
    if invert:
        root_i = pow(root_i, _RR - 2, _RR)
    cdef u64 root[4]
    fr_from_obj(root_i, root)
    cdef u64* a = <u64*>malloc(n * 4 * sizeof(u64))
    if a == NULL:
        raise MemoryError()
    cdef Py_ssize_t i
    cdef u64 ninv[4]
    try:
        for i in range(n):
            fr_from_obj(values[i], &a[4 * i])
        _ntt_rec(a, n, root)
        if invert:
            fr_from_obj(pow(n, _RR - 2, _RR), ninv)
            for i in range(n):
                fr_mul(&a[4 * i], &a[4 * i], ninv)
        return [fr_to_obj(&a[4 * i]) for i in range(n)]
    finally:
        free(a)


# ---------------------------------------------------------------------------
# Sponge permutation
# ---------------------------------------------------------------------------

cdef u64 RC_C[195 * 4]
cdef u64 MDS_C[9 * 4]
cdef int N_ROUNDS
cdef int HALF_FULL
cdef int N_PARTIAL


def poseidon_permute(a, b, c):
    cdef u64 s0[4], s1[4], s2[4], t[4], n0[4], n1[4], n2[4]
    cdef int rnd, idx = 0
    fr_from_obj(a, s0)
    fr_from_obj(b, s1)
    fr_from_obj(c, s2)
    for rnd in range(N_ROUNDS):
        mod_add(s0, s0, &RC_C[4 * idx], RM)
        mod_add(s1, s1, &RC_C[4 * (idx + 1)], RM)
        mod_add(s2, s2, &RC_C[4 * (idx + 2)], RM)
        idx += 3
        fr_mul(t, s0, s0)
        fr_mul(t, t, t)
        fr_mul(s0, t, s0)
        if rnd < HALF_FULL or rnd >= HALF_FULL + N_PARTIAL:
            fr_mul(t, s1, s1)
            fr_mul(t, t, t)
            fr_mul(s1, t, s1)
            fr_mul(t, s2, s2)
            fr_mul(t, t, t)
            fr_mul(s2, t, s2)
        fr_mul(n0, &MDS_C[0], s0)
        fr_mul(t, &MDS_C[4], s1)
        mod_add(n0, n0, t, RM)
        fr_mul(t, &MDS_C[8], s2)
        mod_add(n0, n0, t, RM)
        fr_mul(n1, &MDS_C[12], s0)
        fr_mul(t, &MDS_C[16], s1)
        mod_add(n1, n1, t, RM)
        fr_mul(t, &MDS_C[20], s2)
        mod_add(n1, n1, t, RM)
        fr_mul(n2, &MDS_C[24], s0)
        fr_mul(t, &MDS_C[28], s1)
        mod_add(n2, n2, t, RM)
        fr_mul(t, &MDS_C[32], s2)
        mod_add(n2, n2, t, RM)
        memcpy(s0, n0, 32)
        memcpy(s1, n1, 32)
        memcpy(s2, n2, 32)
    return (fr_to_obj(s0), fr_to_obj(s1), fr_to_obj(s2))


# ---------------------------------------------------------------------------
# Optimal ate pairing
# ---------------------------------------------------------------------------


cdef void line_to_f12(Fp12* out, const u64* a, const Fp2* b, const Fp2* c) noexcept:
    # a + b w + c w^3
    memset(out, 0, sizeof(Fp12))
    memcpy(out.c0.c0.c0, a, 32)
    f2_copy(&out.c1.c0, b)
    f2_copy(&out.c1.c1, c)


cdef void vertical_to_f12(Fp12* out, const u64* xp, const Fp2* x1) noexcept:
    # xp - x1 v
    memset(out, 0, sizeof(Fp12))
    memcpy(out.c0.c0.c0, xp, 32)
    f2_neg(&out.c0.c1, x1)


cdef struct AffG2:
    Fp2 x
    Fp2 y
    int inf


cdef void dbl_step(Fp12* line, AffG2* t, const u64* xp, const u64* yp) noexcept:
    cdef Fp2 lam, tmp, x3, y3, b, c
    cdef u64 nxp[4]
    f2_sqr(&lam, &t.x)
    f2_add(&tmp, &lam, &lam)
    f2_add(&lam, &tmp, &lam)
    f2_add(&tmp, &t.y, &t.y)
    f2_inv(&tmp, &tmp)
    f2_mul(&lam, &lam, &tmp)
    f2_sqr(&x3, &lam)
    f2_add(&tmp, &t.x, &t.x)
    f2_sub(&x3, &x3, &tmp)
    f2_sub(&tmp, &t.x, &x3)
    f2_mul(&y3, &lam, &tmp)
    f2_sub(&y3, &y3, &t.y)
    fp_neg(nxp, xp)
    fp_mul(b.c0, lam.c0, nxp)
    fp_mul(b.c1, lam.c1, nxp)
    f2_mul(&c, &lam, &t.x)
    f2_sub(&c, &c, &t.y)
    line_to_f12(line, yp, &b, &c)
    f2_copy(&t.x, &x3)
    f2_copy(&t.y, &y3)


cdef void add_step(Fp12* line, AffG2* t, const AffG2* q, const u64* xp, const u64* yp) noexcept:
    cdef Fp2 lam, tmp, x3, y3, b, c
    cdef u64 nxp[4]
    if f2_eq(&t.x, &q.x):
        f2_add(&tmp, &t.y, &q.y)
        if f2_is_zero(&tmp):
            vertical_to_f12(line, xp, &t.x)
            t.inf = 1
            return
        dbl_step(line, t, xp, yp)
        return
    f2_sub(&lam, &q.y, &t.y)
    f2_sub(&tmp, &q.x, &t.x)
    f2_inv(&tmp, &tmp)
    f2_mul(&lam, &lam, &tmp)
    f2_sqr(&x3, &lam)
    f2_sub(&x3, &x3, &t.x)
    f2_sub(&x3, &x3, &q.x)
    f2_sub(&tmp, &t.x, &x3)
    f2_mul(&y3, &lam, &tmp)
    f2_sub(&y3, &y3, &t.y)
    fp_neg(nxp, xp)
    fp_mul(b.c0, lam.c0, nxp)
    fp_mul(b.c1, lam.c1, nxp)
    f2_mul(&c, &lam, &t.x)
    f2_sub(&c, &c, &t.y)
    line_to_f12(line, yp, &b, &c)
    f2_copy(&t.x, &x3)
    f2_copy(&t.y, &y3)


cdef void miller_loop(Fp12* f, const u64* xp, const u64* yp, const Fp2* qx, const Fp2* qy) noexcept:
    cdef AffG2 t, q, q1, q2
    cdef Fp12 line
    cdef int i
    f2_copy(&q.x, qx)
    f2_copy(&q.y, qy)
    q.inf = 0
    t = q
    f12_set_one(f)
    for i in range(1, ATE_LEN):
        f12_sqr(f, f)
        dbl_step(&line, &t, xp, yp)
        f12_mul(f, f, &line)
        if ATE_BITS_C[i]:
            add_step(&line, &t, &q, xp, yp)
            f12_mul(f, f, &line)
    # frobenius correction steps
    f2_conj(&q1.x, &q.x)
    f2_mul(&q1.x, &q1.x, &TWF_X_C)
    f2_conj(&q1.y, &q.y)
    f2_mul(&q1.y, &q1.y, &TWF_Y_C)
    q1.inf = 0
    f2_conj(&q2.x, &q1.x)
    f2_mul(&q2.x, &q2.x, &TWF_X_C)
    f2_conj(&q2.y, &q1.y)
    f2_mul(&q2.y, &q2.y, &TWF_Y_C)
    f2_neg(&q2.y, &q2.y)
    q2.inf = 0
    add_step(&line, &t, &q1, xp, yp)
    f12_mul(f, f, &line)
    add_step(&line, &t, &q2, xp, yp)
    f12_mul(f, f, &line)


cdef void final_exp(Fp12* r, const Fp12* f) noexcept:
    cdef Fp12 g, h
    f12_conj(&g, f)
    f12_inv(&h, f)
    f12_mul(&g, &g, &h)
    f12_frobenius2(&h, &g)
    f12_mul(&g, &h, &g)
    f12_pow_hard(r, &g)


cdef object f12_to_py(const Fp12* f):
    return (
        fp_to_obj(f.c0.c0.c0), fp_to_obj(f.c0.c0.c1),
        fp_to_obj(f.c0.c1.c0), fp_to_obj(f.c0.c1.c1),
        fp_to_obj(f.c0.c2.c0), fp_to_obj(f.c0.c2.c1),
        fp_to_obj(f.c1.c0.c0), fp_to_obj(f.c1.c0.c1),
        fp_to_obj(f.c1.c1.c0), fp_to_obj(f.c1.c1.c1),
        fp_to_obj(f.c1.c2.c0), fp_to_obj(f.c1.c2.c1),
    )


def pairing(p, q):
    cdef Fp12 f, out
    cdef u64 xp[4], yp[4]
    cdef Fp2 qx, qy
    if p is None or q is None:
        f12_set_one(&out)
        return f12_to_py(&out)
    fp_from_obj(p[0], xp)
    fp_from_obj(p[1], yp)
    py_to_f2(q[0], &qx)
    py_to_f2(q[1], &qy)
    miller_loop(&f, xp, yp, &qx, &qy)
    final_exp(&out, &f)
    return f12_to_py(&out)


def pairing_product_is_one(pairs):
    cdef Fp12 f, term, out
    cdef u64 xp[4], yp[4]
    cdef Fp2 qx, qy
    cdef bint seen = False
    f12_set_one(&f)
    for p, q in pairs:
        if p is None or q is None:
            continue
        fp_from_obj(p[0], xp)
        fp_from_obj(p[1], yp)
        py_to_f2(q[0], &qx)
        py_to_f2(q[1], &qy)
        miller_loop(&term, xp, yp, &qx, &qy)
        f12_mul(&f, &f, &term)
        seen = True
    if not seen:
        return True
    final_exp(&out, &f)
    return bool(f12_is_one(&out))


# ---------------------------------------------------------------------------
# Module init: bake parameters into C globals
# ---------------------------------------------------------------------------


def _init():
    cdef u64 tmp[4]
    int_to_limbs(_params.P, PM)
    int_to_limbs(_params.R, RM)
    global P_INV, R_INV, EXP_HARD_BITS, ATE_LEN, N_ROUNDS, HALF_FULL, N_PARTIAL
    P_INV = (-pow(_params.P, -1, 1 << 64)) % (1 << 64)
    R_INV = (-pow(_params.R, -1, 1 << 64)) % (1 << 64)
    int_to_limbs((1 << 512) % _params.P, P_R2)
    int_to_limbs((1 << 512) % _params.R, R_R2)
    int_to_limbs((1 << 256) % _params.P, P_ONE)
    int_to_limbs((1 << 256) % _params.R, R_ONE)
    int_to_limbs(_params.P - 2, EXP_PM2)
    int_to_limbs(_params.R - 2, EXP_RM2)
    int_to_limbs(_params.R, EXP_R)

    hard = _params.FINAL_EXP_HARD
    EXP_HARD_BITS = hard.bit_length()
    cdef int i
    for i in range(12):
        EXP_HARD[i] = hard & 0xFFFFFFFFFFFFFFFF
        hard >>= 64
    assert hard == 0

    bits = _params.ATE_BITS
    ATE_LEN = len(bits)
    assert ATE_LEN <= 80
    for i in range(ATE_LEN):
        ATE_BITS_C[i] = bits[i]

    fp_from_obj(_params.B_G2[0], B_G2_C.c0)
    fp_from_obj(_params.B_G2[1], B_G2_C.c1)
    fp_from_obj(_params.TWIST_FROB_X[0], TWF_X_C.c0)
    fp_from_obj(_params.TWIST_FROB_X[1], TWF_X_C.c1)
    fp_from_obj(_params.TWIST_FROB_Y[0], TWF_Y_C.c0)
    fp_from_obj(_params.TWIST_FROB_Y[1], TWF_Y_C.c1)
    for i in range(6):
        fp_from_obj(_params.FROB_COEFF_1[i][0], FROB1_C[i].c0)
        fp_from_obj(_params.FROB_COEFF_1[i][1], FROB1_C[i].c1)
        fp_from_obj(_params.FROB_COEFF_2[i][0], FROB2_C[i].c0)
        fp_from_obj(_params.FROB_COEFF_2[i][1], FROB2_C[i].c1)

    N_ROUNDS = _params.SPONGE_ROUNDS
    HALF_FULL = _params.SPONGE_FULL_ROUNDS // 2
    N_PARTIAL = _params.SPONGE_PARTIAL_ROUNDS
    rc = _params.SPONGE_ROUND_CONSTANTS
    assert len(rc) == 195
    for i in range(195):
        fr_from_obj(rc[i], &RC_C[4 * i])
    mds = _params.SPONGE_MDS
    for i in range(9):
        fr_from_obj(mds[i // 3][i % 3], &MDS_C[4 * i])


_init()
