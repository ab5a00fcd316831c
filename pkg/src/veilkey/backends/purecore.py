"""Pure-Python arithmetic core.

Implements the backend kernel API (pairing-friendly curve arithmetic, NTT,
sponge permutation) with plain Python integers. It is the fallback selected
when the compiled extension is unavailable and the reference the compiled
core is tested against; both must produce bit-identical results.

Conventions:
  - G1 points are affine ``(x, y)`` tuples or ``None`` for infinity.
  - G2 points are ``((x0, x1), (y0, y1))`` over Fp2 or ``None``.
  - Fp2/Fp6/Fp12 elements are nested tuples; the flat 12-int pairing output
    lists Fp coefficients in tower order c[i][j][k] for w^i, v^j, u^k.
"""

from . import params

BACKEND_NAME = "pure"

P = params.P
R = params.R
_XI = params.XI
_B_G2 = params.B_G2

# ---------------------------------------------------------------------------
# Fp2 = Fp[u] / (u^2 + 1)
# ---------------------------------------------------------------------------

_F2_ZERO = (0, 0)
_F2_ONE = (1, 0)


def _f2_add(a, b):
    return ((a[0] + b[0]) % P, (a[1] + b[1]) % P)


def _f2_sub(a, b):
    return ((a[0] - b[0]) % P, (a[1] - b[1]) % P)


def _f2_neg(a):
    return (-a[0] % P, -a[1] % P)


def _f2_mul(a, b):
    a0, a1 = a
    b0, b1 = b
    t0 = a0 * b0 % P
    t1 = a1 * b1 % P
    return ((t0 - t1) % P, ((a0 + a1) * (b0 + b1) - t0 - t1) % P)


def _f2_sqr(a):
    a0, a1 = a
    # (a0 + a1 u)^2 = (a0+a1)(a0-a1) + 2 a0 a1 u
    return ((a0 + a1) * (a0 - a1) % P, 2 * a0 * a1 % P)


def _f2_scale(a, k):
    return (a[0] * k % P, a[1] * k % P)


def _f2_conj(a):
    return (a[0], -a[1] % P)


def _f2_inv(a):
    a0, a1 = a
    d = pow(a0 * a0 + a1 * a1, P - 2, P)
    return (a0 * d % P, -a1 * d % P)


def _f2_mul_xi(a):
    # xi = 9 + u
    a0, a1 = a
    return ((9 * a0 - a1) % P, (9 * a1 + a0) % P)


# ---------------------------------------------------------------------------
# Fp6 = Fp2[v] / (v^3 - xi)
# ---------------------------------------------------------------------------

_F6_ZERO = (_F2_ZERO, _F2_ZERO, _F2_ZERO)
_F6_ONE = (_F2_ONE, _F2_ZERO, _F2_ZERO)


def _f6_add(a, b):
    return (_f2_add(a[0], b[0]), _f2_add(a[1], b[1]), _f2_add(a[2], b[2]))


def _f6_sub(a, b):
    return (_f2_sub(a[0], b[0]), _f2_sub(a[1], b[1]), _f2_sub(a[2], b[2]))


def _f6_neg(a):
    return (_f2_neg(a[0]), _f2_neg(a[1]), _f2_neg(a[2]))


def _f6_mul(a, b):
    a0, a1, a2 = a
    b0, b1, b2 = b
    t0 = _f2_mul(a0, b0)
    t1 = _f2_mul(a1, b1)
    t2 = _f2_mul(a2, b2)
    c0 = _f2_add(t0, _f2_mul_xi(_f2_sub(_f2_mul(_f2_add(a1, a2), _f2_add(b1, b2)), _f2_add(t1, t2))))
    c1 = _f2_add(_f2_sub(_f2_mul(_f2_add(a0, a1), _f2_add(b0, b1)), _f2_add(t0, t1)), _f2_mul_xi(t2))
    c2 = _f2_add(_f2_sub(_f2_mul(_f2_add(a0, a2), _f2_add(b0, b2)), _f2_add(t0, t2)), t1)
    return (c0, c1, c2)


def _f6_sqr(a):
    return _f6_mul(a, a)


def _f6_mul_v(a):
    # multiply by v: (a0 + a1 v + a2 v^2) v = xi a2 + a0 v + a1 v^2
    return (_f2_mul_xi(a[2]), a[0], a[1])


def _f6_inv(a):
    a0, a1, a2 = a
    c0 = _f2_sub(_f2_sqr(a0), _f2_mul_xi(_f2_mul(a1, a2)))
    c1 = _f2_sub(_f2_mul_xi(_f2_sqr(a2)), _f2_mul(a0, a1))
    c2 = _f2_sub(_f2_sqr(a1), _f2_mul(a0, a2))
    t = _f2_inv(_f2_add(_f2_mul(a0, c0), _f2_mul_xi(_f2_add(_f2_mul(a2, c1), _f2_mul(a1, c2)))))
    return (_f2_mul(c0, t), _f2_mul(c1, t), _f2_mul(c2, t))


# ---------------------------------------------------------------------------
# Fp12 = Fp6[w] / (w^2 - v)
# ---------------------------------------------------------------------------

_F12_ONE = (_F6_ONE, _F6_ZERO)


def _f12_mul(a, b):
    a0, a1 = a
    b0, b1 = b
    t0 = _f6_mul(a0, b0)
    t1 = _f6_mul(a1, b1)
    c1 = _f6_sub(_f6_mul(_f6_add(a0, a1), _f6_add(b0, b1)), _f6_add(t0, t1))
    return (_f6_add(t0, _f6_mul_v(t1)), c1)


def _f12_sqr(a):
    a0, a1 = a
    t = _f6_mul(a0, a1)
    c0 = _f6_sub(_f6_mul(_f6_add(a0, a1), _f6_add(a0, _f6_mul_v(a1))), _f6_add(t, _f6_mul_v(t)))
    return (c0, _f6_add(t, t))


def _f12_conj(a):
    return (a[0], _f6_neg(a[1]))


def _f12_inv(a):
    a0, a1 = a
    t = _f6_inv(_f6_sub(_f6_sqr(a0), _f6_mul_v(_f6_sqr(a1))))
    return (_f6_mul(a0, t), _f6_neg(_f6_mul(a1, t)))


def _f12_pow(a, e):
    out = _F12_ONE
    base = a
    while e:
        if e & 1:
            out = _f12_mul(out, base)
        base = _f12_sqr(base)
        e >>= 1
    return out


def _f12_frobenius(a):
    # coefficient of w^k picks up xi^(k(p-1)/6); Fp2 parts are conjugated
    (c00, c01, c02), (c10, c11, c12) = a
    g = params.FROB_COEFF_1
    return (
        (_f2_conj(c00), _f2_mul(_f2_conj(c01), g[2]), _f2_mul(_f2_conj(c02), g[4])),
        (_f2_mul(_f2_conj(c10), g[1]), _f2_mul(_f2_conj(c11), g[3]), _f2_mul(_f2_conj(c12), g[5])),
    )


def _f12_frobenius2(a):
    (c00, c01, c02), (c10, c11, c12) = a
    g = params.FROB_COEFF_2
    return (
        (c00, _f2_mul(c01, g[2]), _f2_mul(c02, g[4])),
        (_f2_mul(c10, g[1]), _f2_mul(c11, g[3]), _f2_mul(c12, g[5])),
    )


def _f12_flatten(a):
    return tuple(c for f6 in a for f2 in f6 for c in f2)


# ---------------------------------------------------------------------------
# G1: y^2 = x^3 + 3 over Fp, jacobian coordinates internally
# ---------------------------------------------------------------------------


def _g1j_from_affine(p):
    if p is None:
        return (1, 1, 0)
    return (p[0], p[1], 1)


def _g1j_to_affine(p):
    x, y, z = p
    if z == 0:
        return None
    zi = pow(z, P - 2, P)
    zi2 = zi * zi % P
    return (x * zi2 % P, y * zi2 * zi % P)


def _g1j_dbl(p):
    x1, y1, z1 = p
    if z1 == 0 or y1 == 0:
        return (1, 1, 0)
    a = x1 * x1 % P
    b = y1 * y1 % P
    c = b * b % P
    d = 2 * ((x1 + b) * (x1 + b) - a - c) % P
    e = 3 * a % P
    f = e * e % P
    x3 = (f - 2 * d) % P
    y3 = (e * (d - x3) - 8 * c) % P
    z3 = 2 * y1 * z1 % P
    return (x3, y3, z3)


def _g1j_add(p, q):
    x1, y1, z1 = p
    x2, y2, z2 = q
    if z1 == 0:
        return q
    if z2 == 0:
        return p
    z1z1 = z1 * z1 % P
    z2z2 = z2 * z2 % P
    u1 = x1 * z2z2 % P
    u2 = x2 * z1z1 % P
    s1 = y1 * z2 * z2z2 % P
    s2 = y2 * z1 * z1z1 % P
    h = (u2 - u1) % P
    r = (s2 - s1) % P
    if h == 0:
        if r == 0:
            return _g1j_dbl(p)
        return (1, 1, 0)
    hh = h * h % P
    hhh = h * hh % P
    v = u1 * hh % P
    x3 = (r * r - hhh - 2 * v) % P
    y3 = (r * (v - x3) - s1 * hhh) % P
    z3 = z1 * z2 * h % P
    return (x3, y3, z3)


def _g1j_scale(p, k):
    out = (1, 1, 0)
    acc = p
    while k:
        if k & 1:
            out = _g1j_add(out, acc)
        acc = _g1j_dbl(acc)
        k >>= 1
    return out


def g1_add(p, q):
    return _g1j_to_affine(_g1j_add(_g1j_from_affine(p), _g1j_from_affine(q)))


def g1_neg(p):
    if p is None:
        return None
    return (p[0], -p[1] % P)


def g1_scale(p, k):
    k %= R
    if p is None or k == 0:
        return None
    return _g1j_to_affine(_g1j_scale(_g1j_from_affine(p), k))


def g1_is_on_curve(p):
    if p is None:
        return True
    x, y = p
    return (y * y - (x * x * x + 3)) % P == 0


# ---------------------------------------------------------------------------
# G2: y^2 = x^3 + b' over Fp2 (the sextic twist)
# ---------------------------------------------------------------------------

_G2J_INF = (_F2_ONE, _F2_ONE, _F2_ZERO)


def _g2j_from_affine(p):
    if p is None:
        return _G2J_INF
    return (p[0], p[1], _F2_ONE)


def _g2j_to_affine(p):
    x, y, z = p
    if z == _F2_ZERO:
        return None
    zi = _f2_inv(z)
    zi2 = _f2_sqr(zi)
    return (_f2_mul(x, zi2), _f2_mul(y, _f2_mul(zi2, zi)))


def _g2j_dbl(p):
    x1, y1, z1 = p
    if z1 == _F2_ZERO or y1 == _F2_ZERO:
        return _G2J_INF
    a = _f2_sqr(x1)
    b = _f2_sqr(y1)
    c = _f2_sqr(b)
    d = _f2_sub(_f2_sub(_f2_sqr(_f2_add(x1, b)), a), c)
    d = _f2_add(d, d)
    e = _f2_add(_f2_add(a, a), a)
    f = _f2_sqr(e)
    x3 = _f2_sub(f, _f2_add(d, d))
    c8 = _f2_add(_f2_add(c, c), _f2_add(c, c))
    c8 = _f2_add(c8, c8)
    y3 = _f2_sub(_f2_mul(e, _f2_sub(d, x3)), c8)
    z3 = _f2_mul(_f2_add(y1, y1), z1)
    return (x3, y3, z3)


def _g2j_add(p, q):
    x1, y1, z1 = p
    x2, y2, z2 = q
    if z1 == _F2_ZERO:
        return q
    if z2 == _F2_ZERO:
        return p
    z1z1 = _f2_sqr(z1)
    z2z2 = _f2_sqr(z2)
    u1 = _f2_mul(x1, z2z2)
    u2 = _f2_mul(x2, z1z1)
    s1 = _f2_mul(_f2_mul(y1, z2), z2z2)
    s2 = _f2_mul(_f2_mul(y2, z1), z1z1)
    h = _f2_sub(u2, u1)
    r = _f2_sub(s2, s1)
    if h == _F2_ZERO:
        if r == _F2_ZERO:
            return _g2j_dbl(p)
        return _G2J_INF
    hh = _f2_sqr(h)
    hhh = _f2_mul(h, hh)
    v = _f2_mul(u1, hh)
    x3 = _f2_sub(_f2_sub(_f2_sqr(r), hhh), _f2_add(v, v))
    y3 = _f2_sub(_f2_mul(r, _f2_sub(v, x3)), _f2_mul(s1, hhh))
    z3 = _f2_mul(_f2_mul(z1, z2), h)
    return (x3, y3, z3)


def _g2j_scale(p, k):
    out = _G2J_INF
    acc = p
    while k:
        if k & 1:
            out = _g2j_add(out, acc)
        acc = _g2j_dbl(acc)
        k >>= 1
    return out


def g2_add(p, q):
    return _g2j_to_affine(_g2j_add(_g2j_from_affine(p), _g2j_from_affine(q)))


def g2_neg(p):
    if p is None:
        return None
    return (p[0], _f2_neg(p[1]))


def g2_scale(p, k):
    k %= R
    if p is None or k == 0:
        return None
    return _g2j_to_affine(_g2j_scale(_g2j_from_affine(p), k))


def g2_is_on_curve(p):
    if p is None:
        return True
    x, y = p
    lhs = _f2_sqr(y)
    rhs = _f2_add(_f2_mul(_f2_sqr(x), x), _B_G2)
    return lhs == rhs


def g2_subgroup_check(p):
    if p is None:
        return True
    if not g2_is_on_curve(p):
        return False
    return _g2j_scale(_g2j_from_affine(p), R)[2] == _F2_ZERO


# ---------------------------------------------------------------------------
# Multi-scalar multiplication
# ---------------------------------------------------------------------------


def _pippenger(points, scalars, inf, from_affine, to_affine, add, dbl):
    pairs = [(s % R, pt) for s, pt in zip(scalars, points) if pt is not None and s % R]
    if not pairs:
        return None
    n = len(pairs)
    if n < 8:
        acc = inf
        for s, pt in pairs:
            acc = add(acc, _generic_scale(from_affine(pt), s, inf, add, dbl))
        return to_affine(acc)
    c = 3
    for bound, width in ((32, 4), (128, 6), (512, 8), (2048, 10), (8192, 12)):
        if n >= bound:
            c = width
    windows = (R.bit_length() + c - 1) // c
    jac = [(s, from_affine(pt)) for s, pt in pairs]
    mask = (1 << c) - 1
    result = inf
    for w in range(windows - 1, -1, -1):
        if w != windows - 1:
            for _ in range(c):
                result = dbl(result)
        buckets = [None] * mask
        shift = w * c
        for s, pt in jac:
            d = (s >> shift) & mask
            if d:
                cur = buckets[d - 1]
                buckets[d - 1] = pt if cur is None else add(cur, pt)
        running = inf
        acc = inf
        for b in range(mask - 1, -1, -1):
            if buckets[b] is not None:
                running = add(running, buckets[b])
            acc = add(acc, running)
        result = add(result, acc)
    return to_affine(result)


def _generic_scale(p, k, inf, add, dbl):
    out = inf
    acc = p
    while k:
        if k & 1:
            out = add(out, acc)
        acc = dbl(acc)
        k >>= 1
    return out


def g1_msm(points, scalars):
    return _pippenger(points, scalars, (1, 1, 0), _g1j_from_affine, _g1j_to_affine, _g1j_add, _g1j_dbl)


def g2_msm(points, scalars):
    return _pippenger(points, scalars, _G2J_INF, _g2j_from_affine, _g2j_to_affine, _g2j_add, _g2j_dbl)


def _fixed_base_many(base_j, scalars, inf, add, dbl, to_affine):
    # 8-bit windowed table over the fixed base; reused across all scalars
    windows = (R.bit_length() + 7) // 8
    table = []
    row_base = base_j
    for _ in range(windows):
        row = [row_base]
        for d in range(254):
            row.append(add(row[-1], row_base))
        table.append(row)
        row_base = add(row[254], row_base)
    out = []
    for s in scalars:
        s %= R
        acc = inf
        w = 0
        while s:
            d = s & 0xFF
            if d:
                acc = add(acc, table[w][d - 1])
            s >>= 8
            w += 1
        out.append(to_affine(acc))
    return out


def g1_fixed_base_mul(scalars):
    return _fixed_base_many(
        _g1j_from_affine(params.G1_GENERATOR), scalars, (1, 1, 0), _g1j_add, _g1j_dbl, _g1j_to_affine
    )


def g2_fixed_base_mul(scalars):
    return _fixed_base_many(
        _g2j_from_affine(params.G2_GENERATOR), scalars, _G2J_INF, _g2j_add, _g2j_dbl, _g2j_to_affine
    )


# ---------------------------------------------------------------------------
# NTT over Fr, sizes 2^a * 3^b with b <= 2
# ---------------------------------------------------------------------------


def _ntt_recursive(a, root):
    n = len(a)
    if n == 1:
        return a
    if n % 2 == 0:
        m = n // 2
        r2 = root * root % R
        e = _ntt_recursive(a[0::2], r2)
        o = _ntt_recursive(a[1::2], r2)
        out = [0] * n
        w = 1
        for k in range(m):
            t = w * o[k] % R
            out[k] = (e[k] + t) % R
            out[k + m] = (e[k] - t) % R
            w = w * root % R
        return out
    if n % 3 == 0:
        m = n // 3
        r3 = pow(root, 3, R)
        s0 = _ntt_recursive(a[0::3], r3)
        s1 = _ntt_recursive(a[1::3], r3)
        s2 = _ntt_recursive(a[2::3], r3)
        w3 = pow(root, m, R)
        w3sq = w3 * w3 % R
        out = [0] * n
        w = 1
        for k in range(m):
            w2 = w * w % R
            e0 = s0[k]
            e1 = w * s1[k] % R
            e2 = w2 * s2[k] % R
            out[k] = (e0 + e1 + e2) % R
            out[k + m] = (e0 + w3 * e1 + w3sq * e2) % R
            out[k + 2 * m] = (e0 + w3sq * e1 + w3 * e2) % R
            w = w * root % R
        return out
    raise ValueError("NTT size must be of the form 2^a * 3^b")


def ntt_fr(values, invert=False):
    n = len(values)
    if n == 0:
        return []
    if (R - 1) % n != 0:
        raise ValueError("NTT size must divide r - 1")
    m = n
    while m % 2 == 0:
        m //= 2
    while m % 3 == 0:
        m //= 3
    if m != 1:
        raise ValueError("NTT size must be of the form 2^a * 3^b")
    root = pow(params.FR_GENERATOR, (R - 1) // n, R)
    if invert:
        root = pow(root, R - 2, R)
    out = _ntt_recursive([v % R for v in values], root)
    if invert:
        ninv = pow(n, R - 2, R)
        out = [v * ninv % R for v in out]
    return out


# ---------------------------------------------------------------------------
# Sponge permutation (width 3, x^5 s-box)
# ---------------------------------------------------------------------------

_RC = params.SPONGE_ROUND_CONSTANTS
_MDS = params.SPONGE_MDS
_RF = params.SPONGE_FULL_ROUNDS
_RP = params.SPONGE_PARTIAL_ROUNDS


def poseidon_permute(s0, s1, s2):
    half = _RF // 2
    m00, m01, m02 = _MDS[0]
    m10, m11, m12 = _MDS[1]
    m20, m21, m22 = _MDS[2]
    idx = 0
    for rnd in range(_RF + _RP):
        s0 = (s0 + _RC[idx]) % R
        s1 = (s1 + _RC[idx + 1]) % R
        s2 = (s2 + _RC[idx + 2]) % R
        idx += 3
        t = s0 * s0 % R
        s0 = t * t % R * s0 % R
        if rnd < half or rnd >= half + _RP:
            t = s1 * s1 % R
            s1 = t * t % R * s1 % R
            t = s2 * s2 % R
            s2 = t * t % R * s2 % R
        s0, s1, s2 = (
            (m00 * s0 + m01 * s1 + m02 * s2) % R,
            (m10 * s0 + m11 * s1 + m12 * s2) % R,
            (m20 * s0 + m21 * s1 + m22 * s2) % R,
        )
    return (s0, s1, s2)


# ---------------------------------------------------------------------------
# Optimal ate pairing
# ---------------------------------------------------------------------------


def _line_to_f12(a, b, c):
    # a + b w + c w^3 with a in Fp, b and c in Fp2
    return (((a, 0), _F2_ZERO, _F2_ZERO), (b, c, _F2_ZERO))


def _vertical_to_f12(xp, x1):
    # xp - x1 v
    return (((xp, 0), _f2_neg(x1), _F2_ZERO), _F6_ZERO)


def _dbl_step(t, p):
    (x1, y1) = t
    xp, yp = p
    lam = _f2_mul(_f2_scale(_f2_sqr(x1), 3), _f2_inv(_f2_add(y1, y1)))
    x3 = _f2_sub(_f2_sqr(lam), _f2_add(x1, x1))
    y3 = _f2_sub(_f2_mul(lam, _f2_sub(x1, x3)), y1)
    line = _line_to_f12(yp, _f2_scale(lam, -xp % P), _f2_sub(_f2_mul(lam, x1), y1))
    return line, (x3, y3)


def _add_step(t, q, p):
    x1, y1 = t
    x2, y2 = q
    xp, yp = p
    if x1 == x2:
        if _f2_add(y1, y2) == _F2_ZERO:
            return _vertical_to_f12(xp, x1), None
        return _dbl_step(t, p)
    lam = _f2_mul(_f2_sub(y2, y1), _f2_inv(_f2_sub(x2, x1)))
    x3 = _f2_sub(_f2_sub(_f2_sqr(lam), x1), x2)
    y3 = _f2_sub(_f2_mul(lam, _f2_sub(x1, x3)), y1)
    line = _line_to_f12(yp, _f2_scale(lam, -xp % P), _f2_sub(_f2_mul(lam, x1), y1))
    return line, (x3, y3)


def _twist_frobenius(q):
    x, y = q
    return (_f2_mul(_f2_conj(x), params.TWIST_FROB_X), _f2_mul(_f2_conj(y), params.TWIST_FROB_Y))


def _miller_loop(p, q):
    f = _F12_ONE
    t = q
    for bit in params.ATE_BITS[1:]:
        f = _f12_sqr(f)
        line, t = _dbl_step(t, p)
        f = _f12_mul(f, line)
        if bit:
            line, t = _add_step(t, q, p)
            f = _f12_mul(f, line)
    q1 = _twist_frobenius(q)
    q2 = g2_neg(_twist_frobenius(q1))
    line, t = _add_step(t, q1, p)
    f = _f12_mul(f, line)
    line, t = _add_step(t, q2, p)
    f = _f12_mul(f, line)
    return f


def _final_exp(f):
    g = _f12_mul(_f12_conj(f), _f12_inv(f))
    g = _f12_mul(_f12_frobenius2(g), g)
    return _f12_pow(g, params.FINAL_EXP_HARD)


def pairing(p, q):
    if p is None or q is None:
        return _f12_flatten(_F12_ONE)
    return _f12_flatten(_final_exp(_miller_loop(p, q)))


def pairing_product_is_one(pairs):
    f = _F12_ONE
    seen = False
    for p, q in pairs:
        if p is None or q is None:
            continue
        f = _f12_mul(f, _miller_loop(p, q))
        seen = True
    if not seen:
        return True
    return _final_exp(f) == _F12_ONE
